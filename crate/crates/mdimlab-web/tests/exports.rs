use mdimlab_web::{cantor_box_count, map_graph, mdim_convergence};

#[test]
fn tent_graph_hits_the_corners() {
    let v = map_graph(r#"{"system":"tent3"}"#, 7).unwrap();
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 7);
    // x = 0, 1/6, 1/3, 1/2, 2/3, 5/6, 1
    let ys: Vec<f64> = pts.iter().map(|p| p[1].as_f64().unwrap()).collect();
    for (y, want) in ys.iter().zip([0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0]) {
        assert!((y - want).abs() < 1e-12, "{ys:?}");
    }
    assert!(map_graph(r#"{"system":"psi_j","j":1}"#, 10).is_err());
    assert!(map_graph(r#"{"system":"tent3"}"#, 1).is_err());
}

#[test]
fn convergence_approaches_half() {
    let v = mdim_convergence(1, 1.0, 20).unwrap();
    assert_eq!(v["terms"].as_array().unwrap().len(), 20);
    assert_eq!(v["limit"].as_f64(), Some(0.5));
    let c = &v["counting"];
    assert!((0.42..=0.58).contains(&c["lower"].as_f64().unwrap()));
    assert!(mdim_convergence(1, 1.0, 60).unwrap()["counting"].is_null());
    assert!(mdim_convergence(0, 1.0, 10).is_err());
}

#[test]
fn cantor_counts_double() {
    let v = cantor_box_count(6).unwrap();
    let counts: Vec<u64> = v["scales"].as_array().unwrap().iter().map(|r| r["count"].as_u64().unwrap()).collect();
    assert_eq!(counts, vec![2, 4, 8, 16, 32, 64]);
    assert!(cantor_box_count(0).is_err());
}
