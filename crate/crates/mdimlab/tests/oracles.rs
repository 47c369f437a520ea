//! Brute-force oracles written independently of the library, plus values they
//! produced once and are now frozen.

use mdimlab::bowen::{
    bowen_distance, bowen_matrix, branch_counts, exact_separated_set, exact_spanning_set, grid_table,
    interior_orbit_count, max_separated, sorted_order, Method,
};
use mdimlab::interval::{make_phi_sr, PiecewiseAffineMap, TruncatedIntervalSystem};
use mdimlab::shift::{
    cylinder_cov_bound, cylinder_representative, cylinder_sep_count, cylinder_separation_check, make_psi_j,
    splice_shift, splice_sup_bound, truncation_map, CheckMethod, SymbolicSystem, Word,
};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tent(x: f64) -> f64 {
    if x < 1.0 / 3.0 {
        3.0 * x
    } else if x < 2.0 / 3.0 {
        2.0 - 3.0 * x
    } else {
        3.0 * x - 2.0
    }
}

fn tent_bowen(x: f64, y: f64, n: usize) -> f64 {
    let (mut a, mut b, mut d) = (x, y, 0.0f64);
    for _ in 0..n {
        d = d.max((a - b).abs());
        a = tent(a);
        b = tent(b);
    }
    d
}

fn subsets(m: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..1 << m).map(move |mask| (0..m).filter(|&i| mask >> i & 1 == 1).collect())
}

fn brute_sep(d: &[Vec<f64>], eps: f64) -> usize {
    subsets(d.len())
        .filter(|s| s.iter().all(|&a| s.iter().all(|&b| a == b || d[a][b] > eps)))
        .map(|s| s.len())
        .max()
        .unwrap_or(0)
}

fn brute_span(d: &[Vec<f64>], eps: f64) -> usize {
    subsets(d.len())
        .filter(|s| (0..d.len()).all(|p| s.iter().any(|&c| d[c][p] <= eps)))
        .map(|s| s.len())
        .min()
        .unwrap_or(0)
}

#[test]
fn tent_distance_matches_hand_orbits() {
    let g = PiecewiseAffineMap::tent3();
    for &(x, y, n) in &[(0.0, 1.0 / 3.0, 2usize), (0.1, 0.7, 3), (0.25, 0.26, 5)] {
        let lib = bowen_distance(&g, &x, &y, n).unwrap();
        assert!((lib - tent_bowen(x, y, n)).abs() < 1e-12);
    }
    assert!((bowen_distance(&g, &0.0, &(1.0 / 3.0), 2).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn exact_counts_match_subset_enumeration() {
    let g = PiecewiseAffineMap::tent3();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..60 {
        let m = rng.gen_range(3..=12);
        let pts: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let n = rng.gen_range(1..=3);
        let eps = rng.gen_range(0.05..0.6);
        let d = bowen_matrix(&g, &pts, n).unwrap();
        for (a, row) in d.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                assert!((v - tent_bowen(pts[a], pts[b], n)).abs() < 1e-12);
            }
        }
        let order = sorted_order(&pts);
        let sep = exact_separated_set(&d, &order, eps);
        let span = exact_spanning_set(&d, &order, eps);
        assert_eq!(sep.len(), brute_sep(&d, eps), "trial {trial}");
        assert_eq!(span.len(), brute_span(&d, eps), "trial {trial}");
        assert!(sep.iter().all(|&a| sep.iter().all(|&b| a == b || d[a][b] > eps)));
        assert!((0..m).all(|p| span.iter().any(|&c| d[c][p] <= eps)));
    }
}

#[test]
fn one_step_separation_on_grid() {
    // with n = 1 the Bowen distance is |x - y|, and left-to-right greedy is optimal on a line
    let pts: Vec<f64> = (0..257).map(|i| i as f64 / 256.0).collect();
    let mut chosen: Vec<f64> = Vec::new();
    for &p in &pts {
        if chosen.last().map_or(true, |&c| p - c > 0.4) {
            chosen.push(p);
        }
    }
    assert_eq!(chosen.len(), 3);
    let g = PiecewiseAffineMap::tent3();
    let b = max_separated(&g, &pts, 1, 0.4, Method::Greedy).unwrap();
    assert_eq!(b.lo, Some(BigUint::from(3u32)));
}

#[test]
fn branch_formula_frozen_values() {
    let sys = make_phi_sr(1, 1.0, 1).unwrap();
    let len = sys.blocks()[0].spec.length;
    let row = branch_counts(&sys, 2, len / 9.0).unwrap();
    // block 0 carries 3 branches: 3^2 branches of the second iterate, each cut into 9 pieces
    assert_eq!(sys.blocks()[0].branch_count().value_u64(), Some(3));
    assert_eq!(row.span.hi, Some(BigUint::from(81u32)));
    for b in [3u64, 5, 9] {
        let s = TruncatedIntervalSystem::single_block(0.0, 1.0, b, mdimlab::interval::Orientation::Alternating).unwrap();
        let row = branch_counts(&s, 1, 1.0 / b as f64).unwrap();
        assert_eq!(row.span.hi, Some(BigUint::from(b * b)));
    }
}

#[test]
fn interior_count_respects_half_scale_spanning() {
    // any (n, eps)-separated set has at most one point per (n, eps/2)-ball of a spanning set
    let t = TruncatedIntervalSystem::tent3();
    let spec = &t.blocks()[0].spec;
    for n in 1..=6 {
        for &eps in &[0.3, 0.1, 0.03, 0.01] {
            let c = interior_orbit_count(spec, n, eps).unwrap();
            let span = branch_counts(&t, n, eps / 2.0).unwrap().span.hi.unwrap();
            assert!(c <= span, "n={n} eps={eps}: {c} > {span}");
        }
    }
    // a single step fits floor(1/eps') + 1 points with eps' = eps (1 + 1e-4)
    for &eps in &[0.3, 0.1, 0.03] {
        let c = interior_orbit_count(spec, 1, eps).unwrap();
        assert_eq!(c, BigUint::from((1.0 / (eps * 1.0001)).floor() as u64 + 1));
    }
}

// ψ_j read off the definition: keep the first k symbols, where position k holds
// the first nonzero symbol, then skip the next jk.
fn psi_oracle(j: usize, x: &[u8]) -> Vec<u8> {
    match x.iter().position(|&s| s != 0) {
        None => x.to_vec(),
        Some(p) => {
            let k = p + 1;
            let mut out = x[..k].to_vec();
            out.extend_from_slice(&x[k + j * k..]);
            out
        }
    }
}

fn metric(u: &[u8], v: &[u8]) -> f64 {
    u.iter().zip(v).enumerate().map(|(i, (a, b))| a.abs_diff(*b) as f64 / 3f64.powi(i as i32 + 1)).sum()
}

fn psi_bowen(j: usize, u: &[u8], v: &[u8], steps: usize) -> f64 {
    let (mut a, mut b, mut d) = (u.to_vec(), v.to_vec(), 0.0f64);
    for _ in 0..steps {
        d = d.max(metric(&a, &b));
        a = psi_oracle(j, &a);
        b = psi_oracle(j, &b);
    }
    d
}

#[test]
fn psi_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for j in 1..=3 {
        let psi = make_psi_j(j).unwrap();
        for _ in 0..200 {
            let lead = rng.gen_range(0..4);
            let mut w = vec![0u8; lead];
            w.push(2);
            w.extend((0..40).map(|_| if rng.gen() { 2 } else { 0 }));
            assert_eq!(psi.apply(&Word(w.clone())).unwrap().0, psi_oracle(j, &w));
        }
    }
}

#[test]
fn cylinder_counts_frozen() {
    assert_eq!(cylinder_sep_count(1, 1, 3), BigUint::from(8u32));
    assert_eq!(cylinder_sep_count(2, 1, 1), BigUint::from(4u32));
    assert_eq!(cylinder_cov_bound(1, 1, 1), BigUint::from(4u32));
    assert_eq!(cylinder_cov_bound(1, 2, 1), BigUint::from(10u32));
    for j in 1..=4 {
        for k in 1..=4 {
            for n in 1..=4 {
                assert!(cylinder_cov_bound(j, k, n) >= cylinder_sep_count(j, k, n));
            }
        }
    }
}

#[test]
fn cylinder_family_separated_by_brute_force() {
    for &(j, k, n) in &[(1usize, 1usize, 2usize), (1, 2, 2), (2, 1, 2), (1, 3, 1)] {
        let bits = n * j * k;
        let eps = 3f64.powi(-((k * (j + 1)) as i32));
        let reps: Vec<Vec<u8>> = (0..1u32 << bits)
            .map(|m| cylinder_representative(j, k, n, &(0..bits).map(|i| m >> i & 1 == 1).collect::<Vec<_>>()).0)
            .collect();
        let mut min = f64::INFINITY;
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                min = min.min(psi_bowen(j, &reps[a], &reps[b], n + 1));
            }
        }
        assert!(min > eps, "(j,k,n)=({j},{k},{n}): {min} <= {eps}");
        let check = cylinder_separation_check(j, k, n).unwrap();
        assert_eq!(check.method, CheckMethod::Exhaustive);
        assert!((check.min_distance - min).abs() < 1e-15 && check.pass);
    }
}

#[test]
fn splice_tail_transports_at_three_to_minus_n() {
    // constant head of length n, ψ_1 behind it: orbits share the head, so distances
    // scale by 3^{-n}, not 3^{1-n}
    let head = truncation_map(&SymbolicSystem::shift(2), 0, 0);
    let (j, k, steps) = (1usize, 1usize, 2usize);
    let bits = steps * j * k;
    let eps = 3f64.powi(-((k * (j + 1)) as i32));
    let reps: Vec<Vec<u8>> = (0..1u32 << bits)
        .map(|m| cylinder_representative(j, k, steps, &(0..bits).map(|i| m >> i & 1 == 1).collect::<Vec<_>>()).0)
        .collect();
    for n in 1..=4 {
        let splice = splice_shift(&head, &make_psi_j(j).unwrap(), n).unwrap();
        let lift = |w: &[u8]| {
            let mut v = vec![0u8; n];
            v.extend_from_slice(w);
            Word(v)
        };
        let mut min = f64::INFINITY;
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                let tail = psi_bowen(j, &reps[a], &reps[b], steps + 1);
                let d = bowen_distance(&splice, &lift(&reps[a]), &lift(&reps[b]), steps + 1).unwrap();
                assert!((d - tail * 3f64.powi(-(n as i32))).abs() < 1e-15);
                min = min.min(d);
            }
        }
        let scale = 3f64.powi(-(n as i32));
        assert!(min > eps * scale, "n={n}");
        // the family is not separated at the 3^{1-n} scale
        assert!(min <= eps * 3.0 * scale, "n={n}");
    }
}

#[test]
fn splice_moves_points_by_at_most_the_tail_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let head = truncation_map(&SymbolicSystem::shift(2), 2, 0);
    for n in 3..=6 {
        let splice = splice_shift(&head, &make_psi_j(1).unwrap(), n).unwrap();
        for _ in 0..100 {
            let w: Vec<u8> = (0..30).map(|_| rng.gen_range(0..=2)).collect();
            let (a, b) = (splice.apply(&Word(w.clone())).unwrap(), head.apply(&Word(w)).unwrap());
            assert!(metric(&a.0, &b.0) <= splice_sup_bound(n, 2) + 1e-15);
        }
        assert!((splice_sup_bound(n, 2) - 3f64.powi(-(n as i32))).abs() < 1e-15);
    }
}

#[test]
fn csv_is_deterministic_across_thread_counts() {
    let g = PiecewiseAffineMap::tent3();
    let pts: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| grid_table(&g, &pts, &[1, 2, 3], &[0.1, 0.3], Method::Auto).unwrap().to_csv())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
    assert!(one.starts_with("n,epsilon,"));
}
