//! The acceptance suite: one check per criterion, each reporting pass/fail with
//! the numbers behind it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::bowen::{
    branch_table, growth_rate, max_separated, mdim_estimate, min_cover, min_spanning, Column, Counting,
    EpsilonSchedule, Method,
};
use crate::error::Result;
use crate::horseshoe::{detect_blocks, horseshoe_mdim_formula, misiurewicz_check, tent_power_horseshoe};
use crate::interval::{make_phi_sr, make_psi134, make_varphi, BlockConjugacy, PiecewiseAffineMap, TruncatedIntervalSystem};
use crate::product::{box_dim_product_report, make_cube_system, product_inequality_report};
use crate::shift::{cylinder_separation_check, make_psi_j, psi_mdim_bounds, theta, ScaledDistance, TwoSided, Word};
use crate::bowen::cantor_samples;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} [{}] {:.3}s: {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

pub const TITLES: [&str; 10] = [
    "phi_sr limit formula",
    "varphi and psi134 limit formula",
    "phi_sr counting estimate",
    "tent entropy",
    "Cantor psi_j bounds",
    "identities",
    "strong horseshoes",
    "products",
    "unzip isometry",
    "oracle equivalence",
];

/// Runs one criterion (1..=10); errors count as failures.
pub fn run(id: u8, seed: u64) -> Outcome {
    let start = Instant::now();
    let result = match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(seed),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(seed),
        10 => criterion_10(seed),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut pass, mut detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = time_limit(id) {
        if seconds >= limit {
            pass = false;
            detail.push_str(&format!("; over the {limit} s budget"));
        }
    }
    Outcome { id, title: TITLES.get(id as usize - 1).copied().unwrap_or("unknown"), pass, detail, seconds }
}

pub fn run_all(seed: u64) -> Vec<Outcome> {
    (1..=10).map(|id| run(id, seed)).collect()
}

fn time_limit(id: u8) -> Option<f64> {
    match id {
        1 | 2 => Some(1.0),
        3 => Some(30.0),
        _ => None,
    }
}

fn near(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() < tol
}

fn formula_case(sys: &TruncatedIntervalSystem, power: u32, want: f64, label: &str) -> Result<(bool, String)> {
    let f = horseshoe_mdim_formula(&detect_blocks(sys)?, power)?;
    let ok = near(f.lower, want, 0.01) && near(f.upper, want, 0.01);
    Ok((ok, format!("{label}: [{:.4}, {:.4}] vs {want:.4}", f.lower, f.upper)))
}

fn collect(parts: Vec<(bool, String)>) -> (bool, String) {
    (parts.iter().all(|p| p.0), parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "))
}

pub fn criterion_1() -> Result<(bool, String)> {
    let mut parts = Vec::new();
    for (s, r) in [(1u32, 1.0), (1, 2.0), (2, 1.0), (3, 2.0)] {
        let want = s as f64 / (r + s as f64);
        parts.push(formula_case(&make_phi_sr(s, r, 40)?, 1, want, &format!("(s,r)=({s},{r})"))?);
    }
    Ok(collect(parts))
}

pub fn criterion_2() -> Result<(bool, String)> {
    let mut parts = vec![formula_case(&make_varphi(40)?, 1, 1.0, "varphi")?];
    let psi = make_psi134(40)?;
    for s in 1..=3u32 {
        parts.push(formula_case(&psi, s, s as f64 / (s as f64 + 2.0), &format!("psi134 s={s}"))?);
    }
    Ok(collect(parts))
}

pub fn criterion_3() -> Result<(bool, String)> {
    let sys = make_phi_sr(1, 1.0, 20)?;
    let schedule = EpsilonSchedule::block_lengths(&sys)?;
    let est = mdim_estimate(&sys, &schedule, (4, 10), Counting::BranchFormula)?;
    let ok = (0.42..=0.58).contains(&est.lower) && (0.42..=0.58).contains(&est.upper);
    Ok((ok, format!("estimate [{:.4}, {:.4}] within [0.42, 0.58]", est.lower, est.upper)))
}

pub fn criterion_4() -> Result<(bool, String)> {
    let tent = TruncatedIntervalSystem::tent3();
    let ns: Vec<usize> = (4..=12).collect();
    let table = branch_table(&tent, &ns, 1e-3)?;
    let g = growth_rate(&table, Column::Sep, (4, 12))?;
    let report = misiurewicz_check(&detect_blocks(&tent)?, &g);
    let ok = near(g.lower_rate, 3f64.ln(), 0.02) && report.pass;
    Ok((
        ok,
        format!(
            "rate {:.5} vs log 3 = {:.5}; entropy bound {:.4}, estimate {:.4}, check {}",
            g.lower_rate,
            3f64.ln(),
            report.bound,
            report.estimate,
            if report.pass { "passes" } else { "fails" }
        ),
    ))
}

pub fn criterion_5() -> Result<(bool, String)> {
    let mut parts = Vec::new();
    for j in [1usize, 2] {
        let b = psi_mdim_bounds(j, 40)?;
        let (lo, hi) = b.last();
        parts.push((b.brackets(b.target) && b.gap() < 0.02, format!("j={j}: [{lo:.4}, {hi:.4}] around {:.4}", b.target)));
    }
    let mut all = true;
    let mut min_margin = f64::INFINITY;
    for j in 1..=3 {
        for k in 1..=3 {
            for n in 1..=3 {
                let c = cylinder_separation_check(j, k, n)?;
                all &= c.pass;
                min_margin = min_margin.min(c.min_distance / c.eps);
            }
        }
    }
    parts.push((all, format!("cylinder families j,k,n <= 3 separated (smallest d/eps = {min_margin:.3})")));
    Ok(collect(parts))
}

pub fn criterion_6(seed: u64) -> Result<(bool, String)> {
    let grid: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
    let mut worst_power = 0.0f64;
    for s in [2u32, 3] {
        let direct = make_phi_sr(s, 0.5, 8)?;
        let base = make_phi_sr(1, 0.5, 8)?;
        for &x in &grid {
            let a = direct.eval_precise(TwoFloat::from(x))?;
            let b = base.iterate_precise(TwoFloat::from(x), s as usize)?;
            worst_power = worst_power.max(f64::from(a - b).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words_ok = true;
    let mut words = 0;
    for j in 1..=3usize {
        for s in 1..=3usize {
            let single = make_psi_j(j)?;
            let combined = make_psi_j(s * j)?;
            for k in 1..=4usize {
                for _ in 0..8 {
                    let mut w: Vec<u8> = (0..200).map(|_| if rng.gen::<bool>() { 2 } else { 0 }).collect();
                    w[..k - 1].fill(0);
                    w[k - 1] = 2;
                    let w = Word(w);
                    words_ok &= single.iterate(&w, s)? == combined.apply(&w)?;
                    words += 1;
                }
            }
            words_ok &= single.iterate(&Word::zeros(200), s)? == Word::zeros(200);
        }
    }

    let mut worst_conj = 0.0f64;
    for (s, r1, r2) in [(1u32, 1.0, 0.5), (1, 0.5, 2.0), (2, 1.0, 0.5)] {
        let a = make_phi_sr(s, r1, 8)?;
        let b = make_phi_sr(s, r2, 8)?;
        let h = BlockConjugacy::between(&a, &b)?;
        for &x in &grid {
            let x = TwoFloat::from(x);
            let lhs = h.eval_precise(a.eval_precise(x)?);
            let rhs = b.eval_precise(h.eval_precise(x))?;
            worst_conj = worst_conj.max(f64::from(lhs - rhs).abs());
        }
    }
    let ok = worst_power < 1e-9 && words_ok && worst_conj < 1e-9;
    Ok((
        ok,
        format!(
            "power identity max error {worst_power:.2e}; psi words {} ({words} words); conjugacy max error {worst_conj:.2e}",
            if words_ok { "match" } else { "differ" }
        ),
    ))
}

pub fn criterion_7() -> Result<(bool, String)> {
    let mut parts = Vec::new();
    for s in 2..=6u32 {
        let h = tent_power_horseshoe(s)?;
        let c = h.verify()?;
        parts.push((c.pass, format!("s={s}: k={} eps={:.4} {}", c.subboxes.len(), c.eps, if c.pass { "ok" } else { "fails" })));
    }
    let two = tent_power_horseshoe(2)?;
    parts.push((
        two.subboxes.len() == 2 && near(two.eps, 5.0 / 9.0, 1e-15),
        "s=2 is the (1, 5/9, 2) horseshoe".into(),
    ));
    Ok(collect(parts))
}

pub fn criterion_8() -> Result<(bool, String)> {
    let tent = PiecewiseAffineMap::tent3();
    let phi = make_phi_sr(1, 1.0, 3)?;
    let a: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let b: Vec<f64> = (0..17).map(|i| i as f64 / 16.0).collect();
    let report = product_inequality_report(&tent, &phi, &a, &b, &[1, 2, 3], &[0.1, 0.25, 0.5])?;
    let cube = make_cube_system(&[(1, 1.0), (1, 1.0)], 40)?.predicted();
    let schedule = EpsilonSchedule::ternary(10)?;
    let cc = box_dim_product_report(&cantor_samples(10), &cantor_samples(10), &schedule, 0.04)?;
    let want = 2.0 * 2f64.ln() / 3f64.ln();
    let box_ok = near(cc.product.lower, want, 0.04) && near(cc.product.upper, want, 0.04);
    Ok(collect(vec![
        (report.pass, format!("{} product inequality checks, {} violations", report.checks.len(), report.violations)),
        (cube == 1.0, format!("cube prediction {cube}")),
        (box_ok, format!("Cantor x Cantor box dimension [{:.4}, {:.4}] vs {want:.4}", cc.product.lower, cc.product.upper)),
    ]))
}

fn random_pair_word(rng: &mut ChaCha8Rng, radius: usize) -> TwoSided<(u8, u8)> {
    TwoSided { radius, symbols: (0..2 * radius + 1).map(|_| (rng.gen_range(0..2), rng.gen_range(0..2))).collect() }
}

pub fn criterion_9(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dist_ok, mut conj_ok) = (true, true);
    for _ in 0..10_000 {
        let u = random_pair_word(&mut rng, 12);
        let v = random_pair_word(&mut rng, 12);
        let (ux, uy) = theta(&u);
        let (vx, vy) = theta(&v);
        dist_ok &= u.scaled_distance(&v) == ux.scaled_distance(&vx) + uy.scaled_distance(&vy);
        let (sx, sy) = theta(&u.shift()?);
        conj_ok &= sx == ux.shift()? && sy == uy.shift()?;
    }
    Ok((
        dist_ok && conj_ok,
        format!(
            "10000 pairs at radius 12: distances {}, shift conjugacy {}",
            if dist_ok { "preserved" } else { "differ" },
            if conj_ok { "holds" } else { "fails" }
        ),
    ))
}

pub fn criterion_10(seed: u64) -> Result<(bool, String)> {
    let tent = PiecewiseAffineMap::tent3();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut greedy_ok, mut sandwich_ok, mut exact_instances) = (true, true, 0);
    for _ in 0..200 {
        let m = rng.gen_range(5..=30usize);
        let pts: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let n = rng.gen_range(1..=3usize);
        let eps = rng.gen_range(0.05..0.5);
        let greedy = max_separated(&tent, &pts, n, eps, Method::Greedy)?;
        let exact = max_separated(&tent, &pts, n, eps, Method::Exact)?;
        greedy_ok &= greedy.lo.as_ref() <= exact.exact_value();
        if m <= crate::bowen::EXACT_COVER_CAP {
            let span = min_spanning(&tent, &pts, n, eps, Method::Exact)?;
            let cov = min_cover(&tent, &pts, n, 2.0 * eps, Method::Exact)?;
            sandwich_ok &= cov.exact_value() <= span.exact_value() && span.exact_value() <= exact.exact_value();
            exact_instances += 1;
        }
    }
    Ok((
        greedy_ok && sandwich_ok,
        format!(
            "greedy <= exact on 200 instances: {}; sandwich on {exact_instances} exact instances: {}",
            if greedy_ok { "yes" } else { "no" },
            if sandwich_ok { "yes" } else { "no" }
        ),
    ))
}
