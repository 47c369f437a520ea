//! Full-branch block profiles, the block limit formula, and strong horseshoe
//! certificates.

use serde::{Deserialize, Serialize};

use crate::bowen::GrowthEstimate;
use crate::error::{Error, Result};
use crate::interval::{BlockMap, BranchCount, PiecewiseAffineMap, TruncatedIntervalSystem, DEFAULT_BRANCH_CAP};

const ONTO_TOL: f64 = 1e-12;
pub const MISIUREWICZ_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub length: f64,
    pub count: BranchCount,
}

/// `(|I_k|, s_k)` per block, sorted so the branch counts never decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockProfile {
    entries: Vec<ProfileEntry>,
}

impl BlockProfile {
    pub fn new(entries: Vec<ProfileEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Input("empty block profile".into()));
        }
        for (k, e) in entries.iter().enumerate() {
            if !(e.length > 0.0) {
                return Err(Error::Input(format!("block {k} has non-positive length")));
            }
            if e.count.is_trivial() {
                return Err(Error::Input(format!("block {k} has a single branch; log s_k = 0")));
            }
        }
        let mut p = BlockProfile { entries };
        p.rearrange();
        Ok(p)
    }

    fn rearrange(&mut self) {
        // stable, so equal counts keep their block order
        self.entries.sort_by(|a, b| a.count.ln().partial_cmp(&b.count.ln()).unwrap());
    }

    pub fn entries(&self) -> &[ProfileEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same lengths with every count raised to the `s`-th power.
    pub fn powered(&self, s: u32) -> Self {
        BlockProfile {
            entries: self.entries.iter().map(|e| ProfileEntry { length: e.length, count: e.count.pow(s) }).collect(),
        }
    }

    /// `log |I_k| / log s_k` per entry.
    pub fn log_ratios(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.length.ln() / e.count.ln()).collect()
    }

    /// Index where the tail (last `⌈K/2⌉` entries) starts.
    pub fn tail_start(&self) -> usize {
        self.len() - self.len().div_ceil(2)
    }
}

/// Reads the profile off a block system, checking each branch maps onto its block.
pub fn detect_blocks(sys: &TruncatedIntervalSystem) -> Result<BlockProfile> {
    let mut entries = Vec::with_capacity(sys.blocks().len());
    for (k, b) in sys.blocks().iter().enumerate() {
        let block = k + sys.first_index();
        if let BlockMap::Explicit(m) = &b.map {
            let (lo, hi) = (b.spec.lo, b.spec.hi);
            let tol = ONTO_TOL * (hi - lo).abs().max(1.0);
            for br in m.branches() {
                let (a, c) = br.image();
                if (a - lo).abs() > tol || (c - hi).abs() > tol {
                    return Err(Error::Structure {
                        block,
                        reason: format!("branch on [{}, {}] has image [{a}, {c}], not [{lo}, {hi}]", br.lo, br.hi),
                    });
                }
            }
        }
        let count = b.branch_count();
        if count.is_trivial() {
            return Err(Error::Structure { block, reason: "a single branch gives no horseshoe".into() });
        }
        entries.push(ProfileEntry { length: b.spec.length, count });
    }
    BlockProfile::new(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaValue {
    pub lower: f64,
    pub upper: f64,
    /// The term for every profile entry, in profile order.
    pub sequence: Vec<f64>,
}

impl FormulaValue {
    /// The tail bounds agree within `tol`, so a limit value may be read off.
    pub fn converged(&self, tol: f64) -> bool {
        self.upper - self.lower <= tol
    }
}

/// `s / |s - log|I_k| / log s_k|` per block; min/max over the tail.
pub fn horseshoe_mdim_formula(profile: &BlockProfile, s: u32) -> Result<FormulaValue> {
    if s == 0 {
        return Err(Error::Input("power must be positive".into()));
    }
    let sf = s as f64;
    let sequence: Vec<f64> = profile.log_ratios().iter().map(|q| sf / (sf - q).abs()).collect();
    let tail = &sequence[profile.tail_start()..];
    Ok(FormulaValue {
        lower: tail.iter().copied().fold(f64::INFINITY, f64::min),
        upper: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sequence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisiurewiczReport {
    pub bound: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Entropy estimate against `log max s_k`.
pub fn misiurewicz_check(profile: &BlockProfile, estimate: &GrowthEstimate) -> MisiurewiczReport {
    let bound = profile.entries().iter().map(|e| e.count.ln()).fold(f64::NEG_INFINITY, f64::max);
    let est = estimate.upper_rate;
    MisiurewiczReport { bound, estimate: est, tolerance: MISIUREWICZ_TOL, pass: est >= bound - MISIUREWICZ_TOL }
}

pub type Interval = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeChecks {
    /// `|J| > eps`.
    pub size: bool,
    /// `|J_i| > |J| / (2 k^{1/n})` per sub-box.
    pub subbox_size: Vec<bool>,
    /// `J` inside the interior of the image of the middle third of `J_i`.
    pub containment: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeCertificate {
    pub n: usize,
    pub eps: f64,
    #[serde(rename = "J")]
    pub j: Vec<Interval>,
    pub subboxes: Vec<Vec<Interval>>,
    pub checks: HorseshoeChecks,
    pub pass: bool,
}

/// Smallest side of a box.
pub fn box_size(b: &[Interval]) -> f64 {
    b.iter().map(|s| s[1] - s[0]).fold(f64::INFINITY, f64::min)
}

/// `[(2a+b)/3, (a+2b)/3]` per side.
pub fn middle_third(b: &[Interval]) -> Vec<Interval> {
    b.iter().map(|&[a, c]| [(2.0 * a + c) / 3.0, (a + 2.0 * c) / 3.0]).collect()
}

/// Image of `[a, b]` under a continuous piecewise-affine map, from its branch pieces.
pub fn interval_image(map: &PiecewiseAffineMap, a: f64, b: f64) -> Result<Interval> {
    let pieces = map.restrict(a, b);
    if pieces.is_empty() {
        return Err(Error::Domain(format!("[{a}, {b}] misses the map's domain")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pieces {
        let (u, v) = p.image();
        lo = lo.min(u);
        hi = hi.max(v);
    }
    Ok([lo, hi])
}

/// Evaluates the strong horseshoe conditions for a coordinate product of interval maps.
pub fn verify_strong_horseshoe(
    factors: &[PiecewiseAffineMap],
    j: &[Interval],
    subboxes: &[Vec<Interval>],
    eps: f64,
) -> Result<HorseshoeCertificate> {
    let n = factors.len();
    if n == 0 || j.len() != n || subboxes.iter().any(|b| b.len() != n) {
        return Err(Error::Input(format!("boxes must have one side per factor ({n})")));
    }
    if subboxes.is_empty() {
        return Err(Error::Input("no sub-boxes".into()));
    }
    for b in subboxes.iter().chain(std::iter::once(&j.to_vec())) {
        for (side, f) in b.iter().zip(factors) {
            let (lo, hi) = f.ambient();
            if !(side[0] < side[1]) || side[0] < lo - ONTO_TOL || side[1] > hi + ONTO_TOL {
                return Err(Error::Domain(format!("side {side:?} is not inside [{lo}, {hi}]")));
            }
        }
    }
    for (x, a) in subboxes.iter().enumerate() {
        for (y, b) in subboxes.iter().enumerate().skip(x + 1) {
            let overlap = a.iter().zip(b).all(|(p, q)| p[1].min(q[1]) - p[0].max(q[0]) > ONTO_TOL);
            if overlap {
                return Err(Error::Input(format!("sub-boxes {x} and {y} overlap")));
            }
        }
    }
    let k = subboxes.len() as f64;
    let size_j = box_size(j);
    let floor = size_j / (2.0 * k.powf(1.0 / n as f64));
    let subbox_size: Vec<bool> = subboxes.iter().map(|b| box_size(b) > floor).collect();
    let containment = subboxes
        .iter()
        .map(|b| {
            let mid = middle_third(b);
            let mut inside = true;
            for ((side, m), f) in j.iter().zip(&mid).zip(factors) {
                let img = interval_image(f, m[0], m[1])?;
                inside &= img[0] + ONTO_TOL < side[0] && side[1] < img[1] - ONTO_TOL;
            }
            Ok(inside)
        })
        .collect::<Result<Vec<bool>>>()?;
    let size = size_j > eps;
    let pass = size && subbox_size.iter().all(|&c| c) && containment.iter().all(|&c| c);
    Ok(HorseshoeCertificate {
        n,
        eps,
        j: j.to_vec(),
        subboxes: subboxes.to_vec(),
        checks: HorseshoeChecks { size, subbox_size, containment },
        pass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeSetup {
    pub map: PiecewiseAffineMap,
    pub j: Vec<Interval>,
    pub subboxes: Vec<Vec<Interval>>,
    pub eps: f64,
}

impl HorseshoeSetup {
    pub fn verify(&self) -> Result<HorseshoeCertificate> {
        verify_strong_horseshoe(std::slice::from_ref(&self.map), &self.j, &self.subboxes, self.eps)
    }
}

/// The `(1, 1 - 4/3^s, 3^{s-1} - 1)` horseshoe of the `s`-th tent power.
///
/// Sub-intervals are `[(3r-2)/3^s, (3r+1)/3^s]` for `r = 1..=3^{s-1}-1`; `J` is their hull.
pub fn tent_power_horseshoe(s: u32) -> Result<HorseshoeSetup> {
    if s < 2 {
        return Err(Error::Input("tent power horseshoe needs s >= 2".into()));
    }
    let map = PiecewiseAffineMap::tent3().compose_power_capped(s, DEFAULT_BRANCH_CAP)?;
    let d = 3f64.powi(s as i32);
    let k = 3u64.pow(s - 1) - 1;
    let subboxes: Vec<Vec<Interval>> =
        (1..=k).map(|r| vec![[(3 * r - 2) as f64 / d, (3 * r + 1) as f64 / d]]).collect();
    let j = vec![[1.0 / d, (3 * k + 1) as f64 / d]];
    Ok(HorseshoeSetup { map, j, subboxes, eps: 1.0 - 4.0 / d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bowen::CountTable;
    use crate::interval::{make_phi_sr, make_psi134, make_varphi, AffineBranch, Block, BlockSpec, Orientation};

    fn estimate(rate: f64) -> GrowthEstimate {
        GrowthEstimate { lower_rate: rate, upper_rate: rate, fit_window: (1, 3), source: CountTable::default() }
    }

    #[test]
    fn detect_examples() {
        let p = detect_blocks(&make_phi_sr(1, 1.0, 3).unwrap()).unwrap();
        let want = [(2.0 / 3.0, 3u64), (2.0 / 9.0, 9), (2.0 / 27.0, 27)];
        for (e, (len, c)) in p.entries().iter().zip(want) {
            assert!((e.length - len).abs() < 1e-15);
            assert_eq!(e.count.value_u64(), Some(c));
        }
        let p = detect_blocks(&make_psi134(2).unwrap()).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((p.entries()[0].length - 6.0 / pi2).abs() < 1e-15);
        assert!((p.entries()[1].length - 6.0 / (4.0 * pi2)).abs() < 1e-15);
        assert_eq!(p.entries()[1].count.value_u64(), Some(5));
        let t = detect_blocks(&TruncatedIntervalSystem::tent3()).unwrap();
        assert_eq!((t.entries()[0].length, t.entries()[0].count.value_u64()), (1.0, Some(3)));
    }

    #[test]
    fn detect_rejects_partial_branch() {
        let m = PiecewiseAffineMap::new(
            0.0,
            1.0,
            vec![AffineBranch::through(0.0, 0.5, 0.0, 1.0), AffineBranch::through(0.5, 1.0, 1.0, 0.5)],
        )
        .unwrap();
        let spec = BlockSpec {
            lo: 0.0,
            hi: 1.0,
            length: 1.0,
            branch_count: BranchCount::exact(2),
            orientation: Orientation::Alternating,
        };
        let sys = TruncatedIntervalSystem::new("bad", vec![Block { spec, map: BlockMap::Explicit(m) }], 0, (0.0, 1.0))
            .unwrap();
        assert!(matches!(detect_blocks(&sys), Err(Error::Structure { block: 0, .. })));
    }

    #[test]
    fn formula_examples() {
        let p = detect_blocks(&make_phi_sr(1, 1.0, 40).unwrap()).unwrap();
        let f = horseshoe_mdim_formula(&p, 1).unwrap();
        assert!((f.lower - 0.5).abs() < 0.01 && (f.upper - 0.5).abs() < 0.01, "{f:?}");
        assert_eq!(f.sequence.len(), 40);
        let last = *p.log_ratios().last().unwrap();
        assert!((last + 1.0).abs() < 0.02);
        // psi134 converges at a logarithmic rate; 3/5 shows up only near k = 10^12
        let pi2 = std::f64::consts::PI.powi(2);
        let far: Vec<ProfileEntry> = (0..4u64)
            .map(|i| {
                let k = 1_000_000_000_000u64 + i;
                ProfileEntry { length: 6.0 / (pi2 * (k as f64).powi(2)), count: BranchCount::exact(2 * k + 1) }
            })
            .collect();
        let f = horseshoe_mdim_formula(&BlockProfile::new(far).unwrap(), 3).unwrap();
        assert!((f.upper - 0.6).abs() < 0.01, "{f:?}");
        let near = horseshoe_mdim_formula(&detect_blocks(&make_psi134(40).unwrap()).unwrap(), 3).unwrap();
        assert!(near.lower > 0.62 && near.upper < 0.64);
        let v = detect_blocks(&make_varphi(40).unwrap()).unwrap();
        let f = horseshoe_mdim_formula(&v, 1).unwrap();
        assert!(f.lower < f.upper && f.upper < 1.0);
    }

    #[test]
    fn power_rewrite() {
        let p = detect_blocks(&make_psi134(30).unwrap()).unwrap();
        for s in 1..=4 {
            let a = horseshoe_mdim_formula(&p, s).unwrap();
            let b = horseshoe_mdim_formula(&p.powered(s), 1).unwrap();
            for (x, y) in a.sequence.iter().zip(&b.sequence) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn misiurewicz_examples() {
        let t = detect_blocks(&TruncatedIntervalSystem::tent3()).unwrap();
        assert!(misiurewicz_check(&t, &estimate(3f64.ln())).pass);
        assert!(!misiurewicz_check(&t, &estimate(3f64.ln() / 2.0)).pass);
        let two = BlockProfile::new(vec![ProfileEntry { length: 0.5, count: BranchCount::exact(2) }]).unwrap();
        assert!(misiurewicz_check(&two, &estimate(0.65)).pass);
        assert!(!misiurewicz_check(&two, &estimate(0.6)).pass);
    }

    #[test]
    fn tent_power_certificates() {
        let h = tent_power_horseshoe(2).unwrap();
        assert_eq!(h.j, vec![[1.0 / 9.0, 7.0 / 9.0]]);
        assert_eq!(h.subboxes.len(), 2);
        assert!((h.eps - 5.0 / 9.0).abs() < 1e-15);
        assert!(h.verify().unwrap().pass);
        let h3 = tent_power_horseshoe(3).unwrap();
        assert_eq!(h3.subboxes.len(), 8);
        assert!(h3.subboxes.iter().all(|b| (b[0][1] - b[0][0] - 1.0 / 9.0).abs() < 1e-15));
        let too_big = verify_strong_horseshoe(std::slice::from_ref(&h.map), &h.j, &h.subboxes, 0.9).unwrap();
        assert!(!too_big.checks.size && !too_big.pass);
        let overlap = vec![vec![[0.1, 0.5]], vec![[0.4, 0.8]]];
        assert!(matches!(
            verify_strong_horseshoe(std::slice::from_ref(&h.map), &h.j, &overlap, 0.1),
            Err(Error::Input(_))
        ));
        let json = serde_json::to_value(h.verify().unwrap()).unwrap();
        assert!(json.get("J").is_some() && json["pass"] == true);
    }
}
