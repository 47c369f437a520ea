//! Piecewise-affine interval maps and the block systems built from them.
//!
//! Block systems keep their branches lazy: block `n` of `phi_sr` carries
//! `3^{s(n+1)}` branches, far past anything that can be listed, so each block
//! evaluates through its chart and materializes only on request.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Tolerance for "x lies in a branch domain" and for endpoint agreement.
pub const CONTAIN_TOL: f64 = 1e-12;
/// Default limit on the number of branches a materialized map may hold.
pub const DEFAULT_BRANCH_CAP: usize = 10_000_000;
/// How far `base(p_star)` may sit from `p_star` for a splice.
pub const FIXED_POINT_TOL: f64 = 1e-9;

// Affine forms carry rounding proportional to the slope; scale the check.
fn scaled_tol(slope: f64) -> f64 {
    CONTAIN_TOL * slope.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "BranchRepr", from = "BranchRepr")]
pub struct AffineBranch {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    /// Value at `lo`. Evaluating from the left end keeps endpoint values exact
    /// when slopes are large.
    pub at_lo: f64,
}

#[derive(Serialize, Deserialize)]
struct BranchRepr {
    dom: [f64; 2],
    slope: f64,
    intercept: f64,
}

impl From<AffineBranch> for BranchRepr {
    fn from(b: AffineBranch) -> Self {
        BranchRepr { dom: [b.lo, b.hi], slope: b.slope, intercept: b.intercept() }
    }
}

impl From<BranchRepr> for AffineBranch {
    fn from(r: BranchRepr) -> Self {
        AffineBranch::affine(r.dom[0], r.dom[1], r.slope, r.intercept)
    }
}

impl AffineBranch {
    pub fn new(lo: f64, hi: f64, slope: f64, intercept: f64) -> Result<Self> {
        if !(lo < hi) || !slope.is_finite() || !intercept.is_finite() {
            return Err(Error::Input(format!("bad branch on [{lo}, {hi}]")));
        }
        Ok(Self::affine(lo, hi, slope, intercept))
    }

    /// The affine piece on `[lo, hi]` sending `lo -> y_lo` and `hi -> y_hi`.
    pub fn through(lo: f64, hi: f64, y_lo: f64, y_hi: f64) -> Self {
        let slope = (y_hi - y_lo) / (hi - lo);
        AffineBranch { lo, hi, slope, at_lo: y_lo }
    }

    fn affine(lo: f64, hi: f64, slope: f64, intercept: f64) -> Self {
        AffineBranch { lo, hi, slope, at_lo: slope * lo + intercept }
    }

    pub fn intercept(&self) -> f64 {
        self.at_lo - self.slope * self.lo
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.at_lo + self.slope * (x - self.lo)
    }

    pub fn eval_precise(&self, x: TwoFloat) -> TwoFloat {
        (x - self.lo) * self.slope + self.at_lo
    }

    /// The same map on a sub-interval.
    pub fn clipped(&self, lo: f64, hi: f64) -> Self {
        AffineBranch { lo, hi, slope: self.slope, at_lo: self.eval(lo) }
    }

    /// Image interval, ordered.
    pub fn image(&self) -> (f64, f64) {
        let (a, b) = (self.eval(self.lo), self.eval(self.hi));
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MapRepr", try_from = "MapRepr")]
pub struct PiecewiseAffineMap {
    lo: f64,
    hi: f64,
    branches: Vec<AffineBranch>,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    ambient: [f64; 2],
    branches: Vec<AffineBranch>,
}

impl From<PiecewiseAffineMap> for MapRepr {
    fn from(m: PiecewiseAffineMap) -> Self {
        MapRepr { ambient: [m.lo, m.hi], branches: m.branches }
    }
}

impl TryFrom<MapRepr> for PiecewiseAffineMap {
    type Error = Error;
    fn try_from(r: MapRepr) -> Result<Self> {
        PiecewiseAffineMap::new(r.ambient[0], r.ambient[1], r.branches)
    }
}

impl PiecewiseAffineMap {
    /// Validates tiling, continuity and that images stay in the ambient interval.
    pub fn new(lo: f64, hi: f64, branches: Vec<AffineBranch>) -> Result<Self> {
        let map = Self::from_parts(lo, hi, branches)?;
        for (i, b) in map.branches.iter().enumerate() {
            let (ylo, yhi) = b.image();
            let tol = scaled_tol(b.slope);
            if ylo < lo - tol || yhi > hi + tol {
                return Err(Error::Domain(format!("branch {i} leaves the ambient interval")));
            }
        }
        let jump = map.max_jump();
        let steep = map.branches.iter().fold(1.0f64, |m, b| m.max(b.slope.abs()));
        if jump > scaled_tol(steep) {
            return Err(Error::Input(format!("map is discontinuous (jump {jump:e})")));
        }
        Ok(map)
    }

    // Tiling only; used where continuity is reported rather than enforced.
    fn from_parts(lo: f64, hi: f64, branches: Vec<AffineBranch>) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Input(format!("empty ambient interval [{lo}, {hi}]")));
        }
        let (first, last) = match (branches.first(), branches.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Input("map has no branches".into())),
        };
        if (first.lo - lo).abs() > CONTAIN_TOL || (last.hi - hi).abs() > CONTAIN_TOL {
            return Err(Error::Input("branches do not cover the ambient interval".into()));
        }
        for w in branches.windows(2) {
            if !(w[0].lo < w[0].hi) || (w[0].hi - w[1].lo).abs() > CONTAIN_TOL {
                return Err(Error::Input(format!("branch domains do not tile at {}", w[0].hi)));
            }
        }
        if !(last.lo < last.hi) {
            return Err(Error::Input("degenerate last branch".into()));
        }
        Ok(PiecewiseAffineMap { lo, hi, branches })
    }

    pub fn identity(lo: f64, hi: f64) -> Self {
        PiecewiseAffineMap { lo, hi, branches: vec![AffineBranch { lo, hi, slope: 1.0, at_lo: lo }] }
    }

    /// `x -> |1 - |3x - 1||` on `[0, 1]`.
    pub fn tent3() -> Self {
        let b = |lo: f64, hi: f64, slope: f64, intercept: f64| AffineBranch::affine(lo, hi, slope, intercept);
        PiecewiseAffineMap {
            lo: 0.0,
            hi: 1.0,
            branches: vec![
                b(0.0, 1.0 / 3.0, 3.0, 0.0),
                b(1.0 / 3.0, 2.0 / 3.0, -3.0, 2.0),
                b(2.0 / 3.0, 1.0, 3.0, -2.0),
            ],
        }
    }

    pub fn ambient(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn branches(&self) -> &[AffineBranch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.branches.iter().map(|b| b.lo).collect();
        v.push(self.hi);
        v
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo - CONTAIN_TOL && x <= self.hi + CONTAIN_TOL
    }

    // Left branch wins at a shared endpoint.
    fn locate(&self, x: f64) -> usize {
        let i = self.branches.partition_point(|b| b.hi < x);
        i.min(self.branches.len() - 1)
    }

    pub fn branch_at(&self, x: f64) -> Result<&AffineBranch> {
        if !self.contains(x) {
            return Err(Error::Domain(format!("{x} outside [{}, {}]", self.lo, self.hi)));
        }
        Ok(&self.branches[self.locate(x)])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.branch_at(x)?.eval(x))
    }

    pub fn eval_precise(&self, x: TwoFloat) -> Result<TwoFloat> {
        Ok(self.branch_at(x.hi())?.eval_precise(x))
    }

    /// Largest disagreement between neighbouring branches at shared endpoints.
    pub fn max_jump(&self) -> f64 {
        self.branches
            .windows(2)
            .map(|w| (w[0].eval(w[0].hi) - w[1].eval(w[1].lo)).abs())
            .fold(0.0, f64::max)
    }

    /// `self ∘ inner`, refined branch by branch.
    pub fn compose(&self, inner: &PiecewiseAffineMap) -> Result<Self> {
        self.compose_capped(inner, DEFAULT_BRANCH_CAP)
    }

    pub fn compose_capped(&self, inner: &PiecewiseAffineMap, cap: usize) -> Result<Self> {
        let mut out: Vec<AffineBranch> = Vec::with_capacity(inner.len().min(cap));
        for ib in &inner.branches {
            let push = |out: &mut Vec<AffineBranch>, b: AffineBranch| -> Result<()> {
                if out.len() >= cap {
                    return Err(Error::Resource(format!("composition exceeds {cap} branches")));
                }
                out.push(b);
                Ok(())
            };
            if ib.slope == 0.0 {
                let v = self.eval(ib.at_lo)?;
                push(&mut out, AffineBranch { lo: ib.lo, hi: ib.hi, slope: 0.0, at_lo: v })?;
                continue;
            }
            let (ylo, yhi) = ib.image();
            if ylo < self.lo - scaled_tol(ib.slope) || yhi > self.hi + scaled_tol(ib.slope) {
                return Err(Error::Domain("inner image leaves the outer domain".into()));
            }
            // outer breakpoints strictly inside the image, in x order
            let mut cuts: Vec<f64> = self
                .branches
                .iter()
                .skip(1)
                .map(|b| b.lo)
                .filter(|&p| p > ylo + CONTAIN_TOL && p < yhi - CONTAIN_TOL)
                .map(|p| ib.lo + (p - ib.at_lo) / ib.slope)
                .collect();
            if ib.slope < 0.0 {
                cuts.reverse();
            }
            let mut xs = Vec::with_capacity(cuts.len() + 2);
            xs.push(ib.lo);
            xs.extend(cuts.into_iter().filter(|&x| x > ib.lo && x < ib.hi));
            xs.push(ib.hi);
            for w in xs.windows(2) {
                if !(w[0] < w[1]) {
                    continue;
                }
                let mid = ib.eval(0.5 * (w[0] + w[1])).clamp(self.lo, self.hi);
                let ob = &self.branches[self.locate(mid)];
                push(
                    &mut out,
                    AffineBranch { lo: w[0], hi: w[1], slope: ob.slope * ib.slope, at_lo: ob.eval(ib.eval(w[0])) },
                )?;
            }
        }
        Self::from_parts(inner.lo, inner.hi, out)
    }

    /// The `s`-fold composition.
    pub fn compose_power(&self, s: u32) -> Result<Self> {
        self.compose_power_capped(s, DEFAULT_BRANCH_CAP)
    }

    pub fn compose_power_capped(&self, s: u32, cap: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::Input("power must be positive".into()));
        }
        let mut acc = self.clone();
        for _ in 1..s {
            acc = self.compose_capped(&acc, cap)?;
        }
        Ok(acc)
    }

    /// Branches clipped to `[a, b]`.
    pub fn restrict(&self, a: f64, b: f64) -> Vec<AffineBranch> {
        self.branches
            .iter()
            .filter(|br| br.hi > a && br.lo < b)
            .map(|br| br.clipped(br.lo.max(a), br.hi.min(b)))
            .filter(|br| br.lo < br.hi)
            .collect()
    }

    /// `T^{-1} ∘ self ∘ T` where `T` sends `[lo, hi]` increasingly onto the ambient interval.
    pub fn conjugate_onto(&self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Input("empty target interval".into()));
        }
        let k = (self.hi - self.lo) / (hi - lo);
        let back = |y: f64| lo + (y - self.lo) / k;
        let n = self.branches.len();
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let dlo = if i == 0 { lo } else { back(b.lo) };
                let dhi = if i + 1 == n { hi } else { back(b.hi) };
                AffineBranch::through(dlo, dhi, back(b.eval(b.lo)), back(b.eval(b.hi)))
            })
            .collect();
        Self::from_parts(lo, hi, branches)
    }

    /// Uniform samples of the graph, endpoints included.
    pub fn graph(&self, samples: usize) -> Vec<(f64, f64)> {
        let m = samples.max(2);
        (0..m)
            .map(|i| {
                let x = self.lo + (self.hi - self.lo) * i as f64 / (m - 1) as f64;
                (x, self.branches[self.locate(x)].eval(x))
            })
            .collect()
    }
}

/// Bisection on `f(x) - x` over a sign change in `[a, b]`, to width 1e-12.
pub fn find_fixed_point(map: &PiecewiseAffineMap, a: f64, b: f64) -> Result<f64> {
    let g = |x: f64| map.eval(x).map(|y| y - x);
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let (mut glo, ghi) = (g(lo)?, g(hi)?);
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if glo.signum() == ghi.signum() {
        return Err(Error::Input(format!("no sign change of f(x)-x on [{lo}, {hi}]")));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest `|f(x) - g(x)|` over `m` uniform points of `[lo, hi]`.
pub fn sup_distance(f: &PiecewiseAffineMap, g: &PiecewiseAffineMap, m: usize) -> Result<f64> {
    let (lo, hi) = f.ambient();
    let mut worst = 0.0f64;
    for i in 0..m.max(2) {
        let x = lo + (hi - lo) * i as f64 / (m.max(2) - 1) as f64;
        worst = worst.max((f.eval(x)? - g.eval(x)?).abs());
    }
    Ok(worst)
}

/// Branch count written as `base^exponent`; the exponents get far too large to expand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchCount {
    pub base: u64,
    pub exponent: u32,
}

impl BranchCount {
    pub fn new(base: u64, exponent: u32) -> Self {
        BranchCount { base, exponent }
    }

    pub fn exact(n: u64) -> Self {
        BranchCount { base: n, exponent: 1 }
    }

    pub fn value_u64(&self) -> Option<u64> {
        self.base.checked_pow(self.exponent)
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from(self.base).pow(self.exponent)
    }

    pub fn ln(&self) -> f64 {
        self.exponent as f64 * (self.base as f64).ln()
    }

    pub fn to_f64(&self) -> f64 {
        (self.base as f64).powi(self.exponent as i32)
    }

    /// Exact while the value stays below about 2^106.
    pub fn to_twofloat(&self) -> TwoFloat {
        let mut acc = TwoFloat::from(1.0);
        for _ in 0..self.exponent {
            acc = acc * self.base as f64;
        }
        acc
    }

    pub fn pow(&self, s: u32) -> Self {
        BranchCount { base: self.base, exponent: self.exponent * s }
    }

    pub fn is_trivial(&self) -> bool {
        self.base <= 1 || self.exponent == 0
    }
}

impl fmt::Display for BranchCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value_u64() {
            Some(v) if v < 1_000_000_000 => write!(f, "{v}"),
            _ => write!(f, "{}^{}", self.base, self.exponent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Every branch increasing: a sawtooth, discontinuous for more than one branch.
    AllIncreasing,
    /// Branch 0 increasing, then alternating; the continuous full-branch case.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub lo: f64,
    pub hi: f64,
    /// Analytic block length. Kept apart from `hi - lo`, which underflows for deep blocks.
    pub length: f64,
    pub branch_count: BranchCount,
    pub orientation: Orientation,
}

impl BlockSpec {
    pub fn chart_len(&self) -> f64 {
        self.hi - self.lo
    }

    fn local_full(&self, t: f64) -> f64 {
        let n = self.branch_count.to_f64();
        let u = t * n;
        let mut i = u.floor().clamp(0.0, n - 1.0);
        let mut f = u - i;
        if f == 0.0 && i > 0.0 {
            i -= 1.0;
            f = 1.0;
        }
        let odd = i < 9.007_199_254_740_992e15 && i % 2.0 == 1.0;
        if self.orientation == Orientation::Alternating && odd {
            1.0 - f
        } else {
            f
        }
    }

    fn local_full_precise(&self, t: TwoFloat) -> TwoFloat {
        let n = self.branch_count.to_twofloat();
        let u = t * n;
        let mut i = u.floor();
        if i < 0.0 {
            i = TwoFloat::from(0.0);
        }
        if i >= n {
            i = n - 1.0;
        }
        let mut f = u - i;
        if f == 0.0 && i > 0.0 {
            i = i - 1.0;
            f = TwoFloat::from(1.0);
        }
        let odd = (i.hi().rem_euclid(2.0) + i.lo().rem_euclid(2.0)) % 2.0 == 1.0;
        if self.orientation == Orientation::Alternating && odd {
            -f + 1.0
        } else {
            f
        }
    }

    /// Materialized global-coordinate map of the full-branch block.
    pub fn to_map(&self, cap: usize) -> Result<PiecewiseAffineMap> {
        let n = match self.branch_count.value_u64() {
            Some(n) if (n as u128) <= cap as u128 => n as usize,
            _ => {
                return Err(Error::Resource(format!(
                    "block with {} branches exceeds cap {cap}",
                    self.branch_count
                )))
            }
        };
        if self.orientation == Orientation::AllIncreasing && n > 1 {
            return Err(Error::Input("all-increasing blocks are not continuous".into()));
        }
        let (lo, len) = (self.lo, self.chart_len());
        let at = |i: usize| if i == n { self.hi } else { lo + len * i as f64 / n as f64 };
        let branches = (0..n)
            .map(|i| {
                let inc = self.orientation == Orientation::AllIncreasing || i % 2 == 0;
                let (a, b) = if inc { (self.lo, self.hi) } else { (self.hi, self.lo) };
                AffineBranch::through(at(i), at(i + 1), a, b)
            })
            .collect();
        PiecewiseAffineMap::from_parts(self.lo, self.hi, branches)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockMap {
    /// Equal full branches given by the `BlockSpec`; evaluated in closed form.
    Full,
    /// An explicit map on the block, in global coordinates.
    Explicit(PiecewiseAffineMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub spec: BlockSpec,
    pub map: BlockMap,
}

impl Block {
    pub fn eval(&self, x: f64) -> Result<f64> {
        match &self.map {
            BlockMap::Explicit(m) => m.eval(x),
            BlockMap::Full => {
                let len = self.spec.chart_len();
                if len <= 0.0 {
                    return Ok(x);
                }
                let t = ((x - self.spec.lo) / len).clamp(0.0, 1.0);
                Ok(self.spec.lo + self.spec.local_full(t) * len)
            }
        }
    }

    pub fn eval_precise(&self, x: TwoFloat) -> Result<TwoFloat> {
        match &self.map {
            BlockMap::Explicit(m) => m.eval_precise(x),
            BlockMap::Full => {
                if self.spec.chart_len() <= 0.0 {
                    return Ok(x);
                }
                let len = TwoFloat::new_sub(self.spec.hi, self.spec.lo);
                let mut t = (x - self.spec.lo) / len;
                if t < 0.0 {
                    t = TwoFloat::from(0.0);
                }
                if t > 1.0 {
                    t = TwoFloat::from(1.0);
                }
                Ok(self.spec.local_full_precise(t) * len + self.spec.lo)
            }
        }
    }

    pub fn to_map(&self, cap: usize) -> Result<PiecewiseAffineMap> {
        match &self.map {
            BlockMap::Explicit(m) => Ok(m.clone()),
            BlockMap::Full => self.spec.to_map(cap),
        }
    }

    pub fn branch_count(&self) -> BranchCount {
        match &self.map {
            BlockMap::Explicit(m) => BranchCount::exact(m.len() as u64),
            BlockMap::Full => self.spec.branch_count,
        }
    }
}

/// Adjacent invariant blocks on `[ambient_lo, tail]`; `[tail, ambient_hi]` is fixed pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedIntervalSystem {
    label: String,
    blocks: Vec<Block>,
    first_index: usize,
    ambient_lo: f64,
    ambient_hi: f64,
}

impl TruncatedIntervalSystem {
    pub fn new(label: &str, blocks: Vec<Block>, first_index: usize, ambient: (f64, f64)) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Input("system needs at least one block".into()));
        }
        if (blocks[0].spec.lo - ambient.0).abs() > CONTAIN_TOL || blocks.last().unwrap().spec.hi > ambient.1 {
            return Err(Error::Input("blocks do not sit at the left of the ambient interval".into()));
        }
        for (i, w) in blocks.windows(2).enumerate() {
            if w[0].spec.hi != w[1].spec.lo {
                return Err(Error::Input(format!("blocks {i} and {} are not adjacent", i + 1)));
            }
        }
        for (i, b) in blocks.iter().enumerate() {
            if !(b.spec.length > 0.0) || b.spec.hi < b.spec.lo {
                return Err(Error::Input(format!("block {i} has no length")));
            }
            if let BlockMap::Explicit(m) = &b.map {
                if m.ambient() != (b.spec.lo, b.spec.hi) {
                    return Err(Error::Input(format!("block {i} map lives on the wrong interval")));
                }
            }
        }
        Ok(TruncatedIntervalSystem {
            label: label.to_string(),
            blocks,
            first_index,
            ambient_lo: ambient.0,
            ambient_hi: ambient.1,
        })
    }

    /// One full-branch block filling `[lo, hi]`.
    pub fn single_block(lo: f64, hi: f64, branches: u64, orientation: Orientation) -> Result<Self> {
        let spec = BlockSpec { lo, hi, length: hi - lo, branch_count: BranchCount::exact(branches), orientation };
        Self::new("block", vec![Block { spec, map: BlockMap::Full }], 0, (lo, hi))
    }

    /// The tent map as a one-block system.
    pub fn tent3() -> Self {
        Self::single_block(0.0, 1.0, 3, Orientation::Alternating).expect("valid block")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Index the first block carries in its construction (0 or 1).
    pub fn first_index(&self) -> usize {
        self.first_index
    }

    pub fn truncation_level(&self) -> usize {
        self.blocks.len()
    }

    pub fn tail_fixed_point(&self) -> f64 {
        self.blocks.last().unwrap().spec.hi
    }

    pub fn ambient(&self) -> (f64, f64) {
        (self.ambient_lo, self.ambient_hi)
    }

    pub fn block_index_of(&self, x: f64) -> Option<usize> {
        if x > self.tail_fixed_point() {
            return None;
        }
        let i = self.blocks.partition_point(|b| b.spec.hi < x);
        Some(i.min(self.blocks.len() - 1))
    }

    fn check(&self, x: f64) -> Result<()> {
        if x < self.ambient_lo - CONTAIN_TOL || x > self.ambient_hi + CONTAIN_TOL {
            return Err(Error::Domain(format!("{x} outside [{}, {}]", self.ambient_lo, self.ambient_hi)));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        match self.block_index_of(x) {
            Some(i) => self.blocks[i].eval(x),
            None => Ok(x),
        }
    }

    /// Double-double evaluation; the steep blocks need it for pointwise identities.
    pub fn eval_precise(&self, x: TwoFloat) -> Result<TwoFloat> {
        self.check(x.hi())?;
        if x > self.tail_fixed_point() {
            return Ok(x);
        }
        let i = self.blocks.partition_point(|b| b.spec.hi < x);
        self.blocks[i.min(self.blocks.len() - 1)].eval_precise(x)
    }

    pub fn iterate(&self, x: f64, times: usize) -> Result<f64> {
        (0..times).try_fold(x, |y, _| self.eval(y))
    }

    pub fn iterate_precise(&self, x: TwoFloat, times: usize) -> Result<TwoFloat> {
        (0..times).try_fold(x, |y, _| self.eval_precise(y))
    }

    /// Materialized map of one block in global coordinates.
    pub fn block_map(&self, k: usize, cap: usize) -> Result<PiecewiseAffineMap> {
        self.blocks
            .get(k)
            .ok_or_else(|| Error::Input(format!("no block {k}")))?
            .to_map(cap)
    }

    /// The whole system as one map, the frozen tail as an identity branch.
    pub fn to_map(&self, cap: usize) -> Result<PiecewiseAffineMap> {
        let mut branches = Vec::new();
        for b in &self.blocks {
            if b.spec.chart_len() <= 0.0 {
                continue;
            }
            let m = b.to_map(cap.saturating_sub(branches.len()))?;
            branches.extend_from_slice(m.branches());
        }
        let tail = self.tail_fixed_point();
        if tail < self.ambient_hi {
            branches.push(AffineBranch { lo: tail, hi: self.ambient_hi, slope: 1.0, at_lo: tail });
        }
        if branches.len() > cap {
            return Err(Error::Resource(format!("system exceeds {cap} branches")));
        }
        PiecewiseAffineMap::from_parts(self.ambient_lo, self.ambient_hi, branches)
    }

    /// The first `k` blocks; what they leave behind becomes the frozen tail.
    pub fn restrict(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.blocks.len() {
            return Err(Error::Input(format!("cannot keep {k} of {} blocks", self.blocks.len())));
        }
        Self::new(&self.label, self.blocks[..k].to_vec(), self.first_index, self.ambient())
    }

    /// Blocks whose branch length is at least `eps` (relative slack 1e-9).
    pub fn resolved_at(&self, eps: f64) -> Option<Self> {
        let k = self
            .blocks
            .iter()
            .take_while(|b| b.spec.length >= eps * (1.0 - 1e-9) * b.branch_count().to_f64())
            .count();
        if k == 0 {
            None
        } else {
            self.restrict(k).ok()
        }
    }
}

fn full_block(lo: f64, hi: f64, length: f64, count: BranchCount) -> Block {
    Block {
        spec: BlockSpec { lo, hi, length, branch_count: count, orientation: Orientation::Alternating },
        map: BlockMap::Full,
    }
}

fn checked_exponent(a: u64, b: u64) -> Result<u32> {
    a.checked_mul(b)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::Resource("branch exponent overflow".into()))
}

/// Blocks `I_0..I_{K-1}` with `|I_n| = C 3^{-nr}`, `C = 1 - 3^{-r}`; block `n` is `g^{s(n+1)}` in its chart.
/// Indexing starts at 0.
pub fn make_phi_sr(s: u32, r: f64, k: usize) -> Result<TruncatedIntervalSystem> {
    if s == 0 || k == 0 || !(r > 0.0) || !r.is_finite() {
        return Err(Error::Input(format!("phi_sr needs s >= 1, r > 0, K >= 1 (got {s}, {r}, {k})")));
    }
    let c = (3f64.powf(r) - 1.0) / 3f64.powf(r);
    let mut a = 0.0f64;
    let mut blocks = Vec::with_capacity(k);
    for n in 0..k {
        let len = c / 3f64.powf(n as f64 * r);
        let next = a + len;
        let e = checked_exponent(s as u64, n as u64 + 1)?;
        blocks.push(full_block(a, next, len, BranchCount::new(3, e)));
        a = next;
    }
    TruncatedIntervalSystem::new(&format!("phi_sr(s={s},r={r})"), blocks, 0, (0.0, 1.0))
}

fn basel_blocks(k: usize, count: impl Fn(u64) -> Result<BranchCount>) -> Result<Vec<Block>> {
    let mut a = 0.0f64;
    let mut blocks = Vec::with_capacity(k);
    for n in 1..=k as u64 {
        let len = 6.0 / (std::f64::consts::PI.powi(2) * (n * n) as f64);
        let next = a + len;
        blocks.push(full_block(a, next, len, count(n)?));
        a = next;
    }
    Ok(blocks)
}

/// Blocks `I_1..I_K` with `|I_n| = 6/(π² n²)`, block `n` carrying `3^n` full branches.
/// Indexing starts at 1.
pub fn make_varphi(k: usize) -> Result<TruncatedIntervalSystem> {
    if k == 0 {
        return Err(Error::Input("K must be positive".into()));
    }
    let blocks = basel_blocks(k, |n| Ok(BranchCount::new(3, checked_exponent(n, 1)?)))?;
    TruncatedIntervalSystem::new("varphi", blocks, 1, (0.0, 1.0))
}

/// Same blocks as [`make_varphi`], block `n` split into `2n+1` alternating full branches.
pub fn make_psi134(k: usize) -> Result<TruncatedIntervalSystem> {
    if k == 0 {
        return Err(Error::Input("K must be positive".into()));
    }
    let blocks = basel_blocks(k, |n| Ok(BranchCount::exact(2 * n + 1)))?;
    TruncatedIntervalSystem::new("psi134", blocks, 1, (0.0, 1.0))
}

/// Blockwise increasing affine homeomorphism between two systems with matching blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConjugacy {
    pieces: Vec<((f64, f64), (f64, f64))>,
}

impl BlockConjugacy {
    pub fn between(from: &TruncatedIntervalSystem, to: &TruncatedIntervalSystem) -> Result<Self> {
        if from.truncation_level() != to.truncation_level() || from.ambient() != to.ambient() {
            return Err(Error::Input("systems have different block structure".into()));
        }
        let mut pieces = Vec::new();
        for (a, b) in from.blocks().iter().zip(to.blocks()) {
            if a.spec.chart_len() > 0.0 && b.spec.chart_len() > 0.0 {
                pieces.push(((a.spec.lo, a.spec.hi), (b.spec.lo, b.spec.hi)));
            }
        }
        let hi = from.ambient().1;
        let (t1, t2) = (from.tail_fixed_point(), to.tail_fixed_point());
        if t1 < hi && t2 < hi {
            pieces.push(((t1, hi), (t2, hi)));
        }
        Ok(BlockConjugacy { pieces })
    }

    fn piece(&self, x: f64) -> &((f64, f64), (f64, f64)) {
        let i = self.pieces.partition_point(|p| p.0 .1 < x);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let ((a, b), (c, d)) = *self.piece(x);
        c + (x - a) / (b - a) * (d - c)
    }

    pub fn eval_precise(&self, x: TwoFloat) -> TwoFloat {
        let ((a, b), (c, d)) = *self.piece(x.hi());
        (x - a) / TwoFloat::new_sub(b, a) * TwoFloat::new_sub(d, c) + c
    }

    pub fn to_map(&self) -> Result<PiecewiseAffineMap> {
        let branches = self
            .pieces
            .iter()
            .map(|&((a, b), (c, d))| AffineBranch::through(a, b, c, d))
            .collect();
        let lo = self.pieces[0].0 .0;
        let hi = self.pieces.last().unwrap().0 .1;
        PiecewiseAffineMap::new(lo, hi, branches)
    }
}

/// The homeomorphism carrying the blocks of `phi_{s,r1}` onto those of `phi_{s,r2}`.
pub fn conjugacy_h(s: u32, r1: f64, r2: f64, k: usize) -> Result<PiecewiseAffineMap> {
    BlockConjugacy::between(&make_phi_sr(s, r1, k)?, &make_phi_sr(s, r2, k)?)?.to_map()
}

/// Replaces `base` near the fixed point `p_star` by a rescaled copy of `inner`.
///
/// `[p_star, p_star + delta/2]` carries `inner`, `[p_star + delta/2, p_star + delta]`
/// the affine bridge back to `base`. The caller picks `delta`.
pub fn splice(
    base: &PiecewiseAffineMap,
    p_star: f64,
    delta: f64,
    inner: &TruncatedIntervalSystem,
) -> Result<PiecewiseAffineMap> {
    let (lo, hi) = base.ambient();
    if !(delta > 0.0) {
        return Err(Error::Domain("delta must be positive".into()));
    }
    if p_star < lo || p_star + delta > hi {
        return Err(Error::Domain(format!("[{p_star}, {}] leaves [{lo}, {hi}]", p_star + delta)));
    }
    let fp = base.eval(p_star)?;
    if (fp - p_star).abs() > FIXED_POINT_TOL {
        return Err(Error::Precondition(format!("{p_star} is not a fixed point (maps to {fp})")));
    }
    let mid = p_star + 0.5 * delta;
    let end = p_star + delta;
    let inner_map = inner.to_map(DEFAULT_BRANCH_CAP)?.conjugate_onto(p_star, mid)?;
    let mut branches = base.restrict(lo, p_star);
    branches.extend_from_slice(inner_map.branches());
    branches.push(AffineBranch::through(mid, end, mid, base.eval(end)?));
    branches.extend(base.restrict(end, hi));
    PiecewiseAffineMap::from_parts(lo, hi, branches)
}
