//! Finite-depth words over small alphabets with the 3-adic metric: the shift,
//! the Cantor maps ψ_j, truncation and splice maps, and the unzip isometry on
//! two-sided words.
//!
//! A word stands for every infinite sequence it is a prefix of, so maps that
//! consume symbols return shorter words; the output length is the number of
//! symbols that are known exactly.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bowen::MetricSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>) -> Self {
        Word(symbols)
    }

    pub fn zeros(depth: usize) -> Self {
        Word(vec![0; depth])
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    /// Length of the common prefix.
    pub fn agreement(&self, other: &Word) -> usize {
        self.0.iter().zip(&other.0).take_while(|(a, b)| a == b).count()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::Input(format!("bad symbol {c:?}"))))
            .collect::<Result<Vec<u8>>>()
            .map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Metric value over the shared prefix plus a bound on what the unseen tail could add.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Σ 3^{-n} |u_n - v_n|` over shared positions; `max_symbol` bounds a single difference.
pub fn cantor_metric(u: &Word, v: &Word, max_symbol: u8) -> Result<MetricValue> {
    if u.0.is_empty() || v.0.is_empty() {
        return Err(Error::Input("empty word".into()));
    }
    let depth = u.depth().min(v.depth());
    Ok(MetricValue { value: prefix_distance(&u.0, &v.0), tail_bound: max_symbol as f64 * 3f64.powi(-(depth as i32)) / 2.0 })
}

fn prefix_distance(a: &[u8], b: &[u8]) -> f64 {
    let mut w = 1.0;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        w /= 3.0;
        sum += w * x.abs_diff(*y) as f64;
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Shift,
    /// On the words starting with `k-1` zeros then a 2: keep that prefix, shift the rest by `jk`.
    Psi { j: usize },
    /// The first `n` output symbols of `inner`, then `x0` forever.
    Truncation { inner: Box<SymbolicSystem>, n: usize, x0: u8 },
    /// First `n` symbols from a truncation, then `tail` run on the input shifted by `n`.
    Splice { head: Box<SymbolicSystem>, tail: Box<SymbolicSystem>, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicSystem {
    /// Largest symbol value in use; 2 for the Cantor alphabet {0, 2}.
    pub max_symbol: u8,
    pub rule: Rule,
}

impl SymbolicSystem {
    pub fn shift(max_symbol: u8) -> Self {
        SymbolicSystem { max_symbol, rule: Rule::Shift }
    }

    pub fn name(&self) -> String {
        match &self.rule {
            Rule::Shift => "shift".into(),
            Rule::Psi { j } => format!("psi_{j}"),
            Rule::Truncation { inner, n, x0 } => format!("trunc({}, {n}, {x0})", inner.name()),
            Rule::Splice { head, tail, n } => format!("splice({}, {}, {n})", head.name(), tail.name()),
        }
    }

    pub fn apply(&self, w: &Word) -> Result<Word> {
        let x = &w.0;
        match &self.rule {
            Rule::Shift => {
                if x.len() < 2 {
                    return Err(Error::Depth { needed: 2, available: x.len() });
                }
                Ok(Word(x[1..].to_vec()))
            }
            Rule::Psi { j } => {
                let Some(lead) = x.iter().position(|&s| s != 0) else {
                    return Ok(w.clone());
                };
                let k = lead + 1;
                let skip = k + j * k;
                if x.len() <= skip {
                    return Err(Error::Depth { needed: skip + 1, available: x.len() });
                }
                let mut out = x[..k].to_vec();
                out.extend_from_slice(&x[skip..]);
                Ok(Word(out))
            }
            Rule::Truncation { inner, n, x0 } => {
                let mut out = if *n == 0 {
                    Vec::new()
                } else {
                    let y = inner.apply(w)?;
                    if y.depth() < *n {
                        return Err(Error::Depth { needed: *n, available: y.depth() });
                    }
                    y.0[..*n].to_vec()
                };
                out.resize(x.len().max(*n), *x0);
                Ok(Word(out))
            }
            Rule::Splice { head, tail, n } => {
                if x.len() <= *n {
                    return Err(Error::Depth { needed: n + 1, available: x.len() });
                }
                let mut out = head.apply(w)?.0;
                out.truncate(*n);
                out.extend(tail.apply(&Word(x[*n..].to_vec()))?.0);
                Ok(Word(out))
            }
        }
    }

    pub fn iterate(&self, w: &Word, times: usize) -> Result<Word> {
        let mut cur = w.clone();
        for _ in 0..times {
            cur = self.apply(&cur)?;
        }
        Ok(cur)
    }
}

impl MetricSystem for SymbolicSystem {
    type Point = Word;
    fn distance(&self, a: &Word, b: &Word) -> f64 {
        prefix_distance(&a.0, &b.0)
    }
    fn step(&self, x: &Word) -> Result<Word> {
        self.apply(x)
    }
}

pub fn make_psi_j(j: usize) -> Result<SymbolicSystem> {
    if j == 0 {
        return Err(Error::Input("psi_j needs j >= 1".into()));
    }
    Ok(SymbolicSystem { max_symbol: 2, rule: Rule::Psi { j } })
}

/// `phi` cut off after `n` output symbols and continued by the constant `x0`.
pub fn truncation_map(phi: &SymbolicSystem, n: usize, x0: u8) -> SymbolicSystem {
    SymbolicSystem {
        max_symbol: phi.max_symbol.max(x0),
        rule: Rule::Truncation { inner: Box::new(phi.clone()), n, x0 },
    }
}

/// Keeps the first `n` symbols of a truncation map and runs `psi` on the input shifted by `n`.
pub fn splice_shift(phi_trunc: &SymbolicSystem, psi: &SymbolicSystem, n: usize) -> Result<SymbolicSystem> {
    let Rule::Truncation { n: k, .. } = &phi_trunc.rule else {
        return Err(Error::Input("splice needs a truncation map as its head".into()));
    };
    if n < k + 1 {
        return Err(Error::Input(format!("splice point {n} must exceed the head length {k}")));
    }
    Ok(SymbolicSystem {
        max_symbol: phi_trunc.max_symbol.max(psi.max_symbol),
        rule: Rule::Splice { head: Box::new(phi_trunc.clone()), tail: Box::new(psi.clone()), n },
    })
}

/// `Σ_{i>n} 3^{-i} · max_symbol`: how far a splice at `n` can move any point.
pub fn splice_sup_bound(n: usize, max_symbol: u8) -> f64 {
    max_symbol as f64 * 3f64.powi(-(n as i32)) / 2.0
}

/// Number of cylinders in the separated family for `ψ_j` at scale `3^{-k(j+1)}`: `2^{jnk}`.
pub fn cylinder_sep_count(j: usize, k: usize, n: usize) -> BigUint {
    BigUint::one() << (j * n * k)
}

/// `k 2^{njk} + 2`.
pub fn cylinder_cov_bound(j: usize, k: usize, n: usize) -> BigUint {
    BigUint::from(k) * cylinder_sep_count(j, k, n) + 2u32
}

/// `3^{-k(j+1)}`.
pub fn cylinder_scale(j: usize, k: usize) -> f64 {
    3f64.powi(-((k * (j + 1)) as i32))
}

/// Depth of a cylinder representative that survives `n` applications of ψ_j.
pub fn representative_depth(j: usize, k: usize, n: usize) -> usize {
    k + (n + 1) * j * k + 1
}

/// The word `0^{k-1} 2 z_1 … z_n 0 0 …`, with the blocks `z_i ∈ {0,2}^{jk}` read from `bits`.
pub fn cylinder_representative(j: usize, k: usize, n: usize, bits: &[bool]) -> Word {
    let mut w = vec![0u8; representative_depth(j, k, n)];
    w[k - 1] = 2;
    for (i, &b) in bits.iter().take(n * j * k).enumerate() {
        if b {
            w[k + i] = 2;
        }
    }
    Word(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMethod {
    /// Every pair of representatives.
    Exhaustive,
    /// One witness pair per differing position, which attains the minimum over its class.
    ClassMinimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderCheck {
    pub j: usize,
    pub k: usize,
    pub n: usize,
    pub count: String,
    pub eps: f64,
    pub min_distance: f64,
    pub pairs_checked: u64,
    pub method: CheckMethod,
    pub pass: bool,
}

/// Largest family checked pair by pair.
pub const EXHAUSTIVE_FAMILY_CAP: usize = 1 << 10;

/// Checks that the cylinder representatives are pairwise `(n+1, 3^{-k(j+1)})`-separated under ψ_j.
///
/// Pairs differing first at a given position all sit at least as far apart as
/// the pair differing only there, since the metric terms are non-negative and
/// every representative moves by the same shift. Large families use that pair.
pub fn cylinder_separation_check(j: usize, k: usize, n: usize) -> Result<CylinderCheck> {
    if j == 0 || k == 0 || n == 0 {
        return Err(Error::Input("j, k, n must be positive".into()));
    }
    let psi = make_psi_j(j)?;
    let eps = cylinder_scale(j, k);
    let bits = n * j * k;
    let dist = |a: &Word, b: &Word| crate::bowen::bowen_distance(&psi, a, b, n + 1);
    let (min, pairs, method) = if bits < 64 && (1usize << bits) <= EXHAUSTIVE_FAMILY_CAP {
        let reps: Vec<Word> = (0..1u64 << bits)
            .map(|m| cylinder_representative(j, k, n, &(0..bits).map(|i| m >> i & 1 == 1).collect::<Vec<_>>()))
            .collect();
        let orbits = reps.par_iter().map(|r| psi.orbit(r, n + 1)).collect::<Result<Vec<_>>>()?;
        let min = (0..orbits.len())
            .into_par_iter()
            .map(|a| {
                (a + 1..orbits.len())
                    .map(|b| {
                        orbits[a].iter().zip(&orbits[b]).map(|(x, y)| prefix_distance(&x.0, &y.0)).fold(0.0, f64::max)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min);
        let pairs = (orbits.len() * (orbits.len() - 1) / 2) as u64;
        (min, pairs, CheckMethod::Exhaustive)
    } else {
        let base = cylinder_representative(j, k, n, &[]);
        let mut min = f64::INFINITY;
        for p in 0..bits {
            let mut flip = vec![false; bits];
            flip[p] = true;
            min = min.min(dist(&base, &cylinder_representative(j, k, n, &flip))?);
        }
        (min, bits as u64, CheckMethod::ClassMinimal)
    };
    Ok(CylinderCheck {
        j,
        k,
        n,
        count: cylinder_sep_count(j, k, n).to_string(),
        eps,
        min_distance: min,
        pairs_checked: pairs,
        method,
        pass: min > eps,
    })
}

/// Horizon at which the cover-bound upper sequence is evaluated.
pub const PSI_HORIZON: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiBounds {
    pub j: usize,
    pub target: f64,
    /// `kj log 2 / ((k+1)(j+1) log 3)` for `k = 1..=k_max`.
    pub lower: Vec<f64>,
    /// `log(k 2^{njk} + 2) / (n k (j+1) log 3)` at `n = PSI_HORIZON`.
    pub upper: Vec<f64>,
}

impl PsiBounds {
    pub fn last(&self) -> (f64, f64) {
        (*self.lower.last().unwrap(), *self.upper.last().unwrap())
    }

    pub fn brackets(&self, value: f64) -> bool {
        let (lo, hi) = self.last();
        lo <= value && value <= hi
    }

    pub fn gap(&self) -> f64 {
        let (lo, hi) = self.last();
        hi - lo
    }
}

pub fn psi_target(j: usize) -> f64 {
    j as f64 * 2f64.ln() / ((j + 1) as f64 * 3f64.ln())
}

pub fn psi_mdim_bounds(j: usize, k_max: usize) -> Result<PsiBounds> {
    if j == 0 || k_max < 2 {
        return Err(Error::Input("need j >= 1 and k_max >= 2".into()));
    }
    let (jf, l2, l3) = (j as f64, 2f64.ln(), 3f64.ln());
    let n = PSI_HORIZON;
    let lower = (1..=k_max).map(|k| k as f64 * jf * l2 / ((k + 1) as f64 * (jf + 1.0) * l3)).collect();
    let upper = (1..=k_max)
        .map(|k| crate::bowen::ln_big(&cylinder_cov_bound(j, k, n)) / ((n * k) as f64 * (jf + 1.0) * l3))
        .collect();
    Ok(PsiBounds { j, target: psi_target(j), lower, upper })
}

/// A two-sided word on positions `-radius..=radius`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoSided<T> {
    pub radius: usize,
    pub symbols: Vec<T>,
}

impl<T: Copy> TwoSided<T> {
    pub fn new(radius: usize, symbols: Vec<T>) -> Result<Self> {
        if symbols.len() != 2 * radius + 1 {
            return Err(Error::Input(format!("radius {radius} needs {} symbols", 2 * radius + 1)));
        }
        Ok(TwoSided { radius, symbols })
    }

    pub fn at(&self, i: isize) -> T {
        self.symbols[(i + self.radius as isize) as usize]
    }

    /// `(σx)_i = x_{i+1}`, known on one fewer position each side.
    pub fn shift(&self) -> Result<Self> {
        if self.radius == 0 {
            return Err(Error::Depth { needed: 1, available: 0 });
        }
        Ok(TwoSided { radius: self.radius - 1, symbols: self.symbols[2..].to_vec() })
    }
}

/// `Σ_i 3^{radius-|i|} |x_i - y_i|`: the two-sided distance scaled to an integer.
pub trait ScaledDistance {
    fn scaled_distance(&self, other: &Self) -> u128;
}

impl ScaledDistance for TwoSided<u8> {
    fn scaled_distance(&self, other: &Self) -> u128 {
        weighted(self.radius, self.symbols.iter().zip(&other.symbols).map(|(a, b)| a.abs_diff(*b) as u128))
    }
}

impl ScaledDistance for TwoSided<(u8, u8)> {
    // the factor alphabet X × Y carries the sum metric
    fn scaled_distance(&self, other: &Self) -> u128 {
        weighted(
            self.radius,
            self.symbols.iter().zip(&other.symbols).map(|(a, b)| a.0.abs_diff(b.0) as u128 + a.1.abs_diff(b.1) as u128),
        )
    }
}

fn weighted(radius: usize, diffs: impl Iterator<Item = u128>) -> u128 {
    diffs.enumerate().map(|(p, d)| 3u128.pow(radius as u32 - (p as isize - radius as isize).unsigned_abs() as u32) * d).sum()
}

impl<T: Copy> TwoSided<T> {
    pub fn distance(&self, other: &Self) -> f64
    where
        Self: ScaledDistance,
    {
        self.scaled_distance(other) as f64 / 3f64.powi(self.radius as i32)
    }
}

/// Unzips a word over pairs into a pair of words.
pub fn theta(w: &TwoSided<(u8, u8)>) -> (TwoSided<u8>, TwoSided<u8>) {
    (
        TwoSided { radius: w.radius, symbols: w.symbols.iter().map(|p| p.0).collect() },
        TwoSided { radius: w.radius, symbols: w.symbols.iter().map(|p| p.1).collect() },
    )
}
