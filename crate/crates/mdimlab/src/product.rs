//! Products under the sum metric: count-level product inequalities, cube
//! systems, and box dimension of products.

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bowen::{
    bowen_matrix, box_counts, box_ratios, branch_counts, exact_separated_set, exact_spanning_set, sorted_order,
    EpsilonSchedule, MdimEstimate, MetricSystem, Sample, EXACT_COVER_CAP,
};
use crate::error::{Error, Result};
use crate::horseshoe::{detect_blocks, horseshoe_mdim_formula, FormulaValue};
use crate::interval::{make_phi_sr, TruncatedIntervalSystem};

/// `(φ × ψ)(x, y) = (φx, ψy)` with `d((x,y),(x',y')) = d(x,x') + d'(y,y')`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSystem<A, B> {
    pub left: A,
    pub right: B,
}

pub fn product<A: MetricSystem, B: MetricSystem>(left: A, right: B) -> ProductSystem<A, B> {
    ProductSystem { left, right }
}

impl<A: MetricSystem, B: MetricSystem> MetricSystem for ProductSystem<A, B> {
    type Point = (A::Point, B::Point);
    fn distance(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        self.left.distance(&a.0, &b.0) + self.right.distance(&a.1, &b.1)
    }
    fn step(&self, x: &Self::Point) -> Result<Self::Point> {
        Ok((self.left.step(&x.0)?, self.right.step(&x.1)?))
    }
}

/// The one-point system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OnePoint;

impl MetricSystem for OnePoint {
    type Point = ();
    fn distance(&self, _: &(), _: &()) -> f64 {
        0.0
    }
    fn step(&self, _: &()) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `sep_{a×b}(n, ε) >= sep_a(n, ε) · sep_b(n, ε)`.
    Separated,
    /// `span_{a×b}(n, 2ε) <= span_a(n, ε) · span_b(n, ε)`.
    Spanning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub inequality: Inequality,
    pub n: usize,
    pub eps: f64,
    pub left_count: usize,
    pub right_count: usize,
    /// Size of the product witness set.
    pub product_count: usize,
    pub holds: bool,
    /// Indices into the factor candidate lists of the offending pair or point.
    pub witness: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub checks: Vec<InequalityCheck>,
    pub violations: usize,
    pub pass: bool,
}

/// Checks both product inequalities on every `(n, eps)` from exact factor counts.
///
/// Optimal factor sets are multiplied out and the product set is tested
/// directly in the product Bowen metric, so a violation comes with a witness.
pub fn product_inequality_report<A: MetricSystem, B: MetricSystem>(
    a: &A,
    b: &B,
    a_points: &[A::Point],
    b_points: &[B::Point],
    ns: &[usize],
    eps_list: &[f64],
) -> Result<ProductReport> {
    if a_points.len() > EXACT_COVER_CAP || b_points.len() > EXACT_COVER_CAP {
        return Err(Error::Resource(format!("product report needs at most {EXACT_COVER_CAP} points per factor")));
    }
    if a_points.is_empty() || b_points.is_empty() {
        return Err(Error::Input("empty factor candidate set".into()));
    }
    let (oa, ob) = (sorted_order(a_points), sorted_order(b_points));
    let cells: Vec<(usize, f64)> = ns.iter().flat_map(|&n| eps_list.iter().map(move |&e| (n, e))).collect();
    let checks = cells
        .par_iter()
        .map(|&(n, eps)| {
            let da = bowen_matrix(a, a_points, n)?;
            let db = bowen_matrix(b, b_points, n)?;
            let ora = a_points.iter().map(|x| a.orbit(x, n)).collect::<Result<Vec<_>>>()?;
            let orb = b_points.iter().map(|y| b.orbit(y, n)).collect::<Result<Vec<_>>>()?;
            // the product Bowen distance, one time step at a time
            let dp = |p: [usize; 2], q: [usize; 2]| -> Result<f64> {
                let (ra, rb, sa, sb) = (&ora[p[0]], &orb[p[1]], &ora[q[0]], &orb[q[1]]);
                Ok((0..n).map(|t| a.distance(&ra[t], &sa[t]) + b.distance(&rb[t], &sb[t])).fold(0.0, f64::max))
            };

            let sa = exact_separated_set(&da, &oa, eps);
            let sb = exact_separated_set(&db, &ob, eps);
            let sep_set: Vec<[usize; 2]> = sa.iter().flat_map(|&i| sb.iter().map(move |&j| [i, j])).collect();
            let mut sep_witness = None;
            'outer: for x in 0..sep_set.len() {
                for y in x + 1..sep_set.len() {
                    if dp(sep_set[x], sep_set[y])? <= eps {
                        sep_witness = Some(vec![sep_set[x], sep_set[y]]);
                        break 'outer;
                    }
                }
            }

            let ca = exact_spanning_set(&da, &oa, eps);
            let cb = exact_spanning_set(&db, &ob, eps);
            let span_set: Vec<[usize; 2]> = ca.iter().flat_map(|&i| cb.iter().map(move |&j| [i, j])).collect();
            let mut span_witness = None;
            'points: for i in 0..a_points.len() {
                for j in 0..b_points.len() {
                    let mut covered = false;
                    for &c in &span_set {
                        if dp([i, j], c)? <= 2.0 * eps {
                            covered = true;
                            break;
                        }
                    }
                    if !covered {
                        span_witness = Some(vec![[i, j]]);
                        break 'points;
                    }
                }
            }

            Ok(vec![
                InequalityCheck {
                    inequality: Inequality::Separated,
                    n,
                    eps,
                    left_count: sa.len(),
                    right_count: sb.len(),
                    product_count: sep_set.len(),
                    holds: sep_witness.is_none(),
                    witness: sep_witness,
                },
                InequalityCheck {
                    inequality: Inequality::Spanning,
                    n,
                    eps,
                    left_count: ca.len(),
                    right_count: cb.len(),
                    product_count: span_set.len(),
                    holds: span_witness.is_none(),
                    witness: span_witness,
                },
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let checks: Vec<InequalityCheck> = checks.into_iter().flatten().collect();
    let violations = checks.iter().filter(|c| !c.holds).count();
    Ok(ProductReport { checks, violations, pass: violations == 0 })
}

/// Product of the closed-form span bounds of two block systems at `(n, eps)`.
pub fn branch_product_span(a: &TruncatedIntervalSystem, b: &TruncatedIntervalSystem, n: usize, eps: f64) -> Result<BigUint> {
    let ra = branch_counts(a, n, eps)?;
    let rb = branch_counts(b, n, eps)?;
    Ok(ra.span.hi.unwrap_or_default() * rb.span.hi.unwrap_or_default())
}

/// Finite product of block systems under the sum metric.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeSystem {
    pub params: Vec<(u32, f64)>,
    pub factors: Vec<TruncatedIntervalSystem>,
}

pub fn make_cube_system(params: &[(u32, f64)], k: usize) -> Result<CubeSystem> {
    if params.is_empty() {
        return Err(Error::Input("cube system needs at least one factor".into()));
    }
    let factors = params.iter().map(|&(s, r)| make_phi_sr(s, r, k)).collect::<Result<Vec<_>>>()?;
    Ok(CubeSystem { params: params.to_vec(), factors })
}

impl CubeSystem {
    /// `Σ s_i / (r_i + s_i)`, the sum of the factor limits.
    pub fn predicted(&self) -> f64 {
        self.params.iter().map(|&(s, r)| s as f64 / (r + s as f64)).sum()
    }

    pub fn factor_formulas(&self) -> Result<Vec<FormulaValue>> {
        self.factors.iter().map(|f| horseshoe_mdim_formula(&detect_blocks(f)?, 1)).collect()
    }

    /// Termwise sum of the factor formula sequences, with min/max over the tail.
    pub fn formula(&self) -> Result<FormulaValue> {
        let parts = self.factor_formulas()?;
        let len = parts[0].sequence.len();
        let sequence: Vec<f64> = (0..len).map(|k| parts.iter().map(|p| p.sequence[k]).sum()).collect();
        let tail = &sequence[len - len.div_ceil(2)..];
        Ok(FormulaValue {
            lower: tail.iter().copied().fold(f64::INFINITY, f64::min),
            upper: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sequence,
        })
    }
}

impl MetricSystem for CubeSystem {
    type Point = Vec<f64>;
    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }
    fn step(&self, x: &Vec<f64>) -> Result<Vec<f64>> {
        if x.len() != self.factors.len() {
            return Err(Error::Input(format!("point has {} coordinates, need {}", x.len(), self.factors.len())));
        }
        self.factors.iter().zip(x).map(|(f, &c)| f.eval(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub name: String,
    pub values: Vec<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProductReport {
    pub left: MdimEstimate,
    pub right: MdimEstimate,
    pub product: MdimEstimate,
    pub tolerance: f64,
    pub chains: Vec<ChainCheck>,
    pub pass: bool,
}

/// Box-counting estimates of both factors and their product, checked against
/// `upper_a + lower_b <= upper_ab <= upper_a + upper_b` and
/// `lower_a + lower_b <= lower_ab <= lower_a + upper_b`.
///
/// Product boxes are pairs of factor boxes, so the product count is `N_a N_b`.
pub fn box_dim_product_report(
    a: &[Sample],
    b: &[Sample],
    schedule: &EpsilonSchedule,
    tolerance: f64,
) -> Result<BoxProductReport> {
    if schedule.values().iter().any(|&e| e >= 1.0) {
        return Err(Error::Input("box counting scales must be below 1".into()));
    }
    let na = box_counts(a, schedule)?;
    let nb = box_counts(b, schedule)?;
    let nab: Vec<u64> = na.iter().zip(&nb).map(|(x, y)| x * y).collect();
    let (left, right, product) =
        (box_ratios(schedule, &na)?, box_ratios(schedule, &nb)?, box_ratios(schedule, &nab)?);
    let chain = |name: &str, v: Vec<f64>| ChainCheck {
        name: name.into(),
        holds: v.windows(2).all(|w| w[0] <= w[1] + tolerance),
        values: v,
    };
    let chains = vec![
        chain("upper", vec![left.upper + right.lower, product.upper, left.upper + right.upper]),
        chain("lower", vec![left.lower + right.lower, product.lower, left.lower + right.upper]),
    ];
    let pass = chains.iter().all(|c| c.holds);
    Ok(BoxProductReport { left, right, product, tolerance, chains, pass })
}
