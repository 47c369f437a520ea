//! `mdimlab`: build systems from JSON specs, run the estimators, write CSV/JSON/TSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdimlab::acceptance;
use mdimlab::bowen::{
    box_counts, box_dimension, branch_table, cantor_samples, grid_table, growth_rate, interval_candidates, ln_big,
    mdim_estimate, unit_interval_samples, Column, Counting, CountTable, EpsilonSchedule, Method,
};
use mdimlab::catalog::{Built, SystemSpec};
use mdimlab::horseshoe::{detect_blocks, horseshoe_mdim_formula, misiurewicz_check, tent_power_horseshoe};
use mdimlab::interval::TruncatedIntervalSystem;
use mdimlab::product::{box_dim_product_report, product_inequality_report};
use mdimlab::shift::{psi_mdim_bounds, Rule};
use mdimlab::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "mdimlab", version, about = "Metric mean dimension estimates for interval and symbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Where to write the main result (stdout when absent).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Also write plot-ready tab-separated columns to this path.
    #[arg(long, global = true)]
    tsv_plot: Option<PathBuf>,
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

/// A system: a name with the flags below, inline JSON, or a JSON file.
#[derive(Args, Clone)]
struct SystemArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    max_symbol: Option<u8>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CountingArg {
    /// Closed-form branch counts.
    Branch,
    /// Exact or greedy counts on a point grid.
    Grid,
}

#[derive(Subcommand)]
enum Command {
    /// Describe the system as JSON; `--tsv-plot` samples its graph.
    Construct {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Growth rate of separated-set counts at one scale.
    EstimateEntropy {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        n_min: usize,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, value_enum, default_value_t = CountingArg::Branch)]
        counting: CountingArg,
        /// Write the count table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Metric mean dimension: counting estimate and limit formula, or ψ_j bounds.
    EstimateMdim {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 4)]
        n_min: usize,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, value_enum, default_value_t = CountingArg::Branch)]
        counting: CountingArg,
        /// Power of the map fed to the limit formula.
        #[arg(long, default_value_t = 1)]
        power: u32,
        /// Last scale index for ψ_j bounds.
        #[arg(long, default_value_t = 40)]
        k_max: usize,
    },
    /// Strong horseshoe for a tent power, or the block profile and limit formula.
    Horseshoe {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 2)]
        power: u32,
        /// Check the certificate conditions.
        #[arg(long)]
        verify: bool,
    },
    /// Box-counting dimension along ternary scales.
    Boxdim {
        #[command(flatten)]
        sys: SystemArgs,
    },
    /// Product inequalities (interval systems) or box-dimension chains (Cantor factors).
    ProductReport {
        #[command(flatten)]
        sys: SystemArgs,
        /// Second factor, given like `--system`; the system flags go to whichever factor takes them.
        #[arg(long)]
        other: String,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.04)]
        tolerance: f64,
    },
    /// Run every acceptance criterion and print a pass/fail table.
    VerifyAll,
}

enum Failure {
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Lib(Error::Input(msg.into()))
}

struct Plot {
    header: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Plot {
    fn xy(x: &'static str, y: &'static str, rows: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Plot { header: vec![x, y], rows: rows.into_iter().map(|(a, b)| vec![a, b]).collect() }
    }

    fn to_tsv(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\t"));
            out.push('\n');
        }
        out
    }
}

struct Report {
    body: String,
    plot: Option<Plot>,
    pass: bool,
}

impl Report {
    fn json(v: Value, plot: Option<Plot>, pass: bool) -> Outcome<Self> {
        let mut body = serde_json::to_string_pretty(&v).map_err(|e| Failure::Io(e.to_string()))?;
        body.push('\n');
        Ok(Report { body, plot, pass })
    }
}

impl SystemArgs {
    fn spec(&self) -> Outcome<SystemSpec> {
        resolve_spec(&self.system, self, false)
    }
}

// Flags each named system takes; used when one set of flags serves two factors.
fn accepted(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "tent3" => &[],
        "phi_sr" => &["s", "r", "K"],
        "varphi" | "psi134" => &["K"],
        "psi_j" => &["j"],
        "shift" => &["max_symbol"],
        "cantor" => &["depth"],
        _ => return None,
    })
}

fn resolve_spec(text: &str, flags: &SystemArgs, shared: bool) -> Outcome<SystemSpec> {
    let text = text.trim();
    if text.starts_with('{') {
        return Ok(SystemSpec::parse(text)?);
    }
    if Path::new(text).is_file() {
        return Ok(SystemSpec::parse(&fs::read_to_string(text)?)?);
    }
    let mut obj = serde_json::Map::new();
    obj.insert("system".into(), json!(text));
    let keep = accepted(text).filter(|_| shared);
    let mut put = |key: &str, v: Option<Value>| {
        if keep.is_some_and(|k| !k.contains(&key)) {
            return;
        }
        if let Some(v) = v {
            obj.insert(key.into(), v);
        }
    };
    put("s", flags.s.map(|v| json!(v)));
    put("r", flags.r.map(|v| json!(v)));
    put("K", flags.k.map(|v| json!(v)));
    put("j", flags.j.map(|v| json!(v)));
    put("depth", flags.depth.map(|v| json!(v)));
    put("max_symbol", flags.max_symbol.map(|v| json!(v)));
    Ok(SystemSpec::parse(&Value::Object(obj).to_string())?)
}

fn window(n_min: usize, n_max: usize) -> Outcome<(usize, usize)> {
    if n_min == 0 || n_max < n_min + 2 {
        return Err(input(format!("n window [{n_min}, {n_max}] needs n_min >= 1 and at least 3 values")));
    }
    Ok((n_min, n_max))
}

fn counting(arg: CountingArg) -> Counting {
    match arg {
        CountingArg::Branch => Counting::BranchFormula,
        CountingArg::Grid => Counting::Grid(Method::Auto),
    }
}

fn construct(sys: &SystemArgs, samples: usize) -> Outcome<Report> {
    let spec = sys.spec()?;
    match spec.build()? {
        Built::Interval(t) => {
            let blocks: Vec<Value> = t
                .blocks()
                .iter()
                .enumerate()
                .map(|(i, b)| json!({ "index": t.first_index() + i, "block": b.spec }))
                .collect();
            let (lo, hi) = t.ambient();
            let plot = if samples >= 2 {
                let rows = (0..samples)
                    .map(|i| {
                        let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
                        t.eval(x).map(|y| (x, y))
                    })
                    .collect::<mdimlab::Result<Vec<_>>>()?;
                Some(Plot::xy("x", "y", rows))
            } else {
                None
            };
            Report::json(
                json!({
                    "spec": spec,
                    "label": t.label(),
                    "ambient": [lo, hi],
                    "first_index": t.first_index(),
                    "tail_fixed_point": t.tail_fixed_point(),
                    "blocks": blocks,
                }),
                plot,
                true,
            )
        }
        Built::Symbolic(s) => {
            Report::json(json!({ "spec": spec, "name": s.name(), "max_symbol": s.max_symbol }), None, true)
        }
        Built::Cantor { depth } => {
            Report::json(json!({ "spec": spec, "depth": depth, "cylinders": 1u64 << depth }), None, true)
        }
    }
}

fn log_sep(table: &CountTable) -> Vec<(f64, f64)> {
    table.rows.iter().filter_map(|r| r.sep.lo.as_ref().map(|v| (r.n as f64, ln_big(v)))).collect()
}

fn estimate_entropy(
    sys: &SystemArgs,
    eps: f64,
    win: (usize, usize),
    arg: CountingArg,
    csv: Option<&Path>,
) -> Outcome<Report> {
    let spec = sys.spec()?;
    let t = spec.interval()?;
    let ns: Vec<usize> = (win.0..=win.1).collect();
    let table = match arg {
        CountingArg::Branch => branch_table(&t, &ns, eps)?,
        CountingArg::Grid => grid_table(&t, &interval_candidates(&t, eps)?, &ns, &[eps], Method::Auto)?,
    };
    let g = growth_rate(&table, Column::Sep, win)?;
    let check = detect_blocks(&t).ok().map(|p| misiurewicz_check(&p, &g));
    if let Some(path) = csv {
        fs::write(path, table.to_csv())?;
    }
    let plot = Plot::xy("n", "log_sep", log_sep(&table));
    Report::json(
        json!({
            "spec": spec,
            "eps": eps,
            "window": [win.0, win.1],
            "counting": table.rows.first().map(|r| r.mode.to_string()),
            "lower_rate": g.lower_rate,
            "upper_rate": g.upper_rate,
            "misiurewicz": check,
        }),
        Some(plot),
        true,
    )
}

fn estimate_mdim(sys: &SystemArgs, win: (usize, usize), arg: CountingArg, power: u32, k_max: usize) -> Outcome<Report> {
    let spec = sys.spec()?;
    match spec.build()? {
        Built::Interval(t) => {
            let schedule = EpsilonSchedule::block_lengths(&t)?;
            let est = mdim_estimate(&t, &schedule, win, counting(arg))?;
            let formula = horseshoe_mdim_formula(&detect_blocks(&t)?, power)?;
            let plot = Plot::xy("abs_log_eps", "ratio", est.per_epsilon.iter().map(|&(e, v)| (e.ln().abs(), v)));
            Report::json(
                json!({
                    "spec": spec,
                    "window": [win.0, win.1],
                    "lower": est.lower,
                    "upper": est.upper,
                    "per_epsilon": est.per_epsilon,
                    "formula_power": power,
                    "formula": { "lower": formula.lower, "upper": formula.upper },
                }),
                Some(plot),
                true,
            )
        }
        Built::Symbolic(s) => {
            let Rule::Psi { j } = s.rule else {
                return Err(input("mdim bounds are available for psi_j only"));
            };
            let b = psi_mdim_bounds(j, k_max)?;
            let (lo, hi) = b.last();
            let plot = Plot {
                header: vec!["k", "lower", "upper"],
                rows: b.lower.iter().zip(&b.upper).enumerate().map(|(i, (&l, &u))| vec![(i + 1) as f64, l, u]).collect(),
            };
            Report::json(
                json!({
                    "spec": spec,
                    "target": b.target,
                    "lower": lo,
                    "upper": hi,
                    "gap": b.gap(),
                    "brackets_target": b.brackets(b.target),
                }),
                Some(plot),
                true,
            )
        }
        Built::Cantor { .. } => Err(input("cantor is a carrier set; use boxdim")),
    }
}

fn horseshoe(sys: &SystemArgs, power: u32, verify: bool) -> Outcome<Report> {
    let spec = sys.spec()?;
    if let SystemSpec::Tent3 { power: base } = spec {
        let s = base.checked_mul(power).ok_or_else(|| input("tent power overflows"))?;
        let setup = tent_power_horseshoe(s)?;
        if verify {
            let cert = setup.verify()?;
            let pass = cert.pass;
            return Report::json(json!({ "spec": spec, "power": s, "certificate": cert }), None, pass);
        }
        return Report::json(
            json!({ "spec": spec, "power": s, "eps": setup.eps, "J": setup.j, "subboxes": setup.subboxes }),
            None,
            true,
        );
    }
    if verify {
        return Err(input("horseshoe certificates are built for tent3 powers"));
    }
    let profile = detect_blocks(&spec.interval()?)?;
    let formula = horseshoe_mdim_formula(&profile, power)?;
    let plot = Plot::xy("block", "term", formula.sequence.iter().enumerate().map(|(i, &v)| (i as f64, v)));
    Report::json(
        json!({ "spec": spec, "power": power, "profile": profile.entries(), "formula": formula }),
        Some(plot),
        true,
    )
}

fn boxdim(sys: &SystemArgs) -> Outcome<Report> {
    let spec = sys.spec()?;
    let Built::Cantor { depth } = spec.build()? else {
        return Err(input("box counting runs on the cantor carrier"));
    };
    let schedule = EpsilonSchedule::ternary(depth as u32)?;
    let samples = cantor_samples(depth);
    let est = box_dimension(&samples, &schedule)?;
    let counts = box_counts(&samples, &schedule)?;
    let plot = Plot::xy(
        "abs_log_eps",
        "log_count",
        schedule.values().iter().zip(&counts).map(|(&e, &n)| (e.ln().abs(), (n as f64).ln())),
    );
    Report::json(
        json!({ "spec": spec, "lower": est.lower, "upper": est.upper, "per_epsilon": est.per_epsilon, "counts": counts }),
        Some(plot),
        true,
    )
}

fn grid(t: &TruncatedIntervalSystem, m: usize) -> Vec<f64> {
    let (lo, hi) = t.ambient();
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

fn product_report(
    sys: &SystemArgs,
    other: &str,
    points: usize,
    n_max: usize,
    eps: &[f64],
    tolerance: f64,
) -> Outcome<Report> {
    let (sa, sb) = (resolve_spec(&sys.system, sys, true)?, resolve_spec(other, sys, true)?);
    match (sa.build()?, sb.build()?) {
        (Built::Interval(a), Built::Interval(b)) => {
            if points < 2 || n_max == 0 {
                return Err(input("need at least 2 points per factor and n_max >= 1"));
            }
            let ns: Vec<usize> = (1..=n_max).collect();
            let report = product_inequality_report(&a, &b, &grid(&a, points), &grid(&b, points), &ns, eps)?;
            let pass = report.pass;
            Report::json(json!({ "left": sa, "right": sb, "report": report }), None, pass)
        }
        (left @ (Built::Interval(_) | Built::Cantor { .. }), right @ (Built::Interval(_) | Built::Cantor { .. })) => {
            let depth = [&left, &right]
                .iter()
                .filter_map(|b| if let Built::Cantor { depth } = b { Some(*depth) } else { None })
                .min()
                .unwrap_or(1);
            let samples = |b: &Built| match b {
                Built::Cantor { depth } => cantor_samples(*depth),
                _ => unit_interval_samples(3usize.pow(depth as u32)),
            };
            let schedule = EpsilonSchedule::ternary(depth as u32)?;
            let report = box_dim_product_report(&samples(&left), &samples(&right), &schedule, tolerance)?;
            let pass = report.pass;
            Report::json(json!({ "left": sa, "right": sb, "report": report }), None, pass)
        }
        _ => Err(input("product reports need interval or cantor factors")),
    }
}

fn verify_all(seed: u64) -> Report {
    let outcomes = acceptance::run_all(seed);
    let mut body = String::new();
    for o in &outcomes {
        body.push_str(&format!(
            "criterion {:>2} {} [{}]: {}\n",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.detail
        ));
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    body.push_str(&format!("{passed}/{} criteria pass\n", outcomes.len()));
    Report { body, plot: None, pass: passed == outcomes.len() }
}

fn run(cli: &Cli) -> Outcome<Report> {
    match &cli.command {
        Command::Construct { sys, samples } => construct(sys, *samples),
        Command::EstimateEntropy { sys, eps, n_min, n_max, counting, csv } => {
            estimate_entropy(sys, *eps, window(*n_min, *n_max)?, *counting, csv.as_deref())
        }
        Command::EstimateMdim { sys, n_min, n_max, counting, power, k_max } => {
            estimate_mdim(sys, window(*n_min, *n_max)?, *counting, *power, *k_max)
        }
        Command::Horseshoe { sys, power, verify } => horseshoe(sys, *power, *verify),
        Command::Boxdim { sys } => boxdim(sys),
        Command::ProductReport { sys, other, points, n_max, eps, tolerance } => {
            product_report(sys, other, *points, *n_max, eps, *tolerance)
        }
        Command::VerifyAll => Ok(verify_all(cli.seed)),
    }
}

fn set_threads() -> Outcome<()> {
    let Ok(v) = std::env::var("MDIMLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| input(format!("MDIMLAB_THREADS={v}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Io(e.to_string()))
}

fn emit(cli: &Cli, report: &Report) -> Outcome<()> {
    match &cli.output {
        Some(path) => fs::write(path, &report.body)?,
        None => print!("{}", report.body),
    }
    if let Some(path) = &cli.tsv_plot {
        let plot = report.plot.as_ref().ok_or_else(|| input("this command has no plot data"))?;
        fs::write(path, plot.to_tsv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = set_threads().and_then(|_| run(&cli)).and_then(|r| emit(&cli, &r).map(|_| r.pass));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let (kind, message, code) = match f {
                Failure::Lib(e) => (e.kind(), e.to_string(), e.exit_code()),
                Failure::Io(m) => ("io", m, 2),
            };
            eprintln!("{}", json!({ "error": kind, "message": message }));
            ExitCode::from(code as u8)
        }
    }
}
