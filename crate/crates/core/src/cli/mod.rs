//! `greenlearn` command-line front end.
//!
//! Exit codes: 0 success, 1 failed bound check or runtime error, 2 usage error.

mod output;
mod verify;

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{build_mercer, Aabb, CovKernelSpec, Grid, DEFAULT_RANK_CUTOFF};
use crate::oracle::{assemble, dense_green, kappa_c, CoefficientField, EllipticOracle, DENSE_CAP};
use crate::partition::{build_partition, AdmissiblePartition, BoxPair, PartitionCounts, DEFAULT_RHO};
use crate::reconstruct::{global_error, learn_green, ErrorReport, HierGreen, HierGreenDocument, LearnOptions};

pub use output::{csv_header_line, Header};
pub use verify::{run_suite, BoundRow, Suite};

#[derive(Debug, Parser, Serialize)]
#[command(name = "greenlearn", version, about = "Learn Green's functions of elliptic PDEs from solver queries")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Build the hierarchical partition and print it as JSON.
    Partition(PartitionArgs),
    /// Mercer eigendecomposition of a covariance kernel on a grid.
    Mercer(MercerArgs),
    /// Monte-Carlo and exact checks of the randomized SVD bounds.
    VerifyBounds(VerifyArgs),
    /// Learn a Green's function through the solver and report its error.
    Learn(LearnArgs),
    /// Repeat `learn` over a range of ε or k.
    Sweep(SweepArgs),
    /// Apply a learned Green's function to a right-hand side.
    Apply(ApplyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PartitionArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub levels: u32,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MercerArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Nodes per axis, boundary included.
    #[arg(long, default_value_t = 65)]
    pub n: usize,
    #[arg(long, default_value = "se:0.2")]
    pub kernel: String,
    #[arg(long, default_value_t = DEFAULT_RANK_CUTOFF)]
    pub cutoff: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    /// Trials per check; each suite has its own default.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct ProblemArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Nodes per axis, boundary included.
    #[arg(long, default_value_t = 65)]
    pub n: usize,
    /// identity | diag:a1,a2,a3 | sinusoidal
    #[arg(long, default_value = "identity")]
    pub coeff: String,
    /// se:<length scale>
    #[arg(long, default_value = "se:0.05")]
    pub kernel: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub c_kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_sep: f64,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub levels: Option<u32>,
    /// Where to write the learned approximant (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the error report row (CSV); stdout by default.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOver {
    Epsilon,
    K,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = SweepOver::Epsilon)]
    pub over: SweepOver,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// ε used when sweeping k.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rhs {
    Ones,
    Sin,
}

#[derive(Debug, Args, Serialize)]
pub struct ApplyArgs {
    /// Learned approximant written by `learn --out`.
    #[arg(long)]
    pub green: PathBuf,
    /// Built-in right-hand side, used unless `--input` is given.
    #[arg(long, value_enum, default_value_t = Rhs::Sin)]
    pub rhs: Rhs,
    /// CSV with one value per grid node (lines starting with `#` are skipped).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `argv`, run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let mut cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(s) = std::env::var("GREEN_SEED") {
        match s.trim().parse::<u64>() {
            Ok(seed) => cli.override_seed(seed),
            Err(_) => {
                eprintln!("error: GREEN_SEED must be an unsigned integer, got '{s}'");
                return 2;
            }
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            1
        }
    }
}

impl Cli {
    fn override_seed(&mut self, seed: u64) {
        match &mut self.command {
            Command::VerifyBounds(a) => a.seed = seed,
            Command::Learn(a) => a.problem.seed = seed,
            Command::Sweep(a) => a.problem.seed = seed,
            _ => {}
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let header = Header::new(cli)?;
    match &cli.command {
        Command::Partition(a) => partition_cmd(a, &header),
        Command::Mercer(a) => mercer_cmd(a, &header),
        Command::VerifyBounds(a) => verify_cmd(a, &header),
        Command::Learn(a) => learn_cmd(a, &header),
        Command::Sweep(a) => sweep_cmd(a, &header),
        Command::Apply(a) => apply_cmd(a, &header),
    }
}

/// `se:<ℓ>`.
pub fn parse_kernel(s: &str) -> Result<CovKernelSpec> {
    let l = s
        .strip_prefix("se:")
        .ok_or_else(|| Error::InvalidParameter(format!("kernel must look like se:<length scale>, got '{s}'")))?;
    let l: f64 = l.parse().map_err(|_| Error::InvalidParameter(format!("bad length scale '{l}'")))?;
    CovKernelSpec::squared_exponential(l)
}

fn unit_grid(dim: usize, n: usize) -> Result<Arc<Grid>> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dim must be 1, 2 or 3, got {dim}")));
    }
    Ok(Arc::new(Grid::uniform(Aabb::unit(dim), n)?))
}

#[derive(Serialize)]
struct PairOut<'a> {
    #[serde(rename = "X")]
    x: &'a Aabb,
    #[serde(rename = "Y")]
    y: &'a Aabb,
    level: u32,
}

#[derive(Serialize)]
struct PartitionOut<'a> {
    header: &'a Header,
    rho: f64,
    levels: u32,
    admissible: Vec<PairOut<'a>>,
    counts: PartitionCounts,
}

fn pairs_out(v: &[BoxPair]) -> Vec<PairOut<'_>> {
    v.iter().map(|p| PairOut { x: &p.x, y: &p.y, level: p.level }).collect()
}

fn partition_cmd(a: &PartitionArgs, header: &Header) -> Result<i32> {
    let p: AdmissiblePartition = build_partition(a.dim, a.levels, a.rho)?;
    let doc = PartitionOut { header, rho: p.rho, levels: p.levels, admissible: pairs_out(&p.admissible), counts: p.counts() };
    output::write_json(a.out.as_deref(), &doc)?;
    Ok(0)
}

fn mercer_cmd(a: &MercerArgs, header: &Header) -> Result<i32> {
    let grid = unit_grid(a.dim, a.n)?;
    let basis = build_mercer(&parse_kernel(&a.kernel)?, &grid, a.cutoff)?;
    #[derive(Serialize)]
    struct Out<'a> {
        header: &'a Header,
        #[serde(flatten)]
        doc: crate::gp::MercerDocument,
    }
    output::write_json(a.out.as_deref(), &Out { header, doc: basis.to_document() })?;
    Ok(0)
}

fn verify_cmd(a: &VerifyArgs, header: &Header) -> Result<i32> {
    let rows = run_suite(a.suite, a.trials, a.seed)?;
    let mut w = output::open(a.out.as_deref())?;
    output::write_rows(&mut w, header, &["name", "parameters", "empirical", "bound", "pass"], rows.iter().map(|r| r.record()))?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} of {} bound checks failed", rows.len());
        return Ok(1);
    }
    Ok(0)
}

fn build_oracle(p: &ProblemArgs) -> Result<EllipticOracle> {
    let grid = unit_grid(p.dim, p.n)?;
    let coeff: CoefficientField = p.coeff.parse()?;
    assemble(&coeff, &grid)
}

fn learn_options(p: &ProblemArgs, epsilon: f64, k: Option<usize>, pp: Option<usize>, levels: Option<u32>) -> LearnOptions {
    LearnOptions { epsilon, k, p: pp, levels, c_kappa: p.c_kappa, c_sep: p.c_sep, rho: p.rho, seed: p.seed }
}

const REPORT_COLUMNS: [&str; 15] = [
    "epsilon",
    "effective_epsilon",
    "k",
    "p",
    "levels",
    "n_queries",
    "expected_queries",
    "learned_pairs",
    "admissible_blocks",
    "rel_error",
    "direct_rel_error",
    "non_admissible_fraction",
    "gamma_eps",
    "singular_blocks",
    "oracle_queries",
];

fn report_record(g: &HierGreen, r: Option<&ErrorReport>, oracle_queries: usize) -> Vec<String> {
    let s = g.settings();
    let f = output::fmt;
    let opt = |x: Option<f64>| x.map(output::fmt).unwrap_or_default();
    vec![
        f(s.epsilon),
        f(s.effective_epsilon),
        s.k.to_string(),
        s.p.to_string(),
        s.levels.to_string(),
        g.total_queries().to_string(),
        (2 * (s.k + s.p) * g.learned_pairs()).to_string(),
        g.learned_pairs().to_string(),
        g.blocks().len().to_string(),
        opt(r.map(|r| r.relative_l2_error)),
        opt(r.map(|r| r.direct_relative_error)),
        opt(r.map(|r| r.non_admissible_mass_sq / r.reference_norm_sq)),
        opt(r.and_then(|r| r.gamma_eps)),
        r.map(|r| r.singular_blocks.to_string()).unwrap_or_default(),
        oracle_queries.to_string(),
    ]
}

fn reference_report(oracle: &EllipticOracle, g: &HierGreen) -> Result<Option<ErrorReport>> {
    if oracle.interior_count() > DENSE_CAP {
        log::warn!("{} unknowns exceed the dense cap; skipping the error report", oracle.interior_count());
        return Ok(None);
    }
    let reference = dense_green(oracle)?;
    Ok(Some(global_error(g, &reference)?))
}

fn learn_cmd(a: &LearnArgs, header: &Header) -> Result<i32> {
    let oracle = build_oracle(&a.problem)?;
    let kernel = parse_kernel(&a.problem.kernel)?;
    log::info!("kappa_C = {}", kappa_c(oracle.coefficient(), oracle.grid())?);
    let g = learn_green(&oracle, &kernel, &learn_options(&a.problem, a.epsilon, a.k, a.p, a.levels))?;
    let queries = oracle.query_count();
    if let Some(path) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            header: &'a Header,
            green: HierGreenDocument,
        }
        output::write_json(Some(path), &Out { header, green: g.to_document() })?;
    }
    let report = reference_report(&oracle, &g)?;
    let mut w = output::open(a.report.as_deref())?;
    output::write_rows(&mut w, header, &REPORT_COLUMNS, std::iter::once(report_record(&g, report.as_ref(), queries)))?;
    Ok(0)
}

fn sweep_cmd(a: &SweepArgs, header: &Header) -> Result<i32> {
    let oracle = build_oracle(&a.problem)?;
    let kernel = parse_kernel(&a.problem.kernel)?;
    let reference = if oracle.interior_count() <= DENSE_CAP { Some(dense_green(&oracle)?) } else { None };
    let mut records = Vec::new();
    for &v in &a.values {
        let opts = match a.over {
            SweepOver::Epsilon => learn_options(&a.problem, v, None, None, a.levels),
            SweepOver::K => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::InvalidParameter(format!("k values must be positive integers, got {v}")));
                }
                learn_options(&a.problem, a.epsilon, Some(v as usize), None, a.levels)
            }
        };
        oracle.reset_query_count();
        let g = learn_green(&oracle, &kernel, &opts)?;
        let queries = oracle.query_count();
        let report = reference.as_ref().map(|r| global_error(&g, r)).transpose()?;
        records.push(report_record(&g, report.as_ref(), queries));
    }
    let mut w = output::open(a.out.as_deref())?;
    output::write_rows(&mut w, header, &REPORT_COLUMNS, records.into_iter())?;
    Ok(0)
}

fn read_values(path: &std::path::Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = rec.get(rec.len().saturating_sub(1)).unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        out.push(field.parse().map_err(|_| Error::InvalidParameter(format!("not a number: '{field}'")))?);
    }
    Ok(out)
}

fn apply_cmd(a: &ApplyArgs, header: &Header) -> Result<i32> {
    let text = std::fs::read_to_string(&a.green)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let doc: HierGreenDocument = serde_json::from_value(v.get("green").cloned().unwrap_or(v))?;
    let g = doc.to_green()?;
    let grid = g.grid();
    let f = match &a.input {
        Some(path) => {
            let vals = read_values(path)?;
            if vals.len() != grid.len() {
                return Err(Error::GridMismatch(format!("{} input values for {} nodes", vals.len(), grid.len())));
            }
            DVector::from_vec(vals)
        }
        None => DVector::from_iterator(
            grid.len(),
            grid.nodes().iter().map(|p| match a.rhs {
                Rhs::Ones => 1.0,
                Rhs::Sin => (0..grid.dim()).map(|d| (std::f64::consts::PI * p[d]).sin()).product(),
            }),
        ),
    };
    let u = g.apply_green(&f)?;
    let dim = grid.dim();
    let mut cols: Vec<String> = vec!["node".into()];
    cols.extend((0..dim).map(|d| format!("x{}", d + 1)));
    cols.push("f".into());
    cols.push("u".into());
    let colrefs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let rows = (0..grid.len()).map(|i| {
        let mut r = vec![i.to_string()];
        r.extend((0..dim).map(|d| output::fmt(grid.nodes()[i][d])));
        r.push(output::fmt(f[i]));
        r.push(output::fmt(u[i]));
        r
    });
    let mut w = output::open(a.out.as_deref())?;
    output::write_rows(&mut w, header, &colrefs, rows)?;
    Ok(0)
}
