//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or failed computation, 2 failed
//! acceptance check (`verify-all`), 64 usage error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::chaos;
use crate::downup::{self, DuInstance};
use crate::dynamics::{self, EvolveOptions};
use crate::error::{Error, Result};
use crate::kac::{self, DensityProfile, ParticleState, SimOptions};
use crate::model::Model;
use crate::mpp;
use crate::rng::{self, Reduction};
use crate::spin::{self, InteractionMatrix, ProbVec, SitePartition};
use crate::table::{Cell, ResultTable, RunMeta};
use crate::verify::{self, VerifyOptions};
use crate::wild;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SPINKAC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "spinkac", version, about = "Nonlinear spin-exchange dynamics, Kac particle systems and Down-Up walks")]
pub struct Cli {
    /// Summation order of parallel reductions.
    #[arg(long, global = true, default_value = "deterministic")]
    pub reduction: Reduction,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the nonlinear equation from an initial state.
    Evolve(EvolveArgs),
    /// Sample the nonlinear MLSI ratio on the constraint set of the model field.
    MlsiNl(MlsiNlArgs),
    /// Monte Carlo solution from random collision trees.
    Tree(TreeArgs),
    /// Marked partition representation check and fragmentation tail.
    Mpp(MppArgs),
    /// Simulate the conservative particle system.
    Kac(KacArgs),
    /// Marginal and entropic chaos of canonical measures.
    Chaos(ChaosArgs),
    /// Sample the MLSI ratio of the particle system.
    KacMlsi(KacMlsiArgs),
    /// Down-Up walk checks.
    Downup(DownupArgs),
    /// Run the acceptance suite.
    VerifyAll(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct OutArg {
    /// Output CSV; written to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `uniform`, `delta:MASK` or a file with 2^n weights.
    #[arg(long, default_value = "uniform")]
    pub p0: String,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Keep every k-th step.
    #[arg(long, default_value_t = 10)]
    pub store_every: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct MlsiNlArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "uniform")]
    pub p0: String,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct MppArgs {
    /// Model with J = 0.
    #[arg(long)]
    pub model: PathBuf,
    /// Largest depth of the representation check.
    #[arg(long, default_value_t = 4)]
    pub u: u32,
    #[arg(long, default_value_t = 20_000)]
    pub runs: usize,
    /// Largest `u` of the fragmentation tail (default 6n).
    #[arg(long)]
    pub tail_max: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct KacArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "N")]
    pub particles: usize,
    /// `auto` (from the Gibbs measure of the model) or per-block densities, comma separated.
    #[arg(long, default_value = "auto")]
    pub rho: String,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.5)]
    pub record_dt: f64,
    /// Compare the time-averaged occupation with the exact canonical measure.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct ChaosArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long = "N-grid", value_delimiter = ',', default_value = "8,16,32,64,128,256")]
    pub grid: Vec<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct KacMlsiArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long = "N")]
    pub particles: usize,
    /// `all` or per-block densities, profiles separated by ';' and blocks by ','.
    #[arg(long, default_value = "all")]
    pub rho_grid: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DuMode {
    Mlsi,
    Factorize,
    Cov,
}

#[derive(Args, Debug)]
pub struct DownupArgs {
    /// Number of sites.
    #[arg(long = "L")]
    pub sites: Option<usize>,
    /// Magnetization of the single block.
    #[arg(long = "M", allow_hyphen_values = true, conflicts_with = "blocks_spec")]
    pub mag: Option<i64>,
    /// Consecutive blocks as `SIZE:M`, comma separated (e.g. `4:0,4:-2,4:2`).
    #[arg(long, allow_hyphen_values = true)]
    pub blocks_spec: Option<String>,
    /// L rows of L numbers; zero when absent.
    #[arg(long)]
    pub lambda_matrix: Option<PathBuf>,
    /// L numbers; zero when absent.
    #[arg(long)]
    pub w: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mlsi")]
    pub mode: DuMode,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Reduced sample counts.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    pub seed: u64,
    /// Subset of criteria, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
    /// Directory for per-criterion CSV tables.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_pool() {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn configure_pool() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::invalid(format!("{THREADS_ENV}='{v}' is not a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Deterministic => "deterministic",
        Reduction::Fast => "fast",
    }
}

fn emit(table: &ResultTable, out: &OutArg, started: Instant, reduction: Reduction) -> Result<()> {
    match &out.out {
        Some(path) => {
            table.write_csv(path)?;
            RunMeta::new(table, started.elapsed().as_secs_f64(), reduction_name(reduction)).write_beside(path)
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(table.to_csv().as_bytes())
                .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("'{t}' is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Initial state from `uniform`, `delta:MASK` or a weight file.
fn parse_p0(spec: &str, n: usize) -> Result<ProbVec> {
    if spec == "uniform" {
        return ProbVec::uniform(n);
    }
    if let Some(m) = spec.strip_prefix("delta:") {
        let mask: usize = m.parse().map_err(|_| Error::invalid(format!("bad mask '{m}'")))?;
        if mask >= 1 << n {
            return Err(Error::invalid(format!("mask {mask} needs more than {n} sites")));
        }
        let mut w = vec![0.0; 1 << n];
        w[mask] = 1.0;
        return ProbVec::new(n, w);
    }
    let w: Vec<f64> = read_numbers(Path::new(spec))?.concat();
    ProbVec::from_weights(n, w)
}

fn block_headers(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|b| format!("{prefix}_{b}")).collect()
}

fn table_with(claim: &str, anchor: &str, seed: u64, fixed: &[&str], extra: &[String]) -> ResultTable {
    let mut cols: Vec<&str> = fixed.to_vec();
    cols.extend(extra.iter().map(String::as_str));
    ResultTable::new(claim, anchor, seed, &cols)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let started = Instant::now();
    let red = cli.reduction;
    match &cli.command {
        Command::Evolve(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let p0 = parse_p0(&a.p0, model.n())?;
            let mut o = EvolveOptions::new(a.t_end, a.dt);
            o.store_every = a.store_every;
            let traj = dynamics::evolve(&ctx, &p0, o)?;
            let k = ctx.components().len();
            let mut t = table_with(
                "evolve",
                "nonlinear spin-exchange flow",
                0,
                &["t", "H_rel", "dissipation", "tv_to_eq"],
                &[block_headers("m_block", k), vec!["mass_err".into()]].concat(),
            );
            for (time, p) in traj.times.iter().zip(&traj.states) {
                let h = spin::relative_entropy(p, &traj.equilibrium);
                let d = dynamics::dissipation_of(&ctx, p, &traj.equilibrium)?;
                let mut row: Vec<Cell> = vec![
                    (*time).into(),
                    h.to_f64().into(),
                    d.to_f64().into(),
                    spin::tv_distance(p, &traj.equilibrium).into(),
                ];
                row.extend(spin::magnetization_profile(p, ctx.components()).into_iter().map(Cell::Real));
                row.push((p.as_slice().iter().sum::<f64>() - 1.0).abs().into());
                t.push(row)?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::MlsiNl(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let s = dynamics::nonlinear_mlsi_scan(&ctx, &model.h, a.trials, a.seed)?;
            let mut t = ResultTable::new(
                "mlsi-nl",
                "nonlinear modified log-Sobolev inequality",
                a.seed,
                &["min_ratio", "median_ratio", "alpha_bound", "samples", "discarded"],
            );
            t.push(vec![s.min_ratio.into(), s.median_ratio.into(), s.alpha_bound.into(), s.samples.into(), s.discarded.into()])?;
            emit(&t, &a.out, started, red)?;
        }
        Command::Tree(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let p0 = parse_p0(&a.p0, model.n())?;
            let est = wild::mc_solution(&ctx, &p0, a.t, a.samples, a.seed, red)?;
            let exact = dynamics::evolve(&ctx, &p0, EvolveOptions::new(a.t, 0.01))?;
            let exact = exact.final_state().as_slice();
            let mut t = ResultTable::new(
                "tree",
                "Wild-sum representation of the solution",
                a.seed,
                &["state", "estimate", "stderr", "ci_low", "ci_high", "exact", "z"],
            );
            for (s, ((m, e), x)) in est.mean.iter().zip(&est.stderr).zip(exact).enumerate() {
                let z = if *e > 0.0 { (m - x).abs() / e } else { f64::NAN };
                t.push(vec![s.into(), (*m).into(), (*e).into(), (m - 1.96 * e).into(), (m + 1.96 * e).into(), (*x).into(), z.into()])?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::Mpp(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let n = model.n();
            let mut t = ResultTable::new(
                "mpp",
                "marked partition representation and fragmentation tail",
                a.seed,
                &["kind", "u", "value", "stderr", "reference", "pass"],
            );
            let mut r = rng::stream_rng(a.seed, 0);
            for u in 0..=a.u {
                let leaves: Vec<ProbVec> = (0..1usize << u)
                    .map(|_| ProbVec::from_weights(n, (0..1 << n).map(|_| r.sample::<f64, _>(StandardNormal).exp()).collect()))
                    .collect::<Result<_>>()?;
                let c = mpp::mpp_representation_check(&ctx, &leaves, a.runs, rng::seed_split(a.seed, u as u64 + 1), red)?;
                t.push(vec!["representation_max_z".into(), (u as u64).into(), c.max_z.into(), f64::NAN.into(), 3.0.into(), (c.max_z <= 3.0).into()])?;
            }
            let us: Vec<u64> = (0..=a.tail_max.unwrap_or(6 * n as u64)).collect();
            for p in mpp::fragmentation_tail(ctx.kernel(), &us, a.runs, rng::seed_split(a.seed, 1000)) {
                t.push(vec!["tail".into(), p.u.into(), p.empirical.into(), p.stderr.into(), p.bound.into(), p.holds().into()])?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::Kac(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let part = ctx.components().clone();
            let profile = if a.rho == "auto" {
                let mu = spin::gibbs_measure(&model.j, &model.h)?;
                chaos::canonical_density(&mu, &part, a.particles)?
            } else {
                DensityProfile::from_rho(&part, a.particles, &parse_list(&a.rho)?)?
            };
            let init = ParticleState::fill(&part, &profile);
            let opts = SimOptions { t_end: a.t_end, record_dt: a.record_dt, track_occupation: a.exact };
            let fields = vec![model.h.clone(); a.particles];
            let run = kac::simulate_particles(&ctx, &profile, &init, opts, a.seed)?;
            let tv = match (&run.occupation, a.exact) {
                (Some(occ), true) => {
                    let meas = kac::multicanonical_measure(&ctx, &profile, Some(&fields))?;
                    let total: f64 = occ.values().sum();
                    let mut tv = 0.0;
                    for (s, p) in meas.states().iter().zip(meas.probs()) {
                        tv += (occ.get(s).copied().unwrap_or(0.0) / total - p).abs();
                    }
                    // mass outside the support of the measure
                    tv += occ.iter().filter(|(s, _)| meas.index_of(**s).is_none()).map(|(_, v)| v / total).sum::<f64>();
                    0.5 * tv
                }
                _ => f64::NAN,
            };
            let k = part.len();
            let mut t = table_with(
                "kac",
                "conservative Kac particle system",
                a.seed,
                &["t", "event_count"],
                &[block_headers("m_block", k), vec!["tv_occupation_to_eq".into()]].concat(),
            );
            let last = run.records.len().saturating_sub(1);
            for (i, rec) in run.records.iter().enumerate() {
                let mut row: Vec<Cell> = vec![rec.t.into(), rec.events.into()];
                row.extend(rec.block_magnetization.iter().map(|&m| Cell::Real(m)));
                row.push(if i == last { tv } else { f64::NAN }.into());
                t.push(row)?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::Chaos(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let mu = spin::gibbs_measure(&model.j, &model.h)?;
            let rep = chaos::chaos_scan(&ctx, &mu, a.k, &a.grid)?;
            let mut t = ResultTable::new(
                "chaos",
                "Kac chaos and entropic chaos of canonical measures",
                0,
                &["N", "k", "tv", "entropy_per_particle", "entropy_gap", "log_mass_per_particle", "tv_slope", "entropy_limit"],
            );
            for row in &rep.rows {
                t.push(vec![
                    row.particles.into(),
                    rep.k.into(),
                    row.tv.into(),
                    row.entropy_per_particle.into(),
                    row.entropy_gap.into(),
                    row.log_mass_per_particle.into(),
                    rep.tv_slope.unwrap_or(f64::NAN).into(),
                    rep.entropy_limit.into(),
                ])?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::KacMlsi(a) => {
            let model = Model::load(&a.model)?;
            let ctx = model.context()?;
            let part = ctx.components().clone();
            let profiles = if a.rho_grid == "all" {
                kac::all_profiles(&part, a.particles)
            } else {
                a.rho_grid
                    .split(';')
                    .map(|s| DensityProfile::from_rho(&part, a.particles, &parse_list(s)?))
                    .collect::<Result<Vec<_>>>()?
            };
            let fields = vec![model.h.clone(); a.particles];
            let k = part.len();
            let mut t = table_with(
                "kac-mlsi",
                "MLSI of the conservative particle system",
                a.seed,
                &["N"],
                &[block_headers("plus", k), ["states", "min_ratio", "median_ratio", "alpha_bound", "samples"].map(String::from).to_vec()].concat(),
            );
            for (i, p) in profiles.iter().enumerate() {
                let meas = kac::multicanonical_measure(&ctx, p, Some(&fields))?;
                let mut row: Vec<Cell> = vec![a.particles.into()];
                row.extend(p.plus_counts().iter().map(|&c| Cell::from(c)));
                row.push(meas.len().into());
                if meas.len() < 2 {
                    row.extend([f64::NAN, f64::NAN, f64::NAN].map(Cell::Real));
                    row.push(0usize.into());
                } else {
                    let s = kac::particle_mlsi_scan(&meas, a.trials, rng::seed_split(a.seed, i as u64))?;
                    row.extend([s.min_ratio, s.median_ratio, s.alpha_bound.value().unwrap_or(f64::NAN)].map(Cell::Real));
                    row.push(s.samples.into());
                }
                t.push(row)?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::Downup(a) => {
            let inst = downup_instance(a)?;
            let meas = downup::du_measure(&inst)?;
            let mut t = ResultTable::new(
                "downup",
                "Down-Up walk functional inequalities",
                a.seed,
                &["quantity", "value", "constant"],
            );
            let num = |x: Option<f64>| Cell::Real(x.unwrap_or(f64::NAN));
            match a.mode {
                DuMode::Mlsi => {
                    let s = downup::du_mlsi_scan(&meas, a.trials, a.seed)?;
                    t.push(vec!["mlsi_min_ratio".into(), s.min_ratio.into(), num(s.constant)])?;
                    t.push(vec!["mlsi_median_ratio".into(), s.median_ratio.into(), num(s.constant)])?;
                    t.push(vec!["samples".into(), (s.samples as f64).into(), f64::NAN.into()])?;
                    t.push(vec!["spectral_gap".into(), num(s.gap), f64::NAN.into()])?;
                }
                DuMode::Factorize => {
                    let f = downup::factorization_check(&meas, a.trials, a.seed)?;
                    t.push(vec!["single_site_min".into(), f.single_site_min.into(), num(f.single_site_constant)])?;
                    t.push(vec!["block_min".into(), f.block_min.into(), num(f.block_constant)])?;
                    t.push(vec!["jensen_max_excess".into(), f.jensen_max_excess.into(), 0.0.into()])?;
                    t.push(vec!["samples".into(), (f.samples as f64).into(), f64::NAN.into()])?;
                }
                DuMode::Cov => {
                    let c = downup::cov_bound_check(&inst, a.trials, a.seed)?;
                    t.push(vec!["max_cov_eigenvalue".into(), c.max_eigenvalue.into(), c.bound.into()])?;
                    t.push(vec!["tilts".into(), (c.tilts as f64).into(), f64::NAN.into()])?;
                    t.push(vec!["lambda_used".into(), c.lambda.into(), f64::NAN.into()])?;
                }
            }
            if let Some(second) = downup::second_eigenvalue_if_constant_top(inst.lambda()) {
                t.push(vec!["second_eigenvalue_constant_top".into(), second.into(), f64::NAN.into()])?;
            }
            emit(&t, &a.out, started, red)?;
        }
        Command::VerifyAll(a) => return verify_all(a, red),
    }
    Ok(EXIT_OK)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("'{t}' is not a number"))))
        .collect()
}

fn downup_instance(a: &DownupArgs) -> Result<DuInstance> {
    let (sizes, mags): (Vec<usize>, Vec<i64>) = match (&a.blocks_spec, a.mag) {
        (Some(spec), _) => spec
            .split(',')
            .map(|b| {
                let (s, m) = b.split_once(':').ok_or_else(|| Error::invalid(format!("block '{b}' is not SIZE:M")))?;
                let s = s.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad block size '{s}'")))?;
                let m = m.trim().parse::<i64>().map_err(|_| Error::invalid(format!("bad magnetization '{m}'")))?;
                Ok((s, m))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip(),
        (None, m) => {
            let l = a.sites.ok_or_else(|| Error::invalid("--L is required without --blocks-spec"))?;
            (vec![l], vec![m.unwrap_or(0)])
        }
    };
    let l: usize = sizes.iter().sum();
    if let Some(given) = a.sites {
        if given != l {
            return Err(Error::invalid(format!("--L {given} but the blocks cover {l} sites")));
        }
    }
    let lambda = match &a.lambda_matrix {
        Some(p) => {
            let rows = read_numbers(p)?;
            if rows.len() != l || rows.iter().any(|r| r.len() != l) {
                return Err(Error::invalid(format!("{} must hold {l} rows of {l} numbers", p.display())));
            }
            InteractionMatrix::new(l, rows.concat())?
        }
        None => InteractionMatrix::zeros(l)?,
    };
    let w = match &a.w {
        Some(p) => {
            let w = read_numbers(p)?.concat();
            if w.len() != l {
                return Err(Error::invalid(format!("{} must hold {l} numbers", p.display())));
            }
            w
        }
        None => vec![0.0; l],
    };
    let mut blocks = Vec::new();
    let mut start = 0;
    for s in &sizes {
        blocks.push((start..start + s).collect());
        start += s;
    }
    DuInstance::new(lambda, w, SitePartition::new(l, blocks)?, mags)
}

fn verify_all(a: &VerifyArgs, reduction: Reduction) -> Result<i32> {
    let opts = VerifyOptions { quick: a.quick, seed: a.seed, reduction };
    let ids: Vec<usize> = if a.only.is_empty() { (1..=13).collect() } else { a.only.clone() };
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    }
    let total = Instant::now();
    let mut outcomes = Vec::new();
    for id in ids {
        let t0 = Instant::now();
        let o = verify::run_criterion(id, &opts)?;
        println!("{}", o.line());
        eprintln!("criterion {id}: {:.1} s", t0.elapsed().as_secs_f64());
        if let Some(dir) = &a.out_dir {
            let path = dir.join(format!("criterion_{id:02}_{}.csv", o.name));
            o.table.write_csv(&path)?;
            RunMeta::new(&o.table, t0.elapsed().as_secs_f64(), reduction_name(reduction)).write_beside(&path)?;
        }
        outcomes.push(o);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    eprintln!("total: {:.1} s", total.elapsed().as_secs_f64());
    if let Some(dir) = &a.out_dir {
        let s = verify::summary_table(&outcomes, a.seed);
        let path = dir.join("summary.csv");
        s.write_csv(&path)?;
        RunMeta::new(&s, total.elapsed().as_secs_f64(), reduction_name(reduction)).write_beside(&path)?;
    }
    Ok(if passed == outcomes.len() { EXIT_OK } else { EXIT_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["spinkac", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["spinkac", "evolve", "--bogus"]), EXIT_USAGE);
    }

    #[test]
    fn help_and_version_exit_0() {
        assert_eq!(run(["spinkac", "--help"]), EXIT_OK);
        assert_eq!(run(["spinkac", "--version"]), EXIT_OK);
    }

    #[test]
    fn missing_model_is_invalid() {
        assert_eq!(run(["spinkac", "evolve", "--model", "/nonexistent/m.txt"]), EXIT_INVALID);
    }

    #[test]
    fn p0_forms() {
        assert_eq!(parse_p0("uniform", 2).unwrap().as_slice(), &[0.25; 4]);
        assert_eq!(parse_p0("delta:2", 2).unwrap().as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(parse_p0("delta:4", 2).is_err());
    }

    #[test]
    fn blocks_spec_parsed() {
        let a = DownupArgs {
            sites: None,
            mag: None,
            blocks_spec: Some("2:0,4:-2".into()),
            lambda_matrix: None,
            w: None,
            mode: DuMode::Mlsi,
            trials: 1,
            seed: 0,
            out: OutArg { out: None },
        };
        let inst = downup_instance(&a).unwrap();
        assert_eq!(inst.l(), 6);
        assert_eq!(inst.mags(), &[0, -2]);
        assert_eq!(inst.blocks().block(1), &[2, 3, 4, 5]);
    }
}
