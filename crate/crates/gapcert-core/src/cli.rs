//! Configuration, manifest, and artifact layer behind the `gapcert` binary.
//!
//! Every run resolves its full configuration (no hidden defaults), writes a
//! `manifest.json` carrying the resolved values and their hash, then emits
//! CSV/JSON artifacts. Identical configurations produce byte-identical
//! artifacts: floats are printed with Rust's shortest round-trip formatting
//! and all reductions run in fixed order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{self, BoundInputs, BoundMode};
use crate::constructions;
use crate::divergence::{
    gibbs_from_potential, symmetric_identity, DivergenceKind, FiniteDistribution,
    PotentialVector,
};
use crate::error::Error;
use crate::langevin::{
    compare_density, density_bin_masses, histogram, simulate_ensemble, write_samples, BoxDomain,
    Diffusion, Domain, IntegratorConfig, LangevinSystem,
};
use crate::linreg;
use crate::markov::{
    divergence_trace, stationary, verify_second_law, TransitionKernel,
};
use crate::sgld;
use crate::stationary::{potential, NoiseScale, NoiseScaleParams};

/// Error category, mapped to the process exit code (2 or 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CliErrorKind {
    Validation,
    Numerical,
}

/// A run failure with its machine-readable category.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: CliErrorKind,
    pub error: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            CliErrorKind::Validation => 2,
            CliErrorKind::Numerical => 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.error))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::NumericalFailure(_) | Error::Diverged { .. } => CliErrorKind::Numerical,
            _ => CliErrorKind::Validation,
        };
        CliError {
            kind,
            error: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            kind: CliErrorKind::Validation,
            error: e.to_string(),
        }
    }
}

/// Inverse temperature given either absolutely, relative to the sample count
/// (the `0.4N` form), or as `inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSpec {
    Absolute(f64),
    RelativeToN(f64),
    Infinite,
}

impl BetaSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(BetaSpec::Infinite);
        }
        if let Some(stripped) = t.strip_suffix(['N', 'n']) {
            let mult: f64 = stripped.parse().map_err(|_| CliError {
                kind: CliErrorKind::Validation,
                error: format!("cannot parse beta multiplier in '{text}'"),
            })?;
            return Ok(BetaSpec::RelativeToN(mult));
        }
        let abs: f64 = t.parse().map_err(|_| CliError {
            kind: CliErrorKind::Validation,
            error: format!("cannot parse beta '{text}'"),
        })?;
        Ok(BetaSpec::Absolute(abs))
    }

    pub fn resolve(&self, n: usize) -> f64 {
        match self {
            BetaSpec::Absolute(b) => *b,
            BetaSpec::RelativeToN(m) => m * n as f64,
            BetaSpec::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for BetaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BetaSpec::Absolute(b) => write!(f, "{b}"),
            BetaSpec::RelativeToN(m) => write!(f, "{m}N"),
            BetaSpec::Infinite => write!(f, "inf"),
        }
    }
}

/// Built-in one-dimensional losses for the simulation commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    Zero,
    /// `scale·x²`
    Quad { scale: f64 },
    /// `scale·(x² - offset²)²`
    DoubleWell { scale: f64, offset: f64 },
}

impl LossSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = |msg: String| CliError {
            kind: CliErrorKind::Validation,
            error: msg,
        };
        match parts.as_slice() {
            ["zero"] => Ok(LossSpec::Zero),
            ["quad", s] => Ok(LossSpec::Quad {
                scale: s.parse().map_err(|_| bad(format!("bad quad scale '{s}'")))?,
            }),
            ["well", s, o] => Ok(LossSpec::DoubleWell {
                scale: s.parse().map_err(|_| bad(format!("bad well scale '{s}'")))?,
                offset: o.parse().map_err(|_| bad(format!("bad well offset '{o}'")))?,
            }),
            _ => Err(bad(format!(
                "unknown loss '{text}' (expected zero | quad:S | well:S:O)"
            ))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LossSpec::Zero => 0.0,
            LossSpec::Quad { scale } => scale * x * x,
            LossSpec::DoubleWell { scale, offset } => {
                let t = x * x - offset * offset;
                scale * t * t
            }
        }
    }

    pub fn grad(&self, x: f64) -> f64 {
        match self {
            LossSpec::Zero => 0.0,
            LossSpec::Quad { scale } => 2.0 * scale * x,
            LossSpec::DoubleWell { scale, offset } => {
                4.0 * scale * x * (x * x - offset * offset)
            }
        }
    }
}

/// Named diffusion kind for the `noise-scales` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindSpec {
    Uniform,
    Linear,
    Poly,
    Exp,
}

// ---------------------------------------------------------------------------
// per-command parameter blocks (all fully materialized into the manifest)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondLawParams {
    pub states: usize,
    pub chains: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsIdentityParams {
    pub max_states: usize,
    pub instances: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CldBoxParams {
    pub loss: LossSpec,
    pub beta: f64,
    pub box_lo: f64,
    pub box_hi: f64,
    pub dt: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub n_traj: usize,
    pub bins: usize,
    pub dump_samples: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CldRegParams {
    pub loss: LossSpec,
    pub beta: f64,
    pub lambda: f64,
    pub dt: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub n_traj: usize,
    pub bins: usize,
    pub grid_half_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseScalesParams {
    pub kinds: Vec<NoiseKindSpec>,
    pub loss: LossSpec,
    pub alpha: f64,
    pub poly_k: u32,
    pub beta: f64,
    pub box_lo: f64,
    pub box_hi: f64,
    pub dt: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub n_traj: usize,
    pub bins: usize,
    pub n_grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinregParams {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    /// Defaults to d (the width-proportional convention) when absent.
    pub lambda: Option<f64>,
    pub beta: BetaSpec,
    pub mc_samples: usize,
    pub delta: f64,
    /// Optional key-value sweep file; each `key = v1,v2,...` line multiplies
    /// the grid over keys n,d,sigma,lambda,beta,seed.
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParityTrainParams {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub test_n: usize,
    pub dims: Vec<usize>,
    pub beta_sweep: Vec<BetaSpec>,
    pub delta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub n_init_samples: usize,
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsParams {
    pub n: u64,
    pub delta: f64,
    pub beta: Option<BetaSpec>,
    pub init_loss: Option<f64>,
    pub kl_init: f64,
    pub dinf_init: f64,
    pub mean_potential: f64,
    pub sup_potential: f64,
    pub empirical_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleParams {
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShatterParams {
    pub m: usize,
    pub l_amp: usize,
    /// `alternating`, `zeros`, or `random`.
    pub labels: String,
}

/// One resolved subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    SecondLaw(SecondLawParams),
    GibbsIdentity(GibbsIdentityParams),
    CldBox(CldBoxParams),
    CldReg(CldRegParams),
    NoiseScales(NoiseScalesParams),
    Linreg(LinregParams),
    ParityTrain(ParityTrainParams),
    Bounds(BoundsParams),
    Counterexample(CounterexampleParams),
    Shatter(ShatterParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SecondLaw(_) => "second-law",
            Command::GibbsIdentity(_) => "gibbs-identity",
            Command::CldBox(_) => "cld-box",
            Command::CldReg(_) => "cld-reg",
            Command::NoiseScales(_) => "noise-scales",
            Command::Linreg(_) => "linreg",
            Command::ParityTrain(_) => "parity-train",
            Command::Bounds(_) => "bounds",
            Command::Counterexample(_) => "counterexample",
            Command::Shatter(_) => "shatter",
        }
    }
}

/// A fully resolved run: command, seed, output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Hex digest of the resolved configuration (command, params, seed).
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.command).expect("config serializes"));
        h.update(self.seed.to_le_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    command: &'a Command,
    seed: u64,
    out_dir: &'a Path,
    config_hash: String,
    tool_version: &'static str,
}

fn write_manifest(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = Manifest {
        command: &cfg.command,
        seed: cfg.seed,
        out_dir: &cfg.out_dir,
        config_hash: cfg.config_hash(),
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError {
        kind: CliErrorKind::Validation,
        error: e.to_string(),
    })?;
    text.push('\n');
    fs::write(cfg.out_dir.join("manifest.json"), text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError {
        kind: CliErrorKind::Validation,
        error: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// deterministic CSV writer: header once, shortest round-trip floats
struct CsvOut {
    w: csv::Writer<fs::File>,
}

impl CsvOut {
    fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let file = fs::File::create(path)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header).map_err(csv_err)?;
        Ok(Self { w })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.w.write_record(fields).map_err(csv_err)
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError {
        kind: CliErrorKind::Validation,
        error: e.to_string(),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Executes a run: creates the output directory, writes the manifest, then
/// the command's artifacts.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir)?;
    write_manifest(cfg)?;
    match &cfg.command {
        Command::SecondLaw(p) => run_second_law(cfg, p),
        Command::GibbsIdentity(p) => run_gibbs_identity(cfg, p),
        Command::CldBox(p) => run_cld_box(cfg, p),
        Command::CldReg(p) => run_cld_reg(cfg, p),
        Command::NoiseScales(p) => run_noise_scales(cfg, p),
        Command::Linreg(p) => run_linreg(cfg, p),
        Command::ParityTrain(p) => run_parity_train(cfg, p),
        Command::Bounds(p) => run_bounds(cfg, p),
        Command::Counterexample(p) => run_counterexample(cfg, p),
        Command::Shatter(p) => run_shatter(cfg, p),
    }
}

fn random_kernel(rng: &mut ChaCha8Rng, n: usize) -> TransitionKernel {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    TransitionKernel::from_rows(&rows).expect("normalized rows")
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> FiniteDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    FiniteDistribution::from_weights(&w).expect("positive weights")
}

fn run_second_law(cfg: &RunConfig, p: &SecondLawParams) -> Result<(), CliError> {
    if p.states < 2 || p.chains == 0 {
        return Err(CliError {
            kind: CliErrorKind::Validation,
            error: "need at least 2 states and 1 chain".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut traces = CsvOut::create(
        &cfg.out_dir.join("second_law.csv"),
        &["chain", "kind", "t", "divergence"],
    )?;
    let mut summary = CsvOut::create(
        &cfg.out_dir.join("summary.csv"),
        &["chain", "kind", "max_increase"],
    )?;
    for chain in 0..p.chains {
        let k = random_kernel(&mut rng, p.states);
        let pi = stationary(&k).map_err(CliError::from)?.pi;
        let p0 = random_dist(&mut rng, p.states);
        for (kind, name) in [(DivergenceKind::Kl, "kl"), (DivergenceKind::RenyiInf, "dinf")] {
            let trace = divergence_trace(&p0, &k, &pi, kind, p.steps).map_err(CliError::from)?;
            for (t, v) in trace.values.iter().enumerate() {
                traces.row(&[chain.to_string(), name.into(), t.to_string(), fmt(*v)])?;
            }
            summary.row(&[
                chain.to_string(),
                name.into(),
                fmt(verify_second_law(&trace)),
            ])?;
        }
    }
    traces.finish()?;
    summary.finish()
}

fn run_gibbs_identity(cfg: &RunConfig, p: &GibbsIdentityParams) -> Result<(), CliError> {
    if p.max_states < 2 || p.instances == 0 {
        return Err(CliError {
            kind: CliErrorKind::Validation,
            error: "need at least 2 states and 1 instance".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = CsvOut::create(
        &cfg.out_dir.join("gibbs_identity.csv"),
        &[
            "instance", "states", "kl_lhs", "kl_rhs", "dinf_lhs", "dinf_rhs", "kl_dev",
            "dinf_dev",
        ],
    )?;
    for i in 0..p.instances {
        let n = 2 + rng.random_range(0..p.max_states - 1);
        let q = random_dist(&mut rng, n);
        let psi =
            PotentialVector::new((0..n).map(|_| rng.random::<f64>() * 5.0).collect())
                .map_err(CliError::from)?;
        let gibbs = gibbs_from_potential(&q, &psi).map_err(CliError::from)?;
        let mu = random_dist(&mut rng, n);
        let nu = random_dist(&mut rng, n);
        let id = symmetric_identity(gibbs.distribution(), &q, &psi, &mu, &nu)
            .map_err(CliError::from)?;
        out.row(&[
            i.to_string(),
            n.to_string(),
            fmt(id.kl_lhs),
            fmt(id.kl_rhs),
            fmt(id.dinf_lhs),
            fmt(id.dinf_rhs),
            fmt((id.kl_lhs - id.kl_rhs).abs()),
            fmt((id.dinf_lhs - id.dinf_rhs).abs()),
        ])?;
    }
    out.finish()
}

fn integrator(p_dt: f64, steps: u64, burn_in: u64, thin: u64, n_traj: usize, seed: u64) -> IntegratorConfig {
    IntegratorConfig {
        dt: p_dt,
        steps,
        n_traj,
        burn_in,
        thin,
        seed,
    }
}

fn run_cld_box(cfg: &RunConfig, p: &CldBoxParams) -> Result<(), CliError> {
    let domain = BoxDomain::new(vec![p.box_lo], vec![p.box_hi]).map_err(CliError::from)?;
    let loss = p.loss;
    let system = LangevinSystem {
        loss: Box::new(move |t: &[f64]| loss.eval(t[0])),
        grad: Box::new(move |t: &[f64]| vec![loss.grad(t[0])]),
        beta: p.beta,
        lambda: vec![0.0],
        domain: Domain::Box(domain.clone()),
        diffusion: Diffusion::Unit,
    };
    let icfg = integrator(p.dt, p.steps, p.burn_in, p.thin, p.n_traj, cfg.seed);
    let (lo, hi) = (p.box_lo, p.box_hi);
    let init = move |rng: &mut ChaCha8Rng| vec![lo + (hi - lo) * rng.random::<f64>()];
    let samples = simulate_ensemble(&system, &init, &icfg).map_err(CliError::from)?;
    let hist = histogram(&samples, &domain, p.bins).map_err(CliError::from)?;
    let beta = p.beta;
    let density = move |t: &[f64]| (-beta * loss.eval(t[0])).exp();
    let comparison =
        compare_density(&hist, samples.rows, &density, &domain, p.bins).map_err(CliError::from)?;
    let masses = density_bin_masses(&density, &domain, p.bins).map_err(CliError::from)?;

    let mut hist_csv = CsvOut::create(
        &cfg.out_dir.join("histogram.csv"),
        &["bin_center", "hist", "analytic_mass"],
    )?;
    let bin_w = (hi - lo) / p.bins as f64;
    for b in 0..p.bins {
        hist_csv.row(&[
            fmt(lo + (b as f64 + 0.5) * bin_w),
            fmt(hist.probs()[b]),
            fmt(masses[b]),
        ])?;
    }
    hist_csv.finish()?;

    let mut density_csv = CsvOut::create(&cfg.out_dir.join("density.csv"), &["x", "p"])?;
    let n_plot = 401;
    // normalize the plot column by quadrature over the same grid
    let h = (hi - lo) / (n_plot - 1) as f64;
    let raw: Vec<f64> = (0..n_plot)
        .map(|i| density(&[lo + i as f64 * h]))
        .collect();
    let mut mass = 0.0;
    for (i, r) in raw.iter().enumerate() {
        let w = if i == 0 || i == n_plot - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        mass += w * r * h / 3.0;
    }
    for (i, r) in raw.iter().enumerate() {
        density_csv.row(&[fmt(lo + i as f64 * h), fmt(r / mass)])?;
    }
    density_csv.finish()?;

    let mut summary = CsvOut::create(
        &cfg.out_dir.join("summary.csv"),
        &["kept_draws", "tv", "kl_discrete"],
    )?;
    summary.row(&[
        samples.rows.to_string(),
        fmt(comparison.tv),
        fmt(comparison.kl_discrete),
    ])?;
    summary.finish()?;

    if p.dump_samples {
        let file = fs::File::create(cfg.out_dir.join("samples.bin"))?;
        write_samples(file, &samples).map_err(CliError::from)?;
    }
    Ok(())
}

fn run_cld_reg(cfg: &RunConfig, p: &CldRegParams) -> Result<(), CliError> {
    let loss = p.loss;
    let system = LangevinSystem {
        loss: Box::new(move |t: &[f64]| loss.eval(t[0])),
        grad: Box::new(move |t: &[f64]| vec![loss.grad(t[0])]),
        beta: p.beta,
        lambda: vec![p.lambda],
        domain: Domain::Unbounded,
        diffusion: Diffusion::Unit,
    };
    let icfg = integrator(p.dt, p.steps, p.burn_in, p.thin, p.n_traj, cfg.seed);
    let prior_std = if p.lambda > 0.0 {
        (1.0 / p.lambda).sqrt()
    } else {
        1.0
    };
    let init = move |rng: &mut ChaCha8Rng| {
        let z: f64 = StandardNormal.sample(rng);
        vec![prior_std * z]
    };
    let samples = simulate_ensemble(&system, &init, &icfg).map_err(CliError::from)?;

    let mut mean = 0.0;
    let mut second = 0.0;
    for r in 0..samples.rows {
        mean += samples.row(r)[0];
        second += samples.row(r)[0] * samples.row(r)[0];
    }
    mean /= samples.rows.max(1) as f64;
    second /= samples.rows.max(1) as f64;

    // histogram over a symmetric window against exp(-βL - λx²/2)
    let w = p.grid_half_width;
    let domain = BoxDomain::new(vec![-w], vec![w]).map_err(CliError::from)?;
    let mut clipped = samples.clone();
    clipped.data = samples
        .data
        .iter()
        .map(|x| x.clamp(-w + f64::EPSILON, w - f64::EPSILON))
        .collect();
    let hist = histogram(&clipped, &domain, p.bins).map_err(CliError::from)?;
    let (beta, lambda) = (p.beta, p.lambda);
    let density = move |t: &[f64]| (-beta * loss.eval(t[0]) - lambda * t[0] * t[0] / 2.0).exp();
    let comparison =
        compare_density(&hist, samples.rows, &density, &domain, p.bins).map_err(CliError::from)?;

    let mut summary = CsvOut::create(
        &cfg.out_dir.join("summary.csv"),
        &["kept_draws", "mean", "second_moment", "tv", "kl_discrete"],
    )?;
    summary.row(&[
        samples.rows.to_string(),
        fmt(mean),
        fmt(second),
        fmt(comparison.tv),
        fmt(comparison.kl_discrete),
    ])?;
    summary.finish()?;

    let mut hist_csv = CsvOut::create(
        &cfg.out_dir.join("histogram.csv"),
        &["bin_center", "hist"],
    )?;
    let bin_w = 2.0 * w / p.bins as f64;
    for b in 0..p.bins {
        hist_csv.row(&[fmt(-w + (b as f64 + 0.5) * bin_w), fmt(hist.probs()[b])])?;
    }
    hist_csv.finish()
}

fn noise_kind(kind: NoiseKindSpec, alpha: f64, poly_k: u32) -> (NoiseScale, Diffusion) {
    match kind {
        NoiseKindSpec::Uniform => (NoiseScale::Uniform, Diffusion::Unit),
        NoiseKindSpec::Linear => (NoiseScale::Linear { alpha }, Diffusion::Linear { alpha }),
        NoiseKindSpec::Poly => (
            NoiseScale::Poly { alpha, k: poly_k },
            Diffusion::Poly { alpha, k: poly_k },
        ),
        NoiseKindSpec::Exp => (NoiseScale::Exp { alpha }, Diffusion::Exp { alpha }),
    }
}

fn kind_name(kind: NoiseKindSpec) -> &'static str {
    match kind {
        NoiseKindSpec::Uniform => "uniform",
        NoiseKindSpec::Linear => "linear",
        NoiseKindSpec::Poly => "poly",
        NoiseKindSpec::Exp => "exp",
    }
}

fn run_noise_scales(cfg: &RunConfig, p: &NoiseScalesParams) -> Result<(), CliError> {
    let domain = BoxDomain::new(vec![p.box_lo], vec![p.box_hi]).map_err(CliError::from)?;
    let mut summary = CsvOut::create(
        &cfg.out_dir.join("summary.csv"),
        &["kind", "kept_draws", "tv", "kl_discrete"],
    )?;
    for (i, &kind) in p.kinds.iter().enumerate() {
        let (scale, diffusion) = noise_kind(kind, p.alpha, p.poly_k);
        let loss = p.loss;
        let system = LangevinSystem {
            loss: Box::new(move |t: &[f64]| loss.eval(t[0])),
            grad: Box::new(move |t: &[f64]| vec![loss.grad(t[0])]),
            beta: p.beta,
            lambda: vec![0.0],
            domain: Domain::Box(domain.clone()),
            diffusion,
        };
        let icfg = integrator(
            p.dt,
            p.steps,
            p.burn_in,
            p.thin,
            p.n_traj,
            cfg.seed.wrapping_add(i as u64),
        );
        let (lo, hi) = (p.box_lo, p.box_hi);
        let init = move |rng: &mut ChaCha8Rng| vec![lo + (hi - lo) * rng.random::<f64>()];
        let samples = simulate_ensemble(&system, &init, &icfg).map_err(CliError::from)?;
        let hist = histogram(&samples, &domain, p.bins).map_err(CliError::from)?;

        let params = NoiseScaleParams {
            kind: scale,
            beta: p.beta,
        };
        let density = move |t: &[f64]| {
            let psi = potential(&params, loss.eval(t[0])).unwrap_or(f64::INFINITY);
            (-psi).exp()
        };
        let comparison = compare_density(&hist, samples.rows, &density, &domain, p.bins)
            .map_err(CliError::from)?;
        summary.row(&[
            kind_name(kind).into(),
            samples.rows.to_string(),
            fmt(comparison.tv),
            fmt(comparison.kl_discrete),
        ])?;

        let analytic = crate::stationary::stationary_density_1d(
            &|x| loss.eval(x),
            &|x| params.sigma2(loss.eval(x)),
            p.beta,
            (p.box_lo, p.box_hi),
            p.n_grid,
        )
        .map_err(CliError::from)?;
        let mut density_csv = CsvOut::create(
            &cfg.out_dir.join(format!("density_{}.csv", kind_name(kind))),
            &["x", "p"],
        )?;
        for (x, pd) in analytic.xs.iter().zip(&analytic.pdf) {
            density_csv.row(&[fmt(*x), fmt(*pd)])?;
        }
        density_csv.finish()?;
    }
    summary.finish()
}

// parses `key = v1,v2` lines into a cartesian grid
fn parse_sweep(text: &str) -> Result<Vec<std::collections::BTreeMap<String, String>>, CliError> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, values) = line.split_once('=').ok_or_else(|| CliError {
            kind: CliErrorKind::Validation,
            error: format!("sweep line {} is not `key = values`", lineno + 1),
        })?;
        axes.push((
            key.trim().to_string(),
            values.split(',').map(|v| v.trim().to_string()).collect(),
        ));
    }
    let mut grid = vec![std::collections::BTreeMap::new()];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(grid.len() * values.len());
        for point in &grid {
            for v in &values {
                let mut p = point.clone();
                p.insert(key.clone(), v.clone());
                next.push(p);
            }
        }
        grid = next;
    }
    Ok(grid)
}

fn run_linreg(cfg: &RunConfig, p: &LinregParams) -> Result<(), CliError> {
    let mut out = CsvOut::create(
        &cfg.out_dir.join("linreg.csv"),
        &[
            "n",
            "d",
            "sigma",
            "lambda",
            "beta",
            "seed",
            "closed_train",
            "closed_pop",
            "mc_train",
            "mc_se_train",
            "mc_pop",
            "mc_se_pop",
            "asym_train",
            "asym_pop",
            "e_init_loss",
            "cld_bound",
        ],
    )?;
    let mut points: Vec<(usize, usize, f64, Option<f64>, BetaSpec, u64)> = Vec::new();
    match &p.sweep {
        None => points.push((p.n, p.d, p.sigma, p.lambda, p.beta, cfg.seed)),
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let bad = |msg: String| CliError {
                kind: CliErrorKind::Validation,
                error: msg,
            };
            for point in parse_sweep(&text)? {
                let get = |key: &str, default: String| {
                    point.get(key).cloned().unwrap_or(default)
                };
                let n: usize = get("n", p.n.to_string())
                    .parse()
                    .map_err(|_| bad("bad n in sweep".into()))?;
                let d: usize = get("d", p.d.to_string())
                    .parse()
                    .map_err(|_| bad("bad d in sweep".into()))?;
                let sigma: f64 = get("sigma", p.sigma.to_string())
                    .parse()
                    .map_err(|_| bad("bad sigma in sweep".into()))?;
                let lambda = match point.get("lambda") {
                    Some(v) => Some(v.parse().map_err(|_| bad("bad lambda in sweep".into()))?),
                    None => p.lambda,
                };
                let beta = match point.get("beta") {
                    Some(v) => BetaSpec::parse(v)?,
                    None => p.beta,
                };
                let seed: u64 = get("seed", cfg.seed.to_string())
                    .parse()
                    .map_err(|_| bad("bad seed in sweep".into()))?;
                points.push((n, d, sigma, lambda, beta, seed));
            }
        }
    }
    for (n, d, sigma, lambda, beta_spec, seed) in points {
        let lambda = lambda.unwrap_or(d as f64);
        let beta = beta_spec.resolve(n);
        let problem =
            linreg::generate_problem(n, d, sigma, lambda, beta, seed).map_err(CliError::from)?;
        let closed = linreg::closed_form_losses(&problem).map_err(CliError::from)?;
        let mc = linreg::mc_losses(&problem, p.mc_samples, seed ^ 0x5851_f42d)
            .map_err(CliError::from)?;
        let asym = linreg::asymptotic_losses(d, beta, sigma, n).map_err(CliError::from)?;
        let e_init = linreg::estimate_init_loss_gaussian(&problem, 10_000, seed ^ 0x9e37);
        let bound = bounds::cld_bound(BoundMode::Mean, beta, e_init, n as u64, p.delta)
            .map_err(CliError::from)?;
        out.row(&[
            n.to_string(),
            d.to_string(),
            fmt(sigma),
            fmt(lambda),
            fmt(beta),
            seed.to_string(),
            fmt(closed.train),
            fmt(closed.pop),
            fmt(mc.train),
            fmt(mc.se_train),
            fmt(mc.pop),
            fmt(mc.se_pop),
            fmt(asym.train),
            fmt(asym.pop),
            fmt(e_init),
            fmt(bound),
        ])?;
    }
    out.finish()
}

fn run_parity_train(cfg: &RunConfig, p: &ParityTrainParams) -> Result<(), CliError> {
    if p.dims.first() != Some(&p.d) || p.dims.last() != Some(&1) {
        return Err(CliError {
            kind: CliErrorKind::Validation,
            error: format!(
                "dims must start at the input width {} and end at 1, got {:?}",
                p.d, p.dims
            ),
        });
    }
    let (train, test) =
        sgld::parity_dataset(p.d, p.k, p.n, p.test_n, cfg.seed).map_err(CliError::from)?;
    let csv_path = p
        .out_csv
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("report.csv"));
    let mut out = CsvOut::create(
        &csv_path,
        &[
            "beta",
            "train_err",
            "test_err",
            "gap",
            "E_init_loss",
            "bound",
            "non_vacuous",
        ],
    )?;
    for beta_spec in &p.beta_sweep {
        let tcfg = sgld::TrainConfig {
            lr: p.lr,
            beta: beta_spec.resolve(p.n),
            lambda: p.lambda,
            epochs: p.epochs,
            batch_size: p.batch_size,
            seed: cfg.seed,
            delta: p.delta,
            n_init_samples: p.n_init_samples,
        };
        let report =
            sgld::train_and_certify(&p.dims, &train, &test, &tcfg).map_err(CliError::from)?;
        out.row(&[
            beta_spec.to_string(),
            fmt(report.train_error),
            fmt(report.test_error),
            fmt(report.gap),
            fmt(report.e_init_loss),
            fmt(report.bound),
            report.non_vacuous.to_string(),
        ])?;
    }
    out.finish()
}

fn run_bounds(cfg: &RunConfig, p: &BoundsParams) -> Result<(), CliError> {
    let inputs = BoundInputs {
        n: p.n,
        delta: p.delta,
        kl_init: p.kl_init,
        dinf_init: p.dinf_init,
        mean_potential: p.mean_potential,
        sup_potential: p.sup_potential,
    };
    let report = bounds::certificate(&inputs, p.empirical_error).map_err(CliError::from)?;
    let cld = match (&p.beta, p.init_loss) {
        (Some(beta_spec), Some(init_loss)) => Some(
            bounds::cld_bound(
                BoundMode::Mean,
                beta_spec.resolve(p.n as usize),
                init_loss,
                p.n,
                p.delta,
            )
            .map_err(CliError::from)?,
        ),
        _ => None,
    };
    let mut out = CsvOut::create(
        &cfg.out_dir.join("bounds.csv"),
        &[
            "n",
            "delta",
            "beta",
            "init_loss",
            "cld_bound",
            "bound_mean",
            "bound_single",
            "bound_fast_mean",
            "bound_fast_single",
        ],
    )?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    out.row(&[
        p.n.to_string(),
        fmt(p.delta),
        p.beta.map(|b| b.to_string()).unwrap_or_default(),
        opt(p.init_loss),
        opt(cld),
        fmt(report.bound_mean),
        fmt(report.bound_single),
        opt(report.bound_fast_mean),
        opt(report.bound_fast_single),
    ])?;
    out.finish()?;
    write_json(&cfg.out_dir.join("report.json"), &report)
}

fn run_counterexample(cfg: &RunConfig, p: &CounterexampleParams) -> Result<(), CliError> {
    let report = constructions::counterexample_run(p.n, cfg.seed).map_err(CliError::from)?;
    write_json(&cfg.out_dir.join("counterexample.json"), &report)
}

fn run_shatter(cfg: &RunConfig, p: &ShatterParams) -> Result<(), CliError> {
    let labels = match p.labels.as_str() {
        "alternating" => (0..p.m).map(|i| (i % 2) as u8).collect(),
        "zeros" => vec![0u8; p.m],
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..p.m).map(|_| rng.random_range(0..2) as u8).collect()
        }
        other => {
            return Err(CliError {
                kind: CliErrorKind::Validation,
                error: format!("unknown label pattern '{other}'"),
            })
        }
    };
    let spec = constructions::ShatterSpec::new(p.m, p.l_amp, labels).map_err(CliError::from)?;
    let net = constructions::build_shattering_net(&spec).map_err(CliError::from)?;
    constructions::audit_weight_bounds(&net).map_err(CliError::from)?;
    let check = constructions::verify_shattering(&net, &spec).map_err(CliError::from)?;

    #[derive(Serialize)]
    struct ShatterReport<'a> {
        spec: &'a constructions::ShatterSpec,
        active_output: f64,
        outputs: &'a [f64],
        margin_ok: bool,
    }
    write_json(
        &cfg.out_dir.join("shatter.json"),
        &ShatterReport {
            spec: &spec,
            active_output: spec.active_output(),
            outputs: &check.outputs,
            margin_ok: check.margin_ok,
        },
    )?;
    write_json(&cfg.out_dir.join("network.json"), &net)
}

/// Validates analytic gradients of the built-in losses once at start-up of
/// simulation commands; exposed for tests.
pub fn check_builtin_losses() -> Result<(), CliError> {
    for loss in [
        LossSpec::Zero,
        LossSpec::Quad { scale: 2.0 },
        LossSpec::DoubleWell {
            scale: 1.5,
            offset: 0.7,
        },
    ] {
        let system = LangevinSystem {
            loss: Box::new(move |t: &[f64]| loss.eval(t[0])),
            grad: Box::new(move |t: &[f64]| vec![loss.grad(t[0])]),
            beta: 1.0,
            lambda: vec![0.0],
            domain: Domain::Unbounded,
            diffusion: Diffusion::Unit,
        };
        let probes: Vec<Vec<f64>> = (-3..4).map(|i| vec![i as f64 * 0.31]).collect();
        system
            .validate_gradient(&probes, 1e-6, 1e-5)
            .map_err(CliError::from)?;
    }
    Ok(())
}
