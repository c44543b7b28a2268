//! Euler-Maruyama simulation of Langevin dynamics: reflected in a box,
//! regularized in free space, with optionally state-dependent diffusion.
//!
//! The update for a step of size `dt` at inverse temperature β is
//!
//! ```text
//! θ' = θ - ∇L(θ)·dt [- (λ/β)⊙θ·dt]  + sqrt(2·σ²(θ)·dt/β)·ξ,   ξ ~ N(0, I)
//! ```
//!
//! with the regularization term only in unbounded mode; in box mode the step
//! is folded back into the box (the discrete realization of normal
//! reflection). The diffusion σ² is evaluated at the pre-step point (Itô).
//! `β = ∞` is the noise-off sentinel: gradient flow with zero noise and zero
//! decay.

use std::io::{BufWriter, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::divergence::FiniteDistribution;
use crate::error::{Error, Result};

/// Axis-aligned box Π [m_i, M_i].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lows: Vec<f64>,
    highs: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>) -> Result<Self> {
        if lows.len() != highs.len() || lows.is_empty() {
            return Err(Error::InvalidArgument(
                "box bounds must be non-empty and of equal length".into(),
            ));
        }
        for (i, (&lo, &hi)) in lows.iter().zip(&highs).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "box coordinate {i} must satisfy m < M, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lows, highs })
    }

    pub fn unit_interval() -> Self {
        Self {
            lows: vec![0.0],
            highs: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.lows.len()
    }

    pub fn lows(&self) -> &[f64] {
        &self.lows
    }

    pub fn highs(&self) -> &[f64] {
        &self.highs
    }

    pub fn volume(&self) -> f64 {
        self.lows
            .iter()
            .zip(&self.highs)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lows.iter().zip(&self.highs))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }
}

/// Parameter domain of the dynamics.
#[derive(Debug, Clone)]
pub enum Domain {
    Box(BoxDomain),
    Unbounded,
}

type ScalarField = Box<dyn Fn(&[f64]) -> f64 + Sync + Send>;
type VectorField = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + Send>;

/// Diffusion coefficient σ²(θ). The named kinds are functions of the loss
/// value; `Custom` is an arbitrary positive field.
pub enum Diffusion {
    Unit,
    /// σ² = L(θ) + α
    Linear { alpha: f64 },
    /// σ² = (L(θ) + α)^k
    Poly { alpha: f64, k: u32 },
    /// σ² = exp(α·L(θ))
    Exp { alpha: f64 },
    Custom(ScalarField),
}

impl std::fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diffusion::Unit => write!(f, "Unit"),
            Diffusion::Linear { alpha } => write!(f, "Linear(alpha={alpha})"),
            Diffusion::Poly { alpha, k } => write!(f, "Poly(alpha={alpha}, k={k})"),
            Diffusion::Exp { alpha } => write!(f, "Exp(alpha={alpha})"),
            Diffusion::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Loss, gradient, temperature, regularization, domain, and diffusion of one
/// Langevin system.
pub struct LangevinSystem {
    pub loss: ScalarField,
    pub grad: VectorField,
    /// Inverse temperature β > 0, or `f64::INFINITY` to disable noise.
    pub beta: f64,
    /// Per-coordinate regularization precisions; used only in unbounded mode.
    pub lambda: Vec<f64>,
    pub domain: Domain,
    pub diffusion: Diffusion,
}

impl std::fmt::Debug for LangevinSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LangevinSystem")
            .field("beta", &self.beta)
            .field("lambda", &self.lambda)
            .field(
                "domain",
                &match &self.domain {
                    Domain::Box(b) => format!("Box(dim={})", b.dim()),
                    Domain::Unbounded => "Unbounded".into(),
                },
            )
            .field("diffusion", &self.diffusion)
            .finish()
    }
}

impl LangevinSystem {
    /// σ²(θ), evaluated through the loss for the named kinds.
    pub fn sigma2(&self, theta: &[f64]) -> f64 {
        match &self.diffusion {
            Diffusion::Unit => 1.0,
            Diffusion::Linear { alpha } => (self.loss)(theta) + alpha,
            Diffusion::Poly { alpha, k } => ((self.loss)(theta) + alpha).powi(*k as i32),
            Diffusion::Exp { alpha } => (alpha * (self.loss)(theta)).exp(),
            Diffusion::Custom(f) => f(theta),
        }
    }

    /// Central-difference audit of the supplied gradient at the given probes;
    /// errors when the relative deviation exceeds `tol`.
    pub fn validate_gradient(&self, probes: &[Vec<f64>], step: f64, tol: f64) -> Result<()> {
        for theta in probes {
            let analytic = (self.grad)(theta);
            for i in 0..theta.len() {
                let mut hi = theta.clone();
                let mut lo = theta.clone();
                hi[i] += step;
                lo[i] -= step;
                let fd = ((self.loss)(&hi) - (self.loss)(&lo)) / (2.0 * step);
                let denom = analytic[i].abs().max(fd.abs()).max(1.0);
                if (analytic[i] - fd).abs() / denom > tol {
                    return Err(Error::NumericalFailure(format!(
                        "gradient mismatch at coordinate {i}: analytic {} vs central difference {fd}",
                        analytic[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Discretization and ensemble controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Steps per trajectory.
    pub steps: u64,
    /// Independent trajectories.
    pub n_traj: usize,
    /// Steps discarded from the front of every trajectory.
    pub burn_in: u64,
    /// Keep every `thin`-th state after burn-in.
    pub thin: u64,
    pub seed: u64,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.burn_in > self.steps {
            return Err(Error::InvalidArgument(format!(
                "burn_in {} exceeds steps {}",
                self.burn_in, self.steps
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("need at least one trajectory".into()));
        }
        Ok(())
    }

    /// Kept draws per trajectory.
    pub fn kept_per_trajectory(&self) -> u64 {
        (self.steps - self.burn_in) / self.thin
    }

    /// Stable 64-bit digest of the configuration, recorded in sample dumps.
    pub fn config_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.dt.to_le_bytes());
        h.update(self.steps.to_le_bytes());
        h.update((self.n_traj as u64).to_le_bytes());
        h.update(self.burn_in.to_le_bytes());
        h.update(self.thin.to_le_bytes());
        h.update(self.seed.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Folds a point into the box coordinate-wise, reflecting across violated
/// faces until inside; interior points are unchanged.
pub fn reflect_into_box(theta: &[f64], domain: &BoxDomain) -> Result<Vec<f64>> {
    if theta.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: theta.len(),
        });
    }
    theta
        .iter()
        .zip(domain.lows.iter().zip(&domain.highs))
        .map(|(&x, (&lo, &hi))| {
            if !x.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "cannot reflect non-finite coordinate {x}"
                )));
            }
            Ok(reflect_coord(x, lo, hi))
        })
        .collect()
}

// The fold map is periodic with period 2(M-m): a triangle wave.
fn reflect_coord(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        return x;
    }
    let width = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * width);
    if y <= width {
        lo + y
    } else {
        lo + 2.0 * width - y
    }
}

/// One Euler-Maruyama step. Box mode omits the regularization term and folds
/// the result back into the box.
pub fn step<R: Rng>(
    system: &LangevinSystem,
    theta: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let grad = (system.grad)(theta);
    if grad.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    let noise_scale = if system.beta.is_infinite() {
        0.0
    } else {
        (2.0 * system.sigma2(theta) * dt / system.beta).sqrt()
    };
    let mut next = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut x = theta[i] - grad[i] * dt;
        if let Domain::Unbounded = system.domain {
            if !system.beta.is_infinite() {
                let lambda_i = system.lambda.get(i).copied().unwrap_or(0.0);
                x -= lambda_i / system.beta * theta[i] * dt;
            }
        }
        if noise_scale > 0.0 {
            let xi: f64 = StandardNormal.sample(rng);
            x += noise_scale * xi;
        }
        if !x.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "drift diverged at theta[{i}] = {}",
                theta[i]
            )));
        }
        next.push(x);
    }
    match &system.domain {
        Domain::Box(b) => reflect_into_box(&next, b),
        Domain::Unbounded => Ok(next),
    }
}

/// Row-major matrix of kept draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    pub rows: usize,
    /// Row-major, length `rows * dim`.
    pub data: Vec<f64>,
    pub seed: u64,
    pub config_hash: u64,
}

impl SampleSet {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

/// Runs `cfg.n_traj` independent trajectories and collects the kept draws.
///
/// Each trajectory consumes its own counter-based RNG stream keyed by
/// `(cfg.seed, trajectory index)`, so the result is bit-identical no matter
/// how the trajectories are scheduled across workers.
pub fn simulate_ensemble(
    system: &LangevinSystem,
    init_sampler: &(dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync),
    cfg: &IntegratorConfig,
) -> Result<SampleSet> {
    cfg.validate()?;
    let kept = cfg.kept_per_trajectory() as usize;
    let trajectories: Vec<Result<Vec<f64>>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|traj| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(traj as u64 + 1);
            let mut theta = init_sampler(&mut rng);
            if let Domain::Box(b) = &system.domain {
                if !b.contains(&theta) {
                    return Err(Error::InvalidArgument(format!(
                        "init sampler produced an out-of-domain point for trajectory {traj}"
                    )));
                }
            }
            let mut out = Vec::with_capacity(kept * theta.len());
            for t in 1..=cfg.steps {
                theta = step(system, &theta, cfg.dt, &mut rng).map_err(|e| match e {
                    Error::NumericalFailure(_) => Error::Diverged {
                        trajectory: traj,
                        step: t,
                    },
                    other => other,
                })?;
                if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
                    out.extend_from_slice(&theta);
                }
            }
            Ok(out)
        })
        .collect();

    let mut data = Vec::new();
    let mut dim = 0;
    for t in trajectories {
        let chunk = t?;
        if dim == 0 && kept > 0 {
            dim = chunk.len() / kept;
        }
        data.extend(chunk);
    }
    if kept == 0 {
        return Ok(SampleSet {
            dim: 0,
            rows: 0,
            data,
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
        });
    }
    Ok(SampleSet {
        dim,
        rows: kept * cfg.n_traj,
        data,
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
    })
}

/// Per-bin counts on the regular grid over `domain` (dims 1 and 2 only).
pub fn histogram_counts(
    samples: &SampleSet,
    domain: &BoxDomain,
    bins_per_dim: usize,
) -> Result<Vec<u64>> {
    if samples.dim != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: samples.dim,
        });
    }
    if samples.dim == 0 || samples.dim > 2 {
        return Err(Error::InvalidArgument(format!(
            "histogram gridding supports dims 1 and 2, got {}",
            samples.dim
        )));
    }
    if bins_per_dim == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let n_bins = bins_per_dim.pow(samples.dim as u32);
    let mut counts = vec![0u64; n_bins];
    for r in 0..samples.rows {
        let row = samples.row(r);
        let mut index = 0usize;
        for (d, &x) in row.iter().enumerate() {
            let (lo, hi) = (domain.lows[d], domain.highs[d]);
            if x < lo || x > hi {
                return Err(Error::NumericalFailure(format!(
                    "sample {r} coordinate {d} = {x} escapes the box; integrator bug"
                )));
            }
            let mut b = ((x - lo) / (hi - lo) * bins_per_dim as f64) as usize;
            if b == bins_per_dim {
                b -= 1; // right edge belongs to the last bin
            }
            index = index * bins_per_dim + b;
        }
        counts[index] += 1;
    }
    Ok(counts)
}

/// Normalized histogram of the samples as a finite distribution over bins.
pub fn histogram(
    samples: &SampleSet,
    domain: &BoxDomain,
    bins_per_dim: usize,
) -> Result<FiniteDistribution> {
    let counts = histogram_counts(samples, domain, bins_per_dim)?;
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    FiniteDistribution::from_weights(&weights)
}

/// Histogram-vs-density comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityComparison {
    /// Total-variation distance between the histogram and the density's bin
    /// masses.
    pub tv: f64,
    /// `KL(hist ‖ mass)` with bins of the density mass floored at
    /// `ε = 1/(10·n_samples)` so the report stays finite.
    pub kl_discrete: f64,
}

/// Integrates an unnormalized density over the bin grid (per-bin Simpson,
/// normalized to unit total mass) and compares it with the histogram.
pub fn compare_density(
    hist: &FiniteDistribution,
    n_samples: usize,
    density: &dyn Fn(&[f64]) -> f64,
    domain: &BoxDomain,
    bins_per_dim: usize,
) -> Result<DensityComparison> {
    let masses = density_bin_masses(density, domain, bins_per_dim)?;
    if hist.len() != masses.len() {
        return Err(Error::DimensionMismatch {
            expected: masses.len(),
            got: hist.len(),
        });
    }
    let tv = hist
        .probs()
        .iter()
        .zip(&masses)
        .map(|(h, m)| (h - m).abs())
        .sum::<f64>()
        / 2.0;
    let eps = 1.0 / (10.0 * n_samples.max(1) as f64);
    let floored: Vec<f64> = masses.iter().map(|&m| m.max(eps)).collect();
    let total: f64 = floored.iter().sum();
    let kl_discrete = hist
        .probs()
        .iter()
        .zip(&floored)
        .filter(|(h, _)| **h > 0.0)
        .map(|(h, m)| h * (h / (m / total)).ln())
        .sum();
    Ok(DensityComparison { tv, kl_discrete })
}

/// Quadrature masses of an unnormalized density on the bin grid, normalized
/// to sum 1.
pub fn density_bin_masses(
    density: &dyn Fn(&[f64]) -> f64,
    domain: &BoxDomain,
    bins_per_dim: usize,
) -> Result<Vec<f64>> {
    if domain.dim() == 0 || domain.dim() > 2 {
        return Err(Error::InvalidArgument(
            "density gridding supports dims 1 and 2".into(),
        ));
    }
    // 9-point Simpson per bin and axis
    const SUB: usize = 8;
    let simpson_w = |i: usize| -> f64 {
        if i == 0 || i == SUB {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut masses = vec![0.0; bins_per_dim.pow(domain.dim() as u32)];
    match domain.dim() {
        1 => {
            let (lo, hi) = (domain.lows[0], domain.highs[0]);
            let bin_w = (hi - lo) / bins_per_dim as f64;
            let h = bin_w / SUB as f64;
            for (b, mass) in masses.iter_mut().enumerate() {
                let left = lo + b as f64 * bin_w;
                let mut acc = 0.0;
                for i in 0..=SUB {
                    let v = density(&[left + i as f64 * h]);
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "density must be finite and non-negative, got {v}"
                        )));
                    }
                    acc += simpson_w(i) * v;
                }
                *mass = acc * h / 3.0;
            }
        }
        2 => {
            let bin_w: Vec<f64> = (0..2)
                .map(|d| (domain.highs[d] - domain.lows[d]) / bins_per_dim as f64)
                .collect();
            let h: Vec<f64> = bin_w.iter().map(|w| w / SUB as f64).collect();
            for bx in 0..bins_per_dim {
                for by in 0..bins_per_dim {
                    let left = [
                        domain.lows[0] + bx as f64 * bin_w[0],
                        domain.lows[1] + by as f64 * bin_w[1],
                    ];
                    let mut acc = 0.0;
                    for i in 0..=SUB {
                        for j in 0..=SUB {
                            let p = [left[0] + i as f64 * h[0], left[1] + j as f64 * h[1]];
                            acc += simpson_w(i) * simpson_w(j) * density(&p);
                        }
                    }
                    masses[bx * bins_per_dim + by] = acc * h[0] * h[1] / 9.0;
                }
            }
        }
        _ => unreachable!(),
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidArgument(
            "density has zero total mass on the box".into(),
        ));
    }
    for m in &mut masses {
        *m /= total;
    }
    Ok(masses)
}

/// Writes a sample set in the binary dump format: a header of four
/// little-endian u64 fields (dim, count, seed, config hash) followed by the
/// row-major payload of little-endian f64 values.
pub fn write_samples<W: Write>(writer: W, samples: &SampleSet) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(&(samples.dim as u64).to_le_bytes())?;
    w.write_all(&(samples.rows as u64).to_le_bytes())?;
    w.write_all(&samples.seed.to_le_bytes())?;
    w.write_all(&samples.config_hash.to_le_bytes())?;
    for v in &samples.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample set written by [`write_samples`].
pub fn read_samples<R: Read>(mut reader: R) -> Result<SampleSet> {
    let mut header = [0u8; 32];
    reader.read_exact(&mut header)?;
    let field = |i: usize| u64::from_le_bytes(header[8 * i..8 * (i + 1)].try_into().unwrap());
    let (dim, rows, seed, config_hash) =
        (field(0) as usize, field(1) as usize, field(2), field(3));
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != dim * rows * 8 {
        return Err(Error::InvalidArgument(format!(
            "payload holds {} bytes, header promises {}",
            payload.len(),
            dim * rows * 8
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SampleSet {
        dim,
        rows,
        data,
        seed,
        config_hash,
    })
}

/// Writes samples as CSV with one coordinate column per dimension.
pub fn samples_to_csv<W: Write>(writer: W, samples: &SampleSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..samples.dim).map(|d| format!("theta{d}")).collect();
    w.write_record(&header)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    for r in 0..samples.rows {
        let record: Vec<String> = samples.row(r).iter().map(|v| format!("{v}")).collect();
        w.write_record(&record)
            .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
