//! Executable constructions: the three-state chain showing that forward
//! divergences alone cannot certify intermediate-time generalization, and the
//! weight-bounded ReLU network that fat-shatters m points with margin 1.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divergence::{divergence, DivergenceKind, FiniteDistribution};
use crate::error::{Error, Result};
use crate::markov::{evolve, TransitionKernel};
use crate::mlp::{mlp_logits, MlpParams};

/// State order used throughout: the constant-zero predictor, the constant-one
/// predictor, and the sample memorizer.
pub const ZERO: usize = 0;
pub const ONE: usize = 1;
pub const MEM: usize = 2;

/// A drawn sample plus the per-state errors of the three reachable
/// hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleInstance {
    pub xs: Vec<f64>,
    pub ys: Vec<u8>,
    /// Deterministic kernel over (ZERO, ONE, MEM).
    pub kernel: [[f64; 3]; 3],
    /// Sampled training error per state.
    pub empirical_errors: [f64; 3],
    /// Population error per state; labels are independent fair coins, so all
    /// three are exactly ½.
    pub population_errors: [f64; 3],
}

/// Outputs of one counterexample run.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub instance: CounterexampleInstance,
    /// Expected generalization gap at t = 0, 1, 2.
    pub gap_trace: [f64; 3],
    /// `E_D - E_S` of the memorizer: exactly ½.
    pub memorizer_gap: f64,
    /// `KL(p_∞ ‖ p_0) = ln 2`.
    pub kl_stationary_from_init: f64,
    /// Whether `KL(ν ‖ p_∞)` is finite with ν = p_0; it is not, which is why
    /// forward divergences alone cannot certify t = 1.
    pub reverse_divergence_finite: bool,
}

/// Builds the sample (x uniform on [0,1], labels fair coins), runs the
/// deterministic chain ZERO→MEM, MEM→ONE, ONE→ONE from `p_0 = (½, ½, 0)`,
/// and reports the divergence table around it.
pub fn counterexample_run(n: usize, seed: u64) -> Result<CounterexampleReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
    let frac_ones = ys.iter().map(|&y| y as f64).sum::<f64>() / n as f64;

    // the memorizer replays the sample labels, so its empirical error is 0
    let empirical_errors = [frac_ones, 1.0 - frac_ones, 0.0];
    let population_errors = [0.5; 3];

    let kernel_rows = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
    let kernel = TransitionKernel::from_rows(
        &kernel_rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
    )?;
    let p0 = FiniteDistribution::new(vec![0.5, 0.5, 0.0])?;
    let marginals = evolve(&p0, &kernel, 2)?;
    let mut gap_trace = [0.0; 3];
    for (t, pt) in marginals.iter().enumerate() {
        gap_trace[t] = pt
            .probs()
            .iter()
            .enumerate()
            .map(|(s, &m)| m * (population_errors[s] - empirical_errors[s]))
            .sum();
    }

    let p_inf = FiniteDistribution::delta(3, ONE);
    let kl_stationary_from_init = divergence(DivergenceKind::Kl, &p_inf, &p0, None)?;
    let reverse = divergence(DivergenceKind::Kl, &p0, &p_inf, None)?;

    Ok(CounterexampleReport {
        instance: CounterexampleInstance {
            xs,
            ys,
            kernel: kernel_rows,
            empirical_errors,
            population_errors,
        },
        gap_trace,
        memorizer_gap: population_errors[MEM] - empirical_errors[MEM],
        kl_stationary_from_init,
        reverse_divergence_finite: reverse.is_finite(),
    })
}

/// Shattering threshold r_i and margin ε (both 1): label 1 requires output
/// ≥ r + ε, label 0 requires output ≤ r - ε.
pub const SHATTER_THRESHOLD: f64 = 1.0;
pub const SHATTER_MARGIN: f64 = 1.0;

/// Point count, amplification depth, and target labels for the shattering
/// construction at points `x_i = i/m`.
#[derive(Debug, Clone, Serialize)]
pub struct ShatterSpec {
    pub m: usize,
    pub l_amp: usize,
    pub labels: Vec<u8>,
}

impl ShatterSpec {
    pub fn new(m: usize, l_amp: usize, labels: Vec<u8>) -> Result<Self> {
        let root = (m as f64).sqrt().round() as usize;
        if m == 0 || root * root != m {
            return Err(Error::InvalidArgument(format!(
                "m must be a perfect square, got {m}"
            )));
        }
        if l_amp == 0 {
            return Err(Error::InvalidArgument("need at least one amplification layer".into()));
        }
        if labels.len() != m || labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument(
                "labels must be m binary values".into(),
            ));
        }
        Ok(Self { m, l_amp, labels })
    }

    pub fn width(&self) -> usize {
        (self.m as f64).sqrt().round() as usize
    }

    /// Analytic output at label-1 points: `m^(L/4) / (2m·sqrt(2m-1))`.
    pub fn active_output(&self) -> f64 {
        let m = self.m as f64;
        m.powf(self.l_amp as f64 / 4.0) / (2.0 * m * (2.0 * m - 1.0).sqrt())
    }
}

/// Builds the shattering network.
///
/// Layer 1 holds a bias neuron plus a pair of ramp neurons per label flip,
/// combined with output weights ±1/(2√(2m-1)) so the combining neuron reads
/// `y_i/(2m√(2m-1))` at `x_i`. The `l_amp` width-√m layers then multiply by
/// `m^(1/4)` each (first incoming weights 1, the rest `m^(-1/4)`), giving
/// label-1 outputs of `m^(L/4)/(2m√(2m-1))` and exact zeros at label-0
/// points. Every weight magnitude stays within `1/sqrt(fan_in)`.
pub fn build_shattering_net(spec: &ShatterSpec) -> Result<MlpParams> {
    let m = spec.m;
    let root = spec.width();
    let mf = m as f64;
    let quarter = mf.powf(-0.25);

    // layer 1: bias neuron + two ramp neurons per flip
    let mut thresholds = Vec::new(); // (threshold, combining sign)
    for i in 0..m - 1 {
        let (a, b) = (spec.labels[i], spec.labels[i + 1]);
        if a == b {
            continue;
        }
        let sign = if a == 0 { 1.0 } else { -1.0 };
        let x_i = (i + 1) as f64 / mf;
        let x_next = (i + 2) as f64 / mf;
        thresholds.push((x_i, sign));
        thresholds.push((x_next, -sign));
    }
    let w1 = 1 + thresholds.len();
    let combine = 1.0 / (2.0 * (2.0 * mf - 1.0).sqrt());

    let mut dims = vec![1, w1, 1];
    dims.extend(std::iter::repeat(root).take(spec.l_amp));
    dims.push(1);
    let mut net = MlpParams::zeros(&dims)?;

    // bias neuron carries y_1/m
    net.weights[0][(0, 0)] = 0.0;
    net.biases[0][0] = spec.labels[0] as f64 / mf;
    net.weights[1][(0, 0)] = combine;
    for (j, &(threshold, sign)) in thresholds.iter().enumerate() {
        net.weights[0][(0, j + 1)] = 1.0;
        net.biases[0][j + 1] = -threshold;
        net.weights[1][(j + 1, 0)] = sign * combine;
    }

    // fan-out into the first amplification layer with unit weights
    for j in 0..root {
        net.weights[2][(0, j)] = 1.0;
    }
    // interior amplification layers and the output neuron
    for l in 3..net.weights.len() {
        for v in net.weights[l].iter_mut() {
            *v = quarter;
        }
    }
    Ok(net)
}

/// Per-layer audit that every weight magnitude is at most `1/sqrt(fan_in)`.
pub fn audit_weight_bounds(net: &MlpParams) -> Result<()> {
    for (l, w) in net.weights.iter().enumerate() {
        let bound = 1.0 / (net.layer_dims[l] as f64).sqrt() + 1e-12;
        for v in w.iter() {
            if v.abs() > bound {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} weight {v} exceeds bound {bound}"
                )));
            }
        }
    }
    Ok(())
}

/// Network outputs at the shattering points and the margin verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ShatterCheck {
    pub outputs: Vec<f64>,
    /// True iff every label-1 output reaches r+ε and every label-0 output
    /// stays at or below r-ε.
    pub margin_ok: bool,
}

/// Evaluates the network at `x_i = i/m` against the margin-1 shattering
/// condition with thresholds r_i = 1.
pub fn verify_shattering(net: &MlpParams, spec: &ShatterSpec) -> Result<ShatterCheck> {
    let mf = spec.m as f64;
    let inputs = DMatrix::from_fn(spec.m, 1, |i, _| (i + 1) as f64 / mf);
    let outputs: Vec<f64> = mlp_logits(net, &inputs)?.iter().copied().collect();
    let margin_ok = outputs.iter().zip(&spec.labels).all(|(&out, &y)| {
        if y == 1 {
            out >= SHATTER_THRESHOLD + SHATTER_MARGIN
        } else {
            // exact zeros up to roundoff of the cancelling ramps
            out <= SHATTER_THRESHOLD - SHATTER_MARGIN + 1e-9
        }
    });
    Ok(ShatterCheck { outputs, margin_ok })
}
