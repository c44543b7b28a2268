//! Generalization-gap bound calculators.
//!
//! All quantities are in nats. The square-root bounds take a divergence
//! budget `KL(p_0‖ν) + E_{p_0}Ψ` (mean form) or `D∞(p_0‖ν) + esssup_{p_0}Ψ`
//! (single-draw form); the fast-rate bounds run the same budgets through a
//! binary-kl inversion and decay as O(1/N) at zero empirical error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs shared by the bound calculators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sample count, must exceed 1.
    pub n: u64,
    /// Confidence level in (0, 1); bounds hold with probability 1-δ.
    pub delta: f64,
    /// KL(p_0 ‖ ν) ≥ 0.
    pub kl_init: f64,
    /// D∞(p_0 ‖ ν) ≥ 0.
    pub dinf_init: f64,
    /// E_{p_0} Ψ ≥ 0.
    pub mean_potential: f64,
    /// esssup_{p_0} Ψ ≥ 0.
    pub sup_potential: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n <= 1 {
            return Err(Error::InvalidArgument(format!(
                "sample count must exceed 1, got {}",
                self.n
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        for (name, v) in [
            ("kl_init", self.kl_init),
            ("dinf_init", self.dinf_init),
            ("mean_potential", self.mean_potential),
            ("sup_potential", self.sup_potential),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Whether a bound certifies the posterior mean of the gap or a single draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundMode {
    Mean,
    Single,
}

/// In-expectation gap bound `sqrt((kl_init + mean_potential + ln(1/δ)) / N)`.
pub fn gap_bound_mean(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(
        ((inputs.kl_init + inputs.mean_potential - inputs.delta.ln()) / inputs.n as f64)
            .sqrt(),
    )
}

/// Single-draw gap bound `sqrt((dinf_init + sup_potential + ln(1/δ)) / N)`.
pub fn gap_bound_single(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(
        ((inputs.dinf_init + inputs.sup_potential - inputs.delta.ln()) / inputs.n as f64)
            .sqrt(),
    )
}

fn check_n_delta(n: u64, delta: f64, min_n: u64) -> Result<()> {
    if n < min_n {
        return Err(Error::InvalidArgument(format!(
            "sample count must be >= {min_n}, got {n}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    Ok(())
}

/// Langevin-dynamics gap bound `sqrt((β·init_loss + ln(1/δ)) / (2N))`.
///
/// `init_loss` is `E_{p_0} L_S` in [`BoundMode::Mean`] and `esssup_{p_0} L_S`
/// in [`BoundMode::Single`]; the formula is the same, the mode documents which
/// statistic the caller measured. `β = ∞` yields `+∞` (the noiseless limit is
/// not certified).
pub fn cld_bound(_mode: BoundMode, beta: f64, init_loss: f64, n: u64, delta: f64) -> Result<f64> {
    check_n_delta(n, delta, 2)?;
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    if init_loss.is_nan() || init_loss < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "init_loss must be >= 0, got {init_loss}"
        )));
    }
    if beta.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(((beta * init_loss - delta.ln()) / (2.0 * n as f64)).sqrt())
}

/// Largest β for which [`cld_bound`] stays below `target`:
/// `β < (2N·target² - ln(1/δ)) / init_loss`.
pub fn cld_beta_threshold(target: f64, init_loss: f64, n: u64, delta: f64) -> Result<f64> {
    check_n_delta(n, delta, 2)?;
    if !(target > 0.0) || !(init_loss > 0.0) {
        return Err(Error::InvalidArgument(
            "target and init_loss must be positive".into(),
        ));
    }
    Ok((2.0 * n as f64 * target * target + delta.ln()) / init_loss)
}

/// Gap bound for uniform initialization restricted to a sub-box:
/// `sqrt((β·init_loss + ln(|Θ|/|Θ₀|) + ln(1/δ)) / (2N))`.
pub fn restricted_box_bound(
    _mode: BoundMode,
    beta: f64,
    init_loss: f64,
    vol_theta: f64,
    vol_theta0: f64,
    n: u64,
    delta: f64,
) -> Result<f64> {
    check_n_delta(n, delta, 2)?;
    if !(vol_theta0 > 0.0 && vol_theta0 <= vol_theta) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < |Θ₀| <= |Θ|, got |Θ₀|={vol_theta0}, |Θ|={vol_theta}"
        )));
    }
    if beta.is_nan() || beta < 0.0 || init_loss.is_nan() || init_loss < 0.0 {
        return Err(Error::InvalidArgument(
            "beta and init_loss must be >= 0".into(),
        ));
    }
    if beta.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let volume_term = (vol_theta / vol_theta0).ln();
    Ok(((beta * init_loss + volume_term - delta.ln()) / (2.0 * n as f64)).sqrt())
}

/// KL between centered diagonal Gaussians given by precision vectors:
/// `KL(N(0, diag(λ₀⁻¹)) ‖ N(0, diag(λ₁⁻¹))) = ½ Σ (λ₁ᵢ/λ₀ᵢ - 1 + ln(λ₀ᵢ/λ₁ᵢ))`.
pub fn gaussian_mismatch_kl(lambda0: &[f64], lambda1: &[f64]) -> Result<f64> {
    if lambda0.len() != lambda1.len() {
        return Err(Error::DimensionMismatch {
            expected: lambda0.len(),
            got: lambda1.len(),
        });
    }
    let mut acc = 0.0;
    for (&l0, &l1) in lambda0.iter().zip(lambda1) {
        if !(l0 > 0.0) || !(l1 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "precisions must be positive, got {l0}, {l1}"
            )));
        }
        acc += l1 / l0 - 1.0 + (l0 / l1).ln();
    }
    Ok(0.5 * acc)
}

/// Bernoulli relative entropy `kl(a‖b) = a ln(a/b) + (1-a) ln((1-a)/(1-b))`
/// with `0 ln 0 = 0`; `+∞` when b ∈ {0,1} strictly excludes a.
pub fn binary_kl(a: f64, b: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie in [0,1], got {v}"
            )));
        }
    }
    let term = |x: f64, y: f64| -> f64 {
        if x == 0.0 {
            0.0
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    };
    Ok(term(a, b) + term(1.0 - a, 1.0 - b))
}

/// Largest `b ∈ [a, 1]` with `binary_kl(a, b) ≤ budget`, by bisection.
///
/// This converts an empirical error `a` and a per-sample kl budget into the
/// tightest population-error upper bound. Bisection runs to full f64
/// resolution (well below the documented 1e-10).
pub fn invert_binary_kl_upper(a: f64, budget: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("a must lie in [0,1], got {a}")));
    }
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "budget must be >= 0, got {budget}"
        )));
    }
    if budget == 0.0 {
        return Ok(a);
    }
    if a == 1.0 || binary_kl(a, 1.0)? <= budget {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (a, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_kl(a, mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Fast-rate bound family derived from the kl-form PAC-Bayes inequality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KlFormBounds {
    /// `(divergence_budget + ln(2√N/δ)) / N`.
    pub kl_budget_per_sample: f64,
    /// Population-error bound from inverting `kl(empirical, ·)` at the budget.
    pub inverted_bound: f64,
    /// Explicit consequence `sqrt(2·empirical·budget) + 2·budget`.
    pub fast_gap_bound: f64,
}

/// kl-form bounds at a divergence budget (`kl_init + mean_potential` for
/// [`BoundMode::Mean`], `dinf_init + sup_potential` for [`BoundMode::Single`]).
/// Requires N ≥ 8.
pub fn kl_form_bounds(
    _mode: BoundMode,
    divergence_budget: f64,
    empirical_error: f64,
    n: u64,
    delta: f64,
) -> Result<KlFormBounds> {
    check_n_delta(n, delta, 8)?;
    if divergence_budget.is_nan() || divergence_budget < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "divergence budget must be >= 0, got {divergence_budget}"
        )));
    }
    if !(0.0..=1.0).contains(&empirical_error) {
        return Err(Error::InvalidArgument(format!(
            "empirical error must lie in [0,1], got {empirical_error}"
        )));
    }
    let nf = n as f64;
    // ln(2√N/δ) assembled in log domain so δ down to 1e-15 is exact
    let log_term = 2.0f64.ln() + 0.5 * nf.ln() - delta.ln();
    let budget = (divergence_budget + log_term) / nf;
    Ok(KlFormBounds {
        kl_budget_per_sample: budget,
        inverted_bound: invert_binary_kl_upper(empirical_error, budget)?,
        fast_gap_bound: (2.0 * empirical_error * budget).sqrt() + 2.0 * budget,
    })
}

/// A full certificate: both square-root bounds, and the fast-rate bounds when
/// an empirical error is supplied.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub empirical_error: Option<f64>,
    pub bound_mean: f64,
    pub bound_single: f64,
    pub bound_fast_mean: Option<f64>,
    pub bound_fast_single: Option<f64>,
}

/// Populates every bound the inputs support.
pub fn certificate(inputs: &BoundInputs, empirical_error: Option<f64>) -> Result<BoundReport> {
    inputs.validate()?;
    let bound_mean = gap_bound_mean(inputs)?;
    let bound_single = gap_bound_single(inputs)?;
    let (bound_fast_mean, bound_fast_single) = match empirical_error {
        None => (None, None),
        Some(err) => {
            let mean = kl_form_bounds(
                BoundMode::Mean,
                inputs.kl_init + inputs.mean_potential,
                err,
                inputs.n,
                inputs.delta,
            )?;
            let single = kl_form_bounds(
                BoundMode::Single,
                inputs.dinf_init + inputs.sup_potential,
                err,
                inputs.n,
                inputs.delta,
            )?;
            (Some(mean.fast_gap_bound), Some(single.fast_gap_bound))
        }
    };
    Ok(BoundReport {
        inputs: *inputs,
        empirical_error,
        bound_mean,
        bound_single,
        bound_fast_mean,
        bound_fast_single,
    })
}
