//! Analytic stationary potentials and densities of reflected Langevin
//! dynamics with variable diffusion, plus partition-function quadrature.
//!
//! For diffusion σ²(x) bounded away from 0 on a box, the stationary density is
//!
//! ```text
//! p∞(x) ∝ (1/σ²(x)) · exp(-β ∫ L'(u)/σ²(u) du)
//! ```
//!
//! with the antiderivative anchored at the left box edge (the integration
//! constant is absorbed by normalization). The supported noise scales admit
//! closed-form potentials, each canonically shifted so Ψ(L=0) = 0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diffusion family for the analytic potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseScale {
    /// σ² ≡ 1
    Uniform,
    /// σ² = L + α
    Linear { alpha: f64 },
    /// σ² = (L + α)^k, integer k ≥ 2
    Poly { alpha: f64, k: u32 },
    /// σ² = exp(α·L)
    Exp { alpha: f64 },
}

/// Noise-scale family plus inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScaleParams {
    pub kind: NoiseScale,
    pub beta: f64,
}

impl NoiseScaleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        match self.kind {
            NoiseScale::Uniform => Ok(()),
            NoiseScale::Linear { alpha } | NoiseScale::Exp { alpha } => {
                if alpha > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "alpha must be positive, got {alpha}"
                    )))
                }
            }
            NoiseScale::Poly { alpha, k } => {
                if !(alpha > 0.0) {
                    Err(Error::InvalidArgument(format!(
                        "alpha must be positive, got {alpha}"
                    )))
                } else if k < 2 {
                    Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// σ² as a function of the loss value.
    pub fn sigma2(&self, loss: f64) -> f64 {
        match self.kind {
            NoiseScale::Uniform => 1.0,
            NoiseScale::Linear { alpha } => loss + alpha,
            NoiseScale::Poly { alpha, k } => (loss + alpha).powi(k as i32),
            NoiseScale::Exp { alpha } => (alpha * loss).exp(),
        }
    }
}

/// Canonically shifted stationary potential Ψ(L) at loss value `L ≥ 0`:
///
/// - Uniform: `β·L`
/// - Linear:  `(β+1)·ln(L/α + 1)`
/// - Poly:    `k·ln(L/α + 1) + (β/(k-1))·(α^(1-k) - (L+α)^(1-k))`
/// - Exp:     `α·L + (β/α)·(1 - exp(-α·L))`
pub fn potential(params: &NoiseScaleParams, loss: f64) -> Result<f64> {
    params.validate()?;
    if !(loss >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "loss must be >= 0, got {loss}"
        )));
    }
    let beta = params.beta;
    Ok(match params.kind {
        NoiseScale::Uniform => beta * loss,
        NoiseScale::Linear { alpha } => (beta + 1.0) * (loss / alpha + 1.0).ln(),
        NoiseScale::Poly { alpha, k } => {
            let km1 = (k - 1) as f64;
            k as f64 * (loss / alpha + 1.0).ln()
                + beta / km1 * (alpha.powf(-km1) - (loss + alpha).powf(-km1))
        }
        NoiseScale::Exp { alpha } => {
            alpha * loss + beta / alpha * (1.0 - (-alpha * loss).exp())
        }
    })
}

/// Normalized density values on a uniform grid over a 1D box.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub xs: Vec<f64>,
    /// Density values; Simpson quadrature of the vector over `xs` is 1.
    pub pdf: Vec<f64>,
}

impl GridDensity {
    /// Linear interpolation, clamped to the grid range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.pdf[0];
        }
        if x >= self.xs[n - 1] {
            return self.pdf[n - 1];
        }
        let h = self.xs[1] - self.xs[0];
        let i = (((x - self.xs[0]) / h) as usize).min(n - 2);
        let w = (x - self.xs[i]) / h;
        self.pdf[i] * (1.0 - w) + self.pdf[i + 1] * w
    }
}

fn require_odd_grid(n_grid: usize) -> Result<()> {
    if n_grid < 5 || n_grid % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "n_grid must be odd and >= 5 for Simpson quadrature, got {n_grid}"
        )));
    }
    Ok(())
}

// Composite Simpson weights h/3 · {1,4,2,...,2,4,1} for an odd-length grid.
fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
    }
    w
}

// Cumulative Simpson: exact pairs at even indices, the 3-point
// Newton rule for the interim odd indices. Both are locally O(h^4).
fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut cum = vec![0.0; n];
    let mut i = 0;
    while i + 2 < n {
        cum[i + 1] = cum[i] + h / 12.0 * (5.0 * f[i] + 8.0 * f[i + 1] - f[i + 2]);
        cum[i + 2] = cum[i] + h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        i += 2;
    }
    cum
}

// 5-point finite-difference derivative on a uniform grid, O(h^4), with
// one-sided stencils at the edges.
fn derivative_grid(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
        } else if i + 4 < n && i < 2 {
            (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3]
                - 3.0 * f[i + 4])
                / (12.0 * h)
        } else {
            (25.0 * f[i] - 48.0 * f[i - 1] + 36.0 * f[i - 2] - 16.0 * f[i - 3]
                + 3.0 * f[i - 4])
                / (12.0 * h)
        };
    }
    d
}

/// Stationary density of reflected Langevin dynamics on a 1D box with loss
/// `loss` and diffusion `sigma2`, via cumulative Simpson quadrature of
/// `L'/σ²` from the left edge.
pub fn stationary_density_1d(
    loss: &dyn Fn(f64) -> f64,
    sigma2: &dyn Fn(f64) -> f64,
    beta: f64,
    bounds: (f64, f64),
    n_grid: usize,
) -> Result<GridDensity> {
    require_odd_grid(n_grid)?;
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "box must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let h = (hi - lo) / (n_grid - 1) as f64;
    let xs: Vec<f64> = (0..n_grid).map(|i| lo + i as f64 * h).collect();
    let ls: Vec<f64> = xs.iter().map(|&x| loss(x)).collect();
    let s2: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let v = sigma2(x);
            if v <= 0.0 {
                Err(Error::InvalidArgument(format!(
                    "sigma^2 must be positive on the box, got {v} at x={x}"
                )))
            } else {
                Ok(v)
            }
        })
        .collect::<Result<_>>()?;
    let dl = derivative_grid(&ls, h);
    let integrand: Vec<f64> = dl.iter().zip(&s2).map(|(d, s)| d / s).collect();
    let antideriv = cumulative_simpson(&integrand, h);

    // log-domain with max shift, then normalize by Simpson mass
    let logp: Vec<f64> = antideriv
        .iter()
        .zip(&s2)
        .map(|(a, s)| -beta * a - s.ln())
        .collect();
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pdf: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let weights = simpson_weights(n_grid, h);
    let mass: f64 = pdf.iter().zip(&weights).map(|(p, w)| p * w).sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "density mass {mass} is not normalizable"
        )));
    }
    for p in &mut pdf {
        *p /= mass;
    }
    Ok(GridDensity { xs, pdf })
}

/// Log-partition with the refinement diagnostic used to detect
/// non-integrable spikes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogPartition {
    /// ln ∫ base·exp(-Ψ)
    pub ln_z: f64,
    /// |value - value at half grid resolution|
    pub refinement_error: f64,
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.filter(|t| *t != f64::NEG_INFINITY).collect();
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn log_partition_on_grid_1d(
    potential_fn: &dyn Fn(f64) -> f64,
    base_density: &dyn Fn(f64) -> f64,
    bounds: (f64, f64),
    n_grid: usize,
) -> Result<f64> {
    let (lo, hi) = bounds;
    let h = (hi - lo) / (n_grid - 1) as f64;
    let weights = simpson_weights(n_grid, h);
    let terms = (0..n_grid).map(|i| {
        let x = lo + i as f64 * h;
        let b = base_density(x);
        if b <= 0.0 {
            f64::NEG_INFINITY
        } else {
            weights[i].ln() + b.ln() - potential_fn(x)
        }
    });
    Ok(log_sum_exp(terms))
}

/// `ln ∫ base·exp(-Ψ)` over a 1D box by Simpson quadrature in log domain.
///
/// Errors when halving the grid moves the result by more than 1e-4, which
/// flags a spike the grid cannot resolve.
pub fn log_partition_1d(
    potential_fn: &dyn Fn(f64) -> f64,
    base_density: &dyn Fn(f64) -> f64,
    bounds: (f64, f64),
    n_grid: usize,
) -> Result<LogPartition> {
    require_odd_grid(n_grid)?;
    if !(bounds.0 < bounds.1) {
        return Err(Error::InvalidArgument("box must satisfy lo < hi".into()));
    }
    let fine = log_partition_on_grid_1d(potential_fn, base_density, bounds, n_grid)?;
    // every other point; odd count is preserved because n_grid is odd
    let coarse_n = n_grid / 2 + 1;
    let coarse = if coarse_n >= 5 && coarse_n % 2 == 1 {
        log_partition_on_grid_1d(potential_fn, base_density, bounds, coarse_n)?
    } else {
        fine
    };
    let refinement_error = (fine - coarse).abs();
    if refinement_error > 1e-4 {
        return Err(Error::NumericalFailure(format!(
            "grid refinement moved ln Z by {refinement_error:.3e}; integrand too spiky for the grid"
        )));
    }
    Ok(LogPartition {
        ln_z: fine,
        refinement_error,
    })
}

/// 2D variant of [`log_partition_1d`] on a product grid.
pub fn log_partition_2d(
    potential_fn: &dyn Fn(f64, f64) -> f64,
    base_density: &dyn Fn(f64, f64) -> f64,
    bounds_x: (f64, f64),
    bounds_y: (f64, f64),
    n_grid: usize,
) -> Result<LogPartition> {
    require_odd_grid(n_grid)?;
    if !(bounds_x.0 < bounds_x.1 && bounds_y.0 < bounds_y.1) {
        return Err(Error::InvalidArgument("box must satisfy lo < hi".into()));
    }
    let eval = |n: usize| -> f64 {
        let hx = (bounds_x.1 - bounds_x.0) / (n - 1) as f64;
        let hy = (bounds_y.1 - bounds_y.0) / (n - 1) as f64;
        let wx = simpson_weights(n, hx);
        let wy = simpson_weights(n, hy);
        let terms = (0..n * n).map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let x = bounds_x.0 + i as f64 * hx;
            let y = bounds_y.0 + j as f64 * hy;
            let b = base_density(x, y);
            if b <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (wx[i] * wy[j]).ln() + b.ln() - potential_fn(x, y)
            }
        });
        log_sum_exp(terms)
    };
    let fine = eval(n_grid);
    let coarse_n = n_grid / 2 + 1;
    let coarse = if coarse_n >= 5 && coarse_n % 2 == 1 {
        eval(coarse_n)
    } else {
        fine
    };
    let refinement_error = (fine - coarse).abs();
    if refinement_error > 1e-4 {
        return Err(Error::NumericalFailure(format!(
            "grid refinement moved ln Z by {refinement_error:.3e}; integrand too spiky for the grid"
        )));
    }
    Ok(LogPartition {
        ln_z: fine,
        refinement_error,
    })
}

/// Writes a grid density as two-column CSV `(x, p(x))`.
pub fn density_to_csv<W: Write>(writer: W, density: &GridDensity) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "p"])
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    for (x, p) in density.xs.iter().zip(&density.pdf) {
        w.write_record([format!("{x}"), format!("{p}")])
            .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
