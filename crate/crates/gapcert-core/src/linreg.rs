//! Ridge regression trained by Langevin dynamics: the stationary law is an
//! explicit Gaussian, so expected training and population losses have closed
//! forms that the Monte-Carlo and SDE oracles here cross-validate.
//!
//! Setup: `y = Xθ* + ε` with `‖θ*‖ = 1`, `ε ~ N(0, σ²I)`, empirical
//! covariance `A = XᵀX/N ≻ 0` (overdetermined, N > d), regularization λ,
//! inverse temperature β, and `α = λ/β`. The stationary distribution is
//! `N(θ̄, Σ)` with `θ̄ = (A+αI)⁻¹Xᵀy/N` and `Σ = (1/β)(A+αI)⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::langevin::{
    simulate_ensemble, Diffusion, Domain, IntegratorConfig, LangevinSystem,
};

/// A ridge problem instance with its spectral decomposition cached.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta_star: DVector<f64>,
    /// Label noise standard deviation σ ≥ 0.
    pub sigma: f64,
    /// Regularization λ > 0.
    pub lambda: f64,
    /// Inverse temperature β > 0 (`f64::INFINITY` = noiseless training).
    pub beta: f64,
    // spectral cache of A = XᵀX/N
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    theta_ls: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        theta_star: DVector<f64>,
        sigma: f64,
        lambda: f64,
        beta: f64,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if n <= d {
            return Err(Error::InvalidArgument(format!(
                "overdetermined case required: N={n} must exceed d={d}"
            )));
        }
        if y.len() != n || theta_star.len() != d {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if (theta_star.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "teacher must have unit norm, got {}",
                theta_star.norm()
            )));
        }
        if !(sigma >= 0.0) || !(lambda > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidArgument(
                "need sigma >= 0, lambda > 0, beta > 0".into(),
            ));
        }
        let a = x.transpose() * &x / n as f64;
        let eig = a.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::NumericalFailure(
                "empirical covariance is singular".into(),
            ));
        }
        // θ_LS = A⁻¹ Xᵀy/N in the eigenbasis
        let xty = x.transpose() * &y / n as f64;
        let proj = eig.eigenvectors.transpose() * &xty;
        let solved = DVector::from_fn(d, |i, _| proj[i] / eig.eigenvalues[i]);
        let theta_ls = &eig.eigenvectors * solved;
        Ok(Self {
            x,
            y,
            theta_star,
            sigma,
            lambda,
            beta,
            eigvecs: eig.eigenvectors,
            eigvals: eig.eigenvalues,
            theta_ls,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// α = λ/β.
    pub fn alpha(&self) -> f64 {
        if self.beta.is_infinite() {
            0.0
        } else {
            self.lambda / self.beta
        }
    }

    /// A = XᵀX/N.
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        &self.eigvecs
            * DMatrix::from_diagonal(&self.eigvals)
            * self.eigvecs.transpose()
    }

    pub fn theta_ls(&self) -> &DVector<f64> {
        &self.theta_ls
    }

    /// Training loss `(1/2N)‖Xθ - y‖²`.
    pub fn train_loss(&self, theta: &DVector<f64>) -> f64 {
        let r = &self.x * theta - &self.y;
        r.norm_squared() / (2.0 * self.n() as f64)
    }

    /// Population loss `½‖θ - θ*‖² + σ²/2`.
    pub fn population_loss(&self, theta: &DVector<f64>) -> f64 {
        (theta - &self.theta_star).norm_squared() / 2.0 + self.sigma * self.sigma / 2.0
    }

    // teacher coordinates in the eigenbasis
    fn teacher_coords(&self) -> DVector<f64> {
        self.eigvecs.transpose() * &self.theta_star
    }

    // empirical irreducible error C_S = L_S(θ_LS)
    fn residual_floor(&self) -> f64 {
        self.train_loss(&self.theta_ls)
    }
}

/// Draws a problem: X has i.i.d. standard normal entries, θ* is uniform on
/// the unit sphere, and `y = Xθ* + ε`. Requires `N > d + 3` so the Wishart
/// moments used downstream exist.
pub fn generate_problem(
    n: usize,
    d: usize,
    sigma: f64,
    lambda: f64,
    beta: f64,
    seed: u64,
) -> Result<RegressionProblem> {
    if n <= d + 3 {
        return Err(Error::InvalidArgument(format!(
            "need N > d + 3, got N={n}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let mut theta_star = DVector::from_fn(d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    theta_star /= theta_star.norm();
    let eps = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    });
    let y = &x * &theta_star + eps;
    RegressionProblem::new(x, y, theta_star, sigma, lambda, beta)
}

/// Mean and covariance of the stationary Gaussian.
#[derive(Debug, Clone)]
pub struct StationaryGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `θ̄ = (A+αI)⁻¹Xᵀy/N`, `Σ = (1/β)(A+αI)⁻¹`.
pub fn posterior_gaussian(problem: &RegressionProblem) -> Result<StationaryGaussian> {
    let alpha = problem.alpha();
    let d = problem.d();
    let xty = problem.x.transpose() * &problem.y / problem.n() as f64;
    let proj = problem.eigvecs.transpose() * xty;
    let mean_coords = DVector::from_fn(d, |i, _| proj[i] / (problem.eigvals[i] + alpha));
    let mean = &problem.eigvecs * mean_coords;
    let cov_diag = DVector::from_fn(d, |i, _| {
        if problem.beta.is_infinite() {
            0.0
        } else {
            1.0 / (problem.beta * (problem.eigvals[i] + alpha))
        }
    });
    let cov = &problem.eigvecs * DMatrix::from_diagonal(&cov_diag) * problem.eigvecs.transpose();
    Ok(StationaryGaussian { mean, cov })
}

/// An expected train / population loss pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossPair {
    pub train: f64,
    pub pop: f64,
}

/// Expected losses at stationarity, conditioned on the design X (the label
/// noise and the stationary draw are both averaged out):
///
/// ```text
/// train = (1/2β)·tr(A(A+αI)⁻¹) + (α²/2)·θ*ᵀ(A+αI)⁻²Aθ*
///       + (σ²α²/2N)·tr((A+αI)⁻²) + (σ²/2)(1 - d/N)
/// pop   = (1/2β)·tr((A+αI)⁻¹) + ½·θ*ᵀA²(A+αI)⁻²θ*
///       + (σ²/2N)·tr(A(A+αI)⁻²) - θ*ᵀA(A+αI)⁻¹θ* + ½‖θ*‖² + σ²/2
/// ```
pub fn closed_form_losses(problem: &RegressionProblem) -> Result<LossPair> {
    let alpha = problem.alpha();
    let inv_beta = if problem.beta.is_infinite() {
        0.0
    } else {
        1.0 / problem.beta
    };
    let (nf, df) = (problem.n() as f64, problem.d() as f64);
    let s2 = problem.sigma * problem.sigma;
    let u = problem.teacher_coords();

    let mut train = s2 / 2.0 * (1.0 - df / nf);
    let mut pop = problem.theta_star.norm_squared() / 2.0 + s2 / 2.0;
    for i in 0..problem.d() {
        let l = problem.eigvals[i];
        let la = l + alpha;
        train += inv_beta / 2.0 * (l / la)
            + alpha * alpha / 2.0 * u[i] * u[i] * l / (la * la)
            + s2 * alpha * alpha / (2.0 * nf * la * la);
        pop += inv_beta / 2.0 / la + 0.5 * u[i] * u[i] * l * l / (la * la)
            + s2 / (2.0 * nf) * l / (la * la)
            - u[i] * u[i] * l / la;
    }
    Ok(LossPair { train, pop })
}

/// Monte-Carlo estimates with standard errors.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct McLosses {
    pub train: f64,
    pub pop: f64,
    pub se_train: f64,
    pub se_pop: f64,
}

/// Monte-Carlo oracle for [`closed_form_losses`].
///
/// Each draw resamples the label noise (in its exact d-dimensional reduction:
/// `Xᵀε/N ~ N(0, σ²A/N)` and an independent `χ²_{N-d}` residual floor) and
/// then a stationary sample `θ ~ N(θ̄(ε), Σ)` via the symmetric factorization,
/// so the estimator is unbiased for the same conditioned-on-X expectations the
/// closed forms compute. With σ = 0 this reduces to sampling `θ ~ N(θ̄, Σ)`
/// for the problem's own labels.
pub fn mc_losses(problem: &RegressionProblem, n_samples: usize, seed: u64) -> Result<McLosses> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(
            "need at least two Monte-Carlo samples".into(),
        ));
    }
    let d = problem.d();
    let (nf, df) = (problem.n() as f64, problem.d() as f64);
    let alpha = problem.alpha();
    let s = problem.sigma;
    let u = problem.teacher_coords();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi2 = if s > 0.0 {
        Some(ChiSquared::new(nf - df).map_err(|e| Error::NumericalFailure(e.to_string()))?)
    } else {
        None
    };

    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    for _ in 0..n_samples {
        let mut train_s = match &chi2 {
            Some(c) => s * s / (2.0 * nf) * c.sample(&mut rng),
            None => problem.residual_floor(),
        };
        let mut pop_s = s * s / 2.0;
        for i in 0..d {
            let l = problem.eigvals[i];
            let la = l + alpha;
            let g = if s > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                s / nf.sqrt() * l.sqrt() * z
            } else {
                0.0
            };
            // σ=0 keeps the problem's own least-squares point; σ>0 uses the
            // resampled noise reduction g = (Xᵀε/N) in eigen coordinates
            let w_ls = if s > 0.0 {
                u[i] + g / l
            } else {
                self_coords(problem, i)
            };
            let w_bar = if s > 0.0 {
                (l * u[i] + g) / la
            } else {
                l * w_ls / la
            };
            let noise = if problem.beta.is_infinite() {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / (problem.beta * la).sqrt()
            };
            let w = w_bar + noise;
            train_s += 0.5 * l * (w - w_ls) * (w - w_ls);
            pop_s += 0.5 * (w - u[i]) * (w - u[i]);
        }
        sum[0] += train_s;
        sum[1] += pop_s;
        sum_sq[0] += train_s * train_s;
        sum_sq[1] += pop_s * pop_s;
    }
    let m = n_samples as f64;
    let mean = [sum[0] / m, sum[1] / m];
    let se = |k: usize| ((sum_sq[k] / m - mean[k] * mean[k]).max(0.0) / (m - 1.0)).sqrt();
    Ok(McLosses {
        train: mean[0],
        pop: mean[1],
        se_train: se(0),
        se_pop: se(1),
    })
}

// least-squares point in eigen coordinates
fn self_coords(problem: &RegressionProblem, i: usize) -> f64 {
    (problem.eigvecs.column(i).transpose() * &problem.theta_ls)[(0, 0)]
}

/// Large-sample approximations in the `d ≪ β ≪ N` regime:
///
/// ```text
/// train ≈ (d/2)·(1/β + σ²(1/d - 1/N))
/// pop   ≈ ½·(1/β + σ²(N-1)/(Nd)) · Nd/(N-d-1)
/// ```
pub fn asymptotic_losses(d: usize, beta: f64, sigma: f64, n: usize) -> Result<LossPair> {
    if n <= d + 3 {
        return Err(Error::InvalidArgument(format!(
            "need N > d + 3, got N={n}, d={d}"
        )));
    }
    let (nf, df) = (n as f64, d as f64);
    let inv_beta = if beta.is_infinite() { 0.0 } else { 1.0 / beta };
    let s2 = sigma * sigma;
    Ok(LossPair {
        train: df / 2.0 * (inv_beta + s2 * (1.0 / df - 1.0 / nf)),
        pop: 0.5 * (inv_beta + s2 * (nf - 1.0) / (nf * df)) * nf * df / (nf - df - 1.0),
    })
}

/// Runs the linear SDE with the problem's quadratic loss through the Langevin
/// integrator and averages the losses over the post-burn-in ensemble.
///
/// The drift is `-A(θ - θ_LS) - (λ/β)θ`; stability requires
/// `dt·(λ_max(A) + α) < 2`, checked up front. Burn-in is the first half of
/// `total_time`.
pub fn sde_oracle_losses(
    problem: &RegressionProblem,
    dt: f64,
    total_time: f64,
    n_traj: usize,
    seed: u64,
) -> Result<LossPair> {
    if !(dt > 0.0 && total_time > dt) {
        return Err(Error::InvalidArgument(
            "need dt > 0 and total_time > dt".into(),
        ));
    }
    let lambda_max = problem.eigvals.max();
    if dt * (lambda_max + problem.alpha()) >= 2.0 {
        return Err(Error::NumericalFailure(format!(
            "unstable step: dt·(λ_max + α) = {} must stay below 2",
            dt * (lambda_max + problem.alpha())
        )));
    }
    let a = self_adjoint(problem);
    let theta_ls = problem.theta_ls.clone();
    let d = problem.d();
    let floor = problem.residual_floor();
    let a_grad = a.clone();
    let ls_grad = theta_ls.clone();
    let system = LangevinSystem {
        loss: Box::new(move |t: &[f64]| {
            let v = DVector::from_column_slice(t) - &theta_ls;
            0.5 * (&a * &v).dot(&v) + floor
        }),
        grad: Box::new(move |t: &[f64]| {
            let v = DVector::from_column_slice(t) - &ls_grad;
            (&a_grad * v).as_slice().to_vec()
        }),
        beta: problem.beta,
        lambda: vec![problem.lambda; d],
        domain: Domain::Unbounded,
        diffusion: Diffusion::Unit,
    };
    let steps = (total_time / dt).round() as u64;
    let cfg = IntegratorConfig {
        dt,
        steps,
        n_traj,
        burn_in: steps / 2,
        thin: 10.min(steps / 2).max(1),
        seed,
    };
    let prior_std = (1.0 / problem.lambda).sqrt();
    let init = move |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                prior_std * z
            })
            .collect()
    };
    let samples = simulate_ensemble(&system, &init, &cfg)?;
    if samples.rows == 0 {
        return Err(Error::InvalidArgument(
            "no kept draws; increase total_time".into(),
        ));
    }
    let mut train = 0.0;
    let mut pop = 0.0;
    for r in 0..samples.rows {
        let theta = DVector::from_column_slice(samples.row(r));
        train += problem.train_loss(&theta);
        pop += problem.population_loss(&theta);
    }
    Ok(LossPair {
        train: train / samples.rows as f64,
        pop: pop / samples.rows as f64,
    })
}

fn self_adjoint(problem: &RegressionProblem) -> DMatrix<f64> {
    problem.empirical_covariance()
}

/// Sampled estimate of `E_{p_0} L_S` under the Gaussian initialization
/// `p_0 = N(0, λ⁻¹I)` that matches the regularizer.
pub fn estimate_init_loss_gaussian(
    problem: &RegressionProblem,
    n_draws: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (1.0 / problem.lambda).sqrt();
    let mut acc = 0.0;
    for _ in 0..n_draws.max(1) {
        let theta = DVector::from_fn(problem.d(), |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        });
        acc += problem.train_loss(&theta);
    }
    acc / n_draws.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_problem_interpolates() {
        let p = generate_problem(80, 6, 0.0, 6.0, 50.0, 3).unwrap();
        for (a, b) in p.theta_ls().iter().zip(p.theta_star.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate_problem(50, 4, 0.3, 4.0, 10.0, 42).unwrap();
        let b = generate_problem(50, 4, 0.3, 4.0, 10.0, 42).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        let c = generate_problem(50, 4, 0.3, 4.0, 10.0, 43).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn column_means_concentrate() {
        let p = generate_problem(4000, 8, 0.0, 8.0, 100.0, 11).unwrap();
        let bound = 5.0 / (4000.0f64).sqrt();
        for j in 0..8 {
            let mean = p.x.column(j).mean();
            assert!(mean.abs() <= bound, "column {j} mean {mean}");
        }
    }

    #[test]
    fn generation_rejects_small_n() {
        assert!(generate_problem(9, 6, 0.1, 6.0, 10.0, 1).is_err());
    }

    #[test]
    fn posterior_mean_is_least_squares_at_tiny_alpha() {
        // λ→0 side of the ridge-to-OLS limit, keeping λ > 0 valid
        let p = generate_problem(60, 5, 0.2, 1e-12, 100.0, 5).unwrap();
        let g = posterior_gaussian(&p).unwrap();
        for (a, b) in g.mean.iter().zip(p.theta_ls().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn scalar_posterior_matches_hand_arithmetic() {
        // X = 1-vector of length 4 gives A = (1); α = 1, β = 2 → Σ = 1/4
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_element(4, 0.5);
        let theta_star = DVector::from_element(1, 1.0);
        let p = RegressionProblem::new(x, y, theta_star, 0.1, 2.0, 2.0).unwrap();
        assert_abs_diff_eq!(p.alpha(), 1.0, epsilon = 1e-15);
        let g = posterior_gaussian(&p).unwrap();
        assert_abs_diff_eq!(g.cov[(0, 0)], 0.25, epsilon = 1e-12);
        // mean = (A+αI)⁻¹·Xᵀy/N = 0.5/2
        assert_abs_diff_eq!(g.mean[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn posterior_covariance_bounded_by_prior_scale() {
        let p = generate_problem(100, 7, 0.4, 7.0, 30.0, 9).unwrap();
        let g = posterior_gaussian(&p).unwrap();
        let bound = 1.0 / (p.beta * p.alpha());
        let eig = g.cov.symmetric_eigen();
        for l in eig.eigenvalues.iter() {
            assert!(*l <= bound + 1e-12);
        }
    }

    #[test]
    fn closed_form_collapses_when_noiseless_and_unregularized() {
        // σ=0, α→0: train = d/(2β), pop = (1/2β)·tr(A⁻¹)
        let p = generate_problem(120, 6, 0.0, 1e-13, 40.0, 7).unwrap();
        let lp = closed_form_losses(&p).unwrap();
        assert_abs_diff_eq!(lp.train, 6.0 / 80.0, epsilon = 1e-9);
        let tr_inv: f64 = (0..6).map(|i| 1.0 / p.eigvals[i]).sum();
        assert_abs_diff_eq!(lp.pop, tr_inv / 80.0, epsilon = 1e-9);
    }

    #[test]
    fn closed_form_vanishes_in_deterministic_noiseless_limit() {
        let p = generate_problem(120, 6, 0.0, 1e-13, f64::INFINITY, 7).unwrap();
        let lp = closed_form_losses(&p).unwrap();
        assert_abs_diff_eq!(lp.train, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.pop, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn closed_form_agrees_with_mc_on_reference_instance() {
        let p = generate_problem(200, 10, 0.5, 10.0, 100.0, 7).unwrap();
        let cf = closed_form_losses(&p).unwrap();
        let mc = mc_losses(&p, 100_000, 123).unwrap();
        assert!(
            (cf.train - mc.train).abs() <= 3.0 * mc.se_train,
            "train: closed {} vs mc {} ± {}",
            cf.train,
            mc.train,
            mc.se_train
        );
        assert!(
            (cf.pop - mc.pop).abs() <= 3.0 * mc.se_pop,
            "pop: closed {} vs mc {} ± {}",
            cf.pop,
            mc.pop,
            mc.se_pop
        );
    }

    #[test]
    fn mc_reduces_to_plugin_when_posterior_degenerates() {
        // σ = 0 and huge β: every draw sits at θ̄
        let p = generate_problem(60, 4, 0.0, 4.0, 1e12, 13).unwrap();
        let g = posterior_gaussian(&p).unwrap();
        let mc = mc_losses(&p, 100, 7).unwrap();
        assert_abs_diff_eq!(mc.train, p.train_loss(&g.mean), epsilon = 1e-8);
        assert_abs_diff_eq!(mc.pop, p.population_loss(&g.mean), epsilon = 1e-8);
    }

    #[test]
    fn mc_standard_error_shrinks_at_root_n_rate() {
        let p = generate_problem(100, 5, 0.5, 5.0, 50.0, 17).unwrap();
        let small = mc_losses(&p, 20_000, 3).unwrap();
        let large = mc_losses(&p, 80_000, 3).unwrap();
        let ratio = small.se_pop / large.se_pop;
        assert!((ratio - 2.0).abs() < 0.4, "se ratio {ratio} not near 2");
        let ratio_t = small.se_train / large.se_train;
        assert!((ratio_t - 2.0).abs() < 0.4, "train se ratio {ratio_t}");
    }

    #[test]
    fn asymptotic_hand_example() {
        let lp = asymptotic_losses(20, 2000.0, 1.0, 20_000).unwrap();
        let expected_train = 10.0 * (5e-4 + (0.05 - 5e-5));
        assert_abs_diff_eq!(lp.train, expected_train, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.train, 0.50450, epsilon = 1e-9);
        let expected_pop =
            0.5 * (5e-4 + (19_999.0 / (20_000.0 * 20.0))) * 400_000.0 / 19_979.0;
        assert_abs_diff_eq!(lp.pop, expected_pop, epsilon = 1e-12);
    }

    #[test]
    fn asymptotic_zero_noise_infinite_beta() {
        let lp = asymptotic_losses(10, f64::INFINITY, 0.0, 1000).unwrap();
        assert_eq!(lp.train, 0.0);
        assert_eq!(lp.pop, 0.0);
    }

    #[test]
    fn asymptotic_pop_dominates_train_in_regime() {
        for d in [5usize, 10, 20] {
            for beta in [200.0, 1000.0, 4000.0] {
                let lp = asymptotic_losses(d, beta, 1.0, 50_000).unwrap();
                assert!(lp.pop >= lp.train, "d={d}, beta={beta}");
            }
        }
    }

    #[test]
    fn sde_matches_scalar_ou_moments() {
        // crafted problem with A = I so the stationary covariance is
        // (1/β)(1+α)⁻¹ per coordinate
        let d = 3;
        let n = 12;
        // n/d entries of √d per column give XᵀX/N = I
        let mut x = DMatrix::zeros(n, d);
        let scale = (d as f64).sqrt();
        for i in 0..n {
            x[(i, i % d)] = scale;
        }
        let y = DVector::zeros(n);
        let mut theta_star = DVector::zeros(d);
        theta_star[0] = 1.0;
        let (lambda, beta) = (1.5, 6.0);
        let p = RegressionProblem::new(x, y, theta_star, 0.0, lambda, beta).unwrap();
        assert_abs_diff_eq!(p.empirical_covariance()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta_ls()[0], 0.0, epsilon = 1e-12);

        let alpha = lambda / beta;
        let expected_var = 1.0 / (beta * (1.0 + alpha));
        let system_var = {
            let cfg = IntegratorConfig {
                dt: 5e-3,
                steps: 60_000,
                n_traj: 16,
                burn_in: 10_000,
                thin: 5,
                seed: 21,
            };
            let a = p.empirical_covariance();
            let ls = p.theta_ls().clone();
            let sys = LangevinSystem {
                loss: Box::new(move |_| 0.0),
                grad: Box::new(move |t: &[f64]| {
                    let v = DVector::from_column_slice(t) - &ls;
                    (&a * v).as_slice().to_vec()
                }),
                beta,
                lambda: vec![lambda; d],
                domain: Domain::Unbounded,
                diffusion: Diffusion::Unit,
            };
            let samples = simulate_ensemble(&sys, &|_rng| vec![0.0; 3], &cfg).unwrap();
            let mut acc = 0.0;
            for r in 0..samples.rows {
                for &v in samples.row(r) {
                    acc += v * v;
                }
            }
            acc / (samples.rows * d) as f64
        };
        assert!(
            (system_var - expected_var).abs() / expected_var < 0.03,
            "empirical {system_var} vs {expected_var}"
        );
    }

    #[test]
    fn sde_deterministic_limit_converges_to_posterior_mean() {
        let p = generate_problem(40, 3, 0.3, 3.0, f64::INFINITY, 29).unwrap();
        // β=∞ turns the SDE into a linear ODE toward θ_LS (decay term off)
        let lp = sde_oracle_losses(&p, 1e-2, 200.0, 1, 5).unwrap();
        let at_ls = p.train_loss(p.theta_ls());
        assert_abs_diff_eq!(lp.train, at_ls, epsilon = 1e-6);
    }

    #[test]
    fn sde_rejects_unstable_step() {
        let p = generate_problem(50, 4, 0.1, 4.0, 20.0, 31).unwrap();
        assert!(sde_oracle_losses(&p, 10.0, 100.0, 2, 1).is_err());
    }

    #[test]
    fn init_loss_estimate_tracks_expected_value() {
        let p = generate_problem(400, 8, 0.5, 8.0, 200.0, 37).unwrap();
        // E L_S(θ0) = tr(A)/(2λ) + ‖y‖²/(2N) for θ0 ~ N(0, λ⁻¹I) minus the
        // cross term which vanishes in expectation
        let tr_a: f64 = (0..8).map(|i| p.eigvals[i]).sum();
        let expected = tr_a / (2.0 * p.lambda) + p.y.norm_squared() / (2.0 * 400.0);
        let est = estimate_init_loss_gaussian(&p, 20_000, 3);
        assert!(
            (est - expected).abs() / expected < 0.05,
            "estimate {est} vs {expected}"
        );
    }
}
