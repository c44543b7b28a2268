//! Finite-state time-invariant Markov chains: evolution, stationary solving,
//! divergence traces, and numerical verification of the monotonicity and
//! divergence-budget results that back the gap certificates.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::divergence::{divergence, DivergenceKind, FiniteDistribution, GibbsSpec};
use crate::error::{Error, Result};

/// Row sums must hit 1 within this tolerance.
pub const KERNEL_TOL: f64 = 1e-12;
/// Residual tolerance for πK = π.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Row-stochastic transition matrix, `K[i][j] = P(next = j | current = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    m: DMatrix<f64>,
}

impl TransitionKernel {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..m.nrows() {
            let mut row_sum = 0.0;
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "kernel entry ({i},{j}) is {v}"
                    )));
                }
                row_sum += v;
            }
            if (row_sum - 1.0).abs() > KERNEL_TOL * m.ncols() as f64 {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {row_sum}, not 1"
                )));
            }
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("ragged kernel rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// The two-step kernel K².
    pub fn squared(&self) -> Self {
        Self { m: &self.m * &self.m }
    }

    /// One evolution step p ↦ pK.
    pub fn apply(&self, p: &FiniteDistribution) -> Result<FiniteDistribution> {
        if p.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: p.len(),
            });
        }
        let n = self.n();
        let mut next = vec![0.0; n];
        for i in 0..n {
            let pi = p.probs()[i];
            if pi == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += pi * self.m[(i, j)];
            }
        }
        // renormalize away the accumulated rounding so long products of
        // kernels keep passing the distribution invariant
        FiniteDistribution::from_weights(&next)
    }

    fn stationary_residual(&self, pi: &FiniteDistribution) -> Result<f64> {
        let next = self.apply(pi)?;
        Ok(pi
            .probs()
            .iter()
            .zip(next.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Marginals p_0, p_1, …, p_T.
pub fn evolve(
    p0: &FiniteDistribution,
    kernel: &TransitionKernel,
    steps: usize,
) -> Result<Vec<FiniteDistribution>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(p0.clone());
    for _ in 0..steps {
        let next = kernel.apply(out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

/// A stationary distribution plus a uniqueness flag.
#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub pi: FiniteDistribution,
    /// True iff the solution space of πK = π is one-dimensional, detected via
    /// the numerical rank of Kᵀ - I.
    pub unique: bool,
}

/// Solves πK = π, π ≥ 0, Σπ = 1.
///
/// Uniqueness comes from a rank-revealing SVD of Kᵀ - I. The returned
/// representative is assembled from the recurrent classes (each solved exactly
/// with the GTH elimination scheme, which involves no subtractions) mixed so
/// that the Euclidean norm of the result is minimal over all stationary
/// distributions.
pub fn stationary(kernel: &TransitionKernel) -> Result<StationaryResult> {
    let n = kernel.n();
    let mut a = kernel.m.transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    let svd = a.svd(false, false);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * max_sv.max(1.0);
    let null_dim = svd.singular_values.iter().filter(|s| **s < tol).count();
    let unique = null_dim == 1;

    let classes = terminal_classes(kernel);
    if classes.is_empty() {
        return Err(Error::NumericalFailure(
            "no recurrent class found".into(),
        ));
    }
    // Disjoint supports make the squared norm of a mixture separable, so the
    // norm-minimizing weights are proportional to 1/||π_c||².
    let mut per_class: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for class in classes {
        let pi_c = gth_stationary(&kernel.m, &class)?;
        per_class.push((class, pi_c));
    }
    let inv_sq: Vec<f64> = per_class
        .iter()
        .map(|(_, pi)| 1.0 / pi.iter().map(|x| x * x).sum::<f64>())
        .collect();
    let total: f64 = inv_sq.iter().sum();
    let mut pi = vec![0.0; n];
    for ((class, pi_c), w) in per_class.iter().zip(&inv_sq) {
        for (&state, &mass) in class.iter().zip(pi_c) {
            pi[state] = mass * w / total;
        }
    }
    let pi = FiniteDistribution::from_weights(&pi)?;
    let residual = kernel.stationary_residual(&pi)?;
    if residual > STATIONARY_TOL {
        return Err(Error::NumericalFailure(format!(
            "stationary residual {residual:.3e} exceeds {STATIONARY_TOL:.0e}"
        )));
    }
    Ok(StationaryResult { pi, unique })
}

// Strongly connected components with no outgoing edges; these are exactly the
// closed recurrent classes of the chain. Edges below 1e-15 are treated as
// structural zeros.
fn terminal_classes(kernel: &TransitionKernel) -> Vec<Vec<usize>> {
    const EDGE_EPS: f64 = 1e-15;
    let n = kernel.n();
    let edge = |i: usize, j: usize| kernel.m[(i, j)] > EDGE_EPS;

    // Tarjan's algorithm, iterative to keep big chains off the call stack.
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0usize;

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, next neighbor to try)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < n {
                let w = *next;
                *next += 1;
                if !edge(v, w) {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp_of[w] = comps.len();
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }

    let mut terminal = vec![true; comps.len()];
    for i in 0..n {
        for j in 0..n {
            if edge(i, j) && comp_of[i] != comp_of[j] {
                terminal[comp_of[i]] = false;
            }
        }
    }
    comps
        .into_iter()
        .enumerate()
        .filter(|(c, _)| terminal[*c])
        .map(|(_, comp)| comp)
        .collect()
}

// Grassmann-Taksar-Heyman elimination on the restriction of `m` to `states`
// (assumed closed and irreducible). Subtraction-free, hence stable.
fn gth_stationary(m: &DMatrix<f64>, states: &[usize]) -> Result<Vec<f64>> {
    let k = states.len();
    let mut p = vec![vec![0.0; k]; k];
    for (a, &i) in states.iter().enumerate() {
        for (b, &j) in states.iter().enumerate() {
            p[a][b] = m[(i, j)];
        }
    }
    for c in (1..k).rev() {
        let s: f64 = p[c][..c].iter().sum();
        if s <= 0.0 {
            return Err(Error::NumericalFailure(
                "GTH elimination hit a zero pivot; class not irreducible".into(),
            ));
        }
        for r in 0..c {
            p[r][c] /= s;
        }
        for r in 0..c {
            for q in 0..c {
                p[r][q] += p[r][c] * p[c][q];
            }
        }
    }
    let mut pi = vec![0.0; k];
    pi[0] = 1.0;
    for c in 1..k {
        pi[c] = (0..c).map(|r| pi[r] * p[r][c]).sum();
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / total).collect())
}

/// Divergence of each marginal from a fixed reference distribution.
#[derive(Debug, Clone)]
pub struct DivergenceTrace {
    pub kind: DivergenceKind,
    /// `values[t] = D(p_t ‖ reference)`, length T+1.
    pub values: Vec<f64>,
    pub reference: FiniteDistribution,
}

/// Traces `D(p_t ‖ π)` for t = 0..=T. Errors unless `pi` is stationary for
/// `kernel` within `STATIONARY_TOL`.
pub fn divergence_trace(
    p0: &FiniteDistribution,
    kernel: &TransitionKernel,
    pi: &FiniteDistribution,
    kind: DivergenceKind,
    steps: usize,
) -> Result<DivergenceTrace> {
    let residual = kernel.stationary_residual(pi)?;
    if residual > STATIONARY_TOL {
        return Err(Error::InvalidArgument(format!(
            "reference is not stationary: residual {residual:.3e}"
        )));
    }
    let marginals = evolve(p0, kernel, steps)?;
    let values = marginals
        .iter()
        .map(|p| divergence(kind, p, pi, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(DivergenceTrace {
        kind,
        values,
        reference: pi.clone(),
    })
}

/// Largest per-step increase `max_t (values[t+1] - values[t])`; the second
/// law predicts a non-positive result. Infinite entries compare as equal, so
/// an all-infinite prefix contributes 0.
pub fn verify_second_law(trace: &DivergenceTrace) -> f64 {
    trace
        .values
        .windows(2)
        .map(|w| {
            if w[0] == f64::INFINITY && w[1] == f64::INFINITY {
                0.0
            } else {
                w[1] - w[0]
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Slack of the divergence-budget corollary at one time step.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorollarySlack {
    pub t: usize,
    /// `[KL(p_0‖ν) + E_{p_0}Ψ - E_{p_t}Ψ] - KL(p_t‖ν)`; theory predicts ≥ 0.
    pub slack_kl: f64,
    /// `[D∞(p_0‖ν) + max_{supp(p_0)}Ψ] - D∞(p_t‖ν)`; theory predicts ≥ 0.
    pub slack_dinf: f64,
}

/// Checks the budget inequalities along the trajectory of `kernel` started at
/// `p0`, against the Gibbs stationary law `gibbs` with base ν.
///
/// Preconditions: `gibbs.base()` is the ν used in the bound, the Gibbs
/// distribution is stationary for `kernel`, and Ψ ≥ 0.
pub fn corollary_bound_check(
    p0: &FiniteDistribution,
    nu: &FiniteDistribution,
    gibbs: &GibbsSpec,
    kernel: &TransitionKernel,
    steps: usize,
) -> Result<Vec<CorollarySlack>> {
    let base_dev = gibbs.base().tv_distance(nu)?;
    if base_dev > 1e-12 {
        return Err(Error::InvalidArgument(
            "gibbs.base must equal the reference distribution ν".into(),
        ));
    }
    let residual = kernel.stationary_residual(gibbs.distribution())?;
    if residual > STATIONARY_TOL {
        return Err(Error::InvalidArgument(format!(
            "Gibbs distribution is not stationary: residual {residual:.3e}"
        )));
    }
    let psi = gibbs.potential();
    if psi.values().iter().any(|&v| v < -1e-12) {
        return Err(Error::InvalidArgument("potential must be >= 0".into()));
    }

    let kl0 = divergence(DivergenceKind::Kl, p0, nu, None)?;
    let dinf0 = divergence(DivergenceKind::RenyiInf, p0, nu, None)?;
    let mean_psi0 = p0.expectation(psi.values())?;
    let sup_psi0 = psi.esssup(p0)?;

    let marginals = evolve(p0, kernel, steps)?;
    marginals
        .iter()
        .enumerate()
        .map(|(t, pt)| {
            let kl_t = divergence(DivergenceKind::Kl, pt, nu, None)?;
            let dinf_t = divergence(DivergenceKind::RenyiInf, pt, nu, None)?;
            let mean_psi_t = pt.expectation(psi.values())?;
            Ok(CorollarySlack {
                t,
                slack_kl: kl0 + mean_psi0 - mean_psi_t - kl_t,
                slack_dinf: dinf0 + sup_psi0 - dinf_t,
            })
        })
        .collect()
}

/// Joint vs marginal KL for the data-processing inequality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DpiCheck {
    pub kl_joint: f64,
    /// KL between the first-coordinate marginals; theory predicts ≤ kl_joint.
    pub kl_marginal: f64,
}

/// Evaluates `KL(p_X ‖ q_X)` against `KL(p ‖ q)` for joint distributions given
/// as n×m matrices of probabilities.
pub fn verify_dpi(joint_p: &DMatrix<f64>, joint_q: &DMatrix<f64>) -> Result<DpiCheck> {
    if joint_p.shape() != joint_q.shape() {
        return Err(Error::DimensionMismatch {
            expected: joint_p.nrows() * joint_p.ncols(),
            got: joint_q.nrows() * joint_q.ncols(),
        });
    }
    let flat_p = FiniteDistribution::new(joint_p.iter().copied().collect())?;
    let flat_q = FiniteDistribution::new(joint_q.iter().copied().collect())?;
    let kl_joint = divergence(DivergenceKind::Kl, &flat_p, &flat_q, None)?;

    let marginal = |m: &DMatrix<f64>| -> Result<FiniteDistribution> {
        FiniteDistribution::new((0..m.nrows()).map(|i| m.row(i).sum()).collect())
    };
    let kl_marginal = divergence(
        DivergenceKind::Kl,
        &marginal(joint_p)?,
        &marginal(joint_q)?,
        None,
    )?;
    Ok(DpiCheck {
        kl_joint,
        kl_marginal,
    })
}

/// Metropolis kernel with uniform proposals and acceptance `min(1, π_j/π_i)`.
///
/// Detailed balance makes `target` stationary by construction, which is how
/// the tests manufacture chains with a prescribed Gibbs stationary law.
pub fn metropolis_kernel(target: &FiniteDistribution) -> Result<TransitionKernel> {
    let n = target.len();
    if target.support().len() != n {
        return Err(Error::InvalidArgument(
            "Metropolis target must have full support".into(),
        ));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut stay = 1.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let accept = (target.probs()[j] / target.probs()[i]).min(1.0);
            let rate = accept / n as f64;
            m[(i, j)] = rate;
            stay -= rate;
        }
        m[(i, i)] = stay;
    }
    TransitionKernel::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{gibbs_from_potential, PotentialVector};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dist(v: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(v.to_vec()).unwrap()
    }

    fn random_kernel(rng: &mut StdRng, n: usize) -> TransitionKernel {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        TransitionKernel::from_rows(&rows).unwrap()
    }

    fn random_dist(rng: &mut StdRng, n: usize) -> FiniteDistribution {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        FiniteDistribution::from_weights(&w).unwrap()
    }

    #[test]
    fn identity_kernel_freezes_the_chain() {
        let p0 = dist(&[0.2, 0.3, 0.5]);
        let k = TransitionKernel::identity(3);
        for p in evolve(&p0, &k, 5).unwrap() {
            assert_eq!(p.probs(), p0.probs());
        }
    }

    #[test]
    fn doubly_stochastic_kernel_fixes_uniform() {
        let k = TransitionKernel::from_rows(&[
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ])
        .unwrap();
        let p0 = FiniteDistribution::uniform(3);
        for p in evolve(&p0, &k, 10).unwrap() {
            for &x in p.probs() {
                assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_state_swap_cycles_with_period_two() {
        let k = TransitionKernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let seq = evolve(&dist(&[1.0, 0.0]), &k, 2).unwrap();
        assert_eq!(seq[0].probs(), &[1.0, 0.0]);
        assert_eq!(seq[1].probs(), &[0.0, 1.0]);
        assert_eq!(seq[2].probs(), &[1.0, 0.0]);
    }

    #[test]
    fn stationary_of_identity_is_non_unique_min_norm() {
        let res = stationary(&TransitionKernel::identity(2)).unwrap();
        assert!(!res.unique);
        // every distribution is stationary; the min-norm one is uniform
        assert_abs_diff_eq!(res.pi.probs()[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_of_doubly_stochastic_is_uniform() {
        let k = TransitionKernel::from_rows(&[
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ])
        .unwrap();
        let res = stationary(&k).unwrap();
        assert!(res.unique);
        for &x in res.pi.probs() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn stationary_matches_power_iteration_on_random_chains() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let n = 2 + rng.random_range(0..6);
            let k = random_kernel(&mut rng, n);
            let res = stationary(&k).unwrap();
            assert!(res.unique);
            // power-iteration oracle
            let mut p = FiniteDistribution::uniform(n);
            for _ in 0..20_000 {
                p = k.apply(&p).unwrap();
            }
            for (a, b) in res.pi.probs().iter().zip(p.probs()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
            assert!(k.stationary_residual(&res.pi).unwrap() < 1e-10);
        }
    }

    #[test]
    fn stationary_of_reducible_chain_mixes_terminal_classes() {
        // states 0,1 absorb separately; state 2 feeds both
        let k = TransitionKernel::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        let res = stationary(&k).unwrap();
        assert!(!res.unique);
        assert_abs_diff_eq!(res.pi.probs()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(res.pi.probs()[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(res.pi.probs()[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_from_stationary_start_is_zero() {
        let mut rng = StdRng::seed_from_u64(9);
        let k = random_kernel(&mut rng, 4);
        let pi = stationary(&k).unwrap().pi;
        let trace = divergence_trace(&pi, &k, &pi, DivergenceKind::Kl, 20).unwrap();
        for v in trace.values {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn trace_of_identity_kernel_is_constant_and_flat() {
        let k = TransitionKernel::identity(2);
        let p0 = dist(&[0.7, 0.3]);
        let pi = dist(&[0.5, 0.5]);
        let trace = divergence_trace(&p0, &k, &pi, DivergenceKind::Kl, 10).unwrap();
        for w in trace.values.windows(2) {
            assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-14);
        }
        assert!(verify_second_law(&trace).abs() < 1e-14);
    }

    #[test]
    fn two_state_chain_trace_strictly_decreases() {
        let k = TransitionKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = stationary(&k).unwrap().pi;
        let trace =
            divergence_trace(&dist(&[1.0, 0.0]), &k, &pi, DivergenceKind::Kl, 50).unwrap();
        for w in trace.values.windows(2) {
            assert!(w[1] < w[0], "KL trace must strictly decrease here");
        }
        assert!(verify_second_law(&trace) <= 0.0);
    }

    #[test]
    fn divergence_trace_rejects_non_stationary_reference() {
        let k = TransitionKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let bogus = dist(&[0.5, 0.5]);
        assert!(divergence_trace(&bogus, &k, &bogus, DivergenceKind::Kl, 5).is_err());
    }

    #[test]
    fn second_law_sweep_over_random_chains() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let n = 2 + rng.random_range(0..19);
            let k = random_kernel(&mut rng, n);
            let pi = stationary(&k).unwrap().pi;
            let p0 = random_dist(&mut rng, n);
            for kind in [DivergenceKind::Kl, DivergenceKind::RenyiInf] {
                let trace = divergence_trace(&p0, &k, &pi, kind, 60).unwrap();
                assert!(
                    verify_second_law(&trace) <= 1e-12,
                    "second law violated for {kind:?}"
                );
            }
        }
    }

    #[test]
    fn time_grouping_consistency() {
        // even steps of the chain equal the squared-kernel chain
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let n = 2 + rng.random_range(0..8);
            let k = random_kernel(&mut rng, n);
            let p0 = random_dist(&mut rng, n);
            let fine = evolve(&p0, &k, 20).unwrap();
            let coarse = evolve(&p0, &k.squared(), 10).unwrap();
            for t in 0..=10 {
                for (a, b) in fine[2 * t].probs().iter().zip(coarse[t].probs()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn chain_rule_decomposition_holds() {
        // KL(p_t‖ν) = KL(p_t‖π) + KL_{p_t}(π‖ν) for full-support instances
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..50 {
            let n = 2 + rng.random_range(0..10);
            let k = random_kernel(&mut rng, n);
            let pi = stationary(&k).unwrap().pi;
            let nu = random_dist(&mut rng, n);
            let p0 = random_dist(&mut rng, n);
            for pt in evolve(&p0, &k, 5).unwrap() {
                let lhs = divergence(DivergenceKind::Kl, &pt, &nu, None).unwrap();
                let rhs = divergence(DivergenceKind::Kl, &pt, &pi, None).unwrap()
                    + divergence(DivergenceKind::Kl, &pi, &nu, Some(&pt)).unwrap();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn metropolis_kernel_targets_prescribed_law() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..20 {
            let n = 2 + rng.random_range(0..10);
            let target = random_dist(&mut rng, n);
            let k = metropolis_kernel(&target).unwrap();
            assert!(k.stationary_residual(&target).unwrap() < 1e-12);
        }
    }

    #[test]
    fn corollary_slack_reduces_to_second_law_for_zero_potential() {
        let mut rng = StdRng::seed_from_u64(43);
        let nu = random_dist(&mut rng, 5);
        let k = metropolis_kernel(&nu).unwrap();
        let gibbs = gibbs_from_potential(&nu, &PotentialVector::zeros(5)).unwrap();
        let p0 = random_dist(&mut rng, 5);
        let kl0 = divergence(DivergenceKind::Kl, &p0, &nu, None).unwrap();
        for s in corollary_bound_check(&p0, &nu, &gibbs, &k, 30).unwrap() {
            assert!(s.slack_kl >= -1e-10);
            assert!(s.slack_dinf >= -1e-10);
            assert!(s.slack_kl <= kl0 + 1e-10);
        }
    }

    #[test]
    fn corollary_slack_constant_when_started_at_stationarity() {
        let mut rng = StdRng::seed_from_u64(47);
        let nu = random_dist(&mut rng, 4);
        let psi =
            PotentialVector::new((0..4).map(|_| rng.random::<f64>() * 2.0).collect()).unwrap();
        let gibbs = gibbs_from_potential(&nu, &psi).unwrap();
        let k = metropolis_kernel(gibbs.distribution()).unwrap();
        let slacks =
            corollary_bound_check(gibbs.distribution(), &nu, &gibbs, &k, 10).unwrap();
        for w in slacks.windows(2) {
            assert_abs_diff_eq!(w[0].slack_kl, w[1].slack_kl, epsilon = 1e-10);
            assert_abs_diff_eq!(w[0].slack_dinf, w[1].slack_dinf, epsilon = 1e-10);
            assert!(w[0].slack_kl >= -1e-10);
            assert!(w[0].slack_dinf >= -1e-10);
        }
    }

    #[test]
    fn dpi_equal_joints_give_zero() {
        let j = DMatrix::from_row_slice(2, 2, &[0.25; 4]);
        let res = verify_dpi(&j, &j).unwrap();
        assert_eq!(res.kl_joint, 0.0);
        assert_eq!(res.kl_marginal, 0.0);
    }

    #[test]
    fn dpi_product_joints_with_shared_factor_are_tight() {
        let px = [0.3, 0.7];
        let qx = [0.6, 0.4];
        let py = [0.2, 0.5, 0.3];
        let build = |mx: &[f64]| {
            DMatrix::from_fn(2, 3, |i, j| mx[i] * py[j])
        };
        let res = verify_dpi(&build(&px), &build(&qx)).unwrap();
        assert_abs_diff_eq!(res.kl_joint, res.kl_marginal, epsilon = 1e-12);
    }

    #[test]
    fn dpi_sweep_over_random_joints() {
        let mut rng = StdRng::seed_from_u64(53);
        for _ in 0..200 {
            let n = 2 + rng.random_range(0..9);
            let m = 2 + rng.random_range(0..9);
            let mut draw = || {
                let w: Vec<f64> = (0..n * m).map(|_| rng.random::<f64>() + 1e-3).collect();
                let s: f64 = w.iter().sum();
                DMatrix::from_row_slice(n, m, &w.iter().map(|x| x / s).collect::<Vec<_>>())
            };
            let (jp, jq) = (draw(), draw());
            let res = verify_dpi(&jp, &jq).unwrap();
            assert!(res.kl_marginal <= res.kl_joint + 1e-12);
        }
    }
}
