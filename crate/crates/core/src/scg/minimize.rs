//! Scaled conjugate gradient minimization (Møller's algorithm).
//!
//! A full-batch quasi-second-order method: conjugate search directions with a
//! Polak–Ribière-style beta, curvature along each direction estimated by a
//! one-sided gradient difference (no Hessian), and Levenberg–Marquardt
//! damping `lambda` that grows when the local quadratic model fits poorly and
//! shrinks when it fits well. No line search, no tuning constants beyond the
//! four in [`ScgOptions`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters for [`scg_minimize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScgOptions {
    /// Relative step for the one-sided curvature estimate.
    pub sigma0: f64,
    /// Initial Levenberg–Marquardt damping.
    pub lambda0: f64,
    /// Iteration budget.
    pub max_iters: usize,
    /// Terminate once the gradient L2 norm falls to this level.
    pub grad_tol: f64,
}

impl Default for ScgOptions {
    fn default() -> Self {
        ScgOptions {
            sigma0: 1e-4,
            lambda0: 1e-6,
            max_iters: 500,
            grad_tol: 1e-8,
        }
    }
}

/// One optimizer iteration as recorded: the state *entering* the iteration
/// and whether the trial step was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ScgStep {
    pub objective: f64,
    pub grad_norm: f64,
    pub lambda: f64,
    pub accepted: bool,
}

/// Full run diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScgTrace {
    pub steps: Vec<ScgStep>,
    /// Total objective evaluations (each costs one forward+backward pass).
    pub evaluations: usize,
    /// True when the gradient-norm tolerance was reached.
    pub converged: bool,
}

impl ScgTrace {
    /// Writes the trace as CSV with columns
    /// `iter,objective,grad_norm,lambda,accepted`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::from("iter,objective,grad_norm,lambda,accepted\n");
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i, s.objective, s.grad_norm, s.lambda, s.accepted
            )
            .expect("writing to a String cannot fail");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// A failed run: the underlying error plus everything recorded before the
/// failure, so callers can see how far the run got.
#[derive(Debug)]
pub struct ScgFailure {
    pub error: Error,
    pub trace: ScgTrace,
}

impl fmt::Display for ScgFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "minimization failed after {} iterations: {}",
            self.trace.steps.len(),
            self.error
        )
    }
}

impl std::error::Error for ScgFailure {}

impl From<ScgFailure> for Error {
    fn from(f: ScgFailure) -> Error {
        Error::Numeric(f.to_string())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Damping above this is treated as a stall: the quadratic model has been
/// rejected so many times that trial steps have shrunk to nothing.
const LAMBDA_MAX: f64 = 1e280;

/// Minimizes `f` starting from `w0`.
///
/// `f` must behave as a pure function returning the objective value and its
/// gradient; the optimizer re-evaluates it at trial points. Returns the best
/// weights seen (by objective value) together with the iteration trace.
/// Stops at the gradient tolerance, the iteration budget, or a damping stall
/// — whichever comes first; only non-finite numbers are an error.
pub fn scg_minimize<F>(
    mut f: F,
    w0: &[f64],
    opts: &ScgOptions,
) -> std::result::Result<(Vec<f64>, ScgTrace), ScgFailure>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut trace = ScgTrace::default();
    let fail = |error: Error, trace: ScgTrace| ScgFailure { error, trace };

    if !(opts.sigma0.is_finite() && opts.sigma0 > 0.0) {
        return Err(fail(
            Error::Argument(format!("sigma0 must be positive, got {}", opts.sigma0)),
            trace,
        ));
    }
    if !(opts.lambda0.is_finite() && opts.lambda0 > 0.0) {
        return Err(fail(
            Error::Argument(format!("lambda0 must be positive, got {}", opts.lambda0)),
            trace,
        ));
    }
    if !(opts.grad_tol.is_finite() && opts.grad_tol >= 0.0) {
        return Err(fail(
            Error::Argument(format!("grad_tol must be non-negative, got {}", opts.grad_tol)),
            trace,
        ));
    }
    if let Some(i) = w0.iter().position(|v| !v.is_finite()) {
        return Err(fail(
            Error::Numeric(format!("non-finite start weight at index {i}")),
            trace,
        ));
    }

    let n = w0.len();
    let mut w = w0.to_vec();
    if n == 0 {
        trace.converged = true;
        return Ok((w, trace));
    }

    // Evaluates f and screens the result for non-finite numbers.
    let mut eval = |w: &[f64], trace: &mut ScgTrace| -> std::result::Result<(f64, Vec<f64>), Error> {
        let (value, grad) = f(w)?;
        trace.evaluations += 1;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("objective became {value}")));
        }
        if grad.len() != n {
            return Err(Error::Shape(format!(
                "gradient length {} for {} weights",
                grad.len(),
                n
            )));
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at index {i}")));
        }
        Ok((value, grad))
    };

    let (mut f_now, mut grad_now) = match eval(&w, &mut trace) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, trace)),
    };
    let mut r: Vec<f64> = grad_now.iter().map(|g| -g).collect();
    let mut r_norm = norm(&r);
    let mut p = r.clone();

    let mut best_w = w.clone();
    let mut best_f = f_now;
    let mut lambda = opts.lambda0;
    let mut success = true;
    // Raw curvature of the current direction, refreshed after each accepted
    // step (a rejected step keeps the direction, so the estimate is reusable).
    let mut theta = 0.0;

    if r_norm <= opts.grad_tol {
        trace.converged = true;
        return Ok((w, trace));
    }

    for k in 1..=opts.max_iters {
        let p_sq = dot(&p, &p);
        if p_sq == 0.0 {
            // Direction collapsed to zero with a non-zero gradient: restart
            // from steepest descent.
            p = r.clone();
            theta = 0.0;
            success = true;
            continue;
        }

        if success {
            let sigma = opts.sigma0 / p_sq.sqrt();
            let w_sigma: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + sigma * pi).collect();
            let (_, grad_sigma) = match eval(&w_sigma, &mut trace) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, trace)),
            };
            theta = p
                .iter()
                .zip(grad_sigma.iter().zip(&grad_now))
                .map(|(pi, (gs, gn))| pi * (gs - gn) / sigma)
                .sum();
        }

        // Effective curvature under the current damping; force positive
        // definiteness by raising lambda when needed.
        let mut delta = theta + lambda * p_sq;
        if delta <= 0.0 {
            lambda = -2.0 * theta / p_sq;
            delta = theta + lambda * p_sq; // = -theta > 0
        }

        let mu = dot(&p, &r);
        let alpha = mu / delta;
        if !alpha.is_finite() {
            return Err(fail(
                Error::Numeric(format!(
                    "step size became non-finite (mu {mu}, curvature {delta})"
                )),
                trace,
            ));
        }

        let w_trial: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + alpha * pi).collect();
        let (f_trial, grad_trial) = match eval(&w_trial, &mut trace) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trace)),
        };

        // Comparison parameter: how well the quadratic model predicted the
        // actual decrease. Dividing by mu twice (rather than by mu²) keeps
        // the intermediates in range when gradients are enormous.
        let big_delta = (2.0 * delta / mu) * ((f_now - f_trial) / mu);
        let accepted = big_delta.is_finite() && big_delta > 0.0 && f_trial < f_now;

        trace.steps.push(ScgStep {
            objective: f_now,
            grad_norm: r_norm,
            lambda,
            accepted,
        });

        if accepted {
            w = w_trial;
            f_now = f_trial;
            grad_now = grad_trial;
            let r_old_dot_r_new: f64;
            {
                let r_new: Vec<f64> = grad_now.iter().map(|g| -g).collect();
                r_old_dot_r_new = dot(&r_new, &r);
                r = r_new;
            }
            r_norm = norm(&r);
            success = true;
            if f_now < best_f {
                best_f = f_now;
                best_w = w.clone();
            }
            if r_norm <= opts.grad_tol {
                trace.converged = true;
                break;
            }
            if k % n == 0 {
                // Periodic restart.
                p = r.clone();
            } else {
                let beta = (dot(&r, &r) - r_old_dot_r_new) / mu;
                for (pi, ri) in p.iter_mut().zip(&r) {
                    *pi = ri + beta * *pi;
                }
                // A conjugate direction that is not a descent direction is
                // useless: restart from steepest descent.
                if dot(&p, &r) <= 0.0 {
                    p = r.clone();
                }
            }
            if big_delta >= 0.75 {
                lambda = (0.25 * lambda).max(f64::MIN_POSITIVE);
            }
        } else {
            success = false;
        }

        if !(big_delta >= 0.25) {
            // Model fit poorly (or the step was rejected outright): damp.
            // When the comparison parameter degenerates to NaN/∞ — weights so
            // large the σ-probe is absorbed — fall back to a multiplicative
            // raise so the loop cannot spin with lambda frozen.
            let raise = delta * (1.0 - big_delta) / p_sq;
            if raise.is_finite() && raise > 0.0 {
                lambda += raise;
            } else {
                lambda *= 4.0;
            }
            if !lambda.is_finite() || lambda > LAMBDA_MAX {
                // Trial steps have shrunk to nothing; further iterations
                // cannot make progress. Stop with the best weights seen.
                break;
            }
        }
    }

    Ok((best_w, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    /// f(w) = ½‖w − a‖², gradient w − a.
    fn shifted_sphere(a: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |w: &[f64]| {
            let grad: Vec<f64> = w.iter().zip(&a).map(|(wi, ai)| wi - ai).collect();
            let value = 0.5 * dot(&grad, &grad);
            Ok((value, grad))
        }
    }

    #[test]
    fn sphere_in_20_dimensions_reaches_the_analytic_minimum() {
        let mut rng = RngState::new(3);
        let a: Vec<f64> = (0..20).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let (w, trace) =
            scg_minimize(shifted_sphere(a.clone()), &vec![0.0; 20], &ScgOptions::default())
                .unwrap();
        assert!(trace.converged);
        assert!(trace.steps.len() <= 200, "took {} iterations", trace.steps.len());
        for (wi, ai) in w.iter().zip(&a) {
            assert!((wi - ai).abs() <= 1e-6, "{wi} vs {ai}");
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let a = vec![1.0, -2.0, 3.0];
        let (w, trace) =
            scg_minimize(shifted_sphere(a.clone()), &a, &ScgOptions::default()).unwrap();
        assert_eq!(w, a);
        assert!(trace.converged);
        assert!(trace.steps.is_empty());
        assert_eq!(trace.evaluations, 1);
    }

    fn rosenbrock(w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (x, y) = (w[0], w[1]);
        let value = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
        let gx = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
        let gy = 200.0 * (y - x * x);
        Ok((value, vec![gx, gy]))
    }

    #[test]
    fn rosenbrock_valley_is_traversed() {
        let opts = ScgOptions { max_iters: 5000, grad_tol: 1e-10, ..Default::default() };
        let (w, trace) = scg_minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        let (value, _) = rosenbrock(&w).unwrap();
        assert!(value <= 1e-6, "final objective {value} at {w:?} after {} iters", trace.steps.len());
    }

    #[test]
    fn accepted_objectives_strictly_decrease_and_lambda_stays_sane() {
        let opts = ScgOptions { max_iters: 3000, ..Default::default() };
        let (_, trace) = scg_minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        let accepted: Vec<f64> = trace
            .steps
            .iter()
            .filter(|s| s.accepted)
            .map(|s| s.objective)
            .collect();
        assert!(accepted.len() > 1);
        for pair in accepted.windows(2) {
            assert!(pair[1] < pair[0], "accepted objective rose: {pair:?}");
        }
        for s in &trace.steps {
            assert!(s.lambda > 0.0 && s.lambda.is_finite(), "lambda {}", s.lambda);
            assert!(s.grad_norm.is_finite());
        }
    }

    #[test]
    fn identical_runs_produce_identical_traces() {
        let mut rng = RngState::new(9);
        let a: Vec<f64> = (0..7).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let w0: Vec<f64> = (0..7).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let run = || scg_minimize(shifted_sphere(a.clone()), &w0, &ScgOptions::default()).unwrap();
        let (w1, t1) = run();
        let (w2, t2) = run();
        assert_eq!(t1, t2);
        for (x, y) in w1.iter().zip(&w2) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn objective_overflow_mid_run_fails_with_the_trace_attached() {
        // A steep linear slope: each accepted step quadruples in length, so
        // within a handful of iterations a trial evaluation overflows to -∞.
        let steep = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((-1e150 * w[0], vec![-1e150]))
        };
        let failure = scg_minimize(steep, &[0.0], &ScgOptions::default()).unwrap_err();
        assert!(matches!(failure.error, Error::Numeric(_)), "{}", failure.error);
        assert!(failure.error.to_string().contains("objective"), "{}", failure.error);
        assert!(!failure.trace.steps.is_empty());
        assert!(failure.trace.steps.iter().all(|s| s.accepted));
        assert!(failure.to_string().contains("iterations"));
    }

    #[test]
    fn hard_stall_stops_early_and_returns_best_seen_weights() {
        // f(w) = -w⁴ is unbounded below, but every evaluated value stays
        // finite: the weights freeze once the damping dwarfs the curvature,
        // and the run must stop on its own rather than burn the full budget.
        let quartic = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            let x = w[0];
            Ok((-(x.powi(4)), vec![-4.0 * x.powi(3)]))
        };
        let opts = ScgOptions { max_iters: 5000, ..Default::default() };
        let (w, trace) = scg_minimize(quartic, &[1e3], &opts).unwrap();
        assert!(!trace.converged);
        assert!(trace.steps.len() < opts.max_iters, "no stall: {} steps", trace.steps.len());
        // Best-seen weights are the last accepted ones, and every recorded
        // lambda stayed positive and finite.
        assert!(w[0].is_finite() && w[0] > 1e3);
        for s in &trace.steps {
            assert!(s.lambda.is_finite() && s.lambda > 0.0);
        }
    }

    #[test]
    fn invalid_options_are_rejected() {
        let err = scg_minimize(rosenbrock, &[0.0, 0.0], &ScgOptions {
            sigma0: 0.0,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err.error, Error::Argument(_)));
        let err = scg_minimize(rosenbrock, &[0.0, 0.0], &ScgOptions {
            lambda0: -1.0,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err.error, Error::Argument(_)));
        let err = scg_minimize(rosenbrock, &[f64::NAN, 0.0], &ScgOptions::default()).unwrap_err();
        assert!(matches!(err.error, Error::Numeric(_)));
    }

    #[test]
    fn empty_problem_is_trivially_converged() {
        let f = |_: &[f64]| Ok((0.0, vec![]));
        let (w, trace) = scg_minimize(f, &[], &ScgOptions::default()).unwrap();
        assert!(w.is_empty());
        assert!(trace.converged);
    }

    #[test]
    fn trace_csv_has_header_and_one_row_per_iteration() {
        let opts = ScgOptions { max_iters: 40, ..Default::default() };
        let (_, trace) = scg_minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,objective,grad_norm,lambda,accepted"));
        assert_eq!(lines.count(), trace.steps.len());
        // Values round-trip through the default float formatting.
        let second = text.lines().nth(1).unwrap();
        let objective: f64 = second.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(objective.to_bits(), trace.steps[0].objective.to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// On a strictly convex quadratic of dimension n the optimizer
        /// reaches the gradient tolerance within 10·n iterations.
        #[test]
        fn convex_quadratics_converge_within_ten_n(
            seed in 0u64..1_000,
            dim in 2usize..16,
        ) {
            let mut rng = RngState::new(seed);
            let diag: Vec<f64> = (0..dim).map(|_| rng.uniform(0.5, 10.0)).collect();
            let a: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let w0: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let d = diag.clone();
            let target = a.clone();
            let f = move |w: &[f64]| -> Result<(f64, Vec<f64>)> {
                let mut value = 0.0;
                let mut grad = vec![0.0; w.len()];
                for i in 0..w.len() {
                    let e = w[i] - target[i];
                    value += 0.5 * d[i] * e * e;
                    grad[i] = d[i] * e;
                }
                Ok((value, grad))
            };
            let opts = ScgOptions { max_iters: 10 * dim, ..Default::default() };
            let (w, trace) = scg_minimize(f, &w0, &opts).unwrap();
            prop_assert!(trace.converged,
                "no convergence in {} iters (dim {})", trace.steps.len(), dim);
            for (wi, ai) in w.iter().zip(&a) {
                prop_assert!((wi - ai).abs() <= 1e-6);
            }
        }
    }
}
