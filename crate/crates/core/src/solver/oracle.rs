//! Numerical oracles for the update rules.
//!
//! Every check rebuilds its reference quantity through a route that does not
//! call the code under test: systems are re-assembled from explicit diagonal
//! matrices, minimizers are found by finite-difference gradient descent, and
//! objectives are evaluated term by term.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::update::{self, AnalysisInputs};
use super::{frozen_surrogate, initial_means, sweep, ClassBlocks, SweepPlan, TrainMode};
use crate::data::{partition_by_class, LabeledDataset};
use crate::model::{init_state, Hyperparams, MeanMatrices};

/// Central differences `(f(M + hE_ij) − f(M − hE_ij)) / 2h` for every entry.
pub fn numeric_gradient<F>(f: F, m: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = m.clone();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        let orig = probe[(i, j)];
        probe[(i, j)] = orig + h;
        let up = f(&probe);
        probe[(i, j)] = orig - h;
        let down = f(&probe);
        probe[(i, j)] = orig;
        (up - down) / (2.0 * h)
    })
}

/// Outcome of one named oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity (residual, distance, increase …).
    pub value: f64,
    pub threshold: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} value={:.3e} threshold={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

fn check(name: &'static str, value: f64, threshold: f64) -> CheckResult {
    CheckResult {
        name,
        passed: value.is_finite() && value < threshold,
        value,
        threshold,
    }
}

/// Deliberate faults used to confirm that the harness can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaultInjection {
    /// Negate the weight update before it is checked.
    pub flip_w_sign: bool,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn positive(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(0.2..2.0))
}

/// Weight subproblem `‖X − XW‖² + ‖PX − PXW‖² + ‖W‖²`, evaluated directly.
pub fn weight_objective(x: &DMatrix<f64>, p: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let px = p * x;
    (x - x * w).norm_squared() + (&px - &px * w).norm_squared() + w.norm_squared()
}

/// Minimizes `f` by conjugate gradients on finite-difference gradients until
/// the gradient norm drops below `grad_tol`. Step lengths come from the
/// curvature along the search direction, itself a difference of gradients,
/// so no function-value comparison limits the attainable accuracy. Exact for
/// quadratics up to round-off.
pub fn descend<F>(f: F, start: &DMatrix<f64>, grad_tol: f64, max_steps: usize) -> (DMatrix<f64>, f64)
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    // Central differences are exact for quadratics, so a wide step keeps
    // round-off far below the gradient tolerance.
    const H: f64 = 0.5;
    let grad = |m: &DMatrix<f64>| numeric_gradient(&f, m, H);
    let mut w = start.clone();
    let mut g = grad(&w);
    let mut dir = -&g;
    for _ in 0..max_steps {
        let gnorm = g.norm();
        if gnorm < grad_tol {
            return (w, gnorm);
        }
        let c = 1.0 / dir.norm();
        let curvature = dir.dot(&((grad(&(&w + &dir * c)) - &g) / c));
        if !(curvature > 0.0) {
            return (w, gnorm);
        }
        w += &dir * (-g.dot(&dir) / curvature);
        let next = grad(&w);
        let beta = (next.dot(&(&next - &g)) / g.norm_squared()).max(0.0);
        dir = &dir * beta - &next;
        g = next;
    }
    let gnorm = g.norm();
    (w, gnorm)
}

/// Independent assembly of the analysis system with explicit diagonal
/// matrices; returns `(numerator, Λ + Υ)`.
fn reference_analysis_system(
    x: &DMatrix<f64>,
    xbar: &DMatrix<f64>,
    s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DVector<f64>,
    u: &DVector<f64>,
    means: &MeanMatrices,
    hp: &Hyperparams,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let big_u = DMatrix::from_diagonal(u);
    let big_h = DMatrix::from_diagonal(h);
    let n_l = x.ncols() as f64;
    let eye = DMatrix::<f64>::identity(w.nrows(), w.ncols());
    let q = (&eye - w) * (&eye - w).transpose();
    let num = s * &big_u * x.transpose() * 4.0
        + &means.own * x.transpose() * (2.0 * hp.lambda)
        - &means.other * x.transpose() * (2.0 * hp.lambda * n_l);
    let big_lambda = x * &big_u * x.transpose() * 4.0
        + xbar * xbar.transpose() * (2.0 * hp.alpha)
        + &big_h * (4.0 * hp.alpha);
    let upsilon = x * &q * x.transpose() * hp.beta
        + x * q.transpose() * x.transpose() * hp.beta
        + x * x.transpose() * (2.0 * hp.lambda * (n_l - 1.0));
    (num, big_lambda + upsilon)
}

/// `‖P(Λ+Υ) − numerator‖_F / ‖numerator‖_F` on a random `n = 5`, `N_l = 8`
/// class.
pub fn p_solve_residual(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, nl, k) = (5, 8, 3);
    let x = gaussian(n, nl, &mut rng);
    let xbar = gaussian(n, 6, &mut rng);
    let s = gaussian(k, nl, &mut rng).abs();
    let mut w = gaussian(nl, nl, &mut rng) * 0.2;
    w.fill_diagonal(0.0);
    let h = positive(n, &mut rng);
    let u = positive(nl, &mut rng);
    let p0 = gaussian(k, n, &mut rng);
    let means = update::compute_means(&p0, &x, &xbar);
    let hp = Hyperparams {
        alpha: 0.3,
        beta: 0.2,
        lambda: 0.01,
        ..Default::default()
    };
    let inp = AnalysisInputs {
        x: &x,
        xbar: &xbar,
        s: &s,
        w: &w,
        h: &h,
        u: &u,
        means: &means,
    };
    let (p, report) = match update::update_p(&inp, &hp) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    let (num, mut system) = reference_analysis_system(&x, &xbar, &s, &w, &h, &u, &means, &hp);
    if report.regularized {
        system += DMatrix::identity(n, n) * hp.tau;
    }
    (p * system - &num).norm() / num.norm()
}

/// Residual of the unnormalized synthesis solve on a random class.
pub fn d_solve_residual(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, nl, k) = (6, 9, 4);
    let x = gaussian(n, nl, &mut rng);
    let s = gaussian(k, nl, &mut rng).abs();
    let v = positive(nl, &mut rng);
    let tau = 1e-6;
    let d = match update::solve_synthesis(&x, &s, &v, tau) {
        Ok((d, _)) => d,
        Err(_) => return f64::INFINITY,
    };
    let big_v = DMatrix::from_diagonal(&v);
    let rhs = &x * &big_v * s.transpose();
    let system = &s * &big_v * s.transpose() + DMatrix::identity(k, k) * tau;
    (d * system - &rhs).norm() / rhs.norm()
}

fn weight_fixture(seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian(4, 3, &mut rng);
    let p = gaussian(2, 4, &mut rng) * 0.5;
    (x, p)
}

fn checked_weights(x: &DMatrix<f64>, p: &DMatrix<f64>, faults: FaultInjection) -> DMatrix<f64> {
    let w = update::solve_weights(x, p);
    if faults.flip_w_sign {
        -w
    } else {
        w
    }
}

/// Max-entry distance between the pre-zeroing weight update and a
/// finite-difference conjugate-gradient minimizer on a 3-sample class.
pub fn w_minimizer_distance(seed: u64, faults: FaultInjection) -> f64 {
    let (x, p) = weight_fixture(seed);
    let w = checked_weights(&x, &p, faults);
    let (w_ref, gnorm) = descend(
        |m| weight_objective(&x, &p, m),
        &DMatrix::zeros(3, 3),
        1e-10,
        1_000,
    );
    if gnorm >= 1e-10 {
        return f64::INFINITY;
    }
    (w - w_ref).amax()
}

/// `‖∇Φ(W*)‖ / (1 + ‖W*‖)` with a finite-difference gradient.
pub fn w_stationarity(seed: u64, faults: FaultInjection) -> f64 {
    let (x, p) = weight_fixture(seed);
    let w = checked_weights(&x, &p, faults);
    let g = numeric_gradient(|m| weight_objective(&x, &p, m), &w, 1e-5);
    g.norm() / (1.0 + w.norm())
}

/// Largest deviation of finite-difference gradients from the analytic
/// gradients of `‖M‖²_F` and of the entry sum.
pub fn quadratic_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = gaussian(3, 4, &mut rng);
    let g_sq = numeric_gradient(|a| a.norm_squared(), &m, 1e-4);
    let g_sum = numeric_gradient(|a| a.sum(), &m, 1e-4);
    let e1 = (g_sq - &m * 2.0).amax();
    let e2 = (g_sum - DMatrix::from_element(3, 4, 1.0)).amax();
    e1.max(e2)
}

/// Two-class instance (`n = 6`, `N_l = 5`, `k_l = 3`) with Gaussian data.
pub fn monotonicity_instance(seed: u64) -> (LabeledDataset, Hyperparams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian(6, 10, &mut rng);
    let labels = (0..10).map(|j| j / 5 + 1).collect();
    let ds = partition_by_class(x, labels).expect("valid labels");
    let hp = Hyperparams {
        atoms_per_class: 3,
        seed,
        ..Default::default()
    };
    (ds, hp)
}

/// Relative increase `(after − before) / |before|` of the frozen-diagonal
/// surrogate over one sweep with H/U/V held fixed.
pub fn frozen_sweep_increase(ds: &LabeledDataset, hp: &Hyperparams) -> f64 {
    let blocks = ClassBlocks::from_dataset(ds);
    let mut state = init_state(ds, hp);
    let mut means = initial_means(&state, &blocks);
    let before = frozen_surrogate(&state, &blocks, hp);
    let plan = SweepPlan {
        mode: TrainMode::Full,
        reweight: false,
    };
    if sweep(&mut state, &mut means, &blocks, hp, plan).is_err() {
        return f64::INFINITY;
    }
    let after = frozen_surrogate(&state, &blocks, hp);
    (after - before) / before.abs()
}

/// Worst relative surrogate increase over `count` seeded instances.
pub fn worst_frozen_sweep_increase(first_seed: u64, count: u64) -> f64 {
    (first_seed..first_seed + count)
        .map(|s| {
            let (ds, hp) = monotonicity_instance(s);
            frozen_sweep_increase(&ds, &hp)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Code-update surrogate `2tr((X−DS)V(X−DS)ᵀ) + 2tr((S−PX)U(S−PX)ᵀ)`,
/// evaluated with explicit diagonal matrices.
pub fn coding_surrogate(
    x: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &DMatrix<f64>,
    s: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> f64 {
    let fit = x - d * s;
    let code = s - p * x;
    2.0 * (&fit * DMatrix::from_diagonal(v) * fit.transpose()).trace()
        + 2.0 * (&code * DMatrix::from_diagonal(u) * code.transpose()).trace()
}

/// Largest relative step-to-step increase of the coding surrogate over ten
/// multiplicative updates on a random nonnegative instance (negative means
/// strictly decreasing).
pub fn s_update_increase(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k, nl) = (5, 4, 6);
    let x = gaussian(n, nl, &mut rng).abs();
    let d = gaussian(n, k, &mut rng).abs();
    let p = gaussian(k, n, &mut rng).abs() * 0.3;
    let mut s = gaussian(k, nl, &mut rng).abs();
    let u = positive(nl, &mut rng);
    let v = positive(nl, &mut rng);
    let mut prev = coding_surrogate(&x, &d, &p, &s, &u, &v);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        s = update::update_s(&x, &d, &p, &s, &u, &v, 1e-12);
        let cur = coding_surrogate(&x, &d, &p, &s, &u, &v);
        worst = worst.max((cur - prev) / prev.abs());
        prev = cur;
    }
    worst
}

/// Runs every oracle; the CLI `gradcheck` command prints these.
pub fn run_oracle_suite(seed: u64, faults: FaultInjection) -> Vec<CheckResult> {
    vec![
        check("numeric_gradient_quadratic", quadratic_gradient_error(seed), 1e-6),
        check("p_solve_residual", p_solve_residual(seed), 1e-8),
        check("d_solve_residual", d_solve_residual(seed), 1e-8),
        check("w_numerical_minimizer", w_minimizer_distance(seed, faults), 1e-6),
        check("w_stationarity", w_stationarity(seed, faults), 1e-5),
        check("s_multiplicative_descent", s_update_increase(seed).max(0.0), 1e-12),
        check(
            "frozen_surrogate_monotonicity",
            worst_frozen_sweep_increase(seed, 20).max(0.0),
            1e-8,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_squared_norm() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let g = numeric_gradient(|a| a.norm_squared(), &m, 1e-3);
        assert!((g - DMatrix::from_row_slice(1, 2, &[2.0, 4.0])).amax() < 1e-9);
    }

    #[test]
    fn gradient_of_linear_function() {
        let m = DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let g = numeric_gradient(|a| a.sum(), &m, 1e-3);
        assert!((g - DMatrix::from_element(2, 3, 1.0)).amax() < 1e-9);
    }

    #[test]
    fn descend_finds_quadratic_minimum() {
        let target = DMatrix::from_row_slice(1, 2, &[0.5, -1.5]);
        let (w, g) = descend(|m| (m - &target).norm_squared(), &DMatrix::zeros(1, 2), 1e-10, 100);
        assert!(g < 1e-10);
        assert!((w - target).amax() < 1e-10);
    }

    #[test]
    fn flipped_weights_fail_stationarity() {
        let faults = FaultInjection { flip_w_sign: true };
        assert!(w_stationarity(1, faults) > 1e-5);
        assert!(w_minimizer_distance(1, faults) > 1e-6);
    }
}
