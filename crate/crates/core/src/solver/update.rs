//! Per-class block updates of the alternating scheme.
//!
//! Each function takes the class blocks it reads and returns the new block;
//! the training loop owns the state and the update order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{replicated_column_mean, scale_columns, symmetric_condition};
use crate::model::{Hyperparams, MeanMatrices};

/// Condition estimate above which `τ·I` is added to the P system.
pub const CONDITION_GUARD: f64 = 1e12;

/// Diagnostics of one dense linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub condition: f64,
    /// Whether `τ·I` was added to the system matrix.
    pub regularized: bool,
    /// `‖X·A − B‖_F / ‖B‖_F` for the system actually solved.
    pub relative_residual: f64,
}

/// `2·‖row i of R‖₂ + τ` for every row.
pub fn smoothed_row_norms(r: &DMatrix<f64>, tau: f64) -> DVector<f64> {
    DVector::from_iterator(r.nrows(), r.row_iter().map(|row| 2.0 * row.norm() + tau))
}

fn inverse(v: DVector<f64>) -> DVector<f64> {
    v.map(|x| 1.0 / x)
}

/// Reweighting diagonals for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReweights {
    /// `H_l`, length `n`.
    pub h: DVector<f64>,
    /// `U_l`, length `N_l`.
    pub u: DVector<f64>,
    /// `V_l`, length `N_l`.
    pub v: DVector<f64>,
}

/// IRLS diagonals from the current residuals: `H` from the rows of `P_lᵀ`,
/// `U` from the rows of `S_lᵀ − X_lᵀP_lᵀ`, `V` from the rows of
/// `X_lᵀ − S_lᵀD_lᵀ`.
pub fn update_reweights(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    s: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tau: f64,
) -> ClassReweights {
    let coding_residual = (s - p * x).transpose();
    let synthesis_residual = (x - d * s).transpose();
    ClassReweights {
        h: inverse(smoothed_row_norms(&p.transpose(), tau)),
        u: inverse(smoothed_row_norms(&coding_residual, tau)),
        v: inverse(smoothed_row_norms(&synthesis_residual, tau)),
    }
}

/// `M_l` from the codes `P_l X_l` of the class and `M̄_l` from the codes
/// `P_l X̄_l` of the complement, both replicated across `N_l` columns.
pub fn compute_means(p: &DMatrix<f64>, x: &DMatrix<f64>, xbar: &DMatrix<f64>) -> MeanMatrices {
    let cols = x.ncols();
    let own = replicated_column_mean(&(p * x), cols);
    let other = if xbar.ncols() == 0 {
        DMatrix::zeros(p.nrows(), cols)
    } else {
        replicated_column_mean(&(p * xbar), cols)
    };
    MeanMatrices { own, other }
}

/// Inputs of the analysis-dictionary update for one class.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisInputs<'a> {
    pub x: &'a DMatrix<f64>,
    pub xbar: &'a DMatrix<f64>,
    pub s: &'a DMatrix<f64>,
    pub w: &'a DMatrix<f64>,
    pub h: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    pub means: &'a MeanMatrices,
}

/// Numerator `4 S U Xᵀ + 2λ M Xᵀ − 2λ N M̄ Xᵀ` and system matrix `Λ + Υ` of
/// the analysis update, with
/// `Λ = 4 X U Xᵀ + 2α X̄ X̄ᵀ + 4α H` and
/// `Υ = β X Q Xᵀ + β X Qᵀ Xᵀ + 2λ(N−1) X Xᵀ`, `Q = (I−W)(I−W)ᵀ`.
pub fn analysis_system(inp: &AnalysisInputs<'_>, hp: &Hyperparams) -> (DMatrix<f64>, DMatrix<f64>) {
    let AnalysisInputs {
        x,
        xbar,
        s,
        w,
        h,
        u,
        means,
    } = *inp;
    let n_l = x.ncols() as f64;
    let xt = x.transpose();
    let xu = scale_columns(x, u);

    let numerator = 4.0 * scale_columns(s, u) * &xt
        + 2.0 * hp.lambda * &means.own * &xt
        - 2.0 * hp.lambda * n_l * &means.other * &xt;

    let mut lambda_mat = 4.0 * &xu * &xt + DMatrix::from_diagonal(&(4.0 * hp.alpha * h));
    if xbar.ncols() > 0 {
        lambda_mat += 2.0 * hp.alpha * xbar * xbar.transpose();
    }

    let i_minus_w = DMatrix::identity(w.nrows(), w.ncols()) - w;
    let q = &i_minus_w * i_minus_w.transpose();
    let upsilon = hp.beta * x * &q * &xt
        + hp.beta * x * q.transpose() * &xt
        + 2.0 * hp.lambda * (n_l - 1.0) * x * &xt;

    (numerator, lambda_mat + upsilon)
}

/// Solves `Z · A = B` for `Z` with one step of iterative refinement.
fn solve_right(a: &DMatrix<f64>, b: &DMatrix<f64>, condition: f64) -> Result<DMatrix<f64>> {
    let at = a.transpose();
    let lu = at.clone().lu();
    let bt = b.transpose();
    let mut zt = lu.solve(&bt).ok_or(Error::Singular { condition })?;
    let r = &bt - &at * &zt;
    if let Some(dz) = lu.solve(&r) {
        zt += dz;
    }
    if zt.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { condition });
    }
    Ok(zt.transpose())
}

fn relative_residual(z: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let bn = b.norm();
    let r = (z * a - b).norm();
    if bn == 0.0 {
        r
    } else {
        r / bn
    }
}

/// New `P_l = numerator · (Λ + Υ)⁻¹`, adding `τ·I` to the system when its
/// condition estimate exceeds [`CONDITION_GUARD`].
pub fn update_p(inp: &AnalysisInputs<'_>, hp: &Hyperparams) -> Result<(DMatrix<f64>, SolveReport)> {
    let (numerator, mut system) = analysis_system(inp, hp);
    let mut condition = symmetric_condition(&system);
    let regularized = !(condition <= CONDITION_GUARD);
    if regularized {
        let n = system.nrows();
        system += DMatrix::identity(n, n) * hp.tau;
        condition = symmetric_condition(&system);
        if !condition.is_finite() {
            return Err(Error::Singular { condition });
        }
    }
    let p = solve_right(&system, &numerator, condition)?;
    let report = SolveReport {
        condition,
        regularized,
        relative_residual: relative_residual(&p, &system, &numerator),
    };
    Ok((p, report))
}

/// Multiplicative nonnegative update of the codes.
///
/// With `A = DᵀD` and `C = DᵀX V + P X U` split into positive and negative
/// parts, `s ← s · (A⁻ S V + C⁺) / max(A⁺ S V + S U + C⁻, τ)`. When `A` and
/// `C` are entrywise nonnegative this is `s · [C]₊ / max(DᵀD S V + S U, τ)`;
/// the split keeps every step a descent step when `D` has signed entries.
pub fn update_s(
    x: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &DMatrix<f64>,
    s: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    tau: f64,
) -> DMatrix<f64> {
    let dt = d.transpose();
    let gram = &dt * d;
    let target = scale_columns(&(&dt * x), v) + scale_columns(&(p * x), u);
    let positive = |m: &DMatrix<f64>| m.map(|e| e.max(0.0));
    let negative = |m: &DMatrix<f64>| m.map(|e| (-e).max(0.0));
    let numerator = scale_columns(&(negative(&gram) * s), v) + positive(&target);
    let denominator =
        scale_columns(&(positive(&gram) * s), v) + scale_columns(s, u) + negative(&target);
    s.zip_zip_map(&numerator, &denominator, |s, num, den| {
        if s == 0.0 {
            0.0
        } else {
            s * num / den.max(tau)
        }
    })
}

/// Unnormalized synthesis solve `D = (X V Sᵀ)(S V Sᵀ + τI)⁻¹`.
pub fn solve_synthesis(
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    v: &DVector<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, SolveReport)> {
    let k = s.nrows();
    let sv = scale_columns(s, v);
    let system = &sv * s.transpose() + DMatrix::identity(k, k) * tau;
    let rhs = x * sv.transpose();
    let condition = symmetric_condition(&system);
    let d = match system.clone().cholesky() {
        Some(chol) => {
            let mut dt = chol.solve(&rhs.transpose());
            let r = rhs.transpose() - &system * &dt;
            dt += chol.solve(&r);
            dt.transpose()
        }
        None => solve_right(&system, &rhs, condition)?,
    };
    let report = SolveReport {
        condition,
        regularized: true,
        relative_residual: relative_residual(&d, &system, &rhs),
    };
    Ok((d, report))
}

/// Shifts each column by a constant so that it sums to 1. This is the
/// Euclidean projection onto `eᵀD = eᵀ`; a zero column becomes the uniform
/// column `1/n`.
pub fn normalize_column_sums(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows() as f64;
    let mut out = d.clone();
    for mut col in out.column_iter_mut() {
        let shift = (1.0 - col.sum()) / n;
        col.add_scalar_mut(shift);
    }
    out
}

/// Synthesis update followed by the sum-to-one normalization.
pub fn update_d(
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    v: &DVector<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, SolveReport)> {
    let (d, report) = solve_synthesis(x, s, v, tau)?;
    Ok((normalize_column_sums(&d), report))
}

/// Unconstrained minimizer `(G + I)⁻¹ G` of the weight subproblem, with
/// `G = XᵀX + XᵀPᵀPX`.
pub fn solve_weights(x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let px = p * x;
    let g = x.tr_mul(x) + px.tr_mul(&px);
    let m = g.nrows();
    let system = &g + DMatrix::identity(m, m);
    // G + I is symmetric positive definite.
    let chol = system
        .cholesky()
        .expect("G + I is positive definite for finite inputs");
    chol.solve(&g)
}

/// [`solve_weights`] with the diagonal zeroed.
pub fn update_w(x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = solve_weights(x, p);
    w.fill_diagonal(0.0);
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_norms_degenerate_and_arithmetic() {
        let z = smoothed_row_norms(&DMatrix::zeros(3, 2), 1e-6);
        assert!(z.iter().all(|&v| v == 1e-6));
        let r = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!((smoothed_row_norms(&r, 0.1)[0] - 10.1).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_gives_inverse_tau_u() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let p = DMatrix::from_row_slice(1, 2, &[0.3, 0.7]);
        let s = &p * &x;
        let d = DMatrix::from_element(2, 1, 0.5);
        let rw = update_reweights(&x, &p, &s, &d, 1e-3);
        assert!(rw.u.iter().all(|&u| (u - 1e3).abs() < 1e-9));
        assert_eq!(rw.h.len(), 2);
        assert_eq!(rw.v.len(), 3);
    }

    #[test]
    fn unit_columns_give_h() {
        let tau = 1e-6;
        let p = DMatrix::<f64>::identity(3, 3);
        let x = DMatrix::identity(3, 3);
        let rw = update_reweights(&x, &p, &x, &p, tau);
        assert!(rw.h.iter().all(|&h| (h - 1.0 / (2.0 + tau)).abs() < 1e-15));
    }

    #[test]
    fn means_of_one_and_of_two() {
        let p = DMatrix::identity(2, 2);
        let x = DMatrix::from_column_slice(2, 1, &[4.0, 5.0]);
        let m = compute_means(&p, &x, &DMatrix::zeros(2, 0));
        assert_eq!(m.own, x);
        assert_eq!(m.other, DMatrix::zeros(2, 1));

        let x = DMatrix::from_column_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        let m = compute_means(&p, &x, &x);
        assert!(m.own.iter().all(|&v| v == 2.0));
        assert!(m.other.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn p_identity_data() {
        let n = 4;
        let x = DMatrix::identity(n, n);
        let xbar = DMatrix::from_element(n, 2, 1.0);
        let s = DMatrix::from_fn(2, n, |i, j| (i + 2 * j) as f64 * 0.25);
        let w = DMatrix::from_element(n, n, 0.1);
        let h = DVector::from_element(n, 7.0);
        let u = DVector::from_element(n, 1.0);
        let means = MeanMatrices {
            own: DMatrix::zeros(2, n),
            other: DMatrix::zeros(2, n),
        };
        let hp = Hyperparams {
            alpha: 0.0,
            beta: 0.0,
            lambda: 0.0,
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
        let (p, report) = update_p(&inp, &hp).unwrap();
        assert!(!report.regularized);
        assert!((p - &s).norm() < 1e-14);
    }

    #[test]
    fn p_ignores_means_when_lambda_zero() {
        let x = DMatrix::from_fn(3, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let xbar = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let s = DMatrix::from_fn(2, 4, |i, j| (i + j) as f64 * 0.1);
        let w = DMatrix::zeros(4, 4);
        let h = DVector::from_element(3, 1.0);
        let u = DVector::from_element(4, 1.0);
        let hp = Hyperparams {
            lambda: 0.0,
            ..Default::default()
        };
        let m1 = MeanMatrices {
            own: DMatrix::zeros(2, 4),
            other: DMatrix::zeros(2, 4),
        };
        let m2 = MeanMatrices {
            own: DMatrix::from_element(2, 4, 3.0),
            other: DMatrix::from_element(2, 4, -8.0),
        };
        let mk = |means| AnalysisInputs {
            x: &x,
            xbar: &xbar,
            s: &s,
            w: &w,
            h: &h,
            u: &u,
            means,
        };
        let (p1, _) = update_p(&mk(&m1), &hp).unwrap();
        let (p2, _) = update_p(&mk(&m2), &hp).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn s_fixed_points() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let d = DMatrix::from_element(2, 1, 0.5);
        let p = DMatrix::from_element(1, 2, 0.5);
        let s = DMatrix::from_row_slice(1, 2, &[0.0, 0.7]);
        let u = DVector::from_element(2, 1.0);
        let v = DVector::from_element(2, 1.0);
        let out = update_s(&x, &d, &p, &s, &u, &v, 1e-6);
        assert_eq!(out[(0, 0)], 0.0);
        assert!(out.iter().all(|&s| s >= 0.0));

        // DᵀX = 1, PX = 1 per column so num = 2; DᵀD = 0.5, so s = 4/3
        // makes den = 0.5·4/3 + 4/3 = 2.
        let s = DMatrix::from_element(1, 2, 4.0 / 3.0);
        let out = update_s(&x, &d, &p, &s, &u, &v, 1e-6);
        assert!((out - s).norm() < 1e-15);
    }

    #[test]
    fn d_degenerate_fallback() {
        let x = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        let s = DMatrix::zeros(2, 4);
        let v = DVector::from_element(4, 1.0);
        let (d, _) = update_d(&x, &s, &v, 1e-6).unwrap();
        assert!(d.iter().all(|&e| (e - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn d_identity_coding() {
        let tau = 1e-6;
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        let s = DMatrix::identity(2, 2);
        let v = DVector::from_element(2, 1.0);
        let (pre, _) = solve_synthesis(&x, &s, &v, tau).unwrap();
        assert!((&pre - &x / (1.0 + tau)).norm() < 1e-14);
        let post = normalize_column_sums(&pre);
        // Column sums 4 and 8 are each lowered by a shift of (1 − sum)/2.
        let expected = DMatrix::from_row_slice(2, 2, &[-0.5, -1.5, 1.5, 2.5]);
        assert!((&post - expected).norm() < 1e-5);
        assert!(post.row_sum().iter().all(|&c| (c - 1.0).abs() < 1e-14));
    }

    #[test]
    fn w_trivial_cases() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = DMatrix::from_element(2, 3, 0.4);
        assert_eq!(update_w(&x, &p), DMatrix::zeros(1, 1));
        let w = update_w(&DMatrix::zeros(3, 4), &p);
        assert_eq!(w, DMatrix::zeros(4, 4));
    }
}
