//! Objective values: the original objective (codes eliminated), the relaxed
//! objective with explicit codes, and the frozen-diagonal quadratic surrogate
//! that the block updates descend.
//!
//! l2,1 norms are evaluated without smoothing.

use nalgebra::DMatrix;

use super::update::compute_means;
use super::ClassBlocks;
use crate::linalg::{l21_columns, l21_rows};
use crate::model::{DictionaryPair, Hyperparams, TrainState, WeightState};

/// `α(‖P X̄‖²_F + ‖Pᵀ‖_{2,1}) + β(‖X − XW‖² + ‖PX − PXW‖² + ‖W‖²)
///  + λ(‖PX − M‖² − N‖PX − M̄‖²)` for one class, with the means taken from
/// the current `P`.
fn shared_terms(
    x: &DMatrix<f64>,
    xbar: &DMatrix<f64>,
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
    hp: &Hyperparams,
    analysis_penalty: f64,
) -> f64 {
    let px = p * x;
    let mut total = 0.0;
    if hp.alpha != 0.0 {
        let suppress = if xbar.ncols() == 0 {
            0.0
        } else {
            (p * xbar).norm_squared()
        };
        total += hp.alpha * (suppress + analysis_penalty);
    }
    if hp.beta != 0.0 {
        total += hp.beta
            * ((x - x * w).norm_squared() + (&px - &px * w).norm_squared() + w.norm_squared());
    }
    if hp.lambda != 0.0 {
        let means = compute_means(p, x, xbar);
        let n_l = x.ncols() as f64;
        total += hp.lambda
            * ((&px - &means.own).norm_squared() - n_l * (&px - &means.other).norm_squared());
    }
    total
}

/// Relaxed objective with explicit codes `S`.
pub fn objective_eq9(state: &TrainState, blocks: &ClassBlocks, hp: &Hyperparams) -> f64 {
    let mut total = 0.0;
    for l in 0..blocks.num_classes() {
        let (x, xbar) = (&blocks.x[l], &blocks.xbar[l]);
        let d = &state.pair.synthesis[l];
        let p = &state.pair.analysis[l];
        let s = &state.coding.codes[l];
        let w = &state.weights.weights[l];
        // Rows of Xᵀ − SᵀDᵀ are the columns of X − DS.
        total += l21_columns(&(x - d * s)) + l21_columns(&(s - p * x));
        total += shared_terms(x, xbar, p, w, hp, l21_columns(p));
    }
    total
}

/// Original objective: `Σ_l ‖X_lᵀ − X_lᵀP_lᵀD_lᵀ‖_{2,1}` plus the shared
/// penalty terms.
pub fn objective_eq6(
    pair: &DictionaryPair,
    weights: &WeightState,
    blocks: &ClassBlocks,
    hp: &Hyperparams,
) -> f64 {
    let mut total = 0.0;
    for l in 0..blocks.num_classes() {
        let (x, xbar) = (&blocks.x[l], &blocks.xbar[l]);
        let d = &pair.synthesis[l];
        let p = &pair.analysis[l];
        total += l21_columns(&(x - d * (p * x)));
        total += shared_terms(x, xbar, p, &weights.weights[l], hp, l21_columns(p));
    }
    total
}

/// Relaxed objective with each l2,1 term replaced by its trace form under the
/// stored (frozen) reweighting diagonals:
/// `2 tr((X − DS)V(X − DS)ᵀ) + 2 tr((S − PX)U(S − PX)ᵀ) + 2α tr(P H Pᵀ) + …`.
pub fn frozen_surrogate(state: &TrainState, blocks: &ClassBlocks, hp: &Hyperparams) -> f64 {
    let mut total = 0.0;
    for l in 0..blocks.num_classes() {
        let (x, xbar) = (&blocks.x[l], &blocks.xbar[l]);
        let d = &state.pair.synthesis[l];
        let p = &state.pair.analysis[l];
        let s = &state.coding.codes[l];
        let w = &state.weights.weights[l];
        let (h, u, v) = (
            &state.reweights.h[l],
            &state.reweights.u[l],
            &state.reweights.v[l],
        );
        let fit = x - d * s;
        let code = s - p * x;
        let weighted = |m: &DMatrix<f64>, diag: &nalgebra::DVector<f64>| -> f64 {
            m.column_iter()
                .zip(diag.iter())
                .map(|(c, &q)| q * c.norm_squared())
                .sum::<f64>()
        };
        total += 2.0 * weighted(&fit, v) + 2.0 * weighted(&code, u);
        let analysis_penalty = 2.0 * weighted(p, h);
        total += shared_terms(x, xbar, p, w, hp, analysis_penalty);
    }
    total
}

/// `‖R‖_{2,1}` over rows; re-exported for callers that evaluate single terms.
pub fn l21_norm(r: &DMatrix<f64>) -> f64 {
    l21_rows(r)
}
