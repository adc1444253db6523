//! Alternating minimization over `(P, S, D, H/U/V, W)`.
//!
//! One iteration visits the classes in order and, for each class, updates the
//! analysis dictionary, refreshes the mean codes, updates the codes, the
//! synthesis dictionary, the reweighting diagonals and finally the
//! reconstruction weights. Iteration stops once the original objective moves
//! by less than `tol` (absolute) or after `max_iter` sweeps.

pub mod objective;
pub mod oracle;
pub mod update;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{init_state, Hyperparams, MeanMatrices, TrainState};

pub use objective::{frozen_surrogate, l21_norm, objective_eq6, objective_eq9};
pub use oracle::numeric_gradient;
pub use update::{
    compute_means, normalize_column_sums, smoothed_row_norms, solve_synthesis, solve_weights,
    update_d, update_p, update_reweights, update_s, update_w, AnalysisInputs, ClassReweights,
    SolveReport,
};

/// Per-class data blocks `X_l` and complements `X̄_l`, extracted once.
#[derive(Debug, Clone)]
pub struct ClassBlocks {
    pub x: Vec<DMatrix<f64>>,
    pub xbar: Vec<DMatrix<f64>>,
}

impl ClassBlocks {
    pub fn from_dataset(ds: &LabeledDataset) -> Self {
        let c = ds.num_classes();
        Self {
            x: (0..c).map(|l| ds.class_block(l)).collect(),
            xbar: (0..c).map(|l| ds.complement_block(l)).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.x.len()
    }
}

/// Which terms and updates are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    #[default]
    Full,
    /// `β = λ = 0`; reconstruction weights are never updated.
    Reduced,
    /// Reduced mode with the synthesis reweighting `V_l` pinned to identity,
    /// i.e. a Frobenius-norm synthesis fit.
    Frobenius,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Full => "full",
            TrainMode::Reduced => "reduced",
            TrainMode::Frobenius => "frobenius",
        }
    }

    fn updates_weights(self) -> bool {
        self == TrainMode::Full
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TrainMode::Full),
            "reduced" => Ok(TrainMode::Reduced),
            "frobenius" => Ok(TrainMode::Frobenius),
            _ => Err(Error::InvalidParameter(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective_eq6: f64,
    pub objective_eq9: f64,
    pub delta_p: f64,
    pub delta_s: f64,
    pub delta_d: f64,
    pub delta_w: f64,
    /// Largest relative residual of the P and D solves in this sweep.
    pub max_solve_residual: f64,
}

impl IterationRecord {
    pub fn total_delta(&self) -> f64 {
        self.delta_p + self.delta_s + self.delta_d + self.delta_w
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    /// Original objective at the initial state.
    pub initial_objective_eq6: f64,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl TrainHistory {
    pub fn iterations_run(&self) -> usize {
        self.records.len()
    }

    pub fn final_objective_eq6(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_objective_eq6, |r| r.objective_eq6)
    }

    pub fn final_objective_eq9(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective_eq9)
    }

    /// CSV with a `# converged=…` comment header, then
    /// `iter,obj_eq6,obj_eq9,dP,dS,dD,dW`.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# converged={} iterations={}\niter,obj_eq6,obj_eq9,dP,dS,dD,dW\n",
            self.converged,
            self.iterations_run()
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.iter,
                r.objective_eq6,
                r.objective_eq9,
                r.delta_p,
                r.delta_s,
                r.delta_d,
                r.delta_w
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: TrainState,
    pub history: TrainHistory,
}

/// Checks mode/hyperparameter consistency.
pub fn check_mode(hp: &Hyperparams, mode: TrainMode) -> Result<()> {
    hp.validate()?;
    if mode != TrainMode::Full && (hp.beta != 0.0 || hp.lambda != 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{mode} mode requires beta = lambda = 0 (got beta={}, lambda={})",
            hp.beta, hp.lambda
        )));
    }
    Ok(())
}

/// Which block updates a sweep performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPlan {
    pub mode: TrainMode,
    /// Recompute H/U/V after each class's D update.
    pub reweight: bool,
}

/// One pass over all classes in the fixed block order. Returns the largest
/// relative solve residual seen.
pub fn sweep(
    state: &mut TrainState,
    means: &mut [MeanMatrices],
    blocks: &ClassBlocks,
    hp: &Hyperparams,
    plan: SweepPlan,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for l in 0..blocks.num_classes() {
        let (x, xbar) = (&blocks.x[l], &blocks.xbar[l]);

        let (p, rep_p) = update_p(
            &AnalysisInputs {
                x,
                xbar,
                s: &state.coding.codes[l],
                w: &state.weights.weights[l],
                h: &state.reweights.h[l],
                u: &state.reweights.u[l],
                means: &means[l],
            },
            hp,
        )?;
        state.pair.analysis[l] = p;
        means[l] = compute_means(&state.pair.analysis[l], x, xbar);

        state.coding.codes[l] = update_s(
            x,
            &state.pair.synthesis[l],
            &state.pair.analysis[l],
            &state.coding.codes[l],
            &state.reweights.u[l],
            &state.reweights.v[l],
            hp.tau,
        );

        let (d, rep_d) = update_d(x, &state.coding.codes[l], &state.reweights.v[l], hp.tau)?;
        state.pair.synthesis[l] = d;

        if plan.reweight {
            let rw = update_reweights(
                x,
                &state.pair.analysis[l],
                &state.coding.codes[l],
                &state.pair.synthesis[l],
                hp.tau,
            );
            state.reweights.h[l] = rw.h;
            state.reweights.u[l] = rw.u;
            state.reweights.v[l] = if plan.mode == TrainMode::Frobenius {
                DVector::from_element(x.ncols(), 1.0)
            } else {
                rw.v
            };
        }

        if plan.mode.updates_weights() {
            state.weights.weights[l] = update_w(x, &state.pair.analysis[l]);
        }

        worst = worst.max(rep_p.relative_residual).max(rep_d.relative_residual);
    }
    Ok(worst)
}

fn block_delta(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Initial mean codes for every class.
pub fn initial_means(state: &TrainState, blocks: &ClassBlocks) -> Vec<MeanMatrices> {
    (0..blocks.num_classes())
        .map(|l| compute_means(&state.pair.analysis[l], &blocks.x[l], &blocks.xbar[l]))
        .collect()
}

/// Trains from the seeded initial state.
pub fn train(ds: &LabeledDataset, hp: &Hyperparams) -> Result<TrainOutput> {
    train_with_mode(ds, hp, TrainMode::Full)
}

pub fn train_with_mode(ds: &LabeledDataset, hp: &Hyperparams, mode: TrainMode) -> Result<TrainOutput> {
    check_mode(hp, mode)?;
    let blocks = ClassBlocks::from_dataset(ds);
    let mut state = init_state(ds, hp);
    if mode == TrainMode::Frobenius {
        for v in &mut state.reweights.v {
            v.fill(1.0);
        }
    }
    train_from(state, &blocks, hp, mode)
}

/// Runs the iteration loop from an arbitrary starting state.
pub fn train_from(
    mut state: TrainState,
    blocks: &ClassBlocks,
    hp: &Hyperparams,
    mode: TrainMode,
) -> Result<TrainOutput> {
    let mut means = initial_means(&state, blocks);
    let mut previous = objective_eq6(&state.pair, &state.weights, blocks, hp);
    let mut history = TrainHistory {
        initial_objective_eq6: previous,
        ..Default::default()
    };
    let plan = SweepPlan {
        mode,
        reweight: true,
    };

    for iter in 1..=hp.max_iter {
        let before = state.clone();
        let max_solve_residual = sweep(&mut state, &mut means, blocks, hp, plan)?;
        let obj6 = objective_eq6(&state.pair, &state.weights, blocks, hp);
        let obj9 = objective_eq9(&state, blocks, hp);
        if !obj6.is_finite() || !obj9.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {iter}")));
        }
        history.records.push(IterationRecord {
            iter,
            objective_eq6: obj6,
            objective_eq9: obj9,
            delta_p: block_delta(&state.pair.analysis, &before.pair.analysis),
            delta_s: block_delta(&state.coding.codes, &before.coding.codes),
            delta_d: block_delta(&state.pair.synthesis, &before.pair.synthesis),
            delta_w: block_delta(&state.weights.weights, &before.weights.weights),
            max_solve_residual,
        });
        if (obj6 - previous).abs() < hp.tol {
            history.converged = true;
            break;
        }
        previous = obj6;
    }
    Ok(TrainOutput { state, history })
}
