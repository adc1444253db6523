//! Reference models: the reduced (`β = λ = 0`) dictionary pair learner and two
//! floor classifiers.

use nalgebra::{DMatrix, DVectorView};

use crate::classify::{argmin_label, Classifier};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::solver::{train_with_mode, TrainMode, TrainOutput};

/// Reduced-mode training. With `frobenius` the synthesis fit uses identity
/// reweighting instead of the l2,1 weights.
pub fn train_reduced(ds: &LabeledDataset, hp: &Hyperparams, frobenius: bool) -> Result<TrainOutput> {
    let mode = if frobenius {
        TrainMode::Frobenius
    } else {
        TrainMode::Reduced
    };
    train_with_mode(ds, hp, mode)
}

/// Nearest Euclidean class mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestClassMean {
    /// `n × c`, column `l` is the mean of class `l + 1`.
    pub means: DMatrix<f64>,
}

impl NearestClassMean {
    pub fn fit(train: &LabeledDataset) -> Self {
        let c = train.num_classes();
        let mut means = DMatrix::zeros(train.dim(), c);
        for l in 0..c {
            means.set_column(l, &train.class_block(l).column_mean());
        }
        Self { means }
    }
}

impl Classifier for NearestClassMean {
    fn num_classes(&self) -> usize {
        self.means.ncols()
    }

    fn dim(&self) -> usize {
        self.means.nrows()
    }

    fn predict(&self, y: DVectorView<'_, f64>) -> usize {
        argmin_label(self.means.column_iter().map(|m| (y - m).norm()))
    }
}

/// Per-class rank-`k` least-squares subspace; predicts the class whose
/// subspace leaves the smallest projection residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSubspace {
    /// Orthonormal `n × k` bases.
    pub bases: Vec<DMatrix<f64>>,
}

impl LeastSquaresSubspace {
    pub fn fit(train: &LabeledDataset, k: usize) -> Result<Self> {
        let mut bases = Vec::with_capacity(train.num_classes());
        for l in 0..train.num_classes() {
            let x = train.class_block(l);
            let limit = x.nrows().min(x.ncols());
            if k == 0 || k > limit {
                return Err(Error::InvalidParameter(format!(
                    "subspace rank {k} not in 1..={limit} for class {}",
                    l + 1
                )));
            }
            let svd = x.svd(true, false);
            let u = svd.u.expect("left singular vectors requested");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            bases.push(u.select_columns(&order[..k]));
        }
        Ok(Self { bases })
    }

    pub fn residual(&self, class: usize, y: DVectorView<'_, f64>) -> f64 {
        let b = &self.bases[class];
        (y - b * (b.transpose() * y)).norm()
    }
}

impl Classifier for LeastSquaresSubspace {
    fn num_classes(&self) -> usize {
        self.bases.len()
    }

    fn dim(&self) -> usize {
        self.bases[0].nrows()
    }

    fn predict(&self, y: DVectorView<'_, f64>) -> usize {
        argmin_label((0..self.bases.len()).map(|l| self.residual(l, y)))
    }
}
