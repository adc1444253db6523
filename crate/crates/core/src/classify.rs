//! Class-residual classification and evaluation summaries.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::DictionaryPair;

/// Anything that maps a feature vector to a 1-based class label.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn dim(&self) -> usize;
    /// Caller guarantees `y.len() == self.dim()`.
    fn predict(&self, y: DVectorView<'_, f64>) -> usize;
}

/// Index (1-based) of the smallest score; ties go to the lowest index.
pub(crate) fn argmin_label(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s < best.1 {
            best = (i, s);
        }
    }
    best.0 + 1
}

/// `‖y − D_l (P_l y)‖₂` for every class. The product `D_l P_l` is never
/// formed, so each class costs two `k_l × n` matrix-vector products.
pub fn class_residuals(y: DVectorView<'_, f64>, pair: &DictionaryPair) -> Vec<f64> {
    pair.synthesis
        .iter()
        .zip(&pair.analysis)
        .map(|(d, p)| {
            let code: DVector<f64> = p * y;
            (y - d * code).norm()
        })
        .collect()
}

impl Classifier for DictionaryPair {
    fn num_classes(&self) -> usize {
        DictionaryPair::num_classes(self)
    }

    fn dim(&self) -> usize {
        DictionaryPair::dim(self)
    }

    fn predict(&self, y: DVectorView<'_, f64>) -> usize {
        argmin_label(class_residuals(y, self))
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Label of `y` under the residual rule.
pub fn classify_sample(y: &DVector<f64>, pair: &DictionaryPair) -> Result<usize> {
    check_dim(pair.dim(), y.len())?;
    Ok(pair.predict(y.as_view()))
}

/// Labels of every column of `y`.
pub fn predict_all<C: Classifier + ?Sized>(classifier: &C, y: &DMatrix<f64>) -> Result<Vec<usize>> {
    check_dim(classifier.dim(), y.nrows())?;
    Ok(y.column_iter()
        .map(|col| classifier.predict(col.into()))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[i][j]`: samples of true class `i+1` predicted as `j+1`.
    pub confusion: Vec<Vec<usize>>,
    /// `NaN` for classes absent from the test set.
    pub per_class_accuracy: Vec<f64>,
}

impl EvalReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t == 0 || t > classes {
                return Err(Error::InvalidLabels(format!(
                    "label {t} outside the model's {classes} classes"
                )));
            }
            confusion[t - 1][p - 1] += 1;
        }
        let correct: usize = (0..classes).map(|i| confusion[i][i]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    f64::NAN
                } else {
                    row[i] as f64 / total as f64
                }
            })
            .collect();
        Ok(Self {
            accuracy: correct as f64 / truth.len().max(1) as f64,
            confusion,
            per_class_accuracy,
        })
    }

    /// `accuracy,<value>`, a header row, then one confusion row per class.
    pub fn to_csv(&self) -> String {
        let c = self.confusion.len();
        let mut out = format!("accuracy,{:.6}\n", self.accuracy);
        let header: Vec<String> = (1..=c).map(|j| format!("pred_{j}")).collect();
        out.push_str(&format!("true,{}\n", header.join(",")));
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&format!("{},{}\n", i + 1, cells.join(",")));
        }
        out
    }
}

/// Accuracy and confusion of any classifier on a labeled test set.
pub fn evaluate_with<C: Classifier + ?Sized>(classifier: &C, test: &LabeledDataset) -> Result<EvalReport> {
    let predicted = predict_all(classifier, test.x())?;
    EvalReport::from_predictions(test.labels(), &predicted, classifier.num_classes())
}

pub fn evaluate(test: &LabeledDataset, pair: &DictionaryPair) -> Result<EvalReport> {
    evaluate_with(pair, test)
}
