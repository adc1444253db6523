//! Dataset ingestion, per-class partitioning and synthetic fixtures.
//!
//! Samples are the columns of a dense `n × N` matrix. Class labels are
//! 1-based (`1..=c`) everywhere they cross an API or file boundary; internally
//! class `l` lives at index `l - 1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const MIN_COLUMN_NORM: f64 = 1e-12;

/// Samples as columns plus integer labels, partitioned by class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: DMatrix<f64>,
    labels: Vec<usize>,
    per_class: Vec<Vec<usize>>,
}

impl LabeledDataset {
    /// Partitions the columns of `x` by label. Labels must cover `1..=c` with
    /// every class present.
    pub fn new(x: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        partition_by_class(x, labels)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Column indices (0-based) of each class, in original order.
    pub fn per_class(&self) -> &[Vec<usize>] {
        &self.per_class
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.per_class[class].len()
    }

    /// `X_l`: the columns of class index `class` (0-based).
    pub fn class_block(&self, class: usize) -> DMatrix<f64> {
        self.x.select_columns(&self.per_class[class])
    }

    /// `X̄_l`: every column not in class index `class`; `n × 0` for one class.
    pub fn complement_block(&self, class: usize) -> DMatrix<f64> {
        let cols: Vec<usize> = (0..self.len())
            .filter(|&j| self.labels[j] != class + 1)
            .collect();
        self.x.select_columns(&cols)
    }

    /// Same labels, new feature matrix (e.g. after projection).
    pub fn with_features(&self, x: DMatrix<f64>) -> Result<Self> {
        if x.ncols() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: x.ncols(),
            });
        }
        Ok(Self {
            x,
            labels: self.labels.clone(),
            per_class: self.per_class.clone(),
        })
    }

    fn subset(&self, columns: &[usize]) -> Result<Self> {
        let labels = columns.iter().map(|&j| self.labels[j]).collect();
        partition_by_class(self.x.select_columns(columns), labels)
    }
}

/// Groups columns by label, keeping original order within each class.
pub fn partition_by_class(x: DMatrix<f64>, labels: Vec<usize>) -> Result<LabeledDataset> {
    if labels.len() != x.ncols() {
        return Err(Error::InvalidLabels(format!(
            "{} labels for {} samples",
            labels.len(),
            x.ncols()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidLabels("no samples".into()));
    }
    if let Some(pos) = labels.iter().position(|&l| l == 0) {
        return Err(Error::InvalidLabels(format!(
            "label 0 at sample {pos}; labels are 1-based"
        )));
    }
    let classes = *labels.iter().max().expect("nonempty");
    let mut per_class = vec![Vec::new(); classes];
    for (j, &l) in labels.iter().enumerate() {
        per_class[l - 1].push(j);
    }
    if let Some(empty) = per_class.iter().position(Vec::is_empty) {
        return Err(Error::InvalidLabels(format!(
            "class {} has no samples (labels must cover 1..={classes})",
            empty + 1
        )));
    }
    Ok(LabeledDataset {
        x,
        labels,
        per_class,
    })
}

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses the dense text format: a `rows cols` header line followed by
/// `rows × cols` whitespace-separated values in row-major order.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let header = lines
        .by_ref()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::BadHeader("empty input".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::BadHeader(format!(
            "expected `rows cols`, got {header:?}"
        )));
    }
    let parse_dim = |s: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::BadHeader(format!(
                "dimension {s:?} is not a positive integer"
            ))),
        }
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);

    let mut values = Vec::with_capacity(rows * cols);
    for (position, token) in lines.flat_map(str::split_whitespace).enumerate() {
        let v = token.parse::<f64>().map_err(|_| Error::NonNumeric {
            token: token.to_string(),
            position,
        })?;
        values.push(v);
    }
    if values.len() != rows * cols {
        return Err(Error::ValueCount {
            expected: rows * cols,
            found: values.len(),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix(&read_file(path.as_ref())?)
}

/// Renders a matrix in the dense text format with 17 significant digits,
/// which round-trips every finite `f64` exactly.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_text(path.as_ref(), &format_matrix(m))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// One integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let text = read_file(path.as_ref())?;
    text.split_whitespace()
        .enumerate()
        .map(|(position, tok)| {
            tok.parse::<usize>().map_err(|_| Error::NonNumeric {
                token: tok.to_string(),
                position,
            })
        })
        .collect()
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_text(path.as_ref(), &text)
}

/// Loads a matrix/labels pair and partitions it.
pub fn load_dataset(matrix: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    partition_by_class(load_matrix(matrix)?, load_labels(labels)?)
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_unit_l2(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm < MIN_COLUMN_NORM {
            return Err(Error::ZeroColumn(j));
        }
        col /= norm;
    }
    Ok(out)
}

/// `d × n` Gaussian projection with each row scaled to unit norm.
pub fn projection_matrix(d: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::InvalidParameter("projection dimension must be ≥ 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("input dimension must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Filled row by row so the draw order does not depend on storage order.
    let mut r = DMatrix::from_fn(d, n, |_, _| 0.0);
    for i in 0..d {
        for j in 0..n {
            r[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    for mut row in r.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    Ok(r)
}

/// Random-feature projection `R·X` with `R` from [`projection_matrix`].
pub fn random_projection_features(x: &DMatrix<f64>, d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if x.is_empty() {
        return Err(Error::InvalidParameter("empty input matrix".into()));
    }
    Ok(projection_matrix(d, x.nrows(), seed)? * x)
}

/// Parameters of [`make_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub noise_sigma: f64,
    pub corrupt_frac: f64,
    pub seed: u64,
}

/// Gaussian class clusters around orthonormal means scaled by
/// `5·noise_sigma + 1`, with an exact `corrupt_frac` share of entries
/// replaced by uniform outliers in `[-3, 3]`. Columns are ordered class by
/// class.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    let SyntheticSpec {
        classes,
        dim,
        per_class,
        noise_sigma,
        corrupt_frac,
        seed,
    } = *spec;
    if classes < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    if dim < classes {
        return Err(Error::InvalidParameter(format!(
            "dimension {dim} smaller than class count {classes}"
        )));
    }
    if per_class < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples per class".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma}")));
    }
    if !(0.0..=1.0).contains(&corrupt_frac) {
        return Err(Error::InvalidParameter(format!(
            "corrupt fraction {corrupt_frac} outside [0, 1]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = orthonormal_columns(dim, classes, &mut rng) * (5.0 * noise_sigma + 1.0);

    let total = classes * per_class;
    let mut x = DMatrix::zeros(dim, total);
    let mut labels = Vec::with_capacity(total);
    for l in 0..classes {
        for s in 0..per_class {
            let j = l * per_class + s;
            for i in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                x[(i, j)] = means[(i, l)] + noise_sigma * noise;
            }
            labels.push(l + 1);
        }
    }

    let entries = dim * total;
    let corrupted = (corrupt_frac * entries as f64).round() as usize;
    for flat in sample(&mut rng, entries, corrupted).into_iter() {
        // Flat index is column-major, matching nalgebra storage.
        x[(flat % dim, flat / dim)] = rng.random_range(-3.0..=3.0);
    }

    partition_by_class(x, labels)
}

fn orthonormal_columns(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(n, k);
    let mut j = 0;
    while j < k {
        let mut v: nalgebra::DVector<f64> =
            nalgebra::DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        for prev in 0..j {
            let qp = q.column(prev).clone_owned();
            let proj = qp.dot(&v);
            v -= qp * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            q.set_column(j, &(v / norm));
            j += 1;
        }
    }
    q
}

/// Seeded per-class split: exactly `train_per_class` columns of each class go
/// to the training set, the rest to the test set. Both keep original column
/// order.
pub fn split(
    ds: &LabeledDataset,
    train_per_class: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_idx, test_idx) = split_indices(ds, train_per_class, seed)?;
    Ok((ds.subset(&train_idx)?, ds.subset(&test_idx)?))
}

/// Column indices of the split produced by [`split`].
pub fn split_indices(
    ds: &LabeledDataset,
    train_per_class: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if train_per_class == 0 {
        return Err(Error::InvalidParameter("train_per_class must be ≥ 1".into()));
    }
    if let Some(l) = ds
        .per_class()
        .iter()
        .position(|c| c.len() <= train_per_class)
    {
        return Err(Error::InvalidParameter(format!(
            "class {} has {} samples; cannot hold out any with {train_per_class} for training",
            l + 1,
            ds.class_size(l)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; ds.len()];
    for cols in ds.per_class() {
        for pick in sample(&mut rng, cols.len(), train_per_class).into_iter() {
            in_train[cols[pick]] = true;
        }
    }
    let train = (0..ds.len()).filter(|&j| in_train[j]).collect();
    let test = (0..ds.len()).filter(|&j| !in_train[j]).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_single_entry() {
        let m = parse_matrix("1 1\n2.5").unwrap();
        assert_eq!(m, DMatrix::from_element(1, 1, 2.5));
    }

    #[test]
    fn parse_identity() {
        let m = parse_matrix("2 2\n1 0\n0 1").unwrap();
        assert_eq!(m, DMatrix::identity(2, 2));
    }

    #[test]
    fn parse_errors_are_distinct() {
        assert!(matches!(
            parse_matrix("2 2\n1 0 0"),
            Err(Error::ValueCount { expected: 4, found: 3 })
        ));
        assert!(matches!(
            parse_matrix("1 2\n1 x"),
            Err(Error::NonNumeric { position: 1, .. })
        ));
        assert!(matches!(parse_matrix("2\n1 2"), Err(Error::BadHeader(_))));
        assert!(matches!(parse_matrix("0 2\n"), Err(Error::BadHeader(_))));
        assert!(matches!(
            load_matrix("/nonexistent/radpl.mat"),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn comma_decimal_is_rejected() {
        assert!(matches!(
            parse_matrix("1 1\n2,5"),
            Err(Error::NonNumeric { .. })
        ));
    }

    #[test]
    fn normalize_345() {
        let x = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let y = normalize_unit_l2(&x).unwrap();
        assert!((y[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((y[(1, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(normalize_unit_l2(&y).unwrap(), y);
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let x = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(normalize_unit_l2(&x), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn projection_of_identity_is_projection_matrix() {
        let r = projection_matrix(2, 4, 11).unwrap();
        let out = random_projection_features(&DMatrix::identity(4, 4), 2, 11).unwrap();
        assert_eq!(out, r);
        for row in out.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
        assert!(projection_matrix(0, 4, 1).is_err());
    }

    #[test]
    fn partition_keeps_order() {
        let x = DMatrix::from_row_slice(1, 3, &[10.0, 20.0, 30.0]);
        let ds = partition_by_class(x, vec![1, 2, 1]).unwrap();
        assert_eq!(ds.per_class(), &[vec![0, 2], vec![1]]);
        assert_eq!(ds.class_block(0), DMatrix::from_row_slice(1, 2, &[10.0, 30.0]));
        assert_eq!(ds.complement_block(0), DMatrix::from_row_slice(1, 1, &[20.0]));
    }

    #[test]
    fn single_class_complement_is_empty() {
        let ds = partition_by_class(DMatrix::zeros(3, 2), vec![1, 1]).unwrap();
        let xbar = ds.complement_block(0);
        assert_eq!((xbar.nrows(), xbar.ncols()), (3, 0));
    }

    #[test]
    fn partition_errors() {
        let x = DMatrix::zeros(1, 3);
        assert!(partition_by_class(x.clone(), vec![1, 3, 1]).is_err());
        assert!(partition_by_class(x.clone(), vec![0, 1, 1]).is_err());
        assert!(partition_by_class(x, vec![1, 1]).is_err());
    }

    fn spec(noise: f64, corrupt: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes: 2,
            dim: 10,
            per_class: 50,
            noise_sigma: noise,
            corrupt_frac: corrupt,
            seed: 3,
        }
    }

    #[test]
    fn zero_noise_collapses_classes() {
        let ds = make_synthetic(&spec(0.0, 0.0)).unwrap();
        for l in 0..2 {
            let block = ds.class_block(l);
            for j in 1..block.ncols() {
                assert_eq!(block.column(j), block.column(0));
            }
        }
    }

    #[test]
    fn corruption_count_is_exact() {
        // With zero noise every uncorrupted entry equals its class mean, so
        // replacements can be counted directly.
        let clean = make_synthetic(&spec(0.0, 0.0)).unwrap();
        let dirty = make_synthetic(&spec(0.0, 0.1)).unwrap();
        let changed = clean
            .x()
            .iter()
            .zip(dirty.x().iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 100);
        assert!(dirty.x().iter().all(|v| v.abs() <= 3.0));
    }

    #[test]
    fn synthetic_parameter_checks() {
        let mut s = spec(0.1, 0.0);
        s.classes = 1;
        assert!(make_synthetic(&s).is_err());
        let mut s = spec(0.1, 0.0);
        s.dim = 1;
        assert!(make_synthetic(&s).is_err());
        let mut s = spec(0.1, 0.0);
        s.per_class = 1;
        assert!(make_synthetic(&s).is_err());
        assert!(make_synthetic(&spec(0.1, 1.5)).is_err());
        assert!(make_synthetic(&spec(-1.0, 0.0)).is_err());
    }

    #[test]
    fn split_counts() {
        let ds = partition_by_class(DMatrix::zeros(2, 8), vec![1, 1, 1, 1, 2, 2, 2, 2]).unwrap();
        let (train, test) = split(&ds, 2, 5).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 4);
        assert!(split(&ds, 4, 5).is_err());
        assert!(split(&ds, 0, 5).is_err());
    }
}
