//! Model state: the dictionary pair, training-time coding/weight/reweight
//! blocks, hyperparameters, seeded initialization and the model file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{format_matrix, parse_matrix, write_text, LabeledDataset};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "RADPL v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Weight of the complement-suppression and analysis-sparsity terms.
    pub alpha: f64,
    /// Weight of the adaptive locality (reconstruction weight) terms.
    pub beta: f64,
    /// Weight of the discriminating mean terms.
    pub lambda: f64,
    /// Smoothing added to l2,1 derivative denominators and to the D solve.
    pub tau: f64,
    pub atoms_per_class: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        let (alpha, beta, lambda) = Preset::Yaleb.triple();
        Self {
            alpha,
            beta,
            lambda,
            tau: 1e-6,
            atoms_per_class: 5,
            max_iter: 30,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be ≥ 0, got {v}")))
            }
        };
        nonneg("alpha", self.alpha)?;
        nonneg("beta", self.beta)?;
        nonneg("lambda", self.lambda)?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.atoms_per_class == 0 {
            return Err(Error::InvalidParameter("atoms per class must be ≥ 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        (self.alpha, self.beta, self.lambda) = preset.triple();
        self
    }

    /// `key=value` pairs in a fixed order; the same rendering is used by the
    /// model file and by `--print-config`.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("lambda", self.lambda.to_string()),
            ("tau", self.tau.to_string()),
            ("atoms", self.atoms_per_class.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("tol", self.tol.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    fn parse_line(line: &str) -> Result<Self> {
        let mut hp = Hyperparams::default();
        let mut seen = 0;
        for pair in line.split_whitespace() {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Truncated(format!("bad hyperparameter token {pair:?}")))?;
            let bad = || Error::NonNumeric {
                token: pair.to_string(),
                position: seen,
            };
            match key {
                "alpha" => hp.alpha = value.parse().map_err(|_| bad())?,
                "beta" => hp.beta = value.parse().map_err(|_| bad())?,
                "lambda" => hp.lambda = value.parse().map_err(|_| bad())?,
                "tau" => hp.tau = value.parse().map_err(|_| bad())?,
                "atoms" => hp.atoms_per_class = value.parse().map_err(|_| bad())?,
                "max_iter" => hp.max_iter = value.parse().map_err(|_| bad())?,
                "tol" => hp.tol = value.parse().map_err(|_| bad())?,
                "seed" => hp.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::Truncated(format!("unknown hyperparameter {key:?}"))),
            }
            seen += 1;
        }
        if seen != 8 {
            return Err(Error::Truncated(format!(
                "hyperparameter line has {seen} of 8 entries"
            )));
        }
        Ok(hp)
    }
}

/// Published `(alpha, beta, lambda)` settings per benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Yaleb,
    Ar,
    Pie,
    Umist,
    Scene15,
    Eth80,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Yaleb,
        Preset::Ar,
        Preset::Pie,
        Preset::Umist,
        Preset::Scene15,
        Preset::Eth80,
    ];

    pub fn triple(self) -> (f64, f64, f64) {
        match self {
            Preset::Yaleb => (1e-4, 0.005, 1e-4),
            Preset::Ar => (5e-5, 1.0, 0.01),
            Preset::Pie => (1e-5, 0.005, 5e-5),
            Preset::Umist => (0.005, 0.05, 5e-5),
            Preset::Scene15 => (5e-5, 5e-5, 5e-5),
            Preset::Eth80 => (10.0, 0.001, 0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Yaleb => "yaleb",
            Preset::Ar => "ar",
            Preset::Pie => "pie",
            Preset::Umist => "umist",
            Preset::Scene15 => "scene15",
            Preset::Eth80 => "eth80",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset {s:?}")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class synthesis blocks `D_l` (`n × k_l`) and analysis blocks `P_l`
/// (`k_l × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPair {
    pub synthesis: Vec<DMatrix<f64>>,
    pub analysis: Vec<DMatrix<f64>>,
}

impl DictionaryPair {
    pub fn new(synthesis: Vec<DMatrix<f64>>, analysis: Vec<DMatrix<f64>>) -> Result<Self> {
        if synthesis.is_empty() || synthesis.len() != analysis.len() {
            return Err(Error::InvalidParameter(format!(
                "{} synthesis blocks vs {} analysis blocks",
                synthesis.len(),
                analysis.len()
            )));
        }
        let n = synthesis[0].nrows();
        for (d, p) in synthesis.iter().zip(&analysis) {
            if d.nrows() != n || p.ncols() != n || d.ncols() != p.nrows() {
                return Err(Error::InvalidParameter(format!(
                    "inconsistent block shapes D {}x{}, P {}x{}",
                    d.nrows(),
                    d.ncols(),
                    p.nrows(),
                    p.ncols()
                )));
            }
        }
        Ok(Self {
            synthesis,
            analysis,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.synthesis.len()
    }

    pub fn dim(&self) -> usize {
        self.synthesis[0].nrows()
    }

    pub fn atoms(&self) -> Vec<usize> {
        self.synthesis.iter().map(|d| d.ncols()).collect()
    }

    pub fn total_atoms(&self) -> usize {
        self.atoms().iter().sum()
    }

    /// `D = [D_1, …, D_c]`, `n × K`.
    pub fn assembled_synthesis(&self) -> DMatrix<f64> {
        let k = self.total_atoms();
        let mut d = DMatrix::zeros(self.dim(), k);
        let mut off = 0;
        for block in &self.synthesis {
            d.columns_mut(off, block.ncols()).copy_from(block);
            off += block.ncols();
        }
        d
    }

    /// `P = [P_1; …; P_c]`, `K × n`.
    pub fn assembled_analysis(&self) -> DMatrix<f64> {
        let k = self.total_atoms();
        let mut p = DMatrix::zeros(k, self.dim());
        let mut off = 0;
        for block in &self.analysis {
            p.rows_mut(off, block.nrows()).copy_from(block);
            off += block.nrows();
        }
        p
    }

    /// Class label (1-based, like dataset labels) of each of the `K` atoms.
    pub fn atom_classes(&self) -> Vec<usize> {
        self.atoms()
            .iter()
            .enumerate()
            .flat_map(|(l, &k)| std::iter::repeat_n(l + 1, k))
            .collect()
    }
}

/// Nonnegative coefficient blocks `S_l` (`k_l × N_l`).
#[derive(Debug, Clone, PartialEq)]
pub struct CodingState {
    pub codes: Vec<DMatrix<f64>>,
}

impl CodingState {
    /// Per-class codes placed into a `K × N` matrix at each sample's original
    /// column; off-block entries are zero.
    pub fn assembled(&self, ds: &LabeledDataset) -> DMatrix<f64> {
        let k: usize = self.codes.iter().map(|s| s.nrows()).sum();
        let mut out = DMatrix::zeros(k, ds.len());
        let mut row = 0;
        for (s, cols) in self.codes.iter().zip(ds.per_class()) {
            for (local, &j) in cols.iter().enumerate() {
                out.view_mut((row, j), (s.nrows(), 1)).copy_from(&s.column(local));
            }
            row += s.nrows();
        }
        out
    }
}

/// Per-class reconstruction weights `W_l` (`N_l × N_l`), zero diagonal.
/// Cross-class blocks are structurally zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub weights: Vec<DMatrix<f64>>,
}

/// Diagonals of the reweighting matrices `H_l` (`n`), `U_l` (`N_l`) and
/// `V_l` (`N_l`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightState {
    pub h: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

impl ReweightState {
    pub fn identity(n: usize, class_sizes: &[usize]) -> Self {
        Self {
            h: class_sizes.iter().map(|_| DVector::from_element(n, 1.0)).collect(),
            u: class_sizes.iter().map(|&m| DVector::from_element(m, 1.0)).collect(),
            v: class_sizes.iter().map(|&m| DVector::from_element(m, 1.0)).collect(),
        }
    }
}

/// Replicated class-mean codes `M_l` and complement-mean codes `M̄_l`,
/// both `k_l × N_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrices {
    pub own: DMatrix<f64>,
    pub other: DMatrix<f64>,
}

/// Everything the alternating solver mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub pair: DictionaryPair,
    pub coding: CodingState,
    pub weights: WeightState,
    pub reweights: ReweightState,
}

fn unit_frobenius(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = m.norm();
    if norm > 0.0 {
        m /= norm;
    }
    m
}

/// Seeded initialization: random unit-Frobenius `D_l`, `P_l`, `S_l` (made
/// nonnegative) and `W_l` (normalized, then diagonal zeroed); identity
/// reweights.
pub fn init_state(ds: &LabeledDataset, hp: &Hyperparams) -> TrainState {
    let n = ds.dim();
    let k = hp.atoms_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let sizes: Vec<usize> = (0..ds.num_classes()).map(|l| ds.class_size(l)).collect();

    let (mut dl, mut pl, mut sl, mut wl) = (vec![], vec![], vec![], vec![]);
    for &nl in &sizes {
        if k > nl {
            log::warn!("{k} atoms per class exceeds class size {nl}");
        }
        dl.push(unit_frobenius(n, k, &mut rng));
        pl.push(unit_frobenius(k, n, &mut rng));
        let mut s = DMatrix::from_fn(k, nl, |_, _| rng.sample::<f64, _>(StandardNormal).abs());
        let norm = s.norm();
        if norm > 0.0 {
            s /= norm;
        }
        sl.push(s);
        let mut w = unit_frobenius(nl, nl, &mut rng);
        w.fill_diagonal(0.0);
        wl.push(w);
    }

    TrainState {
        pair: DictionaryPair {
            synthesis: dl,
            analysis: pl,
        },
        coding: CodingState { codes: sl },
        weights: WeightState { weights: wl },
        reweights: ReweightState::identity(n, &sizes),
    }
}

/// Renders a model: magic line, `c n K`, the `k_l` list, hyperparameters,
/// then `D_1, P_1, …, D_c, P_c` in the dense-matrix format.
pub fn format_model(pair: &DictionaryPair, hp: &Hyperparams) -> String {
    let mut out = String::new();
    out.push_str(MODEL_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "{} {} {}\n",
        pair.num_classes(),
        pair.dim(),
        pair.total_atoms()
    ));
    let ks: Vec<String> = pair.atoms().iter().map(usize::to_string).collect();
    out.push_str(&ks.join(" "));
    out.push('\n');
    let kv: Vec<String> = hp
        .key_values()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    out.push_str(&kv.join(" "));
    out.push('\n');
    for (d, p) in pair.synthesis.iter().zip(&pair.analysis) {
        out.push_str(&format_matrix(d));
        out.push_str(&format_matrix(p));
    }
    out
}

pub fn save_model(path: impl AsRef<Path>, pair: &DictionaryPair, hp: &Hyperparams) -> Result<()> {
    write_text(path.as_ref(), &format_model(pair, hp))
}

pub fn parse_model(text: &str) -> Result<(DictionaryPair, Hyperparams)> {
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::Truncated(format!("missing {what}")))
    };

    let magic = next("magic line")?;
    if magic.trim() != MODEL_MAGIC {
        return Err(Error::Version(magic.to_string()));
    }
    let header: Vec<usize> = parse_usizes(next("shape line")?)?;
    let [c, n, total] = header[..] else {
        return Err(Error::Truncated("shape line must be `c n K`".into()));
    };
    let ks = parse_usizes(next("atom counts")?)?;
    if ks.len() != c || ks.iter().sum::<usize>() != total {
        return Err(Error::Truncated(format!(
            "atom counts {ks:?} inconsistent with c={c}, K={total}"
        )));
    }
    let hp = Hyperparams::parse_line(next("hyperparameter line")?)?;

    let mut synthesis = Vec::with_capacity(c);
    let mut analysis = Vec::with_capacity(c);
    for (l, &k) in ks.iter().enumerate() {
        let d = read_block(&mut next, &format!("D_{}", l + 1))?;
        let p = read_block(&mut next, &format!("P_{}", l + 1))?;
        if d.shape() != (n, k) || p.shape() != (k, n) {
            return Err(Error::Truncated(format!(
                "class {} blocks have shapes {:?} and {:?}",
                l + 1,
                d.shape(),
                p.shape()
            )));
        }
        synthesis.push(d);
        analysis.push(p);
    }
    Ok((DictionaryPair::new(synthesis, analysis)?, hp))
}

fn parse_usizes(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .enumerate()
        .map(|(position, t)| {
            t.parse().map_err(|_| Error::NonNumeric {
                token: t.to_string(),
                position,
            })
        })
        .collect()
}

fn read_block<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    name: &str,
) -> Result<DMatrix<f64>> {
    let header = next(name)?;
    let rows = header
        .split_whitespace()
        .next()
        .and_then(|r| r.parse::<usize>().ok())
        .ok_or_else(|| Error::Truncated(format!("bad header for {name}: {header:?}")))?;
    let mut text = String::from(header);
    text.push('\n');
    for _ in 0..rows {
        text.push_str(next(name)?);
        text.push('\n');
    }
    parse_matrix(&text).map_err(|e| match e {
        Error::ValueCount { .. } => Error::Truncated(format!("{name}: {e}")),
        other => other,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(DictionaryPair, Hyperparams)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}
