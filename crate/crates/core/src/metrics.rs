//! Reconstruction error, PSNR, atom correlation maps and block-diagonal
//! energy of code matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::DictionaryPair;

/// `D (P Y)` with the assembled dictionaries.
pub fn reconstruct(y: &DMatrix<f64>, pair: &DictionaryPair) -> Result<DMatrix<f64>> {
    if y.nrows() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            found: y.nrows(),
        });
    }
    let codes = pair.assembled_analysis() * y;
    Ok(pair.assembled_synthesis() * codes)
}

/// `‖Y − D P Y‖_F`.
pub fn reconstruction_error(y: &DMatrix<f64>, pair: &DictionaryPair) -> Result<f64> {
    Ok((y - reconstruct(y, pair)?).norm())
}

/// `20·log10(max|Y| / RMSE)` in dB; `+∞` when the reconstruction is exact.
pub fn psnr(y: &DMatrix<f64>, recon: &DMatrix<f64>) -> Result<f64> {
    if y.shape() != recon.shape() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: recon.len(),
        });
    }
    let peak = y.amax();
    if peak == 0.0 || y.is_empty() {
        return Err(Error::Undefined("PSNR peak of an all-zero matrix".into()));
    }
    let rmse = (y - recon).norm() / (y.len() as f64).sqrt();
    if rmse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / rmse).log10())
}

/// Renders a PSNR value; the exact-match sentinel prints as `inf`.
pub fn format_psnr(value: f64) -> String {
    if value == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{value:.6}")
    }
}

/// `|Pearson correlation|` between every pair of atoms (columns). A constant
/// atom has correlation 0 with every other atom and 1 with itself.
pub fn atom_similarity(d: &DMatrix<f64>) -> DMatrix<f64> {
    let k = d.ncols();
    let centered: Vec<_> = d
        .column_iter()
        .map(|c| {
            let mean = c.mean();
            let v = c.map(|x| x - mean);
            let norm = v.norm();
            let scale = c.amax().max(1.0);
            (v, norm, norm <= 1e-12 * scale)
        })
        .collect();
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            return 1.0;
        }
        let (a, na, ca) = &centered[i];
        let (b, nb, cb) = &centered[j];
        if *ca || *cb {
            0.0
        } else {
            (a.dot(b) / (na * nb)).abs().min(1.0)
        }
    })
}

/// Plain-text PGM (`P2`, maxval 255) with `round(255·value)` per pixel.
pub fn to_pgm(m: &DMatrix<f64>) -> String {
    let mut out = format!("P2\n{} {}\n255\n", m.ncols(), m.nrows());
    for row in m.row_iter() {
        let px: Vec<String> = row
            .iter()
            .map(|&v| ((255.0 * v.clamp(0.0, 1.0)).round() as u32).to_string())
            .collect();
        out.push_str(&px.join(" "));
        out.push('\n');
    }
    out
}

pub fn to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Share of squared energy in entries whose row block class equals the
/// column's class. `row_classes` and `column_labels` use the same class
/// numbering.
pub fn block_diagonal_energy(
    m: &DMatrix<f64>,
    row_classes: &[usize],
    column_labels: &[usize],
) -> Result<f64> {
    if row_classes.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: row_classes.len(),
        });
    }
    if column_labels.len() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.ncols(),
            found: column_labels.len(),
        });
    }
    let mut on = 0.0;
    let mut total = 0.0;
    for (j, col) in m.column_iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            let e = v * v;
            total += e;
            if row_classes[i] == column_labels[j] {
                on += e;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::Undefined("block energy of an all-zero matrix".into()));
    }
    Ok(on / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_pair(n: usize) -> DictionaryPair {
        DictionaryPair::new(vec![DMatrix::identity(n, n)], vec![DMatrix::identity(n, n)]).unwrap()
    }

    #[test]
    fn reconstruction_trivial() {
        let y = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(reconstruction_error(&y, &identity_pair(2)).unwrap(), 0.0);
        let zero = DictionaryPair::new(vec![DMatrix::zeros(2, 1)], vec![DMatrix::zeros(1, 2)]).unwrap();
        assert_eq!(reconstruction_error(&y, &zero).unwrap(), 5.0);
        assert!(reconstruction_error(&DMatrix::zeros(3, 1), &zero).is_err());
    }

    #[test]
    fn psnr_cases() {
        let y = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(psnr(&y, &y).unwrap(), f64::INFINITY);
        assert_eq!(format_psnr(f64::INFINITY), "inf");
        assert_eq!(psnr(&y, &DMatrix::zeros(1, 1)).unwrap(), 0.0);
        assert!(psnr(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn similarity_of_affine_and_hand_pair() {
        let d = DMatrix::from_column_slice(3, 2, &[1.0, -1.0, 0.0, 3.0, -1.0, 1.0]);
        let s = atom_similarity(&d);
        assert!((s[(0, 1)] - 1.0).abs() < 1e-12);

        // (1,-1,0) vs (1,1,-2)·4: centered dot is 0, so this pair is
        // uncorrelated; (1,-1,0) vs (1,0,-1): cov = 1, var = 2 each → 0.5.
        let d = DMatrix::from_column_slice(3, 3, &[1.0, -1.0, 0.0, 4.0, 4.0, -8.0, 1.0, 0.0, -1.0]);
        let s = atom_similarity(&d);
        assert!(s[(0, 1)].abs() < 1e-12);
        assert!((s[(0, 2)] - 0.5).abs() < 1e-12);
        assert_eq!(s, s.transpose());
        assert!(s.diagonal().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_atom_convention() {
        let d = DMatrix::from_column_slice(3, 2, &[2.0, 2.0, 2.0, 1.0, 0.0, 5.0]);
        let s = atom_similarity(&d);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn pgm_header() {
        let pgm = to_pgm(&DMatrix::from_row_slice(1, 2, &[1.0, 0.5]));
        assert_eq!(pgm, "P2\n2 1\n255\n255 128\n");
    }

    #[test]
    fn block_energy_extremes() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(block_diagonal_energy(&m, &[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(block_diagonal_energy(&m, &[1, 2], &[2, 1]).unwrap(), 0.0);
        assert!(block_diagonal_energy(&DMatrix::zeros(2, 2), &[1, 2], &[1, 2]).is_err());
    }
}
