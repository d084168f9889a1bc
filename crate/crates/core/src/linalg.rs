//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::ComplexField;

use crate::{CMatrix, Error, Result, C64};

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entry of `|A^H A - I|`.
pub fn semi_unitary_defect(m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    let mut worst = 0.0_f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    worst
}

/// Returns a matrix with `cols` orthonormal columns whose leading columns span
/// the same space as the well-conditioned leading columns of `m`.
///
/// Columns that are (numerically) dependent on earlier ones are replaced by
/// standard basis vectors orthogonalized against everything kept so far.
pub fn orthonormal_completion(m: &CMatrix, cols: usize) -> CMatrix {
    let n = m.nrows();
    assert!(cols <= n, "cannot fit {cols} orthonormal columns in C^{n}");
    let mut basis: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(cols);
    let candidates = (0..m.ncols()).map(|j| m.column(j).into_owned()).chain((0..n).map(|k| {
        let mut e = nalgebra::DVector::<C64>::zeros(n);
        e[k] = C64::new(1.0, 0.0);
        e
    }));
    for mut v in candidates {
        if basis.len() == cols {
            break;
        }
        let original = v.norm();
        if original == 0.0 {
            continue;
        }
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v.axpy(-proj, b, C64::new(1.0, 0.0));
            }
        }
        let residual = v.norm();
        if residual > 1e-8 * original {
            basis.push(v.unscale(residual));
        }
    }
    CMatrix::from_columns(&basis)
}

/// `log2 det(G)` for a Hermitian positive-definite `G`.
///
/// Hermitian defects up to `1e-8` (relative to the largest entry) are
/// symmetrized away; anything larger is reported as a numerical error.
pub fn hermitian_log2_det(mut g: CMatrix) -> Result<f64> {
    if !g.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "log-det of a {}x{} matrix",
            g.nrows(),
            g.ncols()
        )));
    }
    let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let n = g.nrows();
    let mut defect = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            defect = defect.max((g[(i, j)] - g[(j, i)].conj()).norm());
        }
    }
    if defect > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "log-det input is not Hermitian (defect {defect:.3e})"
        )));
    }
    for j in 0..n {
        for i in 0..j {
            let avg = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
            g[(i, j)] = avg;
            g[(j, i)] = avg.conj();
        }
        g[(j, j)] = C64::new(g[(j, j)].re, 0.0);
    }
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numerical("log-det input is not positive definite".into()))?;
    let l = chol.l_dirty();
    Ok((0..n).map(|i| 2.0 * l[(i, i)].real().log2()).sum())
}
