use nalgebra::DMatrix;

use crate::{Error, Result};

/// Denominator/numerator coefficients of the [13/13] Padé approximant to `exp`.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// 1-norm bound below which the [13/13] approximant is accurate to unit roundoff.
const THETA13: f64 = 5.371920351148152;

/// More squarings than this means the input is too large to exponentiate in f64.
const MAX_SQUARINGS: i32 = 1100;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring with the diagonal Padé approximant of order 13.
pub fn dense_expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("input matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = norm1(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > MAX_SQUARINGS {
        return Err(Error::Overflow(format!("1-norm {norm:e} needs {squarings} squarings")));
    }
    let scaled = a * 2f64.powi(-squarings);

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Overflow("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow(format!("result overflowed (input 1-norm {norm:e})")));
    }
    Ok(result)
}

/// `phi_1(A) = A^{-1} (exp(A) - I)`, read off the upper-right block of
/// `exp([[A, I], [0, 0]])`; well defined for singular `A`.
pub fn dense_phi1(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let mut aug = DMatrix::<f64>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let e = dense_expm(&aug)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}
