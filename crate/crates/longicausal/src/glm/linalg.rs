use super::Scalar;

/// Accumulates the upper triangle of `X'WX` and the vector `X'Wz` from a
/// row-major design matrix. Zero-weight rows are skipped.
pub fn xtwx_xtwz<F: Scalar>(
    x: &[F],
    n: usize,
    p: usize,
    w: &[F],
    z: &[F],
    xtx: &mut [F],
    xtz: &mut [F],
) {
    for v in xtx.iter_mut() {
        *v = F::zero();
    }
    for v in xtz.iter_mut() {
        *v = F::zero();
    }
    for i in 0..n {
        let wi = w[i];
        if wi == F::zero() {
            continue;
        }
        let row = &x[i * p..(i + 1) * p];
        let wz = wi * z[i];
        for j in 0..p {
            let xj = row[j];
            if xj == F::zero() {
                continue;
            }
            xtz[j] += xj * wz;
            let xw = xj * wi;
            let dst = &mut xtx[j * p..(j + 1) * p];
            for k in j..p {
                dst[k] += xw * row[k];
            }
        }
    }
}

/// Solves the normal equations from the upper triangle of `X'WX`, dropping
/// linearly dependent columns greedily left-to-right (first occurrence kept).
///
/// Returns the coefficient vector over the kept columns together with the
/// kept column indices. A column is treated as aliased when its Cholesky
/// pivot falls below `tol` times its original diagonal entry.
pub fn solve_alias<F: Scalar>(
    xtx: &[F],
    xtz: &[F],
    p: usize,
    tol: F,
) -> (Vec<F>, Vec<usize>) {
    // Incremental Cholesky: for each candidate column, compute its factor row
    // against the already-kept columns; accept only if the pivot is healthy.
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut l: Vec<Vec<F>> = Vec::with_capacity(p); // rows of the lower factor
    for j in 0..p {
        let diag = xtx[j * p + j];
        let floor = if diag > F::zero() {
            diag * tol
        } else {
            F::min_value().max(F::c(1e-300))
        };
        let mut row = Vec::with_capacity(kept.len() + 1);
        let mut acc = F::zero();
        let mut ok = true;
        for (m, &km) in kept.iter().enumerate() {
            // Upper-triangle lookup for (min, max) index pair.
            let a = if km <= j {
                xtx[km * p + j]
            } else {
                xtx[j * p + km]
            };
            let mut s = a;
            for t in 0..m {
                s = s - row[t] * l[m][t];
            }
            let v = s / l[m][m];
            if !v.is_finite() {
                ok = false;
                break;
            }
            acc += v * v;
            row.push(v);
        }
        if !ok {
            continue;
        }
        let d = diag - acc;
        if d <= floor || !d.is_finite() {
            continue; // aliased
        }
        row.push(d.sqrt());
        kept.push(j);
        l.push(row);
    }
    // Forward/backward substitution on the kept system.
    let k = kept.len();
    let mut y = vec![F::zero(); k];
    for m in 0..k {
        let mut s = xtz[kept[m]];
        for t in 0..m {
            s = s - l[m][t] * y[t];
        }
        y[m] = s / l[m][m];
    }
    let mut b = vec![F::zero(); k];
    for m in (0..k).rev() {
        let mut s = y[m];
        for t in (m + 1)..k {
            s = s - l[t][m] * b[t];
        }
        b[m] = s / l[m][m];
    }
    (b, kept)
}

/// Solves a small dense symmetric-indefinite system by Gaussian elimination
/// with partial pivoting (used for the simplex-constrained KKT systems).
/// Returns `None` when the system is numerically singular.
pub fn solve_dense<F: Scalar>(a: &mut [F], b: &mut [F], n: usize) -> Option<Vec<F>> {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in (col + 1)..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > F::c(1e-300)) {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            if f == F::zero() {
                continue;
            }
            for c in col..n {
                let v = a[col * n + c];
                a[r * n + c] = a[r * n + c] - f * v;
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![F::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in (r + 1)..n {
            s = s - a[r * n + c] * x[c];
        }
        x[r] = s / a[r * n + r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_ols() {
        // X = [1 x], y = 1 + 2x, exact.
        let xs = [0.0, 1.0, 2.0, 3.0];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &v in &xs {
            x.extend_from_slice(&[1.0, v]);
            y.push(1.0 + 2.0 * v);
        }
        let w = vec![1.0; 4];
        let mut xtx = vec![0.0f64; 4];
        let mut xtz = vec![0.0; 2];
        xtwx_xtwz(&x, 4, 2, &w, &y, &mut xtx, &mut xtz);
        let (b, kept) = solve_alias(&xtx, &xtz, 2, 1e-10);
        assert_eq!(kept, vec![0, 1]);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn drops_duplicate_column() {
        // Columns: intercept, x, x (duplicate) — third must be aliased.
        let xs = [0.0, 1.0, 2.0, 5.0];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &v in &xs {
            x.extend_from_slice(&[1.0, v, v]);
            y.push(3.0 - v);
        }
        let w = vec![1.0; 4];
        let mut xtx = vec![0.0f64; 9];
        let mut xtz = vec![0.0; 3];
        xtwx_xtwz(&x, 4, 3, &w, &y, &mut xtx, &mut xtz);
        let (b, kept) = solve_alias(&xtx, &xtz, 3, 1e-10);
        assert_eq!(kept, vec![0, 1]);
        assert!((b[0] - 3.0).abs() < 1e-12 && (b[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_solver_roundtrip() {
        let mut a = vec![2.0f64, 1.0, 1.0, 3.0];
        let mut b = vec![5.0, 10.0];
        let x = solve_dense(&mut a, &mut b, 2).unwrap();
        assert!((2.0 * x[0] + x[1] - 5.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 10.0).abs() < 1e-12);
    }
}
