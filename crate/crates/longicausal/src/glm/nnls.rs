use super::linalg::solve_dense;
use super::Scalar;

/// Minimizes `||y - Z a||^2` subject to `a >= 0`, `sum(a) = 1` (stacking
/// weights on the probability simplex).
///
/// Active-set method: solve the equality-constrained problem on the current
/// support via its KKT system, step back to feasibility dropping the blocking
/// coordinate when needed, and add the most KKT-violating zero coordinate
/// until stationarity (tolerance 1e-8 on the scaled KKT residual).
///
/// `z` is row-major `n x k`.
pub fn nnls_simplex<F: Scalar>(z: &[F], y: &[F], n: usize, k: usize) -> Vec<F> {
    assert_eq!(z.len(), n * k);
    assert_eq!(y.len(), n);
    assert!(k >= 1);
    if k == 1 {
        return vec![F::one()];
    }
    // Gram matrix and projection, scaled by 1/n for conditioning.
    let nf = F::c(n as f64);
    let mut g = vec![F::zero(); k * k];
    let mut c = vec![F::zero(); k];
    for i in 0..n {
        let row = &z[i * k..(i + 1) * k];
        for a in 0..k {
            c[a] += row[a] * y[i] / nf;
            for b in a..k {
                g[a * k + b] += row[a] * row[b] / nf;
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[a * k + b] = g[b * k + a];
        }
    }
    let scale = (0..k)
        .map(|a| g[a * k + a])
        .fold(F::zero(), |m, v| m.max(v))
        .max(F::one());
    let ridge = scale * F::c(1e-12);

    let solve_support = |support: &[usize]| -> Option<Vec<F>> {
        // KKT: [2G_S  1; 1' 0] [a; l] = [2c_S; 1]
        let m = support.len() + 1;
        let mut a = vec![F::zero(); m * m];
        let mut b = vec![F::zero(); m];
        for (i, &si) in support.iter().enumerate() {
            for (j, &sj) in support.iter().enumerate() {
                a[i * m + j] = F::c(2.0) * g[si * k + sj];
                if i == j {
                    a[i * m + j] += ridge;
                }
            }
            a[i * m + support.len()] = F::one();
            a[support.len() * m + i] = F::one();
            b[i] = F::c(2.0) * c[si];
        }
        b[support.len()] = F::one();
        solve_dense(&mut a, &mut b, m)
    };

    let mut support: Vec<usize> = (0..k).collect();
    let mut alpha = vec![F::one() / F::c(k as f64); k];
    let feas_tol = F::c(1e-12);
    for _ in 0..(20 * k + 40) {
        let sol = match solve_support(&support) {
            Some(s) => s,
            None => break,
        };
        let trial: Vec<F> = sol[..support.len()].to_vec();
        if trial.iter().all(|&v| v >= -feas_tol) {
            let mut next = vec![F::zero(); k];
            for (i, &s) in support.iter().enumerate() {
                next[s] = trial[i].max(F::zero());
            }
            alpha = next;
            // KKT check for the zero coordinates: gradient must not be below
            // the support multiplier.
            let grad: Vec<F> = (0..k)
                .map(|a| {
                    let mut s = -F::c(2.0) * c[a];
                    for b in 0..k {
                        s += F::c(2.0) * g[a * k + b] * alpha[b];
                    }
                    s
                })
                .collect();
            let lambda = sol[support.len()];
            let tol = F::c(1e-8) * scale.max(F::one());
            let mut worst: Option<(usize, F)> = None;
            for a in 0..k {
                if support.contains(&a) {
                    continue;
                }
                let viol = -(grad[a] + lambda);
                if viol > tol && worst.map_or(true, |(_, w)| viol > w) {
                    worst = Some((a, viol));
                }
            }
            match worst {
                Some((a, _)) => support.push(a),
                None => break,
            }
        } else {
            // Step from the previous feasible point toward the trial until the
            // first coordinate hits zero; drop it from the support.
            let mut theta = F::one();
            let mut drop_idx = None;
            for (i, &s) in support.iter().enumerate() {
                if trial[i] < -feas_tol {
                    let t = alpha[s] / (alpha[s] - trial[i]);
                    if t < theta {
                        theta = t;
                        drop_idx = Some(i);
                    }
                }
            }
            for (i, &s) in support.iter().enumerate() {
                alpha[s] = alpha[s] + theta * (trial[i] - alpha[s]);
            }
            if let Some(i) = drop_idx {
                alpha[support[i]] = F::zero();
                support.remove(i);
            } else {
                break;
            }
            if support.is_empty() {
                // Degenerate; fall back to the best single vertex.
                let best = (0..k)
                    .min_by(|&a, &b| {
                        let ra = g[a * k + a] - F::c(2.0) * c[a];
                        let rb = g[b * k + b] - F::c(2.0) * c[b];
                        ra.partial_cmp(&rb).unwrap()
                    })
                    .unwrap();
                let mut out = vec![F::zero(); k];
                out[best] = F::one();
                return out;
            }
        }
    }
    // Exact simplex normalization.
    for v in alpha.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    let s: F = alpha.iter().copied().sum();
    if s > F::zero() {
        for v in alpha.iter_mut() {
            *v = *v / s;
        }
    } else {
        alpha = vec![F::one() / F::c(k as f64); k];
    }
    alpha
}
