use crate::error::Error;
use crate::Result;

use super::frame::Frame;
use super::linalg::{solve_alias, xtwx_xtwz};
use super::Scalar;

/// Model family; all three use the mean parameterization only.
///
/// `QuasiBinomial` is the logit mean model applied to a continuous response in
/// `[0,1]`: point estimates coincide with binomial IRLS, no dispersion
/// inference is done, and no AIC is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Binomial,
    QuasiBinomial,
}

/// Specification of a single GLM fit against a [`Frame`].
#[derive(Debug, Clone)]
pub struct GlmSpec {
    pub family: Family,
    pub response: String,
    pub terms: Vec<String>,
    pub interactions: Vec<(String, String)>,
    pub offset: Option<String>,
    pub weights: Option<String>,
    pub intercept: bool,
}

impl GlmSpec {
    pub fn main_terms(family: Family, response: impl Into<String>, terms: &[String]) -> Self {
        Self {
            family,
            response: response.into(),
            terms: terms.to_vec(),
            interactions: Vec::new(),
            offset: None,
            weights: None,
            intercept: true,
        }
    }
}

/// One design column of a fitted model, remembered for prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesignCol {
    Intercept,
    Term(String),
    Interaction(String, String),
}

impl DesignCol {
    pub fn label(&self) -> String {
        match self {
            DesignCol::Intercept => "(Intercept)".into(),
            DesignCol::Term(t) => t.clone(),
            DesignCol::Interaction(a, b) => format!("{a}:{b}"),
        }
    }
}

/// A fitted GLM. `coefficients` align with `cols`; aliased (linearly
/// dependent) design columns were dropped deterministically left-to-right and
/// are listed in `aliased`.
#[derive(Debug, Clone)]
pub struct GlmFit<F> {
    pub family: Family,
    pub cols: Vec<DesignCol>,
    pub coefficients: Vec<F>,
    pub aliased: Vec<String>,
    pub converged: bool,
    pub n_iter: usize,
    pub n_used: usize,
    pub deviance: F,
    /// Akaike information criterion; `None` for the quasi-likelihood family.
    pub aic: Option<F>,
    /// Heuristic separation flag: some |coefficient| > 15 in a logit fit.
    pub separated: bool,
    pub offset: Option<String>,
}

impl<F: Scalar> GlmFit<F> {
    /// Linear predictor on new data, including the offset column when the fit
    /// used one (the column must then be present in `frame`). Rows with
    /// missing inputs yield `NaN`.
    pub fn linear_predictor(&self, frame: &Frame<F>) -> Result<Vec<F>> {
        let n = frame.n();
        let mut eta = vec![F::zero(); n];
        if let Some(name) = &self.offset {
            let off = frame.require(name)?;
            eta.copy_from_slice(off);
        }
        for (col, &b) in self.cols.iter().zip(&self.coefficients) {
            match col {
                DesignCol::Intercept => {
                    for e in eta.iter_mut() {
                        *e += b;
                    }
                }
                DesignCol::Term(t) => {
                    let c = frame.require(t)?;
                    for (e, &v) in eta.iter_mut().zip(c) {
                        *e += b * v;
                    }
                }
                DesignCol::Interaction(a, bname) => {
                    let ca = frame.require(a)?;
                    let cb = frame.require(bname)?;
                    for i in 0..n {
                        eta[i] += b * ca[i] * cb[i];
                    }
                }
            }
        }
        Ok(eta)
    }

    /// Mean-scale predictions on new data.
    pub fn predict(&self, frame: &Frame<F>) -> Result<Vec<F>> {
        let mut eta = self.linear_predictor(frame)?;
        if self.family != Family::Gaussian {
            for e in eta.iter_mut() {
                *e = expit(*e);
            }
        }
        Ok(eta)
    }
}

#[inline]
pub(crate) fn expit<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub(crate) fn logit<F: Scalar>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

const MAX_ITER: usize = 50;
const ALIAS_TOL: f64 = 1e-10;

/// Fits `spec` on `frame`, optionally restricted to `subset` row indices.
///
/// Rows with a missing response, weight, offset, or design value — or with a
/// zero weight — are dropped from the fit; `n_used` records the remainder.
/// Non-convergence is reported through `converged = false`, not an error.
pub fn fit_glm<F: Scalar>(
    spec: &GlmSpec,
    frame: &Frame<F>,
    subset: Option<&[usize]>,
) -> Result<GlmFit<F>> {
    let y_col = frame.require(&spec.response)?;
    let w_col = match &spec.weights {
        Some(n) => Some(frame.require(n)?),
        None => None,
    };
    let off_col = match &spec.offset {
        Some(n) => Some(frame.require(n)?),
        None => None,
    };
    let mut cols: Vec<DesignCol> = Vec::new();
    if spec.intercept {
        cols.push(DesignCol::Intercept);
    }
    for t in &spec.terms {
        cols.push(DesignCol::Term(t.clone()));
    }
    for (a, b) in &spec.interactions {
        cols.push(DesignCol::Interaction(a.clone(), b.clone()));
    }
    let p = cols.len();
    if p == 0 {
        return Err(Error::Glm("empty design".into()));
    }
    let col_slices: Vec<Option<(&[F], Option<&[F]>)>> = cols
        .iter()
        .map(|c| match c {
            DesignCol::Intercept => None,
            DesignCol::Term(t) => Some((frame.col(t).unwrap_or(&[]), None)),
            DesignCol::Interaction(a, b) => {
                Some((frame.col(a).unwrap_or(&[]), frame.col(b)))
            }
        })
        .collect();
    for (c, s) in cols.iter().zip(&col_slices) {
        if let Some((a, b)) = s {
            if a.len() != frame.n() || matches!(b, Some(bb) if bb.len() != frame.n()) {
                return Err(Error::Glm(format!("missing column in design: {}", c.label())));
            }
        }
    }

    // Materialize used rows.
    let all_rows: Vec<usize>;
    let rows: &[usize] = match subset {
        Some(s) => s,
        None => {
            all_rows = (0..frame.n()).collect();
            &all_rows
        }
    };
    let mut x: Vec<F> = Vec::new();
    let mut y: Vec<F> = Vec::new();
    let mut w: Vec<F> = Vec::new();
    let mut off: Vec<F> = Vec::new();
    'row: for &i in rows {
        let yi = y_col[i];
        if !yi.is_finite() {
            continue;
        }
        let wi = match w_col {
            Some(wc) => wc[i],
            None => F::one(),
        };
        if !(wi > F::zero()) {
            continue;
        }
        let oi = match off_col {
            Some(oc) => oc[i],
            None => F::zero(),
        };
        if !oi.is_finite() {
            continue;
        }
        let start = x.len();
        for s in &col_slices {
            let v = match s {
                None => F::one(),
                Some((a, None)) => a[i],
                Some((a, Some(b))) => a[i] * b[i],
            };
            if !v.is_finite() {
                x.truncate(start);
                continue 'row;
            }
            x.push(v);
        }
        y.push(yi);
        w.push(wi);
        off.push(oi);
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Glm(format!(
            "no usable rows (positive weight, observed response) for `{}`",
            spec.response
        )));
    }
    match spec.family {
        Family::Binomial => {
            if y.iter().any(|&v| v != F::zero() && v != F::one()) {
                return Err(Error::Glm("binomial response must be 0/1".into()));
            }
        }
        Family::QuasiBinomial => {
            if y.iter().any(|&v| v < F::zero() || v > F::one()) {
                return Err(Error::Glm("quasi-binomial response must lie in [0,1]".into()));
            }
        }
        Family::Gaussian => {}
    }

    let (beta, kept, converged, n_iter, deviance) = match spec.family {
        Family::Gaussian => fit_gaussian(&x, n, p, &y, &w, &off),
        Family::Binomial | Family::QuasiBinomial => fit_logit(&x, n, p, &y, &w, &off),
    };

    let kept_cols: Vec<DesignCol> = kept.iter().map(|&j| cols[j].clone()).collect();
    let aliased: Vec<String> = (0..p)
        .filter(|j| !kept.contains(j))
        .map(|j| cols[j].label())
        .collect();
    let k = kept.len();
    let aic = match spec.family {
        Family::Gaussian => {
            let nf = F::c(n as f64);
            let two_pi = F::c(std::f64::consts::TAU);
            Some(nf * (two_pi * deviance / nf).ln() + nf + F::c(2.0 * (k as f64 + 1.0)))
        }
        Family::Binomial => Some(deviance + F::c(2.0 * k as f64)),
        Family::QuasiBinomial => None,
    };
    let separated = spec.family != Family::Gaussian
        && beta.iter().any(|b| b.abs() > F::c(15.0));
    Ok(GlmFit {
        family: spec.family,
        cols: kept_cols,
        coefficients: beta,
        aliased,
        converged,
        n_iter,
        n_used: n,
        deviance,
        aic,
        separated,
        offset: spec.offset.clone(),
    })
}

fn fit_gaussian<F: Scalar>(
    x: &[F],
    n: usize,
    p: usize,
    y: &[F],
    w: &[F],
    off: &[F],
) -> (Vec<F>, Vec<usize>, bool, usize, F) {
    let z: Vec<F> = y.iter().zip(off).map(|(&yi, &oi)| yi - oi).collect();
    let mut xtx = vec![F::zero(); p * p];
    let mut xtz = vec![F::zero(); p];
    xtwx_xtwz(x, n, p, w, &z, &mut xtx, &mut xtz);
    let (beta, kept) = solve_alias(&xtx, &xtz, p, F::c(ALIAS_TOL));
    let mut rss = F::zero();
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        let mut mu = off[i];
        for (m, &j) in kept.iter().enumerate() {
            mu += beta[m] * row[j];
        }
        let r = y[i] - mu;
        rss += w[i] * r * r;
    }
    (beta, kept, true, 1, rss)
}

fn binomial_deviance<F: Scalar>(y: &[F], mu: &[F], w: &[F]) -> F {
    let mut dev = F::zero();
    for i in 0..y.len() {
        let yi = y[i];
        let mi = mu[i];
        let mut d = F::zero();
        if yi > F::zero() {
            d += yi * (yi / mi).ln();
        }
        let cy = F::one() - yi;
        if cy > F::zero() {
            d += cy * (cy / (F::one() - mi)).ln();
        }
        dev += F::c(2.0) * w[i] * d;
    }
    dev
}

fn fit_logit<F: Scalar>(
    x: &[F],
    n: usize,
    p: usize,
    y: &[F],
    w: &[F],
    off: &[F],
) -> (Vec<F>, Vec<usize>, bool, usize, F) {
    let eps = F::c(1e-10);
    let half = F::c(0.5);
    // R-style start: mu shrunk halfway to 1/2.
    let mut eta: Vec<F> = y
        .iter()
        .map(|&yi| logit((yi + half) / F::c(2.0)))
        .collect();
    let mut mu: Vec<F> = eta.iter().map(|&e| expit(e)).collect();
    let mut dev = binomial_deviance(y, &mu, w);
    let mut beta: Vec<F> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut converged = false;
    let mut iter = 0;
    let mut wirls = vec![F::zero(); n];
    let mut z = vec![F::zero(); n];
    let mut xtx = vec![F::zero(); p * p];
    let mut xtz = vec![F::zero(); p];
    while iter < MAX_ITER {
        iter += 1;
        for i in 0..n {
            let v = (mu[i] * (F::one() - mu[i])).max(eps);
            wirls[i] = w[i] * v;
            z[i] = (eta[i] - off[i]) + (y[i] - mu[i]) / v;
        }
        xtwx_xtwz(x, n, p, &wirls, &z, &mut xtx, &mut xtz);
        let (mut new_beta, new_kept) = if iter == 1 {
            let (b, k) = solve_alias(&xtx, &xtz, p, F::c(ALIAS_TOL));
            kept = k.clone();
            (b, k)
        } else {
            // Alias pattern frozen after the first iteration.
            let (b, _) = solve_kept(&xtx, &xtz, p, &kept);
            (b, kept.clone())
        };
        let old_beta = beta.clone();
        let mut step = F::one();
        let (mut new_dev, mut new_eta, mut new_mu);
        loop {
            new_eta = eta_from(x, n, p, &new_kept, &new_beta, off);
            new_mu = new_eta.iter().map(|&e| expit(e)).collect::<Vec<F>>();
            clamp_mu(&mut new_mu, eps);
            new_dev = binomial_deviance(y, &new_mu, w);
            if new_dev.is_finite() && (new_dev <= dev + F::c(1e-8) || old_beta.is_empty()) {
                break;
            }
            step = step * half;
            if step < F::c(1e-3) {
                break;
            }
            for (nb, ob) in new_beta.iter_mut().zip(&old_beta) {
                *nb = (*nb + *ob) * half;
            }
        }
        let rel = (new_dev - dev).abs() / (new_dev.abs() + F::c(0.1));
        beta = new_beta;
        eta = new_eta;
        mu = new_mu;
        let done = rel < F::c(1e-8);
        dev = new_dev;
        if done {
            converged = true;
            break;
        }
    }
    (beta, kept, converged, iter, dev)
}

fn solve_kept<F: Scalar>(xtx: &[F], xtz: &[F], p: usize, kept: &[usize]) -> (Vec<F>, Vec<usize>) {
    // Compress to the kept submatrix and solve without further aliasing
    // (tolerance loosened so the pattern stays fixed across IRLS steps).
    let k = kept.len();
    let mut sub = vec![F::zero(); k * k];
    let mut rhs = vec![F::zero(); k];
    for (a, &ja) in kept.iter().enumerate() {
        rhs[a] = xtz[ja];
        for (b, &jb) in kept.iter().enumerate().skip(a) {
            let v = if ja <= jb {
                xtx[ja * p + jb]
            } else {
                xtx[jb * p + ja]
            };
            sub[a * k + b] = v;
        }
    }
    let (b, sub_kept) = solve_alias(&sub, &rhs, k, F::c(1e-14));
    if sub_kept.len() == k {
        (b, kept.to_vec())
    } else {
        // Rare: weights collapsed a direction mid-path; expand with zeros.
        let mut full = vec![F::zero(); k];
        for (m, &j) in sub_kept.iter().enumerate() {
            full[j] = b[m];
        }
        (full, kept.to_vec())
    }
}

fn eta_from<F: Scalar>(
    x: &[F],
    n: usize,
    p: usize,
    kept: &[usize],
    beta: &[F],
    off: &[F],
) -> Vec<F> {
    let mut eta = off.to_vec();
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        let mut s = F::zero();
        for (m, &j) in kept.iter().enumerate() {
            s += beta[m] * row[j];
        }
        eta[i] += s;
    }
    eta
}

fn clamp_mu<F: Scalar>(mu: &mut [F], eps: F) {
    let hi = F::one() - eps;
    for m in mu.iter_mut() {
        if *m < eps {
            *m = eps;
        } else if *m > hi {
            *m = hi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_xy() -> Frame<f64> {
        let mut f = Frame::new(6);
        f.push("x", vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        f.push("y", vec![0.3, 1.9, 4.2, 5.8, 8.1, 10.2]).unwrap();
        f
    }

    #[test]
    fn gaussian_matches_ols() {
        let f = frame_xy();
        let spec = GlmSpec::main_terms(Family::Gaussian, "y", &["x".into()]);
        let fit = fit_glm(&spec, &f, None).unwrap();
        // Closed-form OLS on the same data.
        let x = f.col("x").unwrap();
        let y = f.col("y").unwrap();
        let n = 6.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icept = (sy - slope * sx) / n;
        assert!((fit.coefficients[0] - icept).abs() < 1e-8);
        assert!((fit.coefficients[1] - slope).abs() < 1e-8);
    }

    #[test]
    fn balanced_logit_intercept_zero() {
        let mut f: Frame<f64> = Frame::new(8);
        f.push("y", vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
            .unwrap();
        let spec = GlmSpec::main_terms(Family::Binomial, "y", &[]);
        let fit = fit_glm(&spec, &f, None).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-8, "{:?}", fit.coefficients);
    }

    #[test]
    fn logistic_recovers_coefficients() {
        // Deterministic logistic data on a fine grid with fractional response
        // (quasi-binomial exactness): y_i = expit(-0.5 + 1.2 x_i).
        let m = 200;
        let mut f: Frame<f64> = Frame::new(m);
        let xs: Vec<f64> = (0..m).map(|i| -2.0 + 4.0 * i as f64 / (m - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| expit(-0.5 + 1.2 * x)).collect();
        f.push("x", xs).unwrap();
        f.push("y", ys).unwrap();
        let spec = GlmSpec::main_terms(Family::QuasiBinomial, "y", &["x".into()]);
        let fit = fit_glm(&spec, &f, None).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] + 0.5).abs() < 1e-6);
        assert!((fit.coefficients[1] - 1.2).abs() < 1e-6);
        assert!(fit.aic.is_none());
    }

    #[test]
    fn aliased_column_dropped_and_predict_works() {
        let mut f: Frame<f64> = Frame::new(5);
        f.push("x", vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        f.push("x2", vec![2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        f.push("y", vec![1.0, 3.0, 5.0, 7.0, 9.0]).unwrap();
        let spec = GlmSpec::main_terms(Family::Gaussian, "y", &["x".into(), "x2".into()]);
        let fit = fit_glm(&spec, &f, None).unwrap();
        assert_eq!(fit.aliased, vec!["x2".to_string()]);
        let pred = fit.predict(&f).unwrap();
        for (p, y) in pred.iter().zip(f.col("y").unwrap()) {
            assert!((p - y).abs() < 1e-8);
        }
    }

    #[test]
    fn missing_rows_dropped() {
        let mut f: Frame<f64> = Frame::new(4);
        f.push("x", vec![1.0, 2.0, f64::NAN, 4.0]).unwrap();
        f.push("y", vec![2.0, 4.0, 6.0, f64::NAN]).unwrap();
        let spec = GlmSpec::main_terms(Family::Gaussian, "y", &["x".into()]);
        let fit = fit_glm(&spec, &f, None).unwrap();
        assert_eq!(fit.n_used, 2);
        let pred = fit.predict(&f).unwrap();
        assert!(pred[2].is_nan());
    }

    #[test]
    fn offset_and_weights_respected() {
        // With offset o and weights, Gaussian fit solves weighted LS on y - o.
        let mut f: Frame<f64> = Frame::new(4);
        f.push("x", vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        f.push("o", vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        f.push("w", vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        f.push("y", vec![1.0, 3.0, 5.0, 7.0]).unwrap(); // y = 1 + 2x exactly
        let spec = GlmSpec {
            family: Family::Gaussian,
            response: "y".into(),
            terms: vec!["x".into()],
            interactions: vec![],
            offset: Some("o".into()),
            weights: Some("w".into()),
            intercept: true,
        };
        let fit = fit_glm(&spec, &f, None).unwrap();
        assert!((fit.coefficients[0] - 0.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn separation_flagged() {
        let mut f: Frame<f64> = Frame::new(8);
        f.push("x", vec![-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0])
            .unwrap();
        f.push("y", vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
            .unwrap();
        let spec = GlmSpec::main_terms(Family::Binomial, "y", &["x".into()]);
        let fit = fit_glm(&spec, &f, None).unwrap();
        assert!(fit.separated);
    }
}
