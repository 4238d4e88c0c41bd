use super::frame::Frame;
use super::irls::{expit, fit_glm, logit, Family, GlmSpec};
use super::Scalar;

/// Result of the intercept-only targeting fluctuation.
#[derive(Debug, Clone)]
pub struct FluctResult<F> {
    /// `expit(logit(initial) + beta0)` for every row with a finite initial
    /// prediction; `NaN` rows propagate.
    pub updated: Vec<F>,
    pub beta0: F,
    /// Set when all weights were zero (or no usable rows): the update is a
    /// no-op and `updated == initial`.
    pub no_update: bool,
    pub converged: bool,
}

/// Fits the intercept-only quasi-binomial fluctuation with offset
/// `logit(initial)` and the given weights, and returns updated predictions
/// for every row (including zero-weight rows).
///
/// `initial` is clamped into `[clamp, 1-clamp]` before the logit so offsets
/// stay finite; rows with `NaN` response or initial prediction, or zero
/// weight, are excluded from the fit itself.
pub fn fluctuate_intercept<F: Scalar>(
    initial: &[F],
    response: &[F],
    weights: &[F],
    clamp: F,
) -> FluctResult<F> {
    let n = initial.len();
    assert_eq!(response.len(), n);
    assert_eq!(weights.len(), n);
    let lo = clamp;
    let hi = F::one() - clamp;
    let offset: Vec<F> = initial
        .iter()
        .map(|&p| {
            if p.is_finite() {
                logit(p.max(lo).min(hi))
            } else {
                F::nan()
            }
        })
        .collect();
    let usable = (0..n).any(|i| {
        weights[i] > F::zero()
            && weights[i].is_finite()
            && response[i].is_finite()
            && offset[i].is_finite()
    });
    if !usable {
        return FluctResult {
            updated: initial.to_vec(),
            beta0: F::zero(),
            no_update: true,
            converged: true,
        };
    }
    let mut frame: Frame<F> = Frame::new(n);
    frame.push("y", response.to_vec()).unwrap();
    frame.push("o", offset.clone()).unwrap();
    frame.push("w", weights.to_vec()).unwrap();
    let spec = GlmSpec {
        family: Family::QuasiBinomial,
        response: "y".into(),
        terms: vec![],
        interactions: vec![],
        offset: Some("o".into()),
        weights: Some("w".into()),
        intercept: true,
    };
    let fit = match fit_glm(&spec, &frame, None) {
        Ok(f) => f,
        Err(_) => {
            return FluctResult {
                updated: initial.to_vec(),
                beta0: F::zero(),
                no_update: true,
                converged: false,
            }
        }
    };
    let beta0 = fit.coefficients.first().copied().unwrap_or(F::zero());
    let updated: Vec<F> = offset
        .iter()
        .map(|&o| if o.is_finite() { expit(o + beta0) } else { F::nan() })
        .collect();
    FluctResult {
        updated,
        beta0,
        no_update: false,
        converged: fit.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent 1-D root-finder for the fluctuation score
    /// sum_i w_i (y_i - expit(o_i + b)) = 0; the score is strictly
    /// decreasing in b, so plain bisection is exact.
    fn bisection_beta(initial: &[f64], response: &[f64], weights: &[f64], clamp: f64) -> f64 {
        let o: Vec<f64> = initial
            .iter()
            .map(|&p| logit(p.clamp(clamp, 1.0 - clamp)))
            .collect();
        let score = |b: f64| -> f64 {
            o.iter()
                .zip(response)
                .zip(weights)
                .map(|((&oi, &yi), &wi)| wi * (yi - expit(oi + b)))
                .sum()
        };
        let (mut lo, mut hi) = (-60.0, 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn matches_bisection_oracle() {
        let init = [0.2, 0.5, 0.8];
        let resp = [0.9, 0.9, 0.9];
        let w = [1.0, 1.0, 1.0];
        let oracle = bisection_beta(&init, &resp, &w, 1e-5);
        let res = fluctuate_intercept(&init, &resp, &w, 1e-5);
        assert!(!res.no_update);
        assert!((res.beta0 - oracle).abs() < 1e-7, "{} vs {}", res.beta0, oracle);
        for (u, &i0) in res.updated.iter().zip(&init) {
            let expect = expit(logit(i0) + oracle);
            assert!((u - expect).abs() < 1e-7);
        }
    }

    #[test]
    fn weighted_score_solved() {
        let init = [0.1, 0.4, 0.6, 0.95];
        let resp = [0.3, 0.2, 0.9, 0.7];
        let w = [2.0, 0.0, 1.0, 0.5];
        let res = fluctuate_intercept(&init, &resp, &w, 1e-5);
        let score: f64 = init
            .iter()
            .zip(&resp)
            .zip(&w)
            .map(|((&i0, &y), &wi)| wi * (y - expit(logit(i0) + res.beta0)))
            .sum();
        let wsum: f64 = w.iter().sum();
        assert!(score.abs() <= 1e-8 * wsum, "score {score}");
    }

    #[test]
    fn all_zero_weights_is_identity() {
        let init = [0.2, 0.7];
        let res = fluctuate_intercept(&init, &[1.0, 0.0], &[0.0, 0.0], 1e-5);
        assert!(res.no_update);
        assert_eq!(res.updated, init.to_vec());
    }

    #[test]
    fn response_equal_initial_gives_zero_beta() {
        let init: [f64; 3] = [0.25, 0.5, 0.75];
        let res = fluctuate_intercept(&init, &init, &[1.0, 1.0, 1.0], 1e-5);
        assert!(res.beta0.abs() < 1e-8);
        for (u, i0) in res.updated.iter().zip(&init) {
            assert!((u - i0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_weight_rows_still_updated() {
        let init = [0.2, 0.6];
        let resp = [0.9, f64::NAN];
        let w = [1.0, 0.0];
        let res = fluctuate_intercept(&init, &resp, &w, 1e-5);
        assert!(!res.no_update);
        let expect = expit(logit(0.6) + res.beta0);
        assert!((res.updated[1] - expect).abs() < 1e-10);
    }
}
