use crate::error::Error;
use crate::Result;

use super::frame::Frame;
use super::irls::{fit_glm, Family, GlmSpec};
use super::Scalar;

/// Greedy bidirectional stepwise selection by AIC, starting from `base`.
///
/// At each step the single term addition (from `candidates`) or deletion that
/// most decreases AIC is applied; the search stops at a local minimum. Ties
/// break deterministically by column order (additions scanned before
/// deletions). Quasi-binomial fits use `deviance + 2k` in place of the
/// likelihood AIC.
pub fn stepwise_aic<F: Scalar>(
    base: &GlmSpec,
    candidates: &[String],
    frame: &Frame<F>,
    subset: Option<&[usize]>,
) -> Result<GlmSpec> {
    let aic_of = |terms: &[String]| -> Result<F> {
        let mut spec = base.clone();
        spec.terms = terms.to_vec();
        let fit = fit_glm(&spec, frame, subset)?;
        if !fit.converged {
            return Ok(F::infinity());
        }
        match fit.aic {
            Some(a) => Ok(a),
            None => match base.family {
                Family::QuasiBinomial => {
                    Ok(fit.deviance + F::c(2.0 * fit.cols.len() as f64))
                }
                _ => Err(Error::Glm("AIC unavailable for family".into())),
            },
        }
    };

    let mut current: Vec<String> = base.terms.clone();
    let mut best = aic_of(&current)?;
    loop {
        let mut best_move: Option<Vec<String>> = None;
        let mut best_aic = best;
        for cand in candidates {
            if current.contains(cand) {
                continue;
            }
            let mut trial = current.clone();
            trial.push(cand.clone());
            let a = aic_of(&trial)?;
            if a < best_aic - F::c(1e-10) {
                best_aic = a;
                best_move = Some(trial);
            }
        }
        for (i, _) in current.iter().enumerate() {
            let mut trial = current.clone();
            trial.remove(i);
            let a = aic_of(&trial)?;
            if a < best_aic - F::c(1e-10) {
                best_aic = a;
                best_move = Some(trial);
            }
        }
        match best_move {
            Some(m) => {
                current = m;
                best = best_aic;
            }
            None => break,
        }
    }
    let mut out = base.clone();
    out.terms = current;
    Ok(out)
}
