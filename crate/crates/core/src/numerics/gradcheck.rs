//! Central finite-difference checks of tape gradients.

use std::fmt;

use rand::seq::index::sample;

use super::tape::ParamStore;
use crate::error::{Error, Result};
use crate::rng;

/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding compare on an absolute scale instead.
pub const REL_ERR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub step: f64,
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<24} {:>6} coords  max rel err {:.3e} (at {}: tape {:.6e}, fd {:.6e})  {}",
                p.name,
                p.checked,
                p.max_rel_err,
                p.worst_index,
                p.analytic,
                p.numeric,
                if p.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the gradient returned by `f` with central differences on every
/// coordinate of every parameter.
///
/// `f` maps a parameter store to `(value, gradients)`; only the value is used
/// on perturbed stores.
pub fn grad_check<F>(f: F, params: &ParamStore, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, ParamStore)>,
{
    check(|p| Ok(f(p)?.0), |p| Ok(f(p)?.1), params, step, tol, None)
}

/// Like [`grad_check`] but probes at most `per_param` randomly chosen
/// coordinates of each parameter.
pub fn grad_check_sampled<F>(
    f: F,
    params: &ParamStore,
    step: f64,
    tol: f64,
    per_param: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, ParamStore)>,
{
    check(|p| Ok(f(p)?.0), |p| Ok(f(p)?.1), params, step, tol, Some((per_param, seed)))
}

/// The general form: `loss` evaluates the function alone (it runs twice per
/// probed coordinate, so it should skip the backward pass) and `gradient`
/// returns the tape gradient at `params`. `sampling` is `(per_param, seed)`.
pub fn check<V, G>(
    loss: V,
    gradient: G,
    params: &ParamStore,
    step: f64,
    tol: f64,
    sampling: Option<(usize, u64)>,
) -> Result<GradCheckReport>
where
    V: Fn(&ParamStore) -> Result<f64>,
    G: FnOnce(&ParamStore) -> Result<ParamStore>,
{
    if !(step > 0.0) {
        return Err(Error::Precondition(format!("finite-difference step must be positive, got {step}")));
    }
    let grads = gradient(params)?;
    let mut probe = params.clone();
    let mut report = Vec::with_capacity(params.len());

    for (k, (name, value)) in params.iter().enumerate() {
        let analytic = grads.get(name).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; value.len()]);
        let coords: Vec<usize> = match sampling {
            Some((per_param, seed)) if per_param < value.len() => {
                let mut r = rng::indexed_stream(seed, "gradcheck", k as u64);
                let mut idx = sample(&mut r, value.len(), per_param).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..value.len()).collect(),
        };
        let mut worst = (0.0f64, 0usize, 0.0f64, 0.0f64);
        for &i in &coords {
            let original = value.data()[i];
            probe.get_mut(name).expect("cloned store").data_mut()[i] = original + step;
            let plus = loss(&probe)?;
            probe.get_mut(name).expect("cloned store").data_mut()[i] = original - step;
            let minus = loss(&probe)?;
            probe.get_mut(name).expect("cloned store").data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[i], numeric);
            if !(err <= worst.0) {
                worst = (err, i, analytic[i], numeric);
            }
        }
        report.push(ParamCheck {
            name: name.to_string(),
            checked: coords.len(),
            max_rel_err: worst.0,
            worst_index: worst.1,
            analytic: worst.2,
            numeric: worst.3,
            passed: worst.0 < tol,
        });
    }
    Ok(GradCheckReport { step, tol, params: report })
}
