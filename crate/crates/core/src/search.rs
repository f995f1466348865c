//! Bisection for the smallest feasible level `gamma`.

use alloc::vec::Vec;

use crate::controllers::{self, Causality, Controller, Horizon};
use crate::error::{Error, Infeasibility, Reason, Result};
use crate::factorization;
use crate::model::LtiPlant;

/// Largest level tried while doubling the upper bracket.
pub const GAMMA_CAP: f64 = (1u64 << 20) as f64;
/// Default absolute tolerance on `gamma`.
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub lower: f64,
    pub init_hi: f64,
    pub tol: f64,
    /// Re-check feasibility on 8 points around the final bracket.
    pub audit: bool,
}

impl SearchOptions {
    pub fn competitive(tol: f64) -> Self {
        Self { lower: 1.0, init_hi: 2.0, tol, audit: true }
    }

    pub fn hinf(tol: f64) -> Self {
        Self { lower: 0.0, init_hi: 1.0, tol, audit: true }
    }
}

/// A grid point where feasibility disagreed with monotonicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditWarning {
    pub gamma: f64,
    pub expected_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct GammaSearch<T> {
    pub gamma: f64,
    /// Largest level seen infeasible (or the lower bound if none was).
    pub lo: f64,
    /// Smallest level seen feasible; equals `gamma`.
    pub hi: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub warnings: Vec<AuditWarning>,
    /// The value produced by the feasibility callback at `hi`.
    pub result: T,
}

impl<T> GammaSearch<T> {
    pub fn tolerance_achieved(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `Ok(Some(t))` feasible, `Ok(None)` infeasible verdict, `Err` anything else.
fn classify<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Doubles `init_hi` until feasible, then bisects to `hi - lo <= tol`.
pub fn min_gamma<T, F>(mut feasible: F, opts: SearchOptions) -> Result<GammaSearch<T>>
where
    F: FnMut(f64) -> Result<T>,
{
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if !(opts.init_hi > opts.lower) {
        return Err(Error::InvalidArgument("initial upper bracket must exceed the lower bound".into()));
    }
    let mut evaluations = 0;
    let mut lo = opts.lower;
    let mut hi = opts.init_hi;
    let mut best = loop {
        evaluations += 1;
        if let Some(v) = classify(feasible(hi))? {
            break v;
        }
        lo = hi;
        hi *= 2.0;
        if hi > GAMMA_CAP {
            return Err(Infeasibility::new(Reason::UnboundedGamma).with_value(lo).into());
        }
    };
    let mut iterations = 0;
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        iterations += 1;
        match classify(feasible(mid))? {
            Some(v) => {
                hi = mid;
                best = v;
            }
            None => lo = mid,
        }
    }
    let mut warnings = Vec::new();
    if opts.audit {
        let step = opts.tol;
        for k in 0..4 {
            let above = hi + step * (k + 1) as f64;
            evaluations += 1;
            if classify(feasible(above))?.is_none() {
                warnings.push(AuditWarning { gamma: above, expected_feasible: true });
            }
            let below = lo - step * k as f64;
            if below > opts.lower {
                evaluations += 1;
                if classify(feasible(below))?.is_some() {
                    warnings.push(AuditWarning { gamma: below, expected_feasible: false });
                }
            }
        }
    }
    Ok(GammaSearch { gamma: hi, lo, hi, iterations, evaluations, warnings, result: best })
}

/// Smallest level of the competitive controller; the spectral factor is
/// computed once since it does not depend on `gamma`.
pub fn optimal_competitive(
    plant: &LtiPlant,
    causality: Causality,
    horizon: Horizon,
    tol: f64,
) -> Result<GammaSearch<Controller>> {
    let opts = SearchOptions::competitive(tol);
    match horizon {
        Horizon::Infinite => {
            let factor = factorization::spectral_factor_ih(plant)?;
            min_gamma(|g| controllers::synth_competitive_with_factor(plant, &factor, g, causality), opts)
        }
        Horizon::Finite(_) => min_gamma(|g| controllers::synth_competitive(plant, g, causality, horizon), opts),
    }
}

pub fn optimal_hinf(plant: &LtiPlant, causality: Causality, horizon: Horizon, tol: f64) -> Result<GammaSearch<Controller>> {
    min_gamma(|g| controllers::synth_hinf(plant, g, causality, horizon), SearchOptions::hinf(tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn threshold(at: f64) -> impl FnMut(f64) -> Result<f64> {
        move |g| if g >= at { Ok(g) } else { Err(Error::infeasible(Reason::CausalCondition)) }
    }

    #[test]
    fn finds_synthetic_threshold() {
        let r = min_gamma(threshold(2.0), SearchOptions { lower: 0.0, init_hi: 1.0, tol: 1e-6, audit: true }).unwrap();
        assert!((r.gamma - 2.0).abs() <= 1e-6);
        assert!(r.hi - r.lo <= 1e-6);
        assert!(r.warnings.is_empty());
        let bound = libm::log2((2.0 - 0.0) / 1e-6) + 25.0;
        assert!((r.iterations as f64) <= bound);
    }

    #[test]
    fn feasible_start_keeps_lower_bound() {
        let r = min_gamma(threshold(0.5), SearchOptions { lower: 0.0, init_hi: 1.0, tol: 1e-3, audit: false }).unwrap();
        assert!(r.lo >= 0.0 && r.hi - r.lo <= 1e-3);
    }

    #[test]
    fn unbounded_is_reported() {
        let r = min_gamma(threshold(f64::INFINITY), SearchOptions::hinf(1e-3));
        match r {
            Err(Error::Infeasible(v)) => assert_eq!(v.reason, Reason::UnboundedGamma),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_predicate_is_flagged() {
        // feasible on [2, inf) except a hole just above 2
        let f = |g: f64| {
            if g >= 2.0 && !(2.0015..2.0025).contains(&g) {
                Ok(())
            } else {
                Err(Error::infeasible(Reason::CausalCondition))
            }
        };
        let r = min_gamma(f, SearchOptions { lower: 0.0, init_hi: 1.0, tol: 1e-3, audit: true }).unwrap();
        assert!(!r.warnings.is_empty());
    }
}
