//! Closed-form predictors: the intermediate profile `f`, its space-time
//! rescaling, the final profile `u*`, the final gradient bound and the
//! flat ODE solution `v_K0`.
//!
//! Radial arguments are plain nonnegative reals (`|x|`). Logarithms are
//! natural; every `|log s|` requires `s` in `(0, 1)` and errors otherwise.

use serde::Serialize;
use thiserror::Error;

use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ProfileError {
    #[error("log degenerate: argument {0} is not in (0, 1)")]
    LogDegenerate(f64),
    #[error("the final profile is singular at the origin")]
    Origin,
    #[error("time {t} is not before the blow-up time {blowup_time}")]
    PastBlowup { t: f64, blowup_time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionFrame {
    IntermediateU,
    IntermediateGrad,
    FinalU,
    FinalGrad,
}

/// A predicted value together with the right-hand side of its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePrediction {
    pub value: f64,
    pub envelope: f64,
    pub frame: PredictionFrame,
}

/// `|ln s|` for `s` in `(0, 1)`.
pub fn abs_log(s: f64) -> Result<f64, ProfileError> {
    if s > 0.0 && s < 1.0 {
        Ok(-s.ln())
    } else {
        Err(ProfileError::LogDegenerate(s))
    }
}

/// `f(z) = (p - 1 + b z^2)^{-1/(p-1)}`.
pub fn f_profile(z: f64, params: &ModelParams) -> f64 {
    (params.p() - 1.0 + params.b() * z * z).powf(-params.rate())
}

/// `f'(z) = -(2 b z/(p-1)) (p - 1 + b z^2)^{-p/(p-1)}`.
pub fn grad_f_profile(z: f64, params: &ModelParams) -> f64 {
    let p = params.p();
    let b = params.b();
    -(2.0 * b * z / (p - 1.0)) * (p - 1.0 + b * z * z).powf(-p / (p - 1.0))
}

/// Remaining time `T - t` and its similarity length `sqrt((T-t)|log(T-t)|)`.
fn remaining(t: f64, blowup_time: f64) -> Result<(f64, f64, f64), ProfileError> {
    let s = blowup_time - t;
    if !(s > 0.0) {
        return Err(ProfileError::PastBlowup { t, blowup_time });
    }
    let log = abs_log(s)?;
    Ok((s, log, (s * log).sqrt()))
}

fn weight(r: f64, s: f64, beta: f64) -> f64 {
    1.0 / (1.0 + (r * r / s).powf(beta / 2.0))
}

/// `(T-t)^{-1/(p-1)} f(|x|/sqrt((T-t)|log(T-t)|))` with the weighted
/// envelope `C/(1 + (|x|^2/(T-t))^{beta/2}) (T-t)^{-1/(p-1)} / |log(T-t)|^{(1-beta)/2}`.
pub fn intermediate_prediction(
    r: f64,
    t: f64,
    blowup_time: f64,
    params: &ModelParams,
    c: f64,
) -> Result<ProfilePrediction, ProfileError> {
    let (s, log, scale) = remaining(t, blowup_time)?;
    let amp = s.powf(-params.rate());
    let beta = params.beta();
    Ok(ProfilePrediction {
        value: amp * f_profile(r.abs() / scale, params),
        envelope: c * weight(r, s, beta) * amp / log.powf((1.0 - beta) / 2.0),
        frame: PredictionFrame::IntermediateU,
    })
}

/// Radial derivative counterpart of [`intermediate_prediction`].
pub fn intermediate_grad_prediction(
    r: f64,
    t: f64,
    blowup_time: f64,
    params: &ModelParams,
    c: f64,
) -> Result<ProfilePrediction, ProfileError> {
    let (s, log, scale) = remaining(t, blowup_time)?;
    let amp = s.powf(-0.5 - params.rate());
    let beta = params.beta();
    Ok(ProfilePrediction {
        value: amp / log.sqrt() * grad_f_profile(r.abs() / scale, params),
        envelope: c * weight(r, s, beta) * amp / log.powf((1.0 - beta) / 2.0),
        frame: PredictionFrame::IntermediateGrad,
    })
}

fn small_radius(r: f64) -> Result<(f64, f64), ProfileError> {
    let r = r.abs();
    if r == 0.0 {
        return Err(ProfileError::Origin);
    }
    Ok((r, abs_log(r)?))
}

/// `u*(x) ~ [8p |log|x|| / ((p-1)^2 |x|^2)]^{1/(p-1)}` for `0 < |x| < 1`.
pub fn final_profile(r: f64, params: &ModelParams) -> Result<f64, ProfileError> {
    let (r, log) = small_radius(r)?;
    let p = params.p();
    Ok((8.0 * p * log / ((p - 1.0) * (p - 1.0) * r * r)).powf(params.rate()))
}

/// `C |x|^{-(p+1)/(p-1)} |log|x||^{(p+3)/(4(p-1))}`.
pub fn final_grad_bound(r: f64, params: &ModelParams, c: f64) -> Result<f64, ProfileError> {
    let (r, log) = small_radius(r)?;
    let p = params.p();
    Ok(c * r.powf(-(p + 1.0) / (p - 1.0)) * log.powf((p + 3.0) / (4.0 * (p - 1.0))))
}

/// Final-profile prediction packaged with a zero envelope (the asymptotic
/// equivalence carries no explicit error term).
pub fn final_prediction(r: f64, params: &ModelParams) -> Result<ProfilePrediction, ProfileError> {
    Ok(ProfilePrediction {
        value: final_profile(r, params)?,
        envelope: 0.0,
        frame: PredictionFrame::FinalU,
    })
}

/// `v_K0(tau) = ((p-1)(1-tau) + b K0^2)^{-1/(p-1)}`, the solution of
/// `v' = v^p` with `v(0) = f(K0)`.
pub fn v_k0(tau: f64, k0: f64, params: &ModelParams) -> f64 {
    ((params.p() - 1.0) * (1.0 - tau) + params.b() * k0 * k0).powf(-params.rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p4() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn f_examples() {
        let m = p4();
        assert_eq!(f_profile(0.0, &m), m.kappa());
        assert_relative_eq!(f_profile(0.0, &m), 0.693_361_274_350_634_7, epsilon = 1e-15);
        // 3.5625^{-1/3}, evaluated independently with mpmath.
        assert_relative_eq!(f_profile(1.0, &m), 0.654_759_350_156_081_7, epsilon = 1e-15);
        let mut prev = f_profile(0.0, &m);
        for k in 1..200 {
            let z = 0.5 * f64::from(k);
            let cur = f_profile(z, &m);
            assert!(cur < prev && cur > 0.0);
            prev = cur;
        }
        assert!(f_profile(1e12, &m) < 1e-7);
    }

    #[test]
    fn grad_f_examples() {
        let m = p4();
        assert_eq!(grad_f_profile(0.0, &m), 0.0);
        // -(3/8) * 3.5625^{-4/3}
        assert_relative_eq!(grad_f_profile(1.0, &m), -0.068_922_036_858_534_92, epsilon = 1e-15);
        for k in 1..100 {
            assert!(grad_f_profile(0.37 * f64::from(k), &m) < 0.0);
        }
    }

    #[test]
    fn grad_f_matches_central_differences() {
        let m = p4();
        let step = 1e-5;
        for k in 0..=1000 {
            let z = 0.1 * f64::from(k);
            let fd = (f_profile(z + step, &m) - f_profile(z - step, &m)) / (2.0 * step);
            let exact = grad_f_profile(z, &m);
            if z == 0.0 {
                assert!(fd.abs() < 1e-12);
            } else {
                assert!(((fd - exact) / exact).abs() < 1e-6, "z = {z}");
            }
        }
    }

    #[test]
    fn intermediate_at_origin() {
        let m = p4();
        let pred = intermediate_prediction(0.0, 0.0, 1e-4, &m, 1.0).unwrap();
        assert_eq!(pred.value, m.kappa() * 1e-4f64.powf(-1.0 / 3.0));
        assert_relative_eq!(pred.value, 14.938_015_821_857_2, epsilon = 1e-10);
        let log = -(1e-4f64).ln();
        assert_relative_eq!(
            pred.envelope,
            1e-4f64.powf(-1.0 / 3.0) / log.powf((1.0 - m.beta()) / 2.0),
            max_relative = 1e-15
        );
        assert_eq!(pred.frame, PredictionFrame::IntermediateU);
    }

    #[test]
    fn intermediate_grad_predictions() {
        let m = p4();
        let s: f64 = 1e-4;
        let log = -s.ln();
        let at0 = intermediate_grad_prediction(0.0, 0.0, s, &m, 1.0).unwrap();
        assert_eq!(at0.value, 0.0);
        let r = (s * log).sqrt();
        let at1 = intermediate_grad_prediction(r, 0.0, s, &m, 1.0).unwrap();
        let expected = grad_f_profile(1.0, &m) * s.powf(-5.0 / 6.0) / log.sqrt();
        assert_relative_eq!(at1.value, expected, max_relative = 1e-12);

        let flat = ModelParams::validate(4.0, 3.0, 0.0, 1, Some(0.0)).unwrap();
        let ratio = |r: f64| {
            let pr = intermediate_grad_prediction(r, 0.0, s, &flat, 1.0).unwrap();
            pr.envelope / s.powf(-5.0 / 6.0)
        };
        assert_relative_eq!(ratio(0.0), ratio(0.3), max_relative = 1e-14);
    }

    #[test]
    fn intermediate_log_degenerate() {
        let m = p4();
        assert_eq!(
            intermediate_prediction(0.0, 0.0, 1.5, &m, 1.0),
            Err(ProfileError::LogDegenerate(1.5))
        );
        assert!(matches!(
            intermediate_prediction(0.0, 2.0, 1.0, &m, 1.0),
            Err(ProfileError::PastBlowup { .. })
        ));
    }

    #[test]
    fn final_profile_examples() {
        let m = p4();
        // [32 ln(1000) / (9e-6)]^{1/3}
        assert_relative_eq!(final_profile(1e-3, &m).unwrap(), 290.679_767_465_641, max_relative = 1e-14);
        assert_eq!(final_profile(0.0, &m), Err(ProfileError::Origin));
        assert_eq!(final_profile(1.0, &m), Err(ProfileError::LogDegenerate(1.0)));

        let cst = (32.0f64 / 9.0).powf(1.0 / 3.0);
        for k in 1..50 {
            let r = 0.6 * f64::from(k) / 50.0;
            let u = final_profile(r, &m).unwrap();
            let log = -r.ln();
            assert_relative_eq!(u * r.powf(2.0 / 3.0) * log.powf(-1.0 / 3.0), cst, max_relative = 1e-14);
        }
    }

    #[test]
    fn final_profile_decreases_below_critical_radius() {
        let m = p4();
        let cap = (-0.5f64).exp();
        let mut prev = f64::INFINITY;
        for k in 1..=2000 {
            let r = cap * f64::from(k) / 2000.0;
            let u = final_profile(r, &m).unwrap();
            assert!(u < prev, "r = {r}");
            prev = u;
        }
    }

    #[test]
    fn final_profile_matches_rescaled_form() {
        for (p, q) in [(4.0, 3.0), (5.0, 4.0), (3.5, 3.0)] {
            let m = ModelParams::validate(p, q, 0.1, 1, None).unwrap();
            for r in [1e-6, 1e-3, 0.05, 0.2, 0.5, 0.9] {
                let log = -f64::ln(r);
                let alt = (m.b() * r * r / (2.0 * log)).powf(-m.rate());
                assert_relative_eq!(final_profile(r, &m).unwrap() / alt, 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn final_grad_bound_examples() {
        let m = p4();
        let v = final_grad_bound(1e-3, &m, 1.0).unwrap();
        assert_relative_eq!(v, 1e5 * (1000f64).ln().powf(7.0 / 12.0), max_relative = 1e-12);
        assert_relative_eq!(v, 308_754.443_818_327_2, max_relative = 1e-14);
        // exponent of |x| is -5/3
        let ratio = final_grad_bound(1e-4, &m, 1.0).unwrap() / final_grad_bound(1e-3, &m, 1.0).unwrap();
        let logs = ((1e4f64).ln() / (1e3f64).ln()).powf(7.0 / 12.0);
        assert_relative_eq!(ratio / logs, 10f64.powf(5.0 / 3.0), max_relative = 1e-12);
        assert_relative_eq!(final_grad_bound(1e-3, &m, 2.5).unwrap(), 2.5 * v, max_relative = 1e-15);
    }

    #[test]
    fn v_k0_examples() {
        let m = p4();
        assert_relative_eq!(v_k0(0.0, 4.0, &m), f_profile(4.0, &m), max_relative = 1e-15);
        assert_relative_eq!(v_k0(0.5, 4.0, &m), 10.5f64.powf(-1.0 / 3.0), max_relative = 1e-15);
        assert_relative_eq!(v_k0(0.5, 4.0, &m), 0.456_671_140_396_294_2, max_relative = 1e-15);
        assert_relative_eq!(
            v_k0(1.0 - 1e-15, 4.0, &m),
            (m.b() * 16.0f64).powf(-1.0 / 3.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn v_k0_solves_its_ode() {
        let m = p4();
        let h = 1e-6;
        for k0 in [0.5, 2.0, 4.0, 8.0] {
            for k in 1..99 {
                let tau = f64::from(k) / 100.0;
                let dv = (v_k0(tau + h, k0, &m) - v_k0(tau - h, k0, &m)) / (2.0 * h);
                let vp = v_k0(tau, k0, &m).powf(m.p());
                assert!((dv - vp).abs() < 1e-6 * vp, "k0 {k0} tau {tau}");
            }
        }
    }
}
