//! Prospect-theoretic value and probability-weighting functions.
//!
//! The value function is the usual two-part power law around a reference
//! point: concave for gains, convex and scaled by `lambda_loss` for losses.
//! Probability weighting is either the identity or the one-parameter
//! inverse-S curve `p^g / (p^g + (1-p)^g)^(1/g)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability weighting applied to transition masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Identity,
    InverseS,
}

/// Shape of the value and weighting functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptParams {
    pub alpha_gain: f64,
    pub beta_loss: f64,
    pub lambda_loss: f64,
    /// Reference point for total GoE; outcomes below it are losses.
    pub goe_ref: f64,
    pub weighting: Weighting,
    pub weighting_gamma: f64,
}

impl Default for CptParams {
    fn default() -> Self {
        Self {
            alpha_gain: 0.5,
            beta_loss: 0.5,
            lambda_loss: 2.0,
            goe_ref: 0.2,
            weighting: Weighting::Identity,
            weighting_gamma: 0.65,
        }
    }
}

/// Below this the inverse-S curve stops being monotone on [0, 1].
pub const MIN_WEIGHTING_GAMMA: f64 = 0.28;

impl CptParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.alpha_gain) {
            return Err(Error::config("cpt.alpha", "gain exponent must lie in (0, 1]"));
        }
        if !in_unit(self.beta_loss) {
            return Err(Error::config("cpt.beta", "loss exponent must lie in (0, 1]"));
        }
        if !(self.lambda_loss >= 1.0) || !self.lambda_loss.is_finite() {
            return Err(Error::config("cpt.lambda", "loss aversion must be >= 1"));
        }
        if !(self.goe_ref >= 0.0) || !self.goe_ref.is_finite() {
            return Err(Error::config("cpt.goe_ref", "reference point must be >= 0"));
        }
        if self.weighting == Weighting::InverseS
            && !(self.weighting_gamma > MIN_WEIGHTING_GAMMA && self.weighting_gamma <= 1.0)
        {
            return Err(Error::config(
                "cpt.weighting_gamma",
                "inverse-S parameter must lie in (0.28, 1]",
            ));
        }
        Ok(())
    }

    /// Two-part value of outcome `x` against `ref_point`.
    pub fn value(&self, x: f64, ref_point: f64) -> f64 {
        if x >= ref_point {
            (x - ref_point).powf(self.alpha_gain)
        } else {
            -self.lambda_loss * (ref_point - x).powf(self.beta_loss)
        }
    }

    /// Gain branch only; outcomes below the reference are worth zero.
    pub fn value_gain_only(&self, x: f64, ref_point: f64) -> f64 {
        if x >= ref_point {
            (x - ref_point).powf(self.alpha_gain)
        } else {
            0.0
        }
    }

    /// Value of a total GoE against the configured reference point.
    pub fn goe_value(&self, goe: f64) -> f64 {
        self.value(goe, self.goe_ref)
    }

    /// Weighted probability. Errors when `p` is outside [0, 1].
    pub fn weight(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        Ok(self.weight_unchecked(p))
    }

    pub(crate) fn weight_unchecked(&self, p: f64) -> f64 {
        match self.weighting {
            Weighting::Identity => p,
            Weighting::InverseS => {
                if p <= 0.0 {
                    return 0.0;
                }
                if p >= 1.0 {
                    return 1.0;
                }
                let g = self.weighting_gamma;
                let num = p.powf(g);
                num / (num + (1.0 - p).powf(g)).powf(1.0 / g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inverse_s(g: f64) -> CptParams {
        CptParams { weighting: Weighting::InverseS, weighting_gamma: g, ..CptParams::default() }
    }

    #[test]
    fn value_examples() {
        let p = CptParams::default();
        assert_eq!(p.value(0.2, 0.2), 0.0);
        assert_abs_diff_eq!(p.value(0.7, 0.2), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.value(0.7, 0.2), 0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(p.value(0.0, 0.2), -2.0 * 0.2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.value(0.0, 0.2), -0.89443, epsilon = 1e-5);
    }

    #[test]
    fn gain_only_examples() {
        let p = CptParams::default();
        assert_abs_diff_eq!(p.value_gain_only(0.5, 0.0), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(p.value_gain_only(0.1, 0.3), 0.0);
        assert_eq!(p.value_gain_only(0.3, 0.3), 0.0);
    }

    #[test]
    fn weight_endpoints_and_examples() {
        for p in [CptParams::default(), inverse_s(0.65)] {
            assert_eq!(p.weight(0.0).unwrap(), 0.0);
            assert_eq!(p.weight(1.0).unwrap(), 1.0);
        }
        assert_eq!(CptParams::default().weight(0.37).unwrap(), 0.37);
        // 0.5^0.65 / (2 * 0.5^0.65)^(1/0.65), evaluated by hand in log space
        let g = 0.65f64;
        let expected = (g * 0.5f64.ln() - (2.0f64.ln() + g * 0.5f64.ln()) / g).exp();
        let w = inverse_s(g).weight(0.5).unwrap();
        assert_abs_diff_eq!(w, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(w, 0.4388, epsilon = 1e-4);
    }

    #[test]
    fn weight_rejects_out_of_range() {
        let p = CptParams::default();
        assert!(matches!(p.weight(-0.1), Err(Error::Domain(_))));
        assert!(matches!(p.weight(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn loss_aversion_on_grid() {
        let p = CptParams::default();
        for k in 1..=100 {
            let d = k as f64 / 100.0;
            let loss = p.value(0.3 - d, 0.3).abs();
            let gain = p.value(0.3 + d, 0.3);
            assert_abs_diff_eq!(loss, p.lambda_loss * gain, epsilon = 1e-12);
        }
    }

    #[test]
    fn validation_bounds() {
        assert!(CptParams::default().validate().is_ok());
        assert!(CptParams { lambda_loss: 0.5, ..CptParams::default() }.validate().is_err());
        assert!(CptParams { alpha_gain: 1.5, ..CptParams::default() }.validate().is_err());
        assert!(inverse_s(0.2).validate().is_err());
        assert!(inverse_s(0.65).validate().is_ok());
    }

    proptest! {
        #[test]
        fn value_is_monotone(a in -2.0f64..3.0, b in -2.0f64..3.0, r in 0.0f64..1.0) {
            let p = CptParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.value(lo, r) <= p.value(hi, r));
        }

        #[test]
        fn value_continuous_at_reference(r in 0.0f64..2.0) {
            let p = CptParams::default();
            prop_assert!(p.value(r + 1e-12, r).abs() < 1e-5);
            prop_assert!(p.value(r - 1e-12, r).abs() < 1e-5);
        }

        #[test]
        fn weight_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, g in 0.29f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for p in [CptParams::default(), inverse_s(g)] {
                prop_assert!(p.weight(lo).unwrap() <= p.weight(hi).unwrap() + 1e-12);
            }
        }
    }
}
