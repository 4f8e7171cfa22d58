use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-neuron activation function.
///
/// `Relu` is the only non-analytic entry; everything else is given locally by
/// a convergent power series, which is exactly the property the analytic
/// baseline experiments rely on (an analytic function vanishing on an open
/// set vanishes identically, so these activations can never implement exact
/// compact support).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Identity,
    Sigmoid,
    Tanh,
    Softplus,
    Swish,
    Gelu,
    Sin,
    /// Coefficients in increasing degree: c[0] + c[1] x + c[2] x^2 + ...
    Polynomial(Vec<f64>),
}

impl ActivationKind {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            // branch instead of max so the result is always +0.0 on the flat side
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => x,
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            ActivationKind::Swish => x * sigmoid(x),
            ActivationKind::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            ActivationKind::Sin => x.sin(),
            ActivationKind::Polynomial(c) => {
                let mut acc = 0.0;
                for &ck in c.iter().rev() {
                    acc = acc * x + ck;
                }
                acc
            }
        }
    }

    pub fn analytic(&self) -> bool {
        !matches!(self, ActivationKind::Relu)
    }

    pub fn name(&self) -> String {
        match self {
            ActivationKind::Relu => "relu".into(),
            ActivationKind::Identity => "identity".into(),
            ActivationKind::Sigmoid => "sigmoid".into(),
            ActivationKind::Tanh => "tanh".into(),
            ActivationKind::Softplus => "softplus".into(),
            ActivationKind::Swish => "swish".into(),
            ActivationKind::Gelu => "gelu".into(),
            ActivationKind::Sin => "sin".into(),
            ActivationKind::Polynomial(c) => format!("polynomial[{}]", c.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ActivationKind::Polynomial(c) = self {
            if c.is_empty() {
                return Err(Error::invalid("polynomial activation needs coefficients"));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("polynomial coefficients must be finite"));
            }
        }
        Ok(())
    }

    /// True for relu and identity, the only kinds whose exactness properties
    /// the mask/adjustment constructions rely on.
    pub fn exactness_safe(&self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::Identity)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_zero_side_is_positive_zero() {
        for x in [-1.0, -0.0, 0.0, f64::MIN_POSITIVE * -1.0] {
            let y = ActivationKind::Relu.apply(x);
            assert_eq!(y, 0.0);
            assert!(!y.is_sign_negative(), "relu({x}) produced -0.0");
        }
        assert_eq!(ActivationKind::Relu.apply(2.0), 2.0);
    }

    #[test]
    fn analytic_flags() {
        assert!(!ActivationKind::Relu.analytic());
        assert!(ActivationKind::Identity.analytic());
        assert!(ActivationKind::Sigmoid.analytic());
        assert!(ActivationKind::Polynomial(vec![0.0, 1.0]).analytic());
    }

    #[test]
    fn polynomial_horner_matches_direct() {
        let p = ActivationKind::Polynomial(vec![2.0, -1.0, 0.5]);
        let x = 1.25;
        let expected = 2.0 + -1.0 * x + 0.5 * x * x;
        assert!((p.apply(x) - expected).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!((ActivationKind::Sigmoid.apply(800.0) - 1.0).abs() < 1e-15);
        assert!(ActivationKind::Sigmoid.apply(-800.0) >= 0.0);
        assert!(ActivationKind::Sigmoid.apply(-800.0) < 1e-300);
        assert!(ActivationKind::Softplus.apply(-800.0) >= 0.0);
        assert_eq!(ActivationKind::Softplus.apply(800.0), 800.0);
    }

    #[test]
    fn gelu_reference_points() {
        // gelu(x) = x/2 (1 + erf(x/sqrt(2))); at 0 it's 0, large x it's x
        assert_eq!(ActivationKind::Gelu.apply(0.0), 0.0);
        assert!((ActivationKind::Gelu.apply(10.0) - 10.0).abs() < 1e-12);
        let g1 = ActivationKind::Gelu.apply(1.0);
        assert!((g1 - 0.8413447460685429).abs() < 1e-12);
    }

    #[test]
    fn serde_tags() {
        let k: ActivationKind = serde_json::from_str("\"relu\"").unwrap();
        assert_eq!(k, ActivationKind::Relu);
        let p: ActivationKind = serde_json::from_str("{\"polynomial\":[1.0,2.0]}").unwrap();
        assert_eq!(p, ActivationKind::Polynomial(vec![1.0, 2.0]));
        assert_eq!(serde_json::to_string(&ActivationKind::Gelu).unwrap(), "\"gelu\"");
    }
}
