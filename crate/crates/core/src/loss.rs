//! Convex margin surrogates `l(z)`, evaluated at `z = -margin`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSpec {
    #[serde(alias = "exp")]
    Exponential,
    #[serde(alias = "log")]
    Logistic,
}

/// `l(z)`, `l'(z)` and `l''(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl LossSpec {
    pub fn eval(self, z: f64) -> LossValue {
        match self {
            LossSpec::Exponential => {
                let e = z.exp();
                LossValue {
                    value: e,
                    d1: e,
                    d2: e,
                }
            }
            LossSpec::Logistic => {
                let s = sigmoid(z);
                LossValue {
                    value: softplus(z),
                    d1: s,
                    d2: s * sigmoid(-z),
                }
            }
        }
    }

    pub fn value(self, z: f64) -> f64 {
        match self {
            LossSpec::Exponential => z.exp(),
            LossSpec::Logistic => softplus(z),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            LossSpec::Exponential => z.exp(),
            LossSpec::Logistic => sigmoid(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossSpec::Exponential => "exp",
            LossSpec::Logistic => "log",
        }
    }
}

impl std::str::FromStr for LossSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp" | "exponential" => Ok(LossSpec::Exponential),
            "log" | "logistic" => Ok(LossSpec::Logistic),
            other => Err(format!("unknown loss {other:?} (expected exp or log)")),
        }
    }
}

/// `ln(1 + e^z)` as `max(z, 0) + ln(1 + e^{-|z|})`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
