use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Named scalar functions used as mimic targets and fitting-task ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetFn {
    Zero,
    Tanh,
    Sin,
    /// `exp(-x^2)`
    Bump,
    /// `tanh(4 sin x)`, a square wave with rounded edges.
    SquareWaveSmooth,
}

impl TargetFn {
    pub const ALL: [TargetFn; 5] = [
        TargetFn::Zero,
        TargetFn::Tanh,
        TargetFn::Sin,
        TargetFn::Bump,
        TargetFn::SquareWaveSmooth,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TargetFn::Zero => 0.0,
            TargetFn::Tanh => x.tanh(),
            TargetFn::Sin => x.sin(),
            TargetFn::Bump => (-x * x).exp(),
            TargetFn::SquareWaveSmooth => (4.0 * x.sin()).tanh(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetFn::Zero => "zero",
            TargetFn::Tanh => "tanh",
            TargetFn::Sin => "sin",
            TargetFn::Bump => "bump",
            TargetFn::SquareWaveSmooth => "square-wave-smooth",
        }
    }
}

impl fmt::Display for TargetFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        TargetFn::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown function id `{s}`")))
    }
}
