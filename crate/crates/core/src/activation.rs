use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };
    pub const SYMMETRIC_UNIT: Interval = Interval { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Node nonlinearity. Every layer in a network carries one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [Self::Sigmoid, Self::Tanh, Self::Relu];

    /// Range used for binning this activation's outputs. ReLU is unbounded
    /// above, so its range is clipped to `[0, 1]`.
    pub fn output_range(self) -> Interval {
        match self {
            Self::Sigmoid | Self::Relu => Interval::UNIT,
            Self::Tanh => Interval::SYMMETRIC_UNIT,
        }
    }

    /// Range a node with this activation is driven over when it is perturbed.
    pub fn perturbation_range(self) -> Interval {
        self.output_range()
    }

    #[inline]
    pub fn apply_unchecked(self, x: f64) -> f64 {
        match self {
            Self::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Self::Tanh => x.tanh(),
            Self::Relu => x.max(0.0),
        }
    }

    pub fn apply(self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("{self} applied to non-finite input {x}")));
        }
        Ok(self.apply_unchecked(x))
    }

    /// Derivative expressed through the activation's output `a = f(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Self::Sigmoid => a * (1.0 - a),
            Self::Tanh => 1.0 - a * a,
            Self::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Self::Sigmoid => 0,
            Self::Tanh => 1,
            Self::Relu => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Sigmoid),
            1 => Some(Self::Tanh),
            2 => Some(Self::Relu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(ActivationKind::Sigmoid.apply(0.0).unwrap(), 0.5);
        assert_eq!(ActivationKind::Tanh.apply(0.0).unwrap(), 0.0);
        assert_eq!(ActivationKind::Relu.apply(-3.2).unwrap(), 0.0);
        assert_eq!(ActivationKind::Relu.apply(2.5).unwrap(), 2.5);
    }

    #[test]
    fn rejects_non_finite() {
        for kind in ActivationKind::ALL {
            assert!(matches!(kind.apply(f64::NAN), Err(Error::Domain(_))));
            assert!(kind.apply(f64::INFINITY).is_err());
        }
    }

    #[test]
    fn ranges() {
        assert_eq!(ActivationKind::Sigmoid.output_range(), Interval::UNIT);
        assert_eq!(ActivationKind::Tanh.output_range(), Interval::SYMMETRIC_UNIT);
        assert_eq!(ActivationKind::Relu.output_range(), Interval::UNIT);
        for kind in ActivationKind::ALL {
            assert_eq!(kind.perturbation_range(), kind.output_range());
        }
    }

    #[test]
    fn tags_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(ActivationKind::from_tag(kind.tag()), Some(kind));
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert_eq!(ActivationKind::from_tag(9), None);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        for kind in ActivationKind::ALL {
            for &z in &[-1.3, -0.2, 0.4, 2.1] {
                let fd = (kind.apply_unchecked(z + h) - kind.apply_unchecked(z - h)) / (2.0 * h);
                let an = kind.derivative_from_output(kind.apply_unchecked(z));
                assert!((fd - an).abs() < 1e-8, "{kind} at {z}: {fd} vs {an}");
            }
        }
    }
}
