use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Heaviside image of a control-message vector: bit `k` is set iff entry
/// `k` is positive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivationPattern(Vec<bool>);

impl ActivationPattern {
    /// NaN entries map to 0; use [`ActivationPattern::try_of`] to reject them.
    pub fn of(v: &[f64]) -> Self {
        Self(v.iter().map(|&x| x > 0.0).collect())
    }

    pub fn try_of(v: &[f64]) -> Result<Self> {
        if let Some(k) = v.iter().position(|x| x.is_nan()) {
            return Err(Error::NanActivation(k));
        }
        Ok(Self::of(v))
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ActivationPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Config(format!("bad pattern digit {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}
