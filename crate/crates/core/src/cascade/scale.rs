use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-layer spatial shrink factor, an exact rational strictly inside (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scale(Ratio<u32>);

impl Scale {
    pub fn new(numer: u32, denom: u32) -> Result<Self> {
        if denom == 0 || numer == 0 || numer >= denom {
            return Err(Error::InvalidScale(format!("{numer}/{denom}")));
        }
        Ok(Self(Ratio::new(numer, denom)))
    }

    pub fn numer(self) -> u32 {
        *self.0.numer()
    }

    pub fn denom(self) -> u32 {
        *self.0.denom()
    }

    /// `floor(extent · scale)`.
    pub fn apply(self, extent: usize) -> usize {
        (extent as u64 * self.numer() as u64 / self.denom() as u64) as usize
    }

    /// `round(init · 2 · (1 − scale))`, halves rounded up.
    pub fn default_growth(self, init_channels: usize) -> usize {
        let (p, q) = (self.numer() as u64, self.denom() as u64);
        ((4 * init_channels as u64 * (q - p) + q) / (2 * q)) as usize
    }

    pub fn to_f64(self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidScale(s.to_string());
        let (p, q) = s.trim().split_once('/').ok_or_else(bad)?;
        let p: u32 = p.trim().parse().map_err(|_| bad())?;
        let q: u32 = q.trim().parse().map_err(|_| bad())?;
        Scale::new(p, q).map_err(|_| bad())
    }
}

impl TryFrom<String> for Scale {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scale> for String {
    fn from(s: Scale) -> String {
        s.to_string()
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}
