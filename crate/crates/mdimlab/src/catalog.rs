//! Named systems, as referenced from JSON and the command line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{make_phi_sr, make_psi134, make_varphi, Orientation, TruncatedIntervalSystem};
use crate::shift::{make_psi_j, SymbolicSystem};

/// `{"system": "phi_sr", "s": 1, "r": 1, "K": 20}` and friends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Tent3 {
        #[serde(default = "one")]
        power: u32,
    },
    PhiSr {
        s: u32,
        r: f64,
        #[serde(rename = "K")]
        k: usize,
    },
    Varphi {
        #[serde(rename = "K")]
        k: usize,
    },
    Psi134 {
        #[serde(rename = "K")]
        k: usize,
    },
    PsiJ {
        j: usize,
    },
    Shift {
        #[serde(default = "two")]
        max_symbol: u8,
    },
    Cantor {
        depth: usize,
    },
}

fn one() -> u32 {
    1
}

fn two() -> u8 {
    2
}

pub enum Built {
    Interval(TruncatedIntervalSystem),
    Symbolic(SymbolicSystem),
    /// A carrier set rather than a map.
    Cantor { depth: usize },
}

impl SystemSpec {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Input(format!("bad system spec: {e}")))
    }

    pub fn build(&self) -> Result<Built> {
        Ok(match *self {
            SystemSpec::Tent3 { power } => {
                if power == 0 || power > 39 {
                    return Err(Error::Input(format!("tent power {power} outside 1..=39")));
                }
                Built::Interval(TruncatedIntervalSystem::single_block(0.0, 1.0, 3u64.pow(power), Orientation::Alternating)?)
            }
            SystemSpec::PhiSr { s, r, k } => Built::Interval(make_phi_sr(s, r, k)?),
            SystemSpec::Varphi { k } => Built::Interval(make_varphi(k)?),
            SystemSpec::Psi134 { k } => Built::Interval(make_psi134(k)?),
            SystemSpec::PsiJ { j } => Built::Symbolic(make_psi_j(j)?),
            SystemSpec::Shift { max_symbol } => Built::Symbolic(SymbolicSystem::shift(max_symbol)),
            SystemSpec::Cantor { depth } => {
                if depth == 0 || depth > 20 {
                    return Err(Error::Input(format!("cantor depth {depth} outside 1..=20")));
                }
                Built::Cantor { depth }
            }
        })
    }

    pub fn interval(&self) -> Result<TruncatedIntervalSystem> {
        match self.build()? {
            Built::Interval(s) => Ok(s),
            _ => Err(Error::Input("this command needs an interval system".into())),
        }
    }
}
