use std::fmt;
use std::str::FromStr;

use rlus_core::baselines::BaselineKind;
use serde::{Deserialize, Serialize};

/// A recovery method evaluated by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Depermute,
    Levsort,
    Identity,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Depermute, Method::Levsort, Method::Identity, Method::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Depermute => "depermute",
            Method::Levsort => "levsort",
            Method::Identity => "identity",
            Method::Oracle => "oracle",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::Depermute => None,
            Method::Levsort => Some(BaselineKind::RLocalLevsort),
            Method::Identity => Some(BaselineKind::Identity),
            Method::Oracle => Some(BaselineKind::OraclePermutation),
        }
    }
}

impl From<BaselineKind> for Method {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::RLocalLevsort => Method::Levsort,
            BaselineKind::Identity => Method::Identity,
            BaselineKind::OraclePermutation => Method::Oracle,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected depermute, levsort, identity or oracle)"))
    }
}
