use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GcrError;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_ENTROPY_FLOOR: f64 = 1e-12;

/// Reduction over the from-position axis when collapsing a column-reduced
/// store into one vector per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VectorReduce {
    Max,
    Median,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    /// class -> (from symbol, to symbol) -> n x n
    Fcam,
    /// class -> to symbol -> n x n
    Ccam,
    /// class -> symbol -> n
    Gtm(VectorReduce),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gsa {
    Sum,
    /// Divide every cell by the number of contributions it received.
    RelativeAverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Counting { alpha: f64 },
    Entropy { alpha: f64, floor: f64 },
}

/// One point of the GCR grid, written as a key like `gtm_avg-ravg-counting`.
///
/// Grammar: `{shape}-{gsa}[-{modifier}]` where shape is `fcam`, `ccam`,
/// `gtm_max`, `gtm_median` or `gtm_avg`; gsa is `sum` or `ravg`; modifier is
/// `t{factor}`, `counting[_a{alpha}]` or `entropy[_a{alpha}][_e{floor}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcrVariant {
    pub shape: Shape,
    pub gsa: Gsa,
    pub penalty: Option<Penalty>,
    pub threshold_factor: Option<f64>,
}

impl GcrVariant {
    pub const fn new(shape: Shape, gsa: Gsa) -> Self {
        Self {
            shape,
            gsa,
            penalty: None,
            threshold_factor: None,
        }
    }

    pub const fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = Some(penalty);
        self
    }

    pub const fn with_threshold(mut self, factor: f64) -> Self {
        self.threshold_factor = Some(factor);
        self
    }

    pub fn validate(&self) -> Result<(), GcrError> {
        let bad = |msg: String| Err(GcrError::InvalidVariant(msg));
        if self.penalty.is_some() && self.threshold_factor.is_some() {
            return bad("penalty and threshold cannot be combined".into());
        }
        if let Some(f) = self.threshold_factor {
            if !(f.is_finite() && f >= 0.0) {
                return bad(format!("threshold factor must be finite and >= 0, got {f}"));
            }
        }
        match self.penalty {
            Some(Penalty::Counting { alpha }) | Some(Penalty::Entropy { alpha, .. }) if !alpha.is_finite() => {
                bad(format!("alpha must be finite, got {alpha}"))
            }
            Some(Penalty::Entropy { floor, .. }) if !(floor.is_finite() && floor >= 0.0) => {
                bad(format!("entropy floor must be finite and >= 0, got {floor}"))
            }
            _ => Ok(()),
        }
    }

    /// Every shape and aggregation combined with no modifier, the three
    /// threshold factors and both penalties.
    pub fn default_grid() -> Vec<Self> {
        let shapes = [
            Shape::Fcam,
            Shape::Ccam,
            Shape::Gtm(VectorReduce::Max),
            Shape::Gtm(VectorReduce::Median),
            Shape::Gtm(VectorReduce::Avg),
        ];
        let mut out = Vec::new();
        for shape in shapes {
            for gsa in [Gsa::Sum, Gsa::RelativeAverage] {
                let base = Self::new(shape, gsa);
                out.push(base);
                for factor in [1.0, 1.3, 1.6] {
                    out.push(base.with_threshold(factor));
                }
                out.push(base.with_penalty(Penalty::Entropy {
                    alpha: DEFAULT_ALPHA,
                    floor: DEFAULT_ENTROPY_FLOOR,
                }));
                out.push(base.with_penalty(Penalty::Counting { alpha: DEFAULT_ALPHA }));
            }
        }
        out
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Fcam => "fcam",
            Shape::Ccam => "ccam",
            Shape::Gtm(VectorReduce::Max) => "gtm_max",
            Shape::Gtm(VectorReduce::Median) => "gtm_median",
            Shape::Gtm(VectorReduce::Avg) => "gtm_avg",
        })
    }
}

impl fmt::Display for GcrVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gsa = match self.gsa {
            Gsa::Sum => "sum",
            Gsa::RelativeAverage => "ravg",
        };
        write!(f, "{}-{gsa}", self.shape)?;
        if let Some(factor) = self.threshold_factor {
            write!(f, "-t{factor}")?;
        }
        match self.penalty {
            None => {}
            Some(Penalty::Counting { alpha }) => {
                f.write_str("-counting")?;
                if alpha != DEFAULT_ALPHA {
                    write!(f, "_a{alpha}")?;
                }
            }
            Some(Penalty::Entropy { alpha, floor }) => {
                f.write_str("-entropy")?;
                if alpha != DEFAULT_ALPHA {
                    write!(f, "_a{alpha}")?;
                }
                if floor != DEFAULT_ENTROPY_FLOOR {
                    write!(f, "_e{floor}")?;
                }
            }
        }
        Ok(())
    }
}

fn parse_penalty(text: &str) -> Option<Penalty> {
    let mut parts = text.split('_');
    let kind = parts.next()?;
    let (mut alpha, mut floor) = (DEFAULT_ALPHA, DEFAULT_ENTROPY_FLOOR);
    for part in parts {
        if let Some(v) = part.strip_prefix('a') {
            alpha = v.parse().ok()?;
        } else if let Some(v) = part.strip_prefix('e').filter(|_| kind == "entropy") {
            floor = v.parse().ok()?;
        } else {
            return None;
        }
    }
    match kind {
        "counting" => Some(Penalty::Counting { alpha }),
        "entropy" => Some(Penalty::Entropy { alpha, floor }),
        _ => None,
    }
}

impl FromStr for GcrVariant {
    type Err = GcrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || GcrError::InvalidVariant(format!("cannot parse variant key {s:?}"));
        let mut parts = s.split('-');
        let shape = match parts.next() {
            Some("fcam") => Shape::Fcam,
            Some("ccam") => Shape::Ccam,
            Some("gtm_max") => Shape::Gtm(VectorReduce::Max),
            Some("gtm_median") => Shape::Gtm(VectorReduce::Median),
            Some("gtm_avg") => Shape::Gtm(VectorReduce::Avg),
            _ => return Err(invalid()),
        };
        let gsa = match parts.next() {
            Some("sum") => Gsa::Sum,
            Some("ravg") => Gsa::RelativeAverage,
            _ => return Err(invalid()),
        };
        let mut variant = GcrVariant::new(shape, gsa);
        for modifier in parts {
            if let Some(factor) = modifier.strip_prefix('t') {
                if variant.threshold_factor.is_some() {
                    return Err(invalid());
                }
                variant.threshold_factor = Some(factor.parse().map_err(|_| invalid())?);
            } else {
                if variant.penalty.is_some() {
                    return Err(invalid());
                }
                variant.penalty = Some(parse_penalty(modifier).ok_or_else(invalid)?);
            }
        }
        variant.validate()?;
        Ok(variant)
    }
}

impl Serialize for GcrVariant {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GcrVariant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
