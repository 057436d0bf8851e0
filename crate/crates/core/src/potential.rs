//! Positive potentials `v(x, t)` depending on `x` only through `d(x, x0)`.
//!
//! Mini-language accepted by [`PotentialSpec::from_str`]:
//!
//! | string                        | potential                         |
//! |-------------------------------|-----------------------------------|
//! | `const:1.0`                   | `v ≡ 1`                           |
//! | `power:2.5`                   | `(1 + d)^2.5`                     |
//! | `tree-exp:lambda=3,N=2[,C=1]` | `C · max(d,1)^λ · N^{λ d}`        |
//! | `tpower:-2`                   | `(1 + t)^{-2}`                    |
//! | `sep:tpower:0.5;power:1.0`    | `(1 + t)^{0.5} · (1 + d)^{1}`     |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("bad potential `{input}`: {msg}")]
pub struct PotentialParseError {
    pub input: String,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialPart {
    Constant(f64),
    /// `(1 + d)^λ`
    Power {
        lambda: f64,
    },
    /// `C · max(d, 1)^λ · N^{λ d}`
    TreeExp {
        c: f64,
        lambda: f64,
        n: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalPart {
    Constant(f64),
    /// `(1 + t)^β`
    TPower {
        beta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PotentialSpec {
    Constant(f64),
    Spatial(SpatialPart),
    Separable { time: TemporalPart, space: SpatialPart },
}

impl SpatialPart {
    fn ln_value(&self, d: f64) -> f64 {
        match *self {
            SpatialPart::Constant(c) => c.ln(),
            SpatialPart::Power { lambda } => lambda * (1.0 + d).ln(),
            SpatialPart::TreeExp { c, lambda, n } => c.ln() + lambda * d.max(1.0).ln() + lambda * d * n.ln(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            SpatialPart::Constant(c) if !(c > 0.0 && c.is_finite()) => Err(format!("constant {c} must be positive")),
            SpatialPart::Power { lambda } if !lambda.is_finite() => Err("exponent must be finite".into()),
            SpatialPart::TreeExp { c, lambda, n } if !(c > 0.0 && c.is_finite() && n >= 1.0 && n.is_finite() && lambda.is_finite()) => {
                Err("tree-exp needs C > 0, N >= 1 and finite lambda".into())
            }
            _ => Ok(()),
        }
    }
}

impl TemporalPart {
    fn ln_value(&self, t: f64) -> f64 {
        match *self {
            TemporalPart::Constant(c) => c.ln(),
            TemporalPart::TPower { beta } => beta * (1.0 + t).ln(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            TemporalPart::Constant(c) if !(c > 0.0 && c.is_finite()) => Err(format!("constant {c} must be positive")),
            TemporalPart::TPower { beta } if !beta.is_finite() => Err("exponent must be finite".into()),
            _ => Ok(()),
        }
    }
}

impl PotentialSpec {
    pub fn constant(c: f64) -> Self {
        PotentialSpec::Constant(c)
    }

    /// `ln v` at distance `d` from the base point and time `t`.
    pub fn ln_value(&self, d: f64, t: f64) -> f64 {
        match self {
            PotentialSpec::Constant(c) => c.ln(),
            PotentialSpec::Spatial(s) => s.ln_value(d),
            PotentialSpec::Separable { time, space } => time.ln_value(t) + space.ln_value(d),
        }
    }

    pub fn value(&self, d: f64, t: f64) -> f64 {
        match self {
            PotentialSpec::Constant(c) => *c,
            _ => self.ln_value(d, t).exp(),
        }
    }

    /// `v^{-q}`, evaluated in log space.
    pub fn inverse_power(&self, d: f64, t: f64, q: f64) -> f64 {
        (-q * self.ln_value(d, t)).exp()
    }

    pub fn is_time_independent(&self) -> bool {
        !matches!(self, PotentialSpec::Separable { time: TemporalPart::TPower { beta }, .. } if *beta != 0.0)
    }

    pub fn is_space_independent(&self) -> bool {
        match self {
            PotentialSpec::Constant(_) => true,
            PotentialSpec::Spatial(s) | PotentialSpec::Separable { space: s, .. } => matches!(s, SpatialPart::Constant(_)),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            PotentialSpec::Constant(c) => SpatialPart::Constant(*c).validate(),
            PotentialSpec::Spatial(s) => s.validate(),
            PotentialSpec::Separable { time, space } => {
                time.validate()?;
                space.validate()
            }
        }
    }

    /// Binds the potential to the distance row `d(x0, ·)` of a graph.
    pub fn bind(self, distances: Arc<Vec<f64>>) -> BoundPotential {
        BoundPotential { spec: self, distances }
    }
}

/// A potential evaluated on the nodes of one graph.
#[derive(Debug, Clone)]
pub struct BoundPotential {
    pub spec: PotentialSpec,
    distances: Arc<Vec<f64>>,
}

impl BoundPotential {
    pub fn value(&self, x: usize, t: f64) -> f64 {
        self.spec.value(self.distances[x], t)
    }

    pub fn inverse_power(&self, x: usize, t: f64, q: f64) -> f64 {
        self.spec.inverse_power(self.distances[x], t, q)
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

fn parse_spatial(s: &str) -> Result<SpatialPart, String> {
    let (head, rest) = s.split_once(':').ok_or_else(|| format!("missing `:` in `{s}`"))?;
    match head {
        "const" => Ok(SpatialPart::Constant(parse_num(rest)?)),
        "power" => Ok(SpatialPart::Power { lambda: parse_num(rest)? }),
        "tree-exp" => {
            let (mut lambda, mut n, mut c) = (None, None, 1.0);
            for kv in rest.split(',') {
                let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
                match k.trim() {
                    "lambda" => lambda = Some(parse_num(v)?),
                    "N" | "n" => n = Some(parse_num(v)?),
                    "C" | "c" => c = parse_num(v)?,
                    other => return Err(format!("unknown tree-exp key `{other}`")),
                }
            }
            Ok(SpatialPart::TreeExp { c, lambda: lambda.ok_or("tree-exp needs lambda")?, n: n.ok_or("tree-exp needs N")? })
        }
        other => Err(format!("unknown spatial kind `{other}`")),
    }
}

fn parse_temporal(s: &str) -> Result<TemporalPart, String> {
    let (head, rest) = s.split_once(':').ok_or_else(|| format!("missing `:` in `{s}`"))?;
    match head {
        "const" => Ok(TemporalPart::Constant(parse_num(rest)?)),
        "tpower" => Ok(TemporalPart::TPower { beta: parse_num(rest)? }),
        other => Err(format!("unknown temporal kind `{other}`")),
    }
}

impl FromStr for PotentialSpec {
    type Err = PotentialParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parsed = (|| -> Result<PotentialSpec, String> {
            if let Some(rest) = s.strip_prefix("sep:") {
                let (time, space) = rest.split_once(';').ok_or("sep needs `<time>;<space>`")?;
                return Ok(PotentialSpec::Separable { time: parse_temporal(time)?, space: parse_spatial(space)? });
            }
            if let Some(rest) = s.strip_prefix("const:") {
                return Ok(PotentialSpec::Constant(parse_num(rest)?));
            }
            if s.starts_with("tpower:") {
                return Ok(PotentialSpec::Separable { time: parse_temporal(s)?, space: SpatialPart::Constant(1.0) });
            }
            Ok(PotentialSpec::Spatial(parse_spatial(s)?))
        })();
        let spec = parsed.map_err(|msg| PotentialParseError { input: s.to_string(), msg })?;
        spec.validate().map_err(|msg| PotentialParseError { input: s.to_string(), msg })?;
        Ok(spec)
    }
}

impl fmt::Display for SpatialPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialPart::Constant(c) => write!(f, "const:{c}"),
            SpatialPart::Power { lambda } => write!(f, "power:{lambda}"),
            SpatialPart::TreeExp { c, lambda, n } => write!(f, "tree-exp:lambda={lambda},N={n},C={c}"),
        }
    }
}

impl fmt::Display for TemporalPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalPart::Constant(c) => write!(f, "const:{c}"),
            TemporalPart::TPower { beta } => write!(f, "tpower:{beta}"),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Constant(c) => write!(f, "const:{c}"),
            PotentialSpec::Spatial(s) => write!(f, "{s}"),
            PotentialSpec::Separable { time, space } => write!(f, "sep:{time};{space}"),
        }
    }
}

impl TryFrom<String> for PotentialSpec {
    type Error = PotentialParseError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PotentialSpec> for String {
    fn from(p: PotentialSpec) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_forms() {
        assert_eq!("const:1.0".parse::<PotentialSpec>().unwrap(), PotentialSpec::Constant(1.0));
        assert_eq!("power:2.5".parse::<PotentialSpec>().unwrap(), PotentialSpec::Spatial(SpatialPart::Power { lambda: 2.5 }));
        assert_eq!(
            "tree-exp:lambda=3,N=2".parse::<PotentialSpec>().unwrap(),
            PotentialSpec::Spatial(SpatialPart::TreeExp { c: 1.0, lambda: 3.0, n: 2.0 })
        );
        assert_eq!(
            "sep:tpower:0.5;power:1.0".parse::<PotentialSpec>().unwrap(),
            PotentialSpec::Separable { time: TemporalPart::TPower { beta: 0.5 }, space: SpatialPart::Power { lambda: 1.0 } }
        );
        assert!("const:0".parse::<PotentialSpec>().is_err());
        assert!("tree-exp:lambda=3".parse::<PotentialSpec>().is_err());
        assert!("warp:1".parse::<PotentialSpec>().is_err());
        assert!("sep:power:1;const:1".parse::<PotentialSpec>().is_err());
    }

    #[test]
    fn values() {
        let v: PotentialSpec = "tree-exp:lambda=2,N=3,C=0.5".parse().unwrap();
        assert!((v.value(2.0, 0.0) - 0.5 * 4.0 * 81.0).abs() < 1e-9);
        assert!((v.value(0.0, 7.0) - 0.5).abs() < 1e-15);
        let w: PotentialSpec = "tpower:-2".parse().unwrap();
        assert!((w.value(5.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((w.inverse_power(0.0, 1.0, 2.0) - 16.0).abs() < 1e-12);
        assert!(!w.is_time_independent());
        assert!(w.is_space_independent());
        assert!(v.is_time_independent());
    }

    proptest! {
        #[test]
        fn display_round_trips(beta in -3.0f64..3.0, lambda in 0.0f64..4.0, n in 1.0f64..5.0) {
            for spec in [
                PotentialSpec::Separable { time: TemporalPart::TPower { beta }, space: SpatialPart::TreeExp { c: 2.0, lambda, n } },
                PotentialSpec::Spatial(SpatialPart::Power { lambda }),
            ] {
                let back: PotentialSpec = spec.to_string().parse().unwrap();
                prop_assert_eq!(back, spec);
            }
        }

        #[test]
        fn strictly_positive(d in 0.0f64..50.0, t in 0.0f64..1e3, lambda in 0.0f64..3.0) {
            let v = PotentialSpec::Separable { time: TemporalPart::TPower { beta: -2.0 }, space: SpatialPart::TreeExp { c: 1.0, lambda, n: 2.0 } };
            prop_assert!(v.value(d, t) > 0.0);
        }
    }
}
