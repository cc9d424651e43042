//! Quantities written as `"<number> <unit>"` in run configurations.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Power,
    Angle,
}

impl Dimension {
    /// SI value of one `unit`, as `(multiplier, divisor)`. Prefixes divide by
    /// an exact power of ten so that e.g. `"300 nm"` rounds like `300e-9`.
    fn scale(self, unit: &str) -> Option<(f64, f64)> {
        Some(match (self, unit) {
            (Dimension::Length, "m") | (Dimension::Power, "W") | (Dimension::Angle, "rad") => (1.0, 1.0),
            (Dimension::Length, "mm") | (Dimension::Power, "mW") => (1.0, 1e3),
            (Dimension::Length, "um" | "μm" | "µm") | (Dimension::Power, "uW" | "μW" | "µW") => (1.0, 1e6),
            (Dimension::Length, "nm") => (1.0, 1e9),
            (Dimension::Angle, "pi" | "π") => (std::f64::consts::PI, 1.0),
            (Dimension::Angle, "deg") => (std::f64::consts::PI, 180.0),
            _ => return None,
        })
    }

    fn units(self) -> &'static str {
        match self {
            Dimension::Length => "m, mm, um, nm",
            Dimension::Power => "W, mW, uW",
            Dimension::Angle => "rad, pi, deg",
        }
    }
}

/// Parses e.g. `"865 nm"` or `"0.5 pi"` into SI.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let t = text.trim();
    let split = t.find(|c: char| c.is_whitespace()).ok_or_else(|| {
        format!("{t:?} has no unit; write a number followed by one of {}", dim.units())
    })?;
    let (num, unit) = (t[..split].trim(), t[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("{num:?} is not a number in {t:?}"))?;
    let (mul, div) = dim.scale(unit).ok_or_else(|| format!("unknown unit {unit:?} in {t:?}; expected {}", dim.units()))?;
    if !value.is_finite() {
        return Err(format!("{t:?} is not finite"));
    }
    Ok(value * mul / div)
}

macro_rules! quantity {
    ($name:ident, $dim:expr, $what:literal) => {
        /// SI value parsed from a unit-carrying string.
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
        pub struct $name(pub f64);

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl Visitor<'_> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(f, concat!("a ", $what, " string such as {:?}"), example($dim))
                    }
                    fn visit_str<E: de::Error>(self, s: &str) -> Result<$name, E> {
                        parse_quantity(s, $dim).map($name).map_err(E::custom)
                    }
                }
                d.deserialize_str(V)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(self.0)
            }
        }
    };
}

fn example(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Length => "865 nm",
        Dimension::Power => "1.5 mW",
        Dimension::Angle => "0.5 pi",
    }
}

quantity!(Length, Dimension::Length, "length");
quantity!(Power, Dimension::Power, "power");
quantity!(Angle, Dimension::Angle, "angle");
