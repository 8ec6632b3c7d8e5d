//! Typed attribute and measure values.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Declared type of a dimension attribute or a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Integer,
    Decimal,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {raw:?} as {expected}")]
pub struct ValueParseError {
    pub raw: String,
    pub expected: ValueType,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::String => "string",
            ValueType::Integer => "integer",
            ValueType::Decimal => "decimal",
            ValueType::Date => "date",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Integer | ValueType::Decimal)
    }

    /// Whether `<`, `<=`, `>`, `>=` are meaningful for this type.
    pub fn is_ordered(self) -> bool {
        !matches!(self, ValueType::String)
    }

    pub fn parse_value(self, raw: &str) -> Result<Value, ValueParseError> {
        let err = || ValueParseError {
            raw: raw.to_owned(),
            expected: self,
        };
        match self {
            ValueType::String => Ok(Value::Str(raw.to_owned())),
            ValueType::Integer => raw.trim().parse().map(Value::Int).map_err(|_| err()),
            ValueType::Decimal => parse_decimal(raw).map(Value::Dec).ok_or_else(err),
            ValueType::Date => NaiveDate::parse_from_str(raw.trim(), DATE_FORMAT)
                .map(Value::Date)
                .map_err(|_| err()),
        }
    }

    /// Parses a measure value; only numeric types are accepted.
    pub fn parse_number(self, raw: &str) -> Result<Number, ValueParseError> {
        let err = || ValueParseError {
            raw: raw.to_owned(),
            expected: self,
        };
        match self {
            ValueType::Integer => raw.trim().parse().map(Number::Int).map_err(|_| err()),
            ValueType::Decimal => parse_decimal(raw).map(Number::Dec).ok_or_else(err),
            _ => Err(err()),
        }
    }
}

fn parse_decimal(raw: &str) -> Option<f64> {
    let v: f64 = raw.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "string" => Ok(ValueType::String),
            "integer" => Ok(ValueType::Integer),
            "decimal" => Ok(ValueType::Decimal),
            "date" => Ok(ValueType::Date),
            other => Err(format!("unknown value type {other:?}")),
        }
    }
}

/// A typed dimension attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Dec(f64),
    Date(NaiveDate),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Str(_) => ValueType::String,
            Value::Int(_) => ValueType::Integer,
            Value::Dec(_) => ValueType::Decimal,
            Value::Date(_) => ValueType::Date,
        }
    }

    /// Compares two values of the same type; `None` across types.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Dec(a), Value::Dec(b)) => a.partial_cmp(b),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// Hashable identity of the value, used by attribute indices.
    pub fn key(&self) -> ValueKey {
        match self {
            Value::Str(s) => ValueKey::Str(s.clone()),
            Value::Int(i) => ValueKey::Int(*i),
            // -0.0 and 0.0 compare equal, so they must share a key.
            Value::Dec(d) => ValueKey::Dec(if *d == 0.0 { 0 } else { d.to_bits() }),
            Value::Date(d) => ValueKey::Date(*d),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
            Value::Dec(d) => write!(f, "{d}"),
            Value::Date(d) => write!(f, "{}", d.format(DATE_FORMAT)),
        }
    }
}

/// Numbers as JSON numbers, strings and dates as strings.
impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(i) => s.serialize_i64(*i),
            Value::Dec(d) => s.serialize_f64(*d),
            other => s.collect_str(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ValueKey {
    Str(String),
    Int(i64),
    Dec(u64),
    Date(NaiveDate),
}

/// A measure value. Integers stay exact; decimals are binary floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Dec(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Dec(d) => d,
        }
    }

    pub fn value_type(self) -> ValueType {
        match self {
            Number::Int(_) => ValueType::Integer,
            Number::Dec(_) => ValueType::Decimal,
        }
    }

    /// Equality with exact integers and relative tolerance for decimals.
    pub fn approx_eq(self, other: Number, rel_tol: f64) -> bool {
        match (self, other) {
            (Number::Int(a), Number::Int(b)) => a == b,
            (a, b) => approx_eq_f64(a.as_f64(), b.as_f64(), rel_tol),
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Int(i) => write!(f, "{i}"),
            Number::Dec(d) => write!(f, "{d}"),
        }
    }
}

pub fn approx_eq_f64(a: f64, b: f64, rel_tol: f64) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= rel_tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_declared_type() {
        assert_eq!(ValueType::Integer.parse_value("58").unwrap(), Value::Int(58));
        assert_eq!(ValueType::Decimal.parse_value("10.5").unwrap(), Value::Dec(10.5));
        assert_eq!(
            ValueType::Date.parse_value("1998-06-02").unwrap(),
            Value::Date(NaiveDate::from_ymd_opt(1998, 6, 2).unwrap())
        );
        assert_eq!(
            ValueType::String.parse_value(" a b ").unwrap(),
            Value::Str(" a b ".into())
        );
    }

    #[test]
    fn rejects_bad_literals() {
        assert!(ValueType::Integer.parse_value("5.5").is_err());
        assert!(ValueType::Decimal.parse_value("NaN").is_err());
        assert!(ValueType::Decimal.parse_value("inf").is_err());
        assert!(ValueType::Date.parse_value("02/06/1998").is_err());
        assert!(ValueType::String.parse_number("1").is_err());
    }

    #[test]
    fn display_round_trips_decimals() {
        for d in [0.1, 10.5, 7.0, 1e-12, 123456789.125] {
            let shown = Value::Dec(d).to_string();
            assert_eq!(ValueType::Decimal.parse_value(&shown).unwrap(), Value::Dec(d));
        }
    }

    #[test]
    fn signed_zero_shares_a_key() {
        assert_eq!(Value::Dec(0.0).key(), Value::Dec(-0.0).key());
    }

    #[test]
    fn approx_eq_is_relative() {
        assert!(approx_eq_f64(1e12, 1e12 + 1.0, 1e-9));
        assert!(!approx_eq_f64(1.0, 1.0 + 1e-6, 1e-9));
        assert!(!Number::Int(3).approx_eq(Number::Int(4), 1.0));
    }
}
