//! Serde helpers that write exact rationals as decimal or `n/d` strings.

use alpha_core::prob::{format_q, parse_q};
use alpha_core::Q;
use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_q(*x))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
    let s = String::deserialize(d)?;
    parse_q(&s).ok_or_else(|| de::Error::custom(format!("not a rational number: {s:?}")))
}
