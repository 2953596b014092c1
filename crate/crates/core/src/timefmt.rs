//! Pinned timestamp encoding: ISO-8601 Zulu strings at seconds precision.
//!
//! Corpus and session files must be byte-identical across runs, so the
//! serialized form is fixed here instead of relying on chrono's defaults.

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(dt: &DateTime<Utc>, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true))
}

pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DateTime<Utc>, D::Error> {
    let raw = String::deserialize(de)?;
    let parsed = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
    Ok(parsed.with_timezone(&Utc).trunc_subsecs(0))
}
