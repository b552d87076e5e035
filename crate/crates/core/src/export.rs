//! Serialization helpers shared by the JSON and CSV exports.
//!
//! All floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every binary64 value. Non-finite values become JSON `null`.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Schema version stamped into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// 17-significant-digit rendering of a float.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A float serialized with [`fmt17`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

pub fn f17_vec(xs: &[f64]) -> Vec<F17> {
    xs.iter().copied().map(F17).collect()
}

pub fn f17_matrix(rows: &[Vec<f64>]) -> Vec<Vec<F17>> {
    rows.iter().map(|r| f17_vec(r)).collect()
}
