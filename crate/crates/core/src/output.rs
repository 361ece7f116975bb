//! Stable machine-readable output: sorted JSON keys and floats rounded to a
//! fixed number of significant digits, so equal runs give equal bytes.

use serde_json::{Number, Value};

/// Significant digits kept for floats in canonical output.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds `x` to `SIGNIFICANT_DIGITS` significant digits. Negative zero
/// becomes zero.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let text = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    text.parse().unwrap_or(x)
}

/// Copy of `value` with every non-integer number rounded by `round_sig`.
pub fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(0.0));
            Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        // serde_json maps are ordered by key
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect()),
        other => other.clone(),
    }
}

/// Pretty-printed canonical JSON with a trailing newline.
pub fn to_canonical_string(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(&canonicalize(value)).expect("JSON values always serialize");
    text.push('\n');
    text
}
