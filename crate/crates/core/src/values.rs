//! Canonical comparison of raw world values.

/// Canonical form of a raw value: trimmed, lowercased, inner whitespace
/// collapsed, and numeric when the text parses as a number.
#[derive(Debug, Clone, PartialEq)]
pub enum CanonicalValue {
    Number(f64),
    Text(String),
}

pub fn canonical_value(raw: &str) -> CanonicalValue {
    let text = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    match text.parse::<f64>() {
        Ok(n) if n.is_finite() => CanonicalValue::Number(n),
        _ => CanonicalValue::Text(text),
    }
}

/// Whether two worlds observed the same value.
pub fn values_match(a: &str, b: &str) -> bool {
    canonical_value(a) == canonical_value(b)
}
