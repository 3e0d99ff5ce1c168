//! Shortest round-trip float formatting shared by every CSV writer.

/// Shortest decimal that parses back to the same `f64`, in scientific notation
/// for very small or large magnitudes (e.g. `0.99`, `2.220446049250313e-16`).
pub fn format_float(x: f64) -> String {
    match serde_json::Number::from_f64(x) {
        Some(n) => n.to_string(),
        None => x.to_string(),
    }
}
