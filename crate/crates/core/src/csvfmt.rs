/// Nine significant digits in scientific notation, e.g. `1.23456789e-1`.
pub(crate) fn sig9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

/// Reads a value written by [`sig9`] or any other decimal form.
pub(crate) fn parse_f64(field: &str) -> Option<f64> {
    match field {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => field.parse().ok(),
    }
}
