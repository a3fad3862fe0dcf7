//! Float formatting shared by every CSV writer.

/// Formats `x` with 17 significant digits so it parses back to the same bits.
///
/// Infinities are written as `inf` / `-inf`, NaN as `nan`; `str::parse::<f64>`
/// accepts all three.
pub fn f64_17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}
