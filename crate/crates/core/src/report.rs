//! Shared formatting helpers for CSV reports.

/// Round-trip-safe float formatting used in every CSV column so that
/// repeated runs produce byte-identical files.
pub fn fmt_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 && x.is_finite() {
        format!("{x:.1}")
    } else {
        format!("{x:.16e}")
    }
}
