//! Number formatting shared by the CSV writers.

/// Six significant digits in scientific notation, e.g. `2.36000e4`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000e0".to_string();
    }
    format!("{x:.5e}")
}
