//! Fixed-precision number formatting for terminal output.

/// Scientific notation with 6 fractional digits.
pub fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

/// Scientific notation that round-trips an `f64` exactly.
pub fn sci_exact(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_form_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0] {
            assert_eq!(sci_exact(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(sci(1234.5), "1.234500e3");
    }
}
