//! Fixed-width float formatting for artifacts.
//!
//! Every float written to a CSV or JSON artifact goes through [`g17`]:
//! scientific notation with 17 significant digits. That is enough to
//! round-trip any `f64` exactly, and because the format is fixed (rather
//! than shortest-representation) reruns produce byte-identical files.

/// Format with 17 significant digits, e.g. `1.4973500000000001e-1`.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parse a decimal written by [`g17`] (or any standard float literal).
pub fn parse_f64(text: &str) -> Option<f64> {
    text.trim().parse::<f64>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips_exactly() {
        for &x in &[
            0.0,
            1.0,
            -1.0,
            0.1,
            std::f64::consts::PI,
            2.2e-11,
            -24.539_999,
            f64::MIN_POSITIVE,
            1.797e308,
        ] {
            let s = g17(x);
            assert_eq!(parse_f64(&s), Some(x), "{s}");
        }
    }

    #[test]
    fn g17_is_fixed_width_format() {
        assert_eq!(g17(1.0), "1.0000000000000000e0");
        assert_eq!(g17(-0.5), "-5.0000000000000000e-1");
    }

    #[test]
    fn g17_round_trips_through_serde_json() {
        // serde_json must be built with correctly rounded float parsing
        // (the float_roundtrip feature) for sidecar metadata to survive.
        for &x in &[1e-6, 0.99, 2.2e-11, 1.0 / 3.0] {
            let parsed: f64 = serde_json::from_str(&g17(x)).unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits());
        }
    }
}
