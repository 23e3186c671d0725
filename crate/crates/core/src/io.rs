//! Text output helpers shared by the CSV emitters.

/// `x` with 15 significant digits, trailing zeros removed.
///
/// Fixed notation is used for decimal exponents in `-5..15`, scientific
/// notation (`1.5e-7`) otherwise, as with C's `%.15g`.
pub fn fmt15(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-joined [`fmt15`] values.
pub fn join15(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| fmt15(v))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(fmt15(0.0), "0");
        assert_eq!(fmt15(1.0), "1");
        assert_eq!(fmt15(-2.5), "-2.5");
        assert_eq!(fmt15(1.0 / 3.0), "0.333333333333333");
        assert_eq!(
            fmt15(4.0 * std::f64::consts::PI.powi(2)),
            "39.4784176043574"
        );
        assert_eq!(fmt15(1.5e-7), "1.5e-7");
        assert_eq!(fmt15(1e20), "1e20");
        assert_eq!(fmt15(123456789012345.0), "123456789012345");
        assert_eq!(fmt15(1234567890123456.0), "1.23456789012346e15");
        assert_eq!(fmt15(0.0001), "0.0001");
    }

    #[test]
    fn rounding_carries_into_exponent() {
        assert_eq!(fmt15(9.999999999999999), "10");
        assert_eq!(fmt15(0.99999999999999999), "1");
    }

    #[test]
    fn round_trips_to_15_digits() {
        for x in [std::f64::consts::E, 1e-300, 6.02214076e23, -0.000123456789] {
            let back: f64 = fmt15(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-14);
        }
    }
}
