//! Fixed-precision number formatting for CSV output.

/// Formats `x` with 15 significant digits, like C's `%.15g`.
pub fn g15(x: f64) -> String {
    const DIGITS: i32 = 15;
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // Round first, then read the exponent off the rounded value so that
    // e.g. 9.999999999999999e5 becomes 1e6 rather than 1000000.00000000.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::g15;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333333"),
            (123456.789, "123456.789"),
            (1e15, "1e+15"),
            (123456789012345.0, "123456789012345"),
            (1e-4, "0.0001"),
            (1e-5, "1e-05"),
            (2.5e-7, "2.5e-07"),
            (0.95, "0.95"),
            (f64::NAN, "NaN"),
        ];
        for (x, want) in cases {
            assert_eq!(g15(x), want, "{x}");
        }
    }

    #[test]
    fn round_trips_to_fifteen_digits() {
        for &x in &[std::f64::consts::PI, -1.23456789e-12, 9.87654321e200, 0.1 + 0.2] {
            let back: f64 = g15(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-14);
        }
    }
}
