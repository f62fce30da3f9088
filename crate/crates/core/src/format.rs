//! Fixed-precision float formatting shared by the CSV writers.

/// Significant digits used by every CSV writer in the crate.
pub const SIG_DIGITS: usize = 9;

/// Formats `x` like C's `%.9g`: nine significant digits, trailing zeros
/// trimmed, scientific notation outside `1e-4 <= |x| < 1e9`.
pub fn sig9(x: f64) -> String {
    format_sig(x, SIG_DIGITS)
}

pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    // Round through scientific formatting first so the exponent reflects the
    // rounded value (9.9999999996 -> 1.00000000e1).
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

/// Rounds `x` to the value a [`sig9`] round trip would produce.
pub fn quantize9(x: f64) -> f64 {
    sig9(x).parse().unwrap_or(x)
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig9(0.75), "0.75");
        assert_eq!(sig9(100.0), "100");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1234567890.0), "1.23456789e9");
        assert_eq!(sig9(0.00001234), "1.234e-5");
        assert_eq!(sig9(0.0001234), "0.0001234");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(9.9999999996), "10");
        assert_eq!(sig9(0.0), "0");
    }

    #[test]
    fn quantize_is_idempotent() {
        for &x in &[0.123456789123, 55.5555555555, 1e-7 / 3.0, 98765.4321987] {
            let q = quantize9(x);
            assert_eq!(sig9(q), sig9(x));
            assert_eq!(quantize9(q), q);
        }
    }
}
