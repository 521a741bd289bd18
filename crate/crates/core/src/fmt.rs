//! Deterministic text formatting for emitted files.

use std::io::Write;

use crate::scalar::Scalar;

/// Significant digits used for every serialized float.
pub const SIGNIFICANT_DIGITS: usize = 10;

/// Formats `x` with ten significant digits, `%g` style.
///
/// Plain notation for decimal exponents in `[-5, 10)`, scientific otherwise.
/// Trailing zeros are trimmed and negative zero prints as `0`. Non-finite
/// values print as `nan`, `inf`, `-inf`.
pub fn float<T: Scalar>(x: T) -> String {
    let x = x.as_f64();
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// Optional float; empty cell for `None`.
pub fn opt_float<T: Scalar>(x: Option<T>) -> String {
    x.map(float).unwrap_or_default()
}

/// Percentage with exactly two decimals, as used in R² tables.
pub fn percent2<T: Scalar>(fraction: T) -> String {
    let v = fraction.as_f64() * 100.0;
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Writes the leading `# schema: <name>/<version>` comment line.
pub fn write_schema_line<W: Write>(w: &mut W, name: &str, version: u32) -> std::io::Result<()> {
    writeln!(w, "# schema: {name}/{version}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(float(0.1f64 + 0.2), "0.3");
        assert_eq!(float(1.0f64 / 3.0), "0.3333333333");
        assert_eq!(float(-2.5f64), "-2.5");
        assert_eq!(float(123456.0f64), "123456");
        assert_eq!(float(1.0e-7f64), "1e-7");
        assert_eq!(float(-1.234567891234e-9f64), "-1.234567891e-9");
        assert_eq!(float(9.999999999999e12f64), "1e13");
        assert_eq!(float(-0.0f64), "0");
        assert_eq!(float(0.000012345f64), "0.000012345");
        assert_eq!(float(f64::NAN), "nan");
        assert_eq!(float(0.5f32), "0.5");
    }

    #[test]
    fn percent_two_decimals() {
        assert_eq!(percent2(1.0f64), "100.00");
        assert_eq!(percent2(0.024049f64), "2.40");
        assert_eq!(percent2(-1e-9f64), "0.00");
    }
}
