//! Compact numeric formatting shared by every text output.
//!
//! All floating-point values written to CSV, cache, and plot files go through
//! [`g6`], which renders six significant digits in the shortest of positional
//! or exponent notation. The format is locale-free and stable, so identical
//! runs produce byte-identical files.

/// Format `x` with six significant digits, trimming trailing zeros.
///
/// Magnitudes from 1e-4 up to (but not including) 1e6 print positionally
/// (`0.0001`, `123456`); anything else uses exponent form (`1.5e7`, `4e-5`).
/// Zero prints as `0`; non-finite values print as `NaN`, `inf`, or `-inf`.
pub fn g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sign = if x < 0.0 { "-" } else { "" };
    let s = format!("{:.5e}", x.abs());
    let (mantissa, exp) = s.split_once('e').expect("exponent format always has e");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    // Six digits with the decimal point removed: "1.23456" -> "123456".
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    debug_assert_eq!(digits.len(), 6);
    let body = if (-4..=5).contains(&exp) {
        if exp >= 0 {
            let int_len = (exp + 1) as usize;
            let (int_part, frac_part) = digits.split_at(int_len);
            let frac_part = frac_part.trim_end_matches('0');
            if frac_part.is_empty() {
                int_part.to_string()
            } else {
                format!("{int_part}.{frac_part}")
            }
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            let frac = format!("{zeros}{digits}");
            format!("0.{}", frac.trim_end_matches('0'))
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    };
    format!("{sign}{body}")
}
