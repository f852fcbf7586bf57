//! Fixed-precision float output for artifacts.

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Shortest decimal text of `x` rounded to `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    let r = round_sig(x, digits);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

/// General floats: 6 significant digits.
pub fn fmt_f(x: f64) -> String {
    fmt_sig(x, 6)
}

/// Probabilities: 4 significant digits.
pub fn fmt_p(x: f64) -> String {
    fmt_sig(x, 4)
}
