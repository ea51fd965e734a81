//! Numeric text formatting shared by every file the crate writes.

/// Rounds to 9 significant digits and prints the shortest decimal that
/// parses back to that rounded value.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific literal parses");
    if rounded == 0.0 {
        return "0".to_string();
    }
    format!("{rounded}")
}

/// The value `sig9` would print, as a float.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("scientific literal parses")
}

/// The smallest value with at most 9 significant digits that is `>= x`.
pub fn ceil9(x: f64) -> f64 {
    let r = round9(x);
    if r >= x || !x.is_finite() {
        return r;
    }
    let exp = r.abs().log10().floor() as i32;
    let ulp9 = 10f64.powi(exp - 8);
    let up = round9(r + ulp9);
    if up >= x {
        up
    } else {
        round9(up + ulp9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.55), "0.55");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(4.844805262336), "4.84480526");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(12345678901.0), "12345678900");
        assert_eq!(sig9(1e-7), "0.0000001");
        assert_eq!(round9(2.0 / 3.0), 0.666666667);
        assert_eq!(sig9(round9(0.1 + 0.2)), sig9(0.1 + 0.2));
    }

    #[test]
    fn ceil9_rounds_up() {
        assert_eq!(ceil9(1.0), 1.0);
        assert_eq!(ceil9(1.0000000001), 1.00000001);
        assert_eq!(ceil9(4.844805262336), 4.84480527);
        for i in 1..2000 {
            let x = 0.37 * i as f64 / 7.0 + 1e-11 * i as f64;
            let c = ceil9(x);
            assert!(c >= x && (c - x) / x < 2e-8 && round9(c) == c, "{x} {c}");
        }
    }
}
