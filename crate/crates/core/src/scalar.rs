//! Numeric abstraction shared by every computation in the crate.
//!
//! Metric values, rule thresholds, densities, scores and effort allocations
//! are all carried in a type implementing [`Scalar`]. `f64` is the everyday
//! choice; `Rational64` gives exact comparisons and exact ratios (1/3 stays
//! 1/3), which is handy when a threshold sits right on a metric value.

use std::fmt::Debug;

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{CheckedDiv, Num, Zero};

/// A number type usable for metrics, thresholds and scores.
pub trait Scalar: Num + PartialOrd + Copy + Debug + Send + Sync + 'static {
    /// Converts an event count.
    fn from_count(n: u64) -> Self;

    /// Parses a numeric literal: a decimal (`12`, `0.05`, `-1.5e3`) or a
    /// fraction of two decimals (`1/3`). Returns `None` for malformed or
    /// non-finite input.
    fn parse_literal(text: &str) -> Option<Self>;

    /// Renders the value so that [`Scalar::parse_literal`] returns it unchanged.
    fn render(&self) -> String;

    fn to_f64(&self) -> f64;

    fn is_finite(&self) -> bool;

    /// Rounds half away from zero to `places` decimals, as display text.
    fn round_half_up(&self, places: u32) -> String;
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_count(n: u64) -> Self {
                n as $t
            }

            fn parse_literal(text: &str) -> Option<Self> {
                let text = text.trim();
                let value = match text.split_once('/') {
                    Some((num, den)) => {
                        let num: $t = parse_float(num)?;
                        let den: $t = parse_float(den)?;
                        if den == 0.0 {
                            return None;
                        }
                        num / den
                    }
                    None => parse_float(text)?,
                };
                value.is_finite().then_some(value)
            }

            fn render(&self) -> String {
                // Display for floats is the shortest round-tripping decimal.
                let s = self.to_string();
                if s == "-0" {
                    "0".to_string()
                } else {
                    s
                }
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn is_finite(&self) -> bool {
                <$t>::is_finite(*self)
            }

            fn round_half_up(&self, places: u32) -> String {
                round_decimal_text(&self.to_string(), places)
            }
        }
    };
}

fn parse_float<F: std::str::FromStr>(text: &str) -> Option<F> {
    let text = text.trim();
    // Reject the words `inf`/`nan` which FromStr would otherwise accept.
    if !text
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'))
    {
        return None;
    }
    text.parse().ok()
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for Rational64 {
    fn from_count(n: u64) -> Self {
        Rational64::from_integer(i64::try_from(n).expect("count exceeds i64 range"))
    }

    fn parse_literal(text: &str) -> Option<Self> {
        let text = text.trim();
        match text.split_once('/') {
            Some((num, den)) => {
                let num = parse_exact_decimal(num)?;
                let den = parse_exact_decimal(den)?;
                if den.is_zero() {
                    return None;
                }
                num.checked_div(&den)
            }
            None => parse_exact_decimal(text),
        }
    }

    fn render(&self) -> String {
        match terminating_decimal(self) {
            Some(s) => s,
            None => format!("{}/{}", self.numer(), self.denom()),
        }
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn is_finite(&self) -> bool {
        true
    }

    fn round_half_up(&self, places: u32) -> String {
        let scale = 10i128.pow(places);
        let num = i128::from(*self.numer()) * scale;
        let den = i128::from(*self.denom());
        // round(|n|/d) = floor((2|n| + d) / 2d)
        let magnitude = (2 * num.abs() + den) / (2 * den);
        format_scaled(num < 0 && magnitude != 0, magnitude as u128, places)
    }
}

/// Parses `[-]digits[.digits][e[+-]digits]` exactly.
fn parse_exact_decimal(text: &str) -> Option<Rational64> {
    let text = text.trim();
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(idx) => (&body[..idx], body[idx + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mut digits: i64 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        digits = digits
            .checked_mul(10)?
            .checked_add(i64::from(c.to_digit(10)?))?;
    }
    let exp = exponent.checked_sub(i32::try_from(frac_part.len()).ok()?)?;
    let pow = 10i64.checked_pow(exp.unsigned_abs())?;
    let mut value = if exp >= 0 {
        Rational64::from_integer(digits.checked_mul(pow)?)
    } else {
        Rational64::new(digits, pow)
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// Exact decimal text when the denominator has no prime factors besides 2 and 5.
fn terminating_decimal(value: &Rational64) -> Option<String> {
    let mut den = *value.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return None;
    }
    let places = twos.max(fives);
    let scale = 10i128.checked_pow(places)?;
    let scaled = i128::from(*value.numer()).checked_mul(scale)? / i128::from(*value.denom());
    Some(format_scaled(scaled < 0, scaled.unsigned_abs(), places))
}

fn format_scaled(negative: bool, magnitude: u128, places: u32) -> String {
    let scale = 10u128.pow(places);
    let (int, frac) = magnitude.div_rem(&scale);
    let sign = if negative { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}

/// Half-away-from-zero rounding of a plain decimal string (no exponent), as
/// produced by float `Display`.
fn round_decimal_text(text: &str, places: u32) -> String {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    let places = places as usize;
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(
            frac_part
                .bytes()
                .chain(std::iter::repeat(b'0'))
                .take(places),
        )
        .map(|b| b - b'0')
        .collect();
    let round_up = frac_part.as_bytes().get(places).is_some_and(|&b| b >= b'5');
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let int: String = digits[..split]
        .iter()
        .map(|d| char::from(b'0' + d))
        .collect();
    let frac: String = digits[split..]
        .iter()
        .map(|d| char::from(b'0' + d))
        .collect();
    let int = int.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let is_zero = int == "0" && frac.bytes().all(|b| b == b'0');
    let sign = if negative && !is_zero { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// `|a - b|`, used by tolerance checks in tests and allocation bookkeeping.
pub fn abs_diff<T: Scalar>(a: T, b: T) -> T {
    if a >= b {
        a - b
    } else {
        b - a
    }
}
