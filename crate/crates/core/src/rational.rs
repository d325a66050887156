//! Exact-rational scalar support.
//!
//! Probabilities enter either as exact rationals (strings like `"7/24"`)
//! or as floating values; a law keeps its mode end to end, so rational
//! inputs stay exact through convolution, renewal inversion and the taboo
//! dynamic program.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

/// A probability-like scalar in either exactness mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Prob {
    Exact(Rat),
    Float(f64),
}

impl Prob {
    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => rat_to_f64(r),
            Prob::Float(x) => *x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Prob::Exact(_))
    }
}

/// Parse `"num/den"` or a plain integer string into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rat> {
    let bad = |m: &str| Error::ModelFile(format!("cannot parse rational '{text}': {m}"));
    let mut parts = text.splitn(2, '/');
    let num_s = parts.next().ok_or_else(|| bad("empty"))?.trim();
    let num: BigInt = num_s.parse().map_err(|_| bad("bad numerator"))?;
    let den: BigInt = match parts.next() {
        Some(d) => d.trim().parse().map_err(|_| bad("bad denominator"))?,
        None => BigInt::one(),
    };
    if den.is_zero() {
        return Err(bad("zero denominator"));
    }
    Ok(Rat::new(num, den))
}

/// Canonical `"num/den"` rendering (reduced; integers keep the `/1`).
pub fn format_rational(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Convert a big rational to the nearest f64.
pub fn rat_to_f64(r: &Rat) -> f64 {
    // ToPrimitive on BigRational handles huge numerators/denominators by
    // scaling; fall back to a component ratio if it ever declines.
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn rat_is_negative(r: &Rat) -> bool {
    r.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["1/2", "7/24", "-3/4", "5", "100/25"] {
            let r = parse_rational(s).unwrap();
            let t = format_rational(&r);
            assert_eq!(parse_rational(&t).unwrap(), r);
        }
        assert_eq!(format_rational(&parse_rational("100/25").unwrap()), "4/1");
    }

    #[test]
    fn rejects_zero_denominator() {
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
    }

    #[test]
    fn conversion() {
        assert_eq!(parse_rational("7/24").unwrap().to_f64().unwrap(), 7.0 / 24.0);
    }
}
