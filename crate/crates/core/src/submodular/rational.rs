use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::CheckedMul;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact rational number. Parses `"3/4"`, `"0.75"`, `"2"`; floats are read
/// through their shortest decimal form so `0.3` becomes `3/10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(pub Ratio<i64>);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::validation("rational", "zero denominator"));
        }
        Ok(Rational(Ratio::new(numer, denom)))
    }

    pub fn integer(v: i64) -> Self {
        Rational(Ratio::from_integer(v))
    }

    pub fn from_f64(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::validation("rational", format!("{v} is not finite")));
        }
        format!("{v}").parse()
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_negative(&self) -> bool {
        self.numer() < 0
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `self * scale` when that is an integer.
    pub fn scaled(&self, scale: u64) -> Option<i64> {
        let scale = i64::try_from(scale).ok()?;
        let prod = self.0.checked_mul(&Ratio::from_integer(scale))?;
        prod.is_integer().then(|| prod.to_integer())
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation("rational", format!("cannot parse {s:?}"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            return Rational::new(n, d);
        }
        if s.contains(['e', 'E']) {
            // exponent notation from tiny or huge floats
            let v: f64 = s.parse().map_err(|_| bad())?;
            return Ratio::<i64>::approximate_float(v)
                .map(Rational)
                .ok_or_else(bad);
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        let denom = 10i64.checked_pow(frac_part.len() as u32).ok_or_else(bad)?;
        Rational::new(if neg { -numer } else { numer }, denom)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(Rational::integer(v)),
            Repr::Float(v) => Rational::from_f64(v),
            Repr::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Least common multiple of the denominators.
pub fn common_scale(values: &[Rational]) -> Result<u64> {
    let mut lcm: i64 = 1;
    for v in values {
        lcm = lcm
            .checked_div(lcm.gcd(&v.denom()))
            .and_then(|l| l.checked_mul(v.denom()))
            .ok_or_else(|| Error::validation("rational", "denominator LCM overflows"))?;
    }
    Ok(lcm as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_forms() {
        assert_eq!("3/4".parse::<Rational>().unwrap(), Rational::new(3, 4).unwrap());
        assert_eq!("0.75".parse::<Rational>().unwrap(), Rational::new(3, 4).unwrap());
        assert_eq!("-2".parse::<Rational>().unwrap(), Rational::integer(-2));
        assert_eq!(Rational::from_f64(0.3).unwrap(), Rational::new(3, 10).unwrap());
        assert!("abc".parse::<Rational>().is_err());
        assert!("1/0".parse::<Rational>().is_err());
        assert!(Rational::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn lcm_of_denominators() {
        let vals: Vec<Rational> = ["0", "1/2", "1/2", "3/4"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(common_scale(&vals).unwrap(), 4);
        assert_eq!(common_scale(&[Rational::integer(3)]).unwrap(), 1);
    }
}
