//! Arithmetic of the completions `Q_v` and their quadratic extensions.

mod ring;
mod solve;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, least_nonresidue, legendre, split_valuation, ArithError, SquareClass};

pub use ring::{max_precision, Elem, FieldKind, LocalRing};
pub use solve::{
    local_points_exist, local_points_exist_with, sample_local_image, verify_evidence, DescentModel,
    HenselWitness, LocalError, LocalEvidence, LocalVerdict, PairingWitness, SamplerConfig,
};

/// A place of `Q`. Finite places sort by their prime, the real place sorts last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Finite(u64),
    Infinity,
}

impl Place {
    pub fn finite(p: u64) -> Result<Place, ArithError> {
        if is_prime(p) {
            Ok(Place::Finite(p))
        } else {
            Err(ArithError::NotPrime(p))
        }
    }

    pub fn prime(&self) -> Option<u64> {
        match self {
            Place::Finite(p) => Some(*p),
            Place::Infinity => None,
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Finite(p) => write!(f, "{p}"),
            Place::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Place {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "inf" || s == "oo" || s == "infinity" {
            return Ok(Place::Infinity);
        }
        let p: u64 = s.parse().map_err(|_| format!("bad place `{s}`"))?;
        Place::finite(p).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PlaceRepr {
    Prime(u64),
    Named(String),
}

impl Serialize for Place {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Place::Finite(p) => PlaceRepr::Prime(*p),
            Place::Infinity => PlaceRepr::Named("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Place {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match PlaceRepr::deserialize(d)? {
            PlaceRepr::Prime(p) => Place::finite(p).map_err(serde::de::Error::custom),
            PlaceRepr::Named(s) if s == "inf" => Ok(Place::Infinity),
            PlaceRepr::Named(s) => Err(serde::de::Error::custom(format!("bad place `{s}`"))),
        }
    }
}

fn eps2(u: u64) -> u8 {
    (((u % 8) - 1) / 2 % 2) as u8
}

fn omega2(u: u64) -> u8 {
    let u = u % 8;
    ((u * u - 1) / 8 % 2) as u8
}

fn hilbert_from_parts(p: u64, alpha: u32, u: u64, beta: u32, w: u64) -> u8 {
    let (alpha, beta) = ((alpha % 2) as u8, (beta % 2) as u8);
    if p == 2 {
        (eps2(u) * eps2(w) + alpha * omega2(w) + beta * omega2(u)) % 2
    } else {
        let mut s = alpha & beta & (((p - 1) / 2) % 2) as u8;
        if beta == 1 && legendre(u as i128, p) == -1 {
            s ^= 1;
        }
        if alpha == 1 && legendre(w as i128, p) == -1 {
            s ^= 1;
        }
        s
    }
}

/// Additive Hilbert symbol: 0 iff `z^2 = a x^2 + b y^2` has a nonzero solution over `Q_v`.
pub fn hilbert_symbol(a: &SquareClass, b: &SquareClass, v: Place) -> u8 {
    match v {
        Place::Infinity => (a.is_negative() && b.is_negative()) as u8,
        Place::Finite(p) => {
            let m = if p == 2 { 8 } else { p };
            hilbert_from_parts(
                p,
                a.divisible_by(p) as u32,
                a.unit_residue(p, m),
                b.divisible_by(p) as u32,
                b.unit_residue(p, m),
            )
        }
    }
}

/// Hilbert symbol of two nonzero integers (no square-class reduction needed).
pub fn hilbert_symbol_int(a: i128, b: i128, v: Place) -> u8 {
    assert!(a != 0 && b != 0, "Hilbert symbol of zero");
    match v {
        Place::Infinity => (a < 0 && b < 0) as u8,
        Place::Finite(p) => {
            let m = if p == 2 { 8 } else { p as i128 };
            let (alpha, ua) = split_valuation(a, p);
            let (beta, ub) = split_valuation(b, p);
            hilbert_from_parts(
                p,
                alpha,
                ua.rem_euclid(m) as u64,
                beta,
                ub.rem_euclid(m) as u64,
            )
        }
    }
}

/// The canonical transversal of `Q_v*/Q_v*^2`.
pub fn local_square_transversal(v: Place) -> Vec<SquareClass> {
    let ints: Vec<i128> = match v {
        Place::Infinity => vec![1, -1],
        Place::Finite(2) => vec![1, -1, 2, -2, 5, -5, 10, -10],
        Place::Finite(p) => {
            let u = least_nonresidue(p) as i128;
            vec![1, u, p as i128, u * p as i128]
        }
    };
    ints.into_iter()
        .map(|n| SquareClass::of_int(n).expect("transversal entries are nonzero"))
        .collect()
}

/// Transversal element for a unit residue (mod `p`, or mod 8 at 2) and a valuation parity.
pub fn local_class_from_parts(v: Place, odd_valuation: bool, unit_residue: u64) -> SquareClass {
    match v {
        Place::Infinity => panic!("no finite data at the real place"),
        Place::Finite(2) => {
            let base: i128 = match unit_residue % 8 {
                1 => 1,
                3 => -5,
                5 => 5,
                7 => -1,
                r => panic!("even unit residue {r} at 2"),
            };
            let n = if odd_valuation { 2 * base } else { base };
            SquareClass::of_int(n).expect("nonzero")
        }
        Place::Finite(p) => {
            let mut n: i128 = if legendre(unit_residue as i128, p) == 1 {
                1
            } else {
                least_nonresidue(p) as i128
            };
            if odd_valuation {
                n *= p as i128;
            }
            SquareClass::of_int(n).expect("nonzero")
        }
    }
}

/// The transversal representative of the image of `a` in `Q_v*/Q_v*^2`.
pub fn local_class(a: &SquareClass, v: Place) -> SquareClass {
    match v {
        Place::Infinity => {
            if a.is_negative() {
                SquareClass::minus_one()
            } else {
                SquareClass::one()
            }
        }
        Place::Finite(p) => {
            let m = if p == 2 { 8 } else { p };
            local_class_from_parts(v, a.divisible_by(p), a.unit_residue(p, m))
        }
    }
}

/// Local class of a nonzero integer.
pub fn local_class_int(n: i128, v: Place) -> SquareClass {
    assert!(n != 0);
    match v {
        Place::Infinity => local_class(&if n < 0 { SquareClass::minus_one() } else { SquareClass::one() }, v),
        Place::Finite(p) => {
            let (val, u) = split_valuation(n, p);
            let m = if p == 2 { 8 } else { p as i128 };
            local_class_from_parts(v, val % 2 == 1, u.rem_euclid(m) as u64)
        }
    }
}

pub fn is_local_square(a: &SquareClass, v: Place) -> bool {
    local_class(a, v).is_one()
}
