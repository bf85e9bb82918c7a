//! 2-torsion Brauer classes of `Q`, stored by their local invariants.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::SquareClass;
use crate::localfield::{hilbert_symbol, Place};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrauerError {
    #[error("Brauer class with odd support {0:?} violates reciprocity")]
    ParityViolation(Vec<Place>),
}

static CONSTRUCTED: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide counts of (classes constructed, odd-support attempts rejected).
pub fn construction_stats() -> (u64, u64) {
    (CONSTRUCTED.load(Ordering::Relaxed), VIOLATIONS.load(Ordering::Relaxed))
}

/// An element of `Br(Q)[2]`: the places with local invariant 1/2.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Place>", into = "Vec<Place>")]
pub struct BrauerClass2 {
    support: Vec<Place>,
}

impl BrauerClass2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_support(places: impl IntoIterator<Item = Place>) -> Result<Self, BrauerError> {
        match Self::checked(places) {
            Ok(c) => {
                CONSTRUCTED.fetch_add(1, Ordering::Relaxed);
                Ok(c)
            }
            Err(e) => {
                VIOLATIONS.fetch_add(1, Ordering::Relaxed);
                Err(e)
            }
        }
    }

    fn checked(places: impl IntoIterator<Item = Place>) -> Result<Self, BrauerError> {
        let set: BTreeSet<Place> = places.into_iter().collect();
        let support: Vec<Place> = set.into_iter().collect();
        if support.len() % 2 == 1 {
            return Err(BrauerError::ParityViolation(support));
        }
        Ok(BrauerClass2 { support })
    }

    pub fn support(&self) -> &[Place] {
        &self.support
    }

    pub fn invariant(&self, v: Place) -> u8 {
        self.support.binary_search(&v).is_ok() as u8
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }
}

impl TryFrom<Vec<Place>> for BrauerClass2 {
    type Error = BrauerError;
    // Parsed input is validated, not constructed, so the counters stay untouched.
    fn try_from(v: Vec<Place>) -> Result<Self, Self::Error> {
        Self::checked(v)
    }
}

impl From<BrauerClass2> for Vec<Place> {
    fn from(c: BrauerClass2) -> Self {
        c.support
    }
}

impl fmt::Display for BrauerClass2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.support.iter().map(|p| p.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// The quaternion algebra `(a,b)` as a Brauer class.
pub fn quaternion(a: &SquareClass, b: &SquareClass) -> Result<BrauerClass2, BrauerError> {
    let mut places: BTreeSet<Place> = BTreeSet::from([Place::Infinity, Place::Finite(2)]);
    places.extend(a.primes().iter().chain(b.primes()).map(|p| Place::Finite(*p)));
    BrauerClass2::from_support(places.into_iter().filter(|v| hilbert_symbol(a, b, *v) == 1))
}

pub fn br_add(x: &BrauerClass2, y: &BrauerClass2) -> BrauerClass2 {
    let a: BTreeSet<Place> = x.support.iter().copied().collect();
    let b: BTreeSet<Place> = y.support.iter().copied().collect();
    BrauerClass2::from_support(a.symmetric_difference(&b).copied())
        .expect("sum of even-support classes has even support")
}

pub fn br_is_zero(x: &BrauerClass2) -> bool {
    x.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(n: i128) -> SquareClass {
        SquareClass::of_int(n).unwrap()
    }

    fn cls(places: &[Place]) -> BrauerClass2 {
        BrauerClass2::from_support(places.iter().copied()).unwrap()
    }

    #[test]
    fn quaternion_examples() {
        assert!(quaternion(&sc(1), &sc(-7)).unwrap().is_zero());
        assert_eq!(quaternion(&sc(-1), &sc(-1)).unwrap(), cls(&[Place::Finite(2), Place::Infinity]));
        assert!(quaternion(&sc(15), &sc(-15)).unwrap().is_zero());
    }

    #[test]
    fn quaternion_13_17_from_local_symbols() {
        // 13 = 8^2 mod 17, 17 = 2^2 mod 13, and 17 is a square in Q_2.
        let q = quaternion(&sc(13), &sc(17)).unwrap();
        for v in [Place::Infinity, Place::Finite(2), Place::Finite(13), Place::Finite(17)] {
            assert_eq!(q.invariant(v), hilbert_symbol(&sc(13), &sc(17), v));
        }
        assert!(br_is_zero(&q));
    }

    #[test]
    fn addition() {
        let x = cls(&[Place::Finite(2), Place::Infinity]);
        assert!(br_add(&x, &x).is_zero());
        assert_eq!(br_add(&x, &BrauerClass2::zero()), x);
        let y = cls(&[Place::Finite(2), Place::Finite(17)]);
        assert_eq!(br_add(&x, &y), cls(&[Place::Finite(17), Place::Infinity]));
    }

    #[test]
    fn odd_support_rejected() {
        assert!(matches!(
            BrauerClass2::from_support([Place::Finite(3)]),
            Err(BrauerError::ParityViolation(_))
        ));
        assert!(serde_json::from_str::<BrauerClass2>("[2]").is_err());
        let ok: BrauerClass2 = serde_json::from_str("[\"inf\",2]").unwrap();
        assert_eq!(serde_json::to_string(&ok).unwrap(), "[2,\"inf\"]");
    }

    /// Small-height search for a nonzero rational point on `z^2 = a x^2 + b y^2`.
    fn has_small_solution(a: i128, b: i128) -> bool {
        for x in 0i128..=30 {
            for y in 0i128..=30 {
                if x == 0 && y == 0 {
                    continue;
                }
                let n = a * x * x + b * y * y;
                if n >= 0 {
                    let r = (n as f64).sqrt().round() as i128;
                    if (r - 1..=r + 1).any(|s| s >= 0 && s * s == n) {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn zero_class_iff_globally_solvable() {
        for a in -12i128..=12 {
            for b in -12i128..=12 {
                if a == 0 || b == 0 {
                    continue;
                }
                let split = quaternion(&sc(a), &sc(b)).unwrap().is_zero();
                let found = has_small_solution(a, b);
                if found {
                    assert!(split, "({a},{b}) has a point but nonzero class");
                } else {
                    assert!(!split, "({a},{b}) split but no small point");
                }
            }
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn class() -> impl Strategy<Value = SquareClass> {
            (-2000i128..2000).prop_filter("nonzero", |v| *v != 0).prop_map(|n| SquareClass::of_int(n).unwrap())
        }

        proptest! {
            #[test]
            fn bimultiplicative(a in class(), a2 in class(), b in class()) {
                let lhs = quaternion(&a.mul(&a2), &b).unwrap();
                let rhs = br_add(&quaternion(&a, &b).unwrap(), &quaternion(&a2, &b).unwrap());
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn even_parity(a in class(), b in class()) {
                prop_assert_eq!(quaternion(&a, &b).unwrap().support().len() % 2, 0);
            }
        }
    }
}
