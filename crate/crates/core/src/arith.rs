//! Exact integer arithmetic, factorization and square classes of `Q*/Q*^2`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use num_prime::nt_funcs::{factorize128, factorize64, is_prime64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest magnitude handed to the factoring routine by default.
pub const DEFAULT_FACTOR_BOUND: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("zero has no square class")]
    ZeroInput,
    #[error("cannot factor {value}: exceeds factoring bound {bound} (raise --bound-factor)")]
    FactorizationLimitExceeded { value: String, bound: u64 },
    #[error("{0} is not squarefree")]
    NotSquarefree(i128),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("square class representative overflows i128")]
    Overflow,
}

/// Signed factorization `sign * prod p^e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    pub negative: bool,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn value(&self) -> Option<i128> {
        let mut acc: i128 = if self.negative { -1 } else { 1 };
        for &(p, e) in &self.factors {
            for _ in 0..e {
                acc = acc.checked_mul(p as i128)?;
            }
        }
        Some(acc)
    }
}

pub fn is_prime(n: u64) -> bool {
    is_prime64(n)
}

/// Factors any nonzero `i128`; prime factors must fit in `u64`.
pub fn factor(n: i128) -> Result<Factorization, ArithError> {
    let mag = n.unsigned_abs();
    if mag <= DEFAULT_FACTOR_BOUND as u128 {
        return factor_bounded(n, DEFAULT_FACTOR_BOUND);
    }
    let mut factors = Vec::new();
    for (p, e) in factorize128(mag) {
        factors.push((u64::try_from(p).map_err(|_| ArithError::Overflow)?, e as u32));
    }
    Ok(Factorization { negative: n < 0, factors })
}

pub fn factor_bounded(n: i128, bound: u64) -> Result<Factorization, ArithError> {
    if n == 0 {
        return Err(ArithError::ZeroInput);
    }
    let mag = n.unsigned_abs();
    if mag > bound as u128 {
        return Err(ArithError::FactorizationLimitExceeded { value: n.to_string(), bound });
    }
    let factors = if mag == 1 {
        Vec::new()
    } else {
        factorize64(mag as u64).into_iter().map(|(p, e)| (p, e as u32)).collect()
    };
    Ok(Factorization { negative: n < 0, factors })
}

pub fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `p`-adic valuation and the prime-to-`p` part of a nonzero integer.
pub fn split_valuation(n: i128, p: u64) -> (u32, i128) {
    debug_assert!(n != 0);
    let p = p as i128;
    let (mut v, mut m) = (0u32, n);
    while m % p == 0 {
        m /= p;
        v += 1;
    }
    (v, m)
}

pub fn mod_pow(base: u64, mut exp: u64, m: u64) -> u64 {
    let m128 = m as u128;
    let mut b = (base % m) as u128;
    let mut acc: u128 = 1 % m128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}

/// Legendre symbol as `1`, `-1` or `0` for an odd prime `p`.
pub fn legendre(a: i128, p: u64) -> i32 {
    let r = a.rem_euclid(p as i128) as u64;
    if r == 0 {
        return 0;
    }
    if mod_pow(r, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

/// Square root modulo an odd prime (Tonelli-Shanks). `None` for nonresidues.
pub fn sqrt_mod_prime(a: i128, p: u64) -> Option<u64> {
    let a = a.rem_euclid(p as i128) as u64;
    if a == 0 {
        return Some(0);
    }
    if p == 2 {
        return Some(a);
    }
    if legendre(a as i128, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(mod_pow(a, (p + 1) / 4, p));
    }
    let (mut q, mut s) = (p - 1, 0u32);
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let mut z = 2u64;
    while legendre(z as i128, p) != -1 {
        z += 1;
    }
    let mulm = |x: u64, y: u64| ((x as u128 * y as u128) % p as u128) as u64;
    let mut m = s;
    let mut c = mod_pow(z, q, p);
    let mut t = mod_pow(a, q, p);
    let mut r = mod_pow(a, (q + 1) / 2, p);
    while t != 1 {
        let mut i = 0;
        let mut t2 = t;
        while t2 != 1 {
            t2 = mulm(t2, t2);
            i += 1;
        }
        let mut b = c;
        for _ in 0..(m - i - 1) {
            b = mulm(b, b);
        }
        m = i;
        c = mulm(b, b);
        t = mulm(t, c);
        r = mulm(r, b);
    }
    Some(r)
}

/// Least positive quadratic nonresidue modulo an odd prime.
pub fn least_nonresidue(p: u64) -> u64 {
    (2..p).find(|&u| legendre(u as i128, p) == -1).expect("odd prime has a nonresidue")
}

/// Inverse of `a` modulo `m` when it exists.
pub fn mod_inverse(a: i128, m: i128) -> Option<i128> {
    let (mut old_r, mut r) = (a.rem_euclid(m), m);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m))
}

/// An element of `Q*/Q*^2` stored as its squarefree representative `sign * prod primes`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SquareClass {
    negative: bool,
    primes: Vec<u64>,
}

impl SquareClass {
    pub fn one() -> Self {
        SquareClass { negative: false, primes: Vec::new() }
    }

    pub fn minus_one() -> Self {
        SquareClass { negative: true, primes: Vec::new() }
    }

    pub fn prime(p: u64) -> Self {
        debug_assert!(is_prime(p));
        SquareClass { negative: false, primes: vec![p] }
    }

    /// Builds a class from a sign and arbitrary primes; repeated primes cancel.
    pub fn from_parts(negative: bool, primes: impl IntoIterator<Item = u64>) -> Self {
        let mut set = BTreeSet::new();
        for p in primes {
            if !set.remove(&p) {
                set.insert(p);
            }
        }
        SquareClass { negative, primes: set.into_iter().collect() }
    }

    pub fn of_int(n: i128) -> Result<Self, ArithError> {
        Ok(Self::from_factorization(&factor(n)?))
    }

    pub fn of_int_bounded(n: i128, bound: u64) -> Result<Self, ArithError> {
        let f = factor_bounded(n, bound)?;
        Ok(Self::from_factorization(&f))
    }

    fn from_factorization(f: &Factorization) -> Self {
        SquareClass {
            negative: f.negative,
            primes: f.factors.iter().filter(|(_, e)| e % 2 == 1).map(|(p, _)| *p).collect(),
        }
    }

    /// The class of `num/den`; numerator and denominator are factored separately.
    pub fn of_ratio(num: i128, den: i128) -> Result<Self, ArithError> {
        Self::of_ratio_bounded(num, den, DEFAULT_FACTOR_BOUND)
    }

    pub fn of_ratio_bounded(num: i128, den: i128, bound: u64) -> Result<Self, ArithError> {
        if num == 0 || den == 0 {
            return Err(ArithError::ZeroInput);
        }
        Ok(Self::of_int_bounded(num, bound)?.mul(&Self::of_int_bounded(den, bound)?))
    }

    /// Parses a squarefree integer representative; rejects non-squarefree input.
    pub fn from_squarefree(n: i128) -> Result<Self, ArithError> {
        let f = factor(n)?;
        if f.factors.iter().any(|(_, e)| *e > 1) {
            return Err(ArithError::NotSquarefree(n));
        }
        Ok(Self::from_factorization(&f))
    }

    pub fn is_one(&self) -> bool {
        !self.negative && self.primes.is_empty()
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn divisible_by(&self, p: u64) -> bool {
        self.primes.binary_search(&p).is_ok()
    }

    pub fn mul(&self, other: &SquareClass) -> SquareClass {
        let mut out = Vec::with_capacity(self.primes.len() + other.primes.len());
        let (mut i, mut j) = (0, 0);
        while i < self.primes.len() && j < other.primes.len() {
            match self.primes[i].cmp(&other.primes[j]) {
                Ordering::Less => {
                    out.push(self.primes[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.primes[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.primes[i..]);
        out.extend_from_slice(&other.primes[j..]);
        SquareClass { negative: self.negative ^ other.negative, primes: out }
    }

    pub fn checked_value(&self) -> Option<i128> {
        let mut acc: i128 = 1;
        for &p in &self.primes {
            acc = acc.checked_mul(p as i128)?;
        }
        Some(if self.negative { -acc } else { acc })
    }

    /// The squarefree representative. Panics on i128 overflow, which no
    /// desk-scale computation reaches.
    pub fn value(&self) -> i128 {
        self.checked_value().expect("square class representative overflows i128")
    }

    /// Residue of the prime-to-`p` part of the representative modulo `m`.
    pub fn unit_residue(&self, p: u64, m: u64) -> u64 {
        let mut acc: u128 = 1;
        for &q in &self.primes {
            if q != p {
                acc = acc * (q % m) as u128 % m as u128;
            }
        }
        if self.negative {
            ((m as u128 - acc) % m as u128) as u64
        } else {
            acc as u64
        }
    }

    fn abs_key(&self) -> u128 {
        self.primes.iter().fold(1u128, |acc, &p| acc.saturating_mul(p as u128))
    }
}

impl Default for SquareClass {
    fn default() -> Self {
        Self::one()
    }
}

impl Ord for SquareClass {
    fn cmp(&self, other: &Self) -> Ordering {
        self.abs_key()
            .cmp(&other.abs_key())
            .then(self.negative.cmp(&other.negative))
            .then_with(|| self.primes.cmp(&other.primes))
    }
}

impl PartialOrd for SquareClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SquareClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.checked_value() {
            Some(v) => write!(f, "{v}"),
            None => {
                let body: Vec<String> = self.primes.iter().map(|p| p.to_string()).collect();
                write!(f, "{}{}", if self.negative { "-" } else { "" }, body.join("*"))
            }
        }
    }
}

impl Serialize for SquareClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i128(self.value())
    }
}

impl<'de> Deserialize<'de> for SquareClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = i128::deserialize(d)?;
        SquareClass::from_squarefree(n).map_err(serde::de::Error::custom)
    }
}

/// Canonical representative of `q` modulo nonzero rational squares.
pub fn sqclass_of(num: i128, den: i128) -> Result<SquareClass, ArithError> {
    SquareClass::of_ratio(num, den)
}

pub fn sq_mul(x: &SquareClass, y: &SquareClass) -> SquareClass {
    x.mul(y)
}

/// An element of `(Q*/Q*^2)^2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct KummerPair {
    pub first: SquareClass,
    pub second: SquareClass,
}

impl KummerPair {
    pub fn new(first: SquareClass, second: SquareClass) -> Self {
        KummerPair { first, second }
    }

    pub fn from_ints(a: i128, b: i128) -> Result<Self, ArithError> {
        Ok(KummerPair { first: SquareClass::of_int(a)?, second: SquareClass::of_int(b)? })
    }

    pub fn one() -> Self {
        Self::default()
    }

    pub fn is_one(&self) -> bool {
        self.first.is_one() && self.second.is_one()
    }

    pub fn mul(&self, other: &KummerPair) -> KummerPair {
        KummerPair { first: self.first.mul(&other.first), second: self.second.mul(&other.second) }
    }

    pub fn primes(&self) -> BTreeSet<u64> {
        self.first.primes().iter().chain(self.second.primes()).copied().collect()
    }
}

impl fmt::Display for KummerPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.first, self.second)
    }
}

impl Serialize for KummerPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.first, &self.second).serialize(s)
    }
}

impl<'de> Deserialize<'de> for KummerPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (first, second) = <(SquareClass, SquareClass)>::deserialize(d)?;
        Ok(KummerPair { first, second })
    }
}

/// All elements of the subgroup of `(Q*/Q*^2)^2` generated by `gens`, sorted.
pub fn span(gens: &[KummerPair]) -> Vec<KummerPair> {
    let mut elems: BTreeSet<KummerPair> = BTreeSet::new();
    elems.insert(KummerPair::one());
    for g in gens {
        if elems.contains(g) {
            continue;
        }
        let shifted: Vec<KummerPair> = elems.iter().map(|e| e.mul(g)).collect();
        elems.extend(shifted);
    }
    elems.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(mut n: u64) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        let mut d = 2;
        while d * d <= n {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            if e > 0 {
                out.push((d, e));
            }
            d += 1;
        }
        if n > 1 {
            out.push((n, 1));
        }
        out
    }

    #[test]
    fn factor_examples() {
        assert_eq!(factor(1).unwrap().factors, vec![]);
        assert_eq!(factor(12).unwrap().factors, trial_division(12));
        assert_eq!(factor(12).unwrap().factors, vec![(2, 2), (3, 1)]);
        let f = factor(-97).unwrap();
        assert!(f.negative);
        assert_eq!(f.factors, vec![(97, 1)]);
        assert_eq!(factor(0), Err(ArithError::ZeroInput));
    }

    #[test]
    fn factor_respects_bound() {
        assert!(matches!(
            factor_bounded(1_000_003, 1000),
            Err(ArithError::FactorizationLimitExceeded { .. })
        ));
    }

    #[test]
    fn factor_beyond_64_bits() {
        let n: i128 = -1356307476251960217344444085;
        let f = factor(n).unwrap();
        assert!(f.negative);
        assert_eq!(f.value(), Some(n));
        assert!(f.factors.iter().all(|&(p, _)| is_prime(p)));
        let c = SquareClass::from_squarefree(n).unwrap();
        assert_eq!(c.value(), n);
        // 2^64 + 13 is prime and does not fit a u64
        let big = ((1u128 << 64) + 13) as i128;
        assert_eq!(factor(3 * big), Err(ArithError::Overflow));
    }

    #[test]
    fn factor_matches_trial_division() {
        for n in 1..3000u64 {
            assert_eq!(factor(n as i128).unwrap().factors, trial_division(n), "n = {n}");
        }
    }

    #[test]
    fn sqclass_examples() {
        assert!(sqclass_of(4, 1).unwrap().is_one());
        assert!(sqclass_of(1, 1).unwrap().is_one());
        // -45/8 = -10 * (3/4)^2
        let c = sqclass_of(-45, 8).unwrap();
        assert_eq!(c.value(), -10);
        assert!(c.is_negative());
        assert_eq!(c.primes(), &[2, 5]);
        assert_eq!(sqclass_of(0, 3), Err(ArithError::ZeroInput));
    }

    #[test]
    fn sq_mul_examples() {
        let m10 = SquareClass::of_int(-10).unwrap();
        assert!(sq_mul(&m10, &m10).is_one());
        assert_eq!(sq_mul(&m10, &SquareClass::one()), m10);
        let six = SquareClass::of_int(6).unwrap();
        let ten = SquareClass::of_int(10).unwrap();
        assert_eq!(sq_mul(&six, &ten), sqclass_of(60, 1).unwrap());
        assert_eq!(sq_mul(&six, &ten).value(), 15);
    }

    #[test]
    fn squarefree_parsing() {
        assert_eq!(SquareClass::from_squarefree(-30).unwrap().value(), -30);
        assert_eq!(SquareClass::from_squarefree(12), Err(ArithError::NotSquarefree(12)));
    }

    #[test]
    fn tonelli_shanks() {
        for p in [3u64, 5, 7, 13, 17, 41, 97, 193, 257] {
            for a in 1..p {
                match sqrt_mod_prime(a as i128, p) {
                    Some(r) => assert_eq!(r * r % p, a),
                    None => assert_eq!(legendre(a as i128, p), -1),
                }
            }
        }
    }

    #[test]
    fn span_has_power_of_two_order() {
        let g = vec![
            KummerPair::from_ints(-1, -1).unwrap(),
            KummerPair::from_ints(1, 2).unwrap(),
            KummerPair::from_ints(-1, -2).unwrap(),
        ];
        assert_eq!(span(&g).len(), 4);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn nonzero() -> impl Strategy<Value = i128> {
            (-5000i128..5000).prop_filter("nonzero", |v| *v != 0)
        }

        proptest! {
            #[test]
            fn class_is_multiplicative(a in nonzero(), b in nonzero(), c in nonzero(), d in nonzero()) {
                let lhs = sqclass_of(a * c, b * d).unwrap();
                let rhs = sq_mul(&sqclass_of(a, b).unwrap(), &sqclass_of(c, d).unwrap());
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn squares_are_invisible(a in nonzero(), b in nonzero(), s in 1i128..300, t in 1i128..300) {
                prop_assert_eq!(sqclass_of(a * s * s, b * t * t).unwrap(), sqclass_of(a, b).unwrap());
            }

            #[test]
            fn every_class_is_an_involution(a in nonzero()) {
                let c = SquareClass::of_int(a).unwrap();
                prop_assert!(c.mul(&c).is_one());
            }
        }
    }
}
