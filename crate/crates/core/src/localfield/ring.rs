//! Truncated rings of integers of `Q_p` and of its quadratic extensions.
//!
//! Elements are `x + y*w` with `x, y` reduced modulo `p^prec`, where `w` is a
//! generator of the ring of integers satisfying `w^2 = tr*w + nrm`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{legendre, mod_inverse, sqrt_mod_prime, SquareClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Elem {
    pub x: i128,
    pub y: i128,
}

impl Elem {
    pub const ZERO: Elem = Elem { x: 0, y: 0 };

    pub fn new(x: i128, y: i128) -> Self {
        Elem { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Base,
    Unramified,
    Ramified,
}

#[derive(Debug, Clone)]
pub struct LocalRing {
    pub p: u64,
    pub prec: u32,
    pub m: i128,
    pub kind: FieldKind,
    pub tr: i128,
    pub nrm: i128,
    inv2: Option<i128>,
    // unit residues modulo pi^(2e+2) that are squares, keyed by `square_key`
    squares: HashMap<(i128, i128), Elem>,
}

/// Largest `k` with `p^k <= 2^bits`.
pub fn max_precision(p: u64, bits: u32) -> u32 {
    let limit: u128 = 1u128 << bits.min(62);
    let mut k = 0;
    let mut acc: u128 = 1;
    while acc * p as u128 <= limit {
        acc *= p as u128;
        k += 1;
    }
    k
}

impl LocalRing {
    /// `rep` is `None` for `Q_p` itself, or the transversal representative of
    /// a nonsquare class `d` for `Q_p(sqrt d)`.
    pub fn new(p: u64, rep: Option<&SquareClass>, bits: u32) -> Option<LocalRing> {
        Self::with_precision(p, rep, max_precision(p, bits))
    }

    /// Ring with coordinates modulo `p^prec`; requires `p^prec <= 2^62` and
    /// `prec >= 4` at 2 and 3, `prec >= 3` elsewhere.
    pub fn with_precision(p: u64, rep: Option<&SquareClass>, prec: u32) -> Option<LocalRing> {
        let least = if p <= 3 { 4 } else { 3 };
        if prec < least || prec > max_precision(p, 62) {
            return None;
        }
        let m = (p as i128).pow(prec);
        let (kind, tr, nrm) = match rep {
            None => (FieldKind::Base, 0, 0),
            Some(d) => {
                let r = d.value();
                if p == 2 {
                    match r {
                        5 => (FieldKind::Unramified, 1, 1),
                        -1 | -5 => (FieldKind::Ramified, 2, r - 1),
                        2 | -2 | 10 | -10 => (FieldKind::Ramified, 0, r),
                        _ => return None,
                    }
                } else if d.divisible_by(p) {
                    (FieldKind::Ramified, 0, r)
                } else if legendre(r, p) == -1 {
                    (FieldKind::Unramified, 0, r)
                } else {
                    return None;
                }
            }
        };
        let mut ring = LocalRing {
            p,
            prec,
            m,
            kind,
            tr,
            nrm,
            inv2: if p == 2 { None } else { mod_inverse(2, m) },
            squares: HashMap::new(),
        };
        if p == 2 {
            ring.build_square_table();
        }
        Some(ring)
    }

    pub fn e(&self) -> u32 {
        if self.kind == FieldKind::Ramified {
            2
        } else {
            1
        }
    }

    /// Valuations at or above this value are not resolved by the truncation.
    pub fn cap(&self) -> u32 {
        self.e() * self.prec
    }

    pub fn red(&self, n: i128) -> i128 {
        n.rem_euclid(self.m)
    }

    pub fn elem(&self, x: i128, y: i128) -> Elem {
        let y = if self.kind == FieldKind::Base { 0 } else { y };
        Elem { x: self.red(x), y: self.red(y) }
    }

    pub fn int(&self, n: i128) -> Elem {
        self.elem(n, 0)
    }

    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        Elem { x: self.red(a.x + b.x), y: self.red(a.y + b.y) }
    }

    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        Elem { x: self.red(a.x - b.x), y: self.red(a.y - b.y) }
    }

    pub fn neg(&self, a: Elem) -> Elem {
        Elem { x: self.red(-a.x), y: self.red(-a.y) }
    }

    fn mulm(&self, a: i128, b: i128) -> i128 {
        self.red(a) * self.red(b) % self.m
    }

    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        let yy = self.mulm(a.y, b.y);
        let x = self.red(self.mulm(a.x, b.x) + self.mulm(self.nrm, yy));
        let y = self.red(self.mulm(a.x, b.y) + self.mulm(a.y, b.x) + self.mulm(self.tr, yy));
        Elem { x, y }
    }

    pub fn scale(&self, a: Elem, c: i128) -> Elem {
        Elem { x: self.mulm(a.x, c), y: self.mulm(a.y, c) }
    }

    pub fn square(&self, a: Elem) -> Elem {
        self.mul(a, a)
    }

    pub fn conj(&self, a: Elem) -> Elem {
        Elem { x: self.red(a.x + self.mulm(self.tr, a.y)), y: self.red(-a.y) }
    }

    /// Norm down to `Z_p`, reduced modulo `p^prec`.
    pub fn norm(&self, a: Elem) -> i128 {
        let t = self.mulm(self.mulm(self.tr, a.x), a.y);
        self.red(self.mulm(a.x, a.x) + t - self.mulm(self.nrm, self.mulm(a.y, a.y)))
    }

    pub fn is_zero(&self, a: Elem) -> bool {
        self.red(a.x) == 0 && self.red(a.y) == 0
    }

    /// `p`-adic valuation of an integer residue, capped at `prec`.
    pub fn vp(&self, n: i128) -> u32 {
        let mut n = self.red(n);
        if n == 0 {
            return self.prec;
        }
        let p = self.p as i128;
        let mut v = 0;
        while n % p == 0 {
            n /= p;
            v += 1;
        }
        v
    }

    /// Normalized valuation `w` with `w(pi) = 1`, capped at `cap()`.
    pub fn val(&self, a: Elem) -> u32 {
        let (vx, vy) = (self.vp(a.x), self.vp(a.y));
        let w = match self.kind {
            FieldKind::Base => vx,
            FieldKind::Unramified => vx.min(vy),
            FieldKind::Ramified => (2 * vx).min(2 * vy + 1),
        };
        w.min(self.cap())
    }

    pub fn is_unit(&self, a: Elem) -> bool {
        self.val(a) == 0
    }

    pub fn inv(&self, a: Elem) -> Option<Elem> {
        let n = self.norm(a);
        let ni = mod_inverse(n, self.m)?;
        Some(self.scale(self.conj(a), ni))
    }

    pub fn pi(&self) -> Elem {
        match self.kind {
            FieldKind::Ramified => Elem { x: 0, y: 1 },
            _ => self.int(self.p as i128),
        }
    }

    pub fn pi_pow(&self, k: u32) -> Elem {
        let mut acc = self.int(1);
        for _ in 0..k {
            acc = self.mul(acc, self.pi());
        }
        acc
    }

    fn div_p(&self, a: Elem) -> Elem {
        let p = self.p as i128;
        let (x, y) = (self.red(a.x), self.red(a.y));
        debug_assert!(x % p == 0 && y % p == 0);
        Elem { x: x / p, y: y / p }
    }

    /// Exact division by the uniformizer; `a` must have positive valuation.
    pub fn div_pi(&self, a: Elem) -> Elem {
        match self.kind {
            FieldKind::Ramified => {
                // a / w = a * conj(w) / N(w), and N(w) = -nrm = p * c with c a unit
                let t = self.div_p(self.mul(a, Elem { x: self.red(self.tr), y: self.red(-1) }));
                let c = -self.nrm / self.p as i128;
                self.scale(t, mod_inverse(c, self.m).expect("Eisenstein constant is a unit"))
            }
            _ => self.div_p(a),
        }
    }

    /// Valuation and unit part `a / pi^w`. `None` for elements indistinguishable from 0.
    pub fn unit_part(&self, a: Elem) -> Option<(u32, Elem)> {
        let w = self.val(a);
        if w >= self.cap() {
            return None;
        }
        let mut u = a;
        for _ in 0..w {
            u = self.div_pi(u);
        }
        Some((w, u))
    }

    fn square_key(&self, a: Elem) -> (i128, i128) {
        let (kx, ky) = match self.kind {
            FieldKind::Base => (4, 0),
            FieldKind::Unramified => (4, 4),
            FieldKind::Ramified => (3, 3),
        };
        (a.x.rem_euclid(1 << kx), a.y.rem_euclid(1 << ky))
    }

    fn build_square_table(&mut self) {
        let k = 1i128 << (self.e() + 2);
        let ys = if self.kind == FieldKind::Base { 1 } else { k };
        for x in 0..k {
            for y in 0..ys {
                let s = self.elem(x, y);
                if self.is_unit(s) {
                    let key = self.square_key(self.square(s));
                    self.squares.entry(key).or_insert(s);
                }
            }
        }
    }

    fn residue_root(&self, u: Elem) -> Option<Elem> {
        let p = self.p;
        if p == 2 {
            return self.squares.get(&self.square_key(u)).copied();
        }
        match self.kind {
            FieldKind::Base | FieldKind::Ramified => {
                let r = sqrt_mod_prime(u.x, p)?;
                Some(self.int(r as i128))
            }
            FieldKind::Unramified => {
                let pi = p as i128;
                let (x, y) = (u.x.rem_euclid(pi), u.y.rem_euclid(pi));
                let n = self.nrm.rem_euclid(pi);
                let half = mod_inverse(2, pi).expect("odd prime");
                if y == 0 {
                    if let Some(c) = sqrt_mod_prime(x, p) {
                        return Some(self.int(c as i128));
                    }
                    let d = sqrt_mod_prime(x * mod_inverse(n, pi)? % pi, p)?;
                    return Some(self.elem(0, d as i128));
                }
                let norm = (x * x - n * y % pi * y).rem_euclid(pi);
                let r = sqrt_mod_prime(norm, p)? as i128;
                for t in [(x + r) * half % pi, (x - r).rem_euclid(pi) * half % pi] {
                    if t == 0 {
                        continue;
                    }
                    if let Some(c) = sqrt_mod_prime(t, p) {
                        let c = c as i128;
                        let d = y * mod_inverse(2 * c % pi, pi)? % pi;
                        return Some(self.elem(c, d));
                    }
                }
                None
            }
        }
    }

    fn sqrt_unit(&self, u: Elem) -> Option<Elem> {
        let mut s = self.residue_root(u)?;
        for _ in 0..9 {
            let q = self.mul(u, self.inv(s)?);
            let sum = self.add(s, q);
            s = match self.inv2 {
                Some(h) => self.scale(sum, h),
                None => self.div_p(sum),
            };
        }
        Some(s)
    }

    /// A square root when `a` is (detectably) a square.
    pub fn sqrt(&self, a: Elem) -> Option<Elem> {
        if self.is_zero(a) {
            return Some(Elem::ZERO);
        }
        let (w, u) = self.unit_part(a)?;
        if w % 2 == 1 || w + self.square_slack() > self.cap() {
            return None;
        }
        let s = self.sqrt_unit(u)?;
        Some(self.mul(s, self.pi_pow(w / 2)))
    }

    /// Digits past the valuation needed to decide squareness of a unit.
    fn square_slack(&self) -> u32 {
        if self.p == 2 {
            2 * self.e() + 2
        } else {
            1
        }
    }

    /// Square test; `None` when the truncation does not determine the answer.
    pub fn is_square(&self, a: Elem) -> Option<bool> {
        let (w, u) = self.unit_part(a)?;
        if w + self.square_slack() > self.cap() {
            return None;
        }
        if w % 2 == 1 {
            return Some(false);
        }
        if self.p == 2 {
            return Some(self.squares.contains_key(&self.square_key(u)));
        }
        let residue = match self.kind {
            FieldKind::Unramified => self.norm(u),
            _ => u.x,
        };
        Some(legendre(residue, self.p) == 1)
    }

    /// A complete residue system of `O / pi^t`, truncated to `limit` entries.
    pub fn residues(&self, t: u32, limit: usize) -> Vec<Elem> {
        let p = self.p as i128;
        let (tx, ty) = match self.kind {
            FieldKind::Base => (t, 0),
            FieldKind::Unramified => (t, t),
            FieldKind::Ramified => (t.div_ceil(2), t / 2),
        };
        let (nx, ny) = (p.saturating_pow(tx), p.saturating_pow(ty));
        let mut out = Vec::new();
        'outer: for y in 0..ny {
            for x in 0..nx {
                if out.len() >= limit {
                    break 'outer;
                }
                out.push(self.elem(x, y));
            }
        }
        out
    }

    pub fn random<R: Rng>(&self, rng: &mut R) -> Elem {
        let y = if self.kind == FieldKind::Base { 0 } else { rng.gen_range(0..self.m) };
        Elem { x: rng.gen_range(0..self.m), y }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localfield::local_square_transversal;
    use crate::localfield::Place;

    fn rings(p: u64) -> Vec<LocalRing> {
        let mut out = vec![LocalRing::new(p, None, 62).unwrap()];
        for d in local_square_transversal(Place::Finite(p)).iter().skip(1) {
            out.push(LocalRing::new(p, Some(d), 62).unwrap());
        }
        out
    }

    #[test]
    fn ring_kinds() {
        let r = rings(2);
        assert_eq!(r.len(), 8);
        assert_eq!(r.iter().filter(|r| r.kind == FieldKind::Unramified).count(), 1);
        assert_eq!(r.iter().filter(|r| r.kind == FieldKind::Ramified).count(), 6);
        let r = rings(7);
        assert_eq!(r[1].kind, FieldKind::Unramified);
        assert_eq!(r[2].kind, FieldKind::Ramified);
        assert_eq!(r[3].kind, FieldKind::Ramified);
    }

    #[test]
    fn uniformizer_has_valuation_one_and_divides_back() {
        for p in [2u64, 3, 5, 13] {
            for r in rings(p) {
                assert_eq!(r.val(r.pi()), 1);
                let a = r.elem(7, 3);
                let b = r.mul(a, r.pi());
                assert_eq!(r.val(b), r.val(a) + 1);
                let back = r.div_pi(b);
                let diff = r.sub(back, a);
                assert!(r.val(diff) + 2 >= r.cap(), "p={p} {:?}", r.kind);
            }
        }
    }

    #[test]
    fn norm_is_multiplicative_and_inverse_works() {
        for p in [2u64, 3, 7] {
            for r in rings(p) {
                let a = r.elem(5, 4);
                let b = r.elem(3, 11);
                assert_eq!(r.norm(r.mul(a, b)), r.red(r.norm(a) * r.norm(b) % r.m));
                let u = r.elem(1, 2);
                if r.is_unit(u) {
                    let i = r.inv(u).unwrap();
                    assert_eq!(r.mul(u, i), r.int(1));
                }
            }
        }
    }

    #[test]
    fn sqrt_of_squares() {
        for p in [2u64, 3, 5, 11] {
            for r in rings(p) {
                for (x, y) in [(1, 0), (3, 1), (2, 5), (7, 7), (0, 1), (6, 0), (4, 12)] {
                    let s = r.elem(x, y);
                    if r.is_zero(s) {
                        continue;
                    }
                    let sq = r.square(s);
                    assert_eq!(r.is_square(sq), Some(true), "p={p} {:?} {:?}", r.kind, s);
                    let root = r.sqrt(sq).expect("square has a root");
                    let err = r.sub(r.square(root), sq);
                    assert!(r.val(err) >= r.cap() / 2, "p={p} {:?} {:?}", r.kind, s);
                }
            }
        }
    }

    #[test]
    fn nonsquares_in_base_field() {
        let r = LocalRing::new(2, None, 62).unwrap();
        for n in [3i128, 5, 7, 2, 6, -1, 12] {
            assert_eq!(r.is_square(r.int(n)), Some(false), "{n}");
        }
        assert_eq!(r.is_square(r.int(17)), Some(true));
        let r = LocalRing::new(5, None, 62).unwrap();
        assert_eq!(r.is_square(r.int(2)), Some(false));
        assert_eq!(r.is_square(r.int(-1)), Some(true));
    }

    #[test]
    fn adjoined_root_is_square() {
        // d becomes a square in Q_p(sqrt d)
        for p in [2u64, 3, 7] {
            for (i, d) in local_square_transversal(Place::Finite(p)).iter().enumerate().skip(1) {
                let r = &rings(p)[i];
                assert_eq!(r.is_square(r.int(d.value())), Some(true), "p={p} d={d}");
            }
        }
    }

    #[test]
    fn residue_system_size() {
        let r = LocalRing::new(3, Some(&SquareClass::of_int(3).unwrap()), 62).unwrap();
        assert_eq!(r.residues(3, 1000).len(), 27);
        let r = LocalRing::new(3, Some(&SquareClass::of_int(2).unwrap()), 62).unwrap();
        assert_eq!(r.residues(2, 1000).len(), 81);
    }
}
