//! Local solvability of the 2-covering attached to a Kummer pair.
//!
//! Points are searched on the quadric intersection
//! `a z1^2 - b z2^2 = (e2-e1) z0^2`, `a z1^2 - ab z3^2 = (e3-e1) z0^2`.
//! A found point is certified by the multivariate Hensel criterion. Absence
//! of points is certified by a point `P` of the elliptic curve over the same
//! field whose Kummer image pairs nontrivially with `(a,b)` under local
//! Tate duality (after taking norms back down to `Q_v`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ring::{Elem, LocalRing};
use super::{hilbert_symbol, local_class, local_class_from_parts, Place};
use crate::arith::{KummerPair, SquareClass};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LocalError {
    #[error("no local decision at {place} within {budget} candidates (raise --bound-candidates)")]
    PrecisionExhausted { place: Place, budget: usize },
    #[error("extension by {0} is trivial at {1}")]
    InvalidExtension(SquareClass, Place),
    #[error("prime {0} is too large for the configured precision (raise --bound-precision-bits)")]
    UnsupportedPrime(u64),
    #[error("the e_i must be pairwise distinct")]
    DegenerateModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub budget: usize,
    pub bits: u32,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { budget: 20_000, bits: 62, seed: 0 }
    }
}

/// The pair of quadrics attached to `(a,b)` on `y^2 = (x-e1)(x-e2)(x-e3)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescentModel {
    pub e: [i128; 3],
    pub a: SquareClass,
    pub b: SquareClass,
}

impl DescentModel {
    pub fn new(e: [i128; 3], pair: &KummerPair) -> Result<Self, LocalError> {
        if e[0] == e[1] || e[0] == e[2] || e[1] == e[2] {
            return Err(LocalError::DegenerateModel);
        }
        Ok(DescentModel { e, a: pair.first.clone(), b: pair.second.clone() })
    }

    fn coeffs(&self) -> (i128, i128, i128, i128, i128) {
        let (a, b) = (self.a.value(), self.b.value());
        (a, b, a * b, self.e[1] - self.e[0], self.e[2] - self.e[0])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HenselWitness {
    pub p: u64,
    /// Transversal representative of the extension, absent over `Q_p`.
    pub ext: Option<SquareClass>,
    pub prec: u32,
    pub z: [Elem; 4],
    /// Coordinates solved for; the other two stay fixed.
    pub columns: [usize; 2],
    pub minor_valuation: u32,
    pub residual_valuation: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingWitness {
    pub p: u64,
    pub ext: Option<SquareClass>,
    pub prec: u32,
    /// The curve point has `x = numer / lambda^2`.
    pub numer: Elem,
    pub lambda: Elem,
    /// Set when `numer = e_i` exactly and `lambda = 1`.
    pub torsion_index: Option<usize>,
    /// Local classes over `Q_p` of the norms of the Kummer coordinates.
    pub norms: [SquareClass; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEvidence {
    /// A real `x = num/den` with `a(x-e1)`, `b(x-e2)`, `ab(x-e3)` all positive.
    RealPoint { num: i128, den: i128 },
    /// No real interval carries the required signs.
    RealEmpty,
    Complex,
    Hensel(HenselWitness),
    Pairing(PairingWitness),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalVerdict {
    pub exists: bool,
    pub evidence: LocalEvidence,
    pub candidates_tried: usize,
}

pub fn local_points_exist(
    model: &DescentModel,
    v: Place,
    ext: Option<&SquareClass>,
) -> Result<LocalVerdict, LocalError> {
    local_points_exist_with(model, v, ext, &SamplerConfig::default())
}

pub fn local_points_exist_with(
    model: &DescentModel,
    v: Place,
    ext: Option<&SquareClass>,
    cfg: &SamplerConfig,
) -> Result<LocalVerdict, LocalError> {
    let p = match v {
        Place::Infinity => {
            if let Some(d) = ext {
                if !d.is_negative() {
                    return Err(LocalError::InvalidExtension(d.clone(), v));
                }
                return Ok(LocalVerdict { exists: true, evidence: LocalEvidence::Complex, candidates_tried: 0 });
            }
            let evidence = real_decision(model);
            let exists = matches!(evidence, LocalEvidence::RealPoint { .. });
            return Ok(LocalVerdict { exists, evidence, candidates_tried: 0 });
        }
        Place::Finite(p) => p,
    };
    let rep = match ext {
        Some(d) => {
            let r = local_class(d, v);
            if r.is_one() {
                return Err(LocalError::InvalidExtension(d.clone(), v));
            }
            Some(r)
        }
        None => None,
    };
    let ring = LocalRing::new(p, rep.as_ref(), cfg.bits).ok_or(LocalError::UnsupportedPrime(p))?;
    let ctx = Ctx::new(model, &ring, rep, v);
    let mut tried = 0usize;
    let mut outcome = None;
    for_each_candidate(&ring, model.e, cfg, |cand| {
        tried += 1;
        if let Some(w) = ctx.positive(cand) {
            outcome = Some((true, LocalEvidence::Hensel(w)));
            return false;
        }
        if let Some(w) = ctx.negative(cand) {
            outcome = Some((false, LocalEvidence::Pairing(w)));
            return false;
        }
        true
    });
    match outcome {
        Some((exists, evidence)) => Ok(LocalVerdict { exists, evidence, candidates_tried: tried }),
        None => Err(LocalError::PrecisionExhausted { place: v, budget: cfg.budget }),
    }
}

fn real_test_points(e: [i128; 3]) -> Vec<(i128, i128)> {
    let mut s = e;
    s.sort();
    vec![(s[0] - 1, 1), (s[0] + s[1], 2), (s[1] + s[2], 2), (s[2] + 1, 1)]
}

fn real_signs_ok(model: &DescentModel, num: i128, den: i128) -> bool {
    if den <= 0 {
        return false;
    }
    let (a, b) = (model.a.value().signum(), model.b.value().signum());
    let diff = |ei: i128| (num - ei * den).signum();
    a * diff(model.e[0]) > 0 && b * diff(model.e[1]) > 0 && a * b * diff(model.e[2]) > 0
}

fn real_decision(model: &DescentModel) -> LocalEvidence {
    for (num, den) in real_test_points(model.e) {
        if real_signs_ok(model, num, den) {
            return LocalEvidence::RealPoint { num, den };
        }
    }
    LocalEvidence::RealEmpty
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    numer: Elem,
    lambda: Elem,
    torsion: Option<usize>,
}

/// Feeds candidate `x`-values to `f` until it returns `false` or the budget is spent.
fn for_each_candidate<F: FnMut(Candidate) -> bool>(ring: &LocalRing, e: [i128; 3], cfg: &SamplerConfig, mut f: F) {
    let mut left = cfg.budget;
    let mut emit = |c: Candidate, f: &mut F| -> bool {
        if left == 0 {
            return false;
        }
        left -= 1;
        f(c)
    };
    let one = ring.int(1);
    let depth = 6 * ring.e() + 2;
    if !emit(Candidate { numer: one, lambda: Elem::ZERO, torsion: None }, &mut f) {
        return;
    }
    for (i, ei) in e.iter().enumerate() {
        if !emit(Candidate { numer: ring.int(*ei), lambda: one, torsion: Some(i) }, &mut f) {
            return;
        }
    }
    let small = ring.residues(2 * ring.e(), 64);
    let units: Vec<Elem> = small.iter().copied().filter(|u| ring.is_unit(*u)).collect();
    // large x
    for k in 1..=depth {
        let lam = ring.pi_pow(k);
        for u in &small {
            if ring.is_zero(*u) {
                continue;
            }
            if !emit(Candidate { numer: *u, lambda: lam, torsion: None }, &mut f) {
                return;
            }
        }
    }
    // x near the 2-torsion and near 0
    let centers = [0, e[0], e[1], e[2]];
    for k in 0..=depth {
        let step = ring.pi_pow(k);
        for c in centers {
            for u in &units {
                let numer = ring.add(ring.int(c), ring.mul(step, *u));
                if !emit(Candidate { numer, lambda: one, torsion: None }, &mut f) {
                    return;
                }
            }
        }
    }
    for r in ring.residues(4 * ring.e(), 3000) {
        if !emit(Candidate { numer: r, lambda: one, torsion: None }, &mut f) {
            return;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ring.p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    loop {
        let k = rng.gen_range(0..=depth);
        let cand = if rng.gen_bool(0.5) {
            Candidate { numer: ring.random(&mut rng), lambda: ring.pi_pow(k), torsion: None }
        } else {
            let c = centers[rng.gen_range(0..4)];
            let numer = ring.add(ring.int(c), ring.mul(ring.pi_pow(k), ring.random(&mut rng)));
            Candidate { numer, lambda: one, torsion: None }
        };
        if !emit(cand, &mut f) {
            return;
        }
    }
}

struct Ctx<'a> {
    model: &'a DescentModel,
    ring: &'a LocalRing,
    rep: Option<SquareClass>,
    v: Place,
}

impl<'a> Ctx<'a> {
    fn new(model: &'a DescentModel, ring: &'a LocalRing, rep: Option<SquareClass>, v: Place) -> Self {
        Ctx { model, ring, rep, v }
    }

    fn ys(&self, c: &Candidate) -> [Elem; 3] {
        let r = self.ring;
        let l2 = r.square(c.lambda);
        self.model.e.map(|ei| r.sub(c.numer, r.mul(r.int(ei), l2)))
    }

    fn positive(&self, c: Candidate) -> Option<HenselWitness> {
        let r = self.ring;
        let (a, b, ab, _, _) = self.model.coeffs();
        let y = self.ys(&c);
        let roots = [
            r.sqrt(r.mul(r.int(a), y[0]))?,
            r.sqrt(r.mul(r.int(b), y[1]))?,
            r.sqrt(r.mul(r.int(ab), y[2]))?,
        ];
        let mut z = [
            r.mul(r.int(ab), c.lambda),
            r.mul(r.int(b), roots[0]),
            r.mul(r.int(a), roots[1]),
            roots[2],
        ];
        let k = z.iter().map(|zi| r.val(*zi)).min()?;
        if k >= r.cap() {
            return None;
        }
        for _ in 0..k {
            z = z.map(|zi| r.div_pi(zi));
        }
        let (columns, minor_valuation, residual_valuation) = hensel_data(r, self.model, &z)?;
        Some(HenselWitness {
            p: r.p,
            ext: self.rep.clone(),
            prec: r.prec,
            z,
            columns,
            minor_valuation,
            residual_valuation,
        })
    }

    fn negative(&self, c: Candidate) -> Option<PairingWitness> {
        let norms = kummer_norms(self.ring, self.model.e, &c)?;
        if pairing(self.model, self.v, &norms) == 0 {
            return None;
        }
        Some(PairingWitness {
            p: self.ring.p,
            ext: self.rep.clone(),
            prec: self.ring.prec,
            numer: c.numer,
            lambda: c.lambda,
            torsion_index: c.torsion,
            norms,
        })
    }
}

fn pairing(model: &DescentModel, v: Place, norms: &[SquareClass; 2]) -> u8 {
    (hilbert_symbol(&model.a, &norms[1], v) + hilbert_symbol(&norms[0], &model.b, v)) % 2
}

/// Local class over `Q_p` of a `p`-adic integer residue, when the truncation determines it.
fn padic_class(ring: &LocalRing, n: i128) -> Option<SquareClass> {
    let t = ring.vp(n);
    let need = if ring.p == 2 { 3 } else { 1 };
    if t + need > ring.prec {
        return None;
    }
    let p = ring.p as i128;
    let unit = ring.red(n) / p.pow(t);
    let m = if ring.p == 2 { 8 } else { p };
    Some(local_class_from_parts(Place::Finite(ring.p), t % 2 == 1, unit.rem_euclid(m) as u64))
}

/// Classes of the norms of `(x-e1, x-e2)` for a point of the curve with the
/// given `x`, or `None` when the candidate is not (provably) such a point.
fn kummer_norms(ring: &LocalRing, e: [i128; 3], c: &Candidate) -> Option<[SquareClass; 2]> {
    let l2 = ring.square(c.lambda);
    let y = e.map(|ei| ring.sub(c.numer, ring.mul(ring.int(ei), l2)));
    let coords: [Elem; 2] = match c.torsion {
        Some(i) => {
            if c.lambda != ring.int(1) || c.numer != ring.int(e[i]) {
                return None;
            }
            let other = |i: usize| {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                ring.int((e[i] - e[j]) * (e[i] - e[k]))
            };
            match i {
                0 => [other(0), y[1]],
                1 => [y[0], other(1)],
                _ => [y[0], y[1]],
            }
        }
        None => {
            if ring.val(c.lambda) >= ring.cap() {
                return None;
            }
            let prod = ring.mul(ring.mul(y[0], y[1]), y[2]);
            if ring.is_square(prod)? {
                [y[0], y[1]]
            } else {
                return None;
            }
        }
    };
    let norm = |t: Elem| {
        if ring.kind == super::FieldKind::Base {
            ring.red(t.x)
        } else {
            ring.norm(t)
        }
    };
    Some([padic_class(ring, norm(coords[0]))?, padic_class(ring, norm(coords[1]))?])
}

/// Hensel data for a primitive point: the best pair of columns, the valuation
/// of its 2x2 Jacobian minor and the valuation of the residual.
fn hensel_data(r: &LocalRing, model: &DescentModel, z: &[Elem; 4]) -> Option<([usize; 2], u32, u32)> {
    if z.iter().all(|zi| !r.is_unit(*zi)) {
        return None;
    }
    let (a, b, ab, c2, c3) = model.coeffs();
    let [z0, z1, z2, z3] = *z;
    let sq = |t: Elem| r.square(t);
    let lin = |c: i128, t: Elem| r.mul(r.int(c), t);
    let q1 = r.sub(r.sub(lin(a, sq(z1)), lin(b, sq(z2))), lin(c2, sq(z0)));
    let q2 = r.sub(r.sub(lin(a, sq(z1)), lin(ab, sq(z3))), lin(c3, sq(z0)));
    let residual = r.val(q1).min(r.val(q2));
    let g1 = [lin(-2 * c2, z0), lin(2 * a, z1), lin(-2 * b, z2), Elem::ZERO];
    let g2 = [lin(-2 * c3, z0), lin(2 * a, z1), Elem::ZERO, lin(-2 * ab, z3)];
    let mut best: Option<([usize; 2], u32)> = None;
    for i in 0..4 {
        for j in i + 1..4 {
            let minor = r.sub(r.mul(g1[i], g2[j]), r.mul(g1[j], g2[i]));
            let w = r.val(minor);
            if w < r.cap() && best.map_or(true, |(_, bw)| w < bw) {
                best = Some(([i, j], w));
            }
        }
    }
    let (cols, w) = best?;
    if residual > 2 * w {
        Some((cols, w, residual))
    } else {
        None
    }
}

/// Re-checks a piece of evidence from scratch. Returns the certified verdict.
pub fn verify_evidence(
    model: &DescentModel,
    v: Place,
    ext: Option<&SquareClass>,
    evidence: &LocalEvidence,
) -> Result<bool, String> {
    match (v, evidence) {
        (Place::Infinity, LocalEvidence::Complex) => match ext {
            Some(d) if d.is_negative() => Ok(true),
            _ => Err("complex evidence without a negative extension".into()),
        },
        (Place::Infinity, LocalEvidence::RealPoint { num, den }) => {
            if ext.is_some() {
                return Err("real evidence over an extension".into());
            }
            if !real_signs_ok(model, *num, *den) {
                return Err(format!("real point {num}/{den} has the wrong signs"));
            }
            if real_decision(model) != *evidence {
                return Err("real witness is not the canonical test point".into());
            }
            Ok(true)
        }
        (Place::Infinity, LocalEvidence::RealEmpty) => {
            if ext.is_some() {
                return Err("real evidence over an extension".into());
            }
            match real_decision(model) {
                LocalEvidence::RealEmpty => Ok(false),
                _ => Err("real points exist".into()),
            }
        }
        (Place::Finite(p), LocalEvidence::Hensel(w)) => {
            let ring = witness_ring(p, ext, w.p, w.ext.as_ref(), w.prec)?;
            if w.z.iter().any(|zi| zi.x != ring.red(zi.x) || zi.y != ring.red(zi.y)) {
                return Err("witness coordinates are not reduced".into());
            }
            if w.z.iter().any(|zi| ring.kind == super::FieldKind::Base && zi.y != 0) {
                return Err("witness has an extension coordinate over the base field".into());
            }
            match hensel_data(&ring, model, &w.z) {
                Some((cols, mv, rv)) if cols == w.columns && mv == w.minor_valuation && rv == w.residual_valuation => {
                    Ok(true)
                }
                Some(_) => Err("recorded Hensel slack does not match".into()),
                None => Err("witness fails the Hensel criterion".into()),
            }
        }
        (Place::Finite(p), LocalEvidence::Pairing(w)) => {
            let ring = witness_ring(p, ext, w.p, w.ext.as_ref(), w.prec)?;
            for e in [w.numer, w.lambda] {
                if e.x != ring.red(e.x) || e.y != ring.red(e.y) {
                    return Err("witness coordinates are not reduced".into());
                }
                if ring.kind == super::FieldKind::Base && e.y != 0 {
                    return Err("witness has an extension coordinate over the base field".into());
                }
            }
            let c = Candidate {
                numer: ring.elem(w.numer.x, w.numer.y),
                lambda: ring.elem(w.lambda.x, w.lambda.y),
                torsion: w.torsion_index,
            };
            if c.torsion.is_some_and(|i| i > 2) {
                return Err("bad torsion index".into());
            }
            let norms = kummer_norms(&ring, model.e, &c).ok_or("pairing witness is not a curve point")?;
            if norms != w.norms {
                return Err("recorded norm classes do not match".into());
            }
            if pairing(model, v, &norms) == 1 {
                Ok(false)
            } else {
                Err("pairing witness pairs trivially".into())
            }
        }
        _ => Err(format!("evidence kind does not fit place {v}")),
    }
}

fn witness_ring(
    p: u64,
    ext: Option<&SquareClass>,
    wp: u64,
    wext: Option<&SquareClass>,
    prec: u32,
) -> Result<LocalRing, String> {
    if wp != p {
        return Err(format!("witness prime {wp} differs from place {p}"));
    }
    let expected = ext.map(|d| local_class(d, Place::Finite(p)));
    if expected.as_ref() != wext {
        return Err("witness extension does not match the field".into());
    }
    if expected.as_ref().is_some_and(|r| r.is_one()) {
        return Err("extension is trivial".into());
    }
    LocalRing::with_precision(p, wext, prec).ok_or_else(|| format!("unusable precision {prec} at {p}"))
}

/// Samples `E(Q_v)` and returns the span of the local Kummer images, stopping
/// once it reaches `target` elements. Pairs are transversal representatives.
pub fn sample_local_image(
    e: [i128; 3],
    v: Place,
    target: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<(SquareClass, SquareClass)>, LocalError> {
    let mut span: Vec<(SquareClass, SquareClass)> = vec![(SquareClass::one(), SquareClass::one())];
    let add = |span: &mut Vec<(SquareClass, SquareClass)>, g: (SquareClass, SquareClass)| {
        if span.contains(&g) {
            return;
        }
        let shifted: Vec<_> = span
            .iter()
            .map(|(x, y)| (local_class(&x.mul(&g.0), v), local_class(&y.mul(&g.1), v)))
            .collect();
        span.extend(shifted);
    };
    match v {
        Place::Infinity => {
            let sign = |t: i128| if t < 0 { SquareClass::minus_one() } else { SquareClass::one() };
            for (num, den) in real_test_points(e) {
                let d = e.map(|ei| num - ei * den);
                if d[0].signum() * d[1].signum() * d[2].signum() > 0 {
                    add(&mut span, (sign(d[0]), sign(d[1])));
                }
            }
        }
        Place::Finite(p) => {
            let ring = LocalRing::new(p, None, cfg.bits).ok_or(LocalError::UnsupportedPrime(p))?;
            for_each_candidate(&ring, e, cfg, |c| {
                if let Some([n1, n2]) = kummer_norms(&ring, e, &c) {
                    add(&mut span, (n1, n2));
                }
                span.len() < target
            });
        }
    }
    if span.len() < target {
        return Err(LocalError::PrecisionExhausted { place: v, budget: cfg.budget });
    }
    span.sort();
    Ok(span)
}
