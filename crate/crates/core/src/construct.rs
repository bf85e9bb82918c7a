//! Forging classes whose every lift is obstructed, and choosing quadratic
//! fields over which a family of them becomes locally trivial everywhere.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{factor, is_prime, legendre, span, ArithError, KummerPair, SquareClass};
use crate::brauer::{quaternion, BrauerClass2, BrauerError};
use crate::config::Bounds;
use crate::curve::{local_image, CurveError, DescentImage, FullTwoTorsionCurve, LocalImage};
use crate::localfield::{
    is_local_square, local_class, local_points_exist_with, local_square_transversal, DescentModel, LocalError,
    LocalEvidence, Place, SamplerConfig,
};
use crate::obstruction::{
    certify_index, localize, IndexCertificate, LiftCoset, ObstructionConstants, ObstructionError, Verdict,
};

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("{stage}: search exhausted at bound {bound}")]
    SearchExhausted { stage: &'static str, bound: u64 },
    #[error("{class} does not split over any quadratic extension of Q_{place}")]
    EmptyOptionSet { class: KummerPair, place: Place },
    #[error("{pool} forged generators yield fewer than {r} classes with disjoint obstruction sets")]
    PoolExhausted { r: usize, pool: usize },
    #[error("no d with |d| cofactor up to {bound} meets the local constraints")]
    NoCompatibleD { bound: u64 },
    #[error("postcondition failed: {0}")]
    Postcondition(String),
    #[error("local image and local decision disagree for {class} at {place}")]
    LocalInconsistency { class: KummerPair, place: Place },
    #[error("class {0} exceeds the range of the local arithmetic")]
    Oversized(KummerPair),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Brauer(#[from] BrauerError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Local(#[from] LocalError),
    #[error(transparent)]
    Obstruction(#[from] ObstructionError),
}

/// Classes whose model coefficients stay well inside i128.
pub fn admissible(pair: &KummerPair) -> bool {
    match (pair.first.checked_value(), pair.second.checked_value()) {
        (Some(a), Some(b)) => a.checked_mul(b).map_or(false, |ab| ab.unsigned_abs() < 1u128 << 100),
        _ => false,
    }
}

/// Smallest odd prime `q` outside `avoid` with `(h, q) = 0` in Br(Q) for every `h`.
pub fn simultaneous_norm_prime(
    h_list: &[SquareClass],
    avoid: &BTreeSet<Place>,
    bound: u64,
) -> Result<u64, ConstructError> {
    let mut q = 3u64;
    while q <= bound {
        if is_prime(q) && !avoid.contains(&Place::Finite(q)) && passes_norm_test(h_list, q)? {
            return Ok(q);
        }
        q += 2;
    }
    Err(ConstructError::SearchExhausted { stage: "simultaneous norm prime", bound })
}

/// Whether every `h` is a norm from `Q(sqrt q)`.
pub fn passes_norm_test(h_list: &[SquareClass], q: u64) -> Result<bool, ConstructError> {
    let qc = SquareClass::prime(q);
    for h in h_list {
        if !quaternion(h, &qc)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Count of odd primes below `bound` passing the norm test for `h_list`, and
/// the number of odd primes tested.
pub fn norm_prime_density(h_list: &[SquareClass], bound: u64) -> Result<(usize, usize), ConstructError> {
    let (mut hits, mut total) = (0, 0);
    let mut q = 3u64;
    while q < bound {
        if is_prime(q) {
            total += 1;
            if passes_norm_test(h_list, q)? {
                hits += 1;
            }
        }
        q += 2;
    }
    Ok((hits, total))
}

#[derive(Debug, Clone)]
pub struct ForgeContext {
    pub curve: FullTwoTorsionCurve,
    pub constants: KummerPair,
    /// Generators of the image, the constant pair, then earlier forged classes.
    pub h_gens: Vec<KummerPair>,
    pub h_elems: Vec<KummerPair>,
    pub c_class: BrauerClass2,
    pub bad: BTreeSet<Place>,
}

impl ForgeContext {
    pub fn new(
        curve: &FullTwoTorsionCurve,
        constants: &ObstructionConstants,
        image: &DescentImage,
        prior: &[KummerPair],
    ) -> Result<Self, ConstructError> {
        let c = constants.primary();
        let mut h_gens = image.generators.clone();
        h_gens.push(c.clone());
        h_gens.extend(prior.iter().cloned());
        let h_elems = span(&h_gens);
        let c_class = quaternion(&c.first, &c.second)?;
        let mut bad: BTreeSet<Place> = curve.disc_support().into_iter().collect();
        bad.insert(Place::Infinity);
        bad.insert(Place::Finite(2));
        bad.extend(c_class.support().iter().copied());
        for h in &h_elems {
            bad.extend(h.primes().into_iter().map(Place::Finite));
            bad.extend(quaternion(&h.first, &h.second)?.support().iter().copied());
        }
        Ok(ForgeContext { curve: curve.clone(), constants: c, h_gens, h_elems, c_class, bad })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeTrace {
    pub q: u64,
    pub places: Vec<u64>,
}

fn residue_symbol(s: &SquareClass, v: u64) -> i32 {
    legendre(s.unit_residue(v, v) as i128, v)
}

/// One class `(g1, q)` with `(h1 g1, h2 q)` outside `{0, (C1, C2)}` for all `h` in the context group.
pub fn forge_class(ctx: &ForgeContext, bound: u64) -> Result<(KummerPair, ForgeTrace), ConstructError> {
    let firsts: Vec<SquareClass> = ctx.h_gens.iter().map(|h| h.first.clone()).collect();
    let q = simultaneous_norm_prime(&firsts, &ctx.bad, bound)?;
    let qc = SquareClass::prime(q);
    let mut pending: Vec<SquareClass> = ctx.h_elems.iter().map(|h| qc.mul(&h.second)).collect();
    pending.sort();
    pending.dedup();
    let mut places = Vec::new();
    let mut v = 3u64;
    while !pending.is_empty() {
        if v > bound {
            return Err(ConstructError::SearchExhausted { stage: "splitting places", bound });
        }
        if v != q && is_prime(v) && !ctx.bad.contains(&Place::Finite(v)) {
            let before = pending.len();
            pending.retain(|s| residue_symbol(s, v) != -1);
            if pending.len() < before {
                places.push(v);
            }
        }
        v += 2;
    }
    let g = KummerPair::new(SquareClass::from_parts(false, places.iter().copied()), qc);
    if !admissible(&g) {
        return Err(ConstructError::Oversized(g));
    }
    for h in &ctx.h_elems {
        let cls = quaternion(&h.first.mul(&g.first), &h.second.mul(&g.second))?;
        if cls.is_zero() || cls == ctx.c_class {
            return Err(ConstructError::Postcondition(format!("({}) * {} lands in the constant subgroup", h, g)));
        }
    }
    Ok((g, ForgeTrace { q, places }))
}

#[derive(Debug, Clone)]
pub struct ForgedGroup {
    pub constants: ObstructionConstants,
    pub image: DescentImage,
    pub generators: Vec<KummerPair>,
    pub traces: Vec<ForgeTrace>,
}

impl ForgedGroup {
    pub fn extend(&mut self, curve: &FullTwoTorsionCurve, bound: u64) -> Result<(), ConstructError> {
        let ctx = ForgeContext::new(curve, &self.constants, &self.image, &self.generators)?;
        let (g, trace) = forge_class(&ctx, bound)?;
        self.generators.push(g);
        self.traces.push(trace);
        Ok(())
    }

    /// The product of the generators selected by the bits of `mask`.
    pub fn combine(&self, mask: u32) -> KummerPair {
        self.generators
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .fold(KummerPair::one(), |acc, (_, g)| acc.mul(g))
    }

    pub fn masks(&self) -> impl Iterator<Item = u32> {
        1..(1u32 << self.generators.len())
    }

    pub fn certify(&self, mask: u32) -> Result<IndexCertificate, ConstructError> {
        let coset = LiftCoset { representative: self.combine(mask), image: self.image.clone() };
        Ok(certify_index(&coset, &self.constants)?)
    }

    pub fn certify_span(&self) -> Result<Vec<IndexCertificate>, ConstructError> {
        self.masks().map(|m| self.certify(m)).collect()
    }
}

pub fn forge_group(
    curve: &FullTwoTorsionCurve,
    image: &DescentImage,
    constants: &ObstructionConstants,
    r: usize,
    bounds: &Bounds,
) -> Result<ForgedGroup, ConstructError> {
    let mut group =
        ForgedGroup { constants: constants.clone(), image: image.clone(), generators: Vec::new(), traces: Vec::new() };
    for _ in 0..r {
        group.extend(curve, bounds.prime_search)?;
    }
    Ok(group)
}

/// Places where a class can fail to be locally trivial.
pub fn bad_places(curve: &FullTwoTorsionCurve, class: &KummerPair) -> Vec<Place> {
    let mut out: BTreeSet<Place> = curve.disc_support().into_iter().collect();
    out.insert(Place::Infinity);
    out.insert(Place::Finite(2));
    out.extend(class.primes().into_iter().map(Place::Finite));
    out.into_iter().collect()
}

pub struct LocalImageCache {
    curve: FullTwoTorsionCurve,
    cfg: SamplerConfig,
    images: BTreeMap<Place, LocalImage>,
}

impl LocalImageCache {
    pub fn new(curve: &FullTwoTorsionCurve, cfg: &SamplerConfig) -> Self {
        LocalImageCache { curve: curve.clone(), cfg: *cfg, images: BTreeMap::new() }
    }

    pub fn get(&mut self, v: Place) -> Result<&LocalImage, CurveError> {
        if !self.images.contains_key(&v) {
            let w = local_image(&self.curve, v, &self.cfg)?;
            self.images.insert(v, w);
        }
        Ok(&self.images[&v])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceEvidence {
    pub place: Place,
    /// Global `d` when the evidence lives over `Q_v(sqrt d)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext: Option<SquareClass>,
    pub evidence: LocalEvidence,
}

/// The places where `class` is not in the local image, each with a
/// certificate that the torsor has no `Q_v`-points.
pub fn obstruction_set(
    curve: &FullTwoTorsionCurve,
    class: &KummerPair,
    cache: &mut LocalImageCache,
    cfg: &SamplerConfig,
) -> Result<Vec<PlaceEvidence>, ConstructError> {
    let model = DescentModel::new(curve.e, class)?;
    let mut out = Vec::new();
    for v in bad_places(curve, class) {
        let inside = cache.get(v)?.contains_local(&localize(class, v));
        let verdict = local_points_exist_with(&model, v, None, cfg)?;
        if verdict.exists != inside {
            return Err(ConstructError::LocalInconsistency { class: class.clone(), place: v });
        }
        if !inside {
            out.push(PlaceEvidence { place: v, ext: None, evidence: verdict.evidence });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub mask: u32,
    pub class: KummerPair,
    pub sigma: Vec<PlaceEvidence>,
}

impl Candidate {
    pub fn sigma_places(&self) -> BTreeSet<Place> {
        self.sigma.iter().map(|e| e.place).collect()
    }
}

/// Greedy choice of `r` linearly independent span elements with pairwise
/// disjoint obstruction sets, by obstruction-set size and then mask.
pub fn select_disjoint(candidates: &[Candidate], r: usize, pool: usize) -> Result<Vec<Candidate>, ConstructError> {
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by_key(|c| (c.sigma.len(), c.mask));
    let mut chosen: Vec<Candidate> = Vec::new();
    let mut basis: Vec<u32> = Vec::new();
    let mut used: BTreeSet<Place> = BTreeSet::new();
    for c in order {
        if chosen.len() == r {
            break;
        }
        let places = c.sigma_places();
        if !places.is_disjoint(&used) {
            continue;
        }
        let mut m = c.mask;
        for b in &basis {
            m = m.min(m ^ b);
        }
        if m == 0 {
            continue;
        }
        basis.push(m);
        basis.sort_unstable_by(|x, y| y.cmp(x));
        used.extend(places);
        chosen.push(c.clone());
    }
    if chosen.len() < r {
        return Err(ConstructError::PoolExhausted { r, pool });
    }
    Ok(chosen)
}

/// Nontrivial transversal classes `d` at `v` over whose quadratic extension
/// the torsor of `class` acquires a point.
pub fn local_splitting_options(
    curve: &FullTwoTorsionCurve,
    class: &KummerPair,
    v: Place,
    cfg: &SamplerConfig,
) -> Result<Vec<SquareClass>, ConstructError> {
    let model = DescentModel::new(curve.e, class)?;
    let mut out = Vec::new();
    for d in local_square_transversal(v) {
        if d.is_one() {
            continue;
        }
        if local_points_exist_with(&model, v, Some(&d), cfg)?.exists {
            out.push(d);
        }
    }
    if out.is_empty() {
        return Err(ConstructError::EmptyOptionSet { class: class.clone(), place: v });
    }
    Ok(out)
}

fn squarefree(m: u64) -> Result<Option<Vec<u64>>, ArithError> {
    let f = factor(m as i128)?;
    if f.factors.iter().any(|&(_, e)| e > 1) {
        return Ok(None);
    }
    Ok(Some(f.factors.iter().map(|&(p, _)| p).collect()))
}

/// Smallest `d = ±(prod R) m` whose local class at each constrained place is
/// one of the allowed options; `R` collects places admitting only ramified options.
pub fn find_sha_extension(
    constraints: &BTreeMap<Place, Vec<SquareClass>>,
    bound: u64,
) -> Result<SquareClass, ConstructError> {
    let negative_only = constraints.contains_key(&Place::Infinity);
    let forced: Vec<u64> = constraints
        .iter()
        .filter_map(|(v, opts)| match v {
            Place::Finite(p) if opts.iter().all(|d| d.divisible_by(*p)) => Some(*p),
            _ => None,
        })
        .collect();
    let fits = |d: &SquareClass| constraints.iter().all(|(v, opts)| opts.contains(&local_class(d, *v)));
    for m in 1..=bound {
        let Some(primes) = squarefree(m)? else { continue };
        if primes.iter().any(|p| forced.contains(p)) {
            continue;
        }
        let base = SquareClass::from_parts(false, forced.iter().chain(primes.iter()).copied());
        for negative in [false, true] {
            if negative_only && !negative {
                continue;
            }
            let d = if negative { base.mul(&SquareClass::minus_one()) } else { base.clone() };
            if !d.is_one() && fits(&d) {
                return Ok(d);
            }
        }
    }
    Err(ConstructError::NoCompatibleD { bound })
}

/// Evidence over `Q_v(sqrt d)`, or over `Q_v` when `d` is a local square.
pub fn evidence_over(
    curve: &FullTwoTorsionCurve,
    class: &KummerPair,
    d: &SquareClass,
    v: Place,
    cfg: &SamplerConfig,
) -> Result<PlaceEvidence, ConstructError> {
    let model = DescentModel::new(curve.e, class)?;
    let ext = if is_local_square(d, v) { None } else { Some(d.clone()) };
    let verdict = local_points_exist_with(&model, v, ext.as_ref(), cfg)?;
    if !verdict.exists {
        return Err(ConstructError::LocalInconsistency { class: class.clone(), place: v });
    }
    Ok(PlaceEvidence { place: v, ext, evidence: verdict.evidence })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShaClass {
    pub class: KummerPair,
    pub bad_places: Vec<Place>,
    /// Places where the class is locally nontrivial over `Q_v`.
    pub sigma: Vec<PlaceEvidence>,
    /// A local point over the completion of `Q(sqrt d)` at every bad place.
    pub trivialization: Vec<PlaceEvidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub class_index: usize,
    pub evidence: PlaceEvidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShaCertificate {
    pub r: usize,
    pub d: SquareClass,
    pub classes: Vec<ShaClass>,
    /// Index certificates for every nonzero combination of the classes.
    pub span: Vec<IndexCertificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<AuditEntry>,
}

/// Good places checked in audit mode, per class.
pub const AUDIT_PLACES: usize = 3;

pub fn grow_sha(
    curve: &FullTwoTorsionCurve,
    image: &DescentImage,
    constants: &ObstructionConstants,
    r: usize,
    bounds: &Bounds,
    seed: u64,
    audit: bool,
) -> Result<ShaCertificate, ConstructError> {
    let cfg = bounds.sampler(seed);
    let mut cache = LocalImageCache::new(curve, &cfg);
    let mut group = forge_group(curve, image, constants, r, bounds)?;
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut next_mask = 1u32;
    let selected = loop {
        for mask in next_mask..(1u32 << group.generators.len()) {
            let class = group.combine(mask);
            if !admissible(&class) {
                continue;
            }
            let sigma = obstruction_set(curve, &class, &mut cache, &cfg)?;
            candidates.push(Candidate { mask, class, sigma });
        }
        next_mask = 1u32 << group.generators.len();
        match select_disjoint(&candidates, r, group.generators.len()) {
            Ok(sel) => break sel,
            Err(ConstructError::PoolExhausted { .. }) if group.generators.len() < r + bounds.pool => {
                group.extend(curve, bounds.prime_search)?;
            }
            Err(e) => return Err(e),
        }
    };

    let mut constraints = BTreeMap::new();
    for c in &selected {
        for e in &c.sigma {
            constraints.insert(e.place, local_splitting_options(curve, &c.class, e.place, &cfg)?);
        }
    }
    let d = find_sha_extension(&constraints, bounds.prime_search)?;

    let mut classes = Vec::new();
    for c in &selected {
        let bad = bad_places(curve, &c.class);
        let trivialization =
            bad.iter().map(|&v| evidence_over(curve, &c.class, &d, v, &cfg)).collect::<Result<Vec<_>, _>>()?;
        classes.push(ShaClass { class: c.class.clone(), bad_places: bad, sigma: c.sigma.clone(), trivialization });
    }

    let mut span_certs = Vec::new();
    for m in 1u32..(1 << r) {
        let rep = classes
            .iter()
            .enumerate()
            .filter(|(i, _)| m >> i & 1 == 1)
            .fold(KummerPair::one(), |acc, (_, c)| acc.mul(&c.class));
        let cert = certify_index(&LiftCoset { representative: rep, image: image.clone() }, constants)?;
        if cert.verdict != Verdict::Index4 {
            return Err(ConstructError::Postcondition(format!(
                "{} has verdict {}",
                cert.representative, cert.verdict
            )));
        }
        span_certs.push(cert);
    }

    let mut audit_entries = Vec::new();
    if audit {
        for (i, c) in classes.iter().enumerate() {
            let model = DescentModel::new(curve.e, &c.class)?;
            let mut p = 3u64;
            let mut n = 0;
            while n < AUDIT_PLACES {
                let v = Place::Finite(p);
                if is_prime(p) && !c.bad_places.contains(&v) {
                    let verdict = local_points_exist_with(&model, v, None, &cfg)?;
                    if !verdict.exists {
                        return Err(ConstructError::LocalInconsistency { class: c.class.clone(), place: v });
                    }
                    audit_entries.push(AuditEntry {
                        class_index: i,
                        evidence: PlaceEvidence { place: v, ext: None, evidence: verdict.evidence },
                    });
                    n += 1;
                }
                p += 2;
            }
        }
    }

    Ok(ShaCertificate { r, d, classes, span: span_certs, audit: audit_entries })
}
