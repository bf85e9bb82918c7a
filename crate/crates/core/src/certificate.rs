//! JSON documents emitted by the pipeline and their independent re-verification.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arith::{KummerPair, SquareClass};
use crate::brauer::{quaternion, BrauerClass2};
use crate::config::Bounds;
use crate::construct::{
    admissible, bad_places, forge_group, grow_sha, ConstructError, ForgeContext, ForgeTrace, LocalImageCache,
    PlaceEvidence, ShaCertificate, AUDIT_PLACES,
};
use crate::curve::{global_image_bounded, DescentImage};
use crate::fixture::{Fixture, FixtureCurve};
use crate::localfield::{is_local_square, max_precision, verify_evidence, DescentModel, LocalEvidence, Place};
use crate::obstruction::{
    certify_index, delta, fit_constants, localize, IndexCertificate, LiftCoset, ObstructionConstants, Verdict,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub id: String,
    pub e: [i128; 3],
    pub rank: usize,
    pub generators: Vec<String>,
}

impl CurveRecord {
    pub fn of(fc: &FixtureCurve) -> Self {
        CurveRecord { id: fc.id.clone(), e: fc.curve.e, rank: fc.basis.rank, generators: fc.generator_text.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantsDocument {
    pub schema_version: u32,
    pub kind: String,
    pub curve: CurveRecord,
    pub seed: u64,
    pub bounds: Bounds,
    pub image: Vec<KummerPair>,
    pub constants: ObstructionConstants,
    /// `Delta(e3 - e1, e3 - e2)`, which must vanish.
    pub torsion_delta: BrauerClass2,
    /// SHA-256 of the document serialized with this field empty.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeDocument {
    pub schema_version: u32,
    pub kind: String,
    pub curve: CurveRecord,
    pub seed: u64,
    pub bounds: Bounds,
    pub r: usize,
    pub constants: ObstructionConstants,
    pub generators: Vec<KummerPair>,
    pub traces: Vec<ForgeTrace>,
    /// One certificate per nonzero combination, in mask order.
    pub certificates: Vec<IndexCertificate>,
    /// SHA-256 of the document serialized with this field empty.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShaDocument {
    pub schema_version: u32,
    pub kind: String,
    pub curve: CurveRecord,
    pub seed: u64,
    pub bounds: Bounds,
    pub r: usize,
    pub audit: bool,
    pub constants: ObstructionConstants,
    pub certificate: ShaCertificate,
    /// SHA-256 of the document serialized with this field empty.
    pub digest: String,
}

pub const KIND_CONSTANTS: &str = "fit-constants";
pub const KIND_FORGE: &str = "forge";
pub const KIND_SHA: &str = "grow-sha";

/// A sealed JSON document.
pub trait Document: Serialize + DeserializeOwned + Clone {
    fn digest_mut(&mut self) -> &mut String;
}

macro_rules! document {
    ($t:ty) => {
        impl Document for $t {
            fn digest_mut(&mut self) -> &mut String {
                &mut self.digest
            }
        }
    };
}

document!(ConstantsDocument);
document!(ForgeDocument);
document!(ShaDocument);

fn digest_of<T: Document>(doc: &T) -> String {
    let mut blank = doc.clone();
    blank.digest_mut().clear();
    let body = serde_json::to_string(&blank).expect("documents serialize");
    format!("{:x}", Sha256::digest(body.as_bytes()))
}

pub fn seal<T: Document>(doc: &mut T) {
    *doc.digest_mut() = digest_of(doc);
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Document>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
}

fn prepare_with(
    fc: &FixtureCurve,
    bounds: &Bounds,
    seed: u64,
    probes: &[Place],
) -> Result<(DescentImage, ObstructionConstants), ConstructError> {
    let image = global_image_bounded(&fc.curve, &fc.basis, bounds.factor)?;
    let constants = fit_constants(&fc.curve, &fc.basis, probes, &bounds.sampler(seed))?;
    Ok((image, constants))
}

fn prepare(fc: &FixtureCurve, bounds: &Bounds, seed: u64) -> Result<(DescentImage, ObstructionConstants), ConstructError> {
    prepare_with(fc, bounds, seed, &fc.curve.disc_support())
}

fn torsion_pair(fc: &FixtureCurve) -> Result<KummerPair, ConstructError> {
    let [e1, e2, e3] = fc.curve.e;
    Ok(KummerPair::from_ints(e3 - e1, e3 - e2)?)
}

/// `probes` defaults to every place of bad reduction; a proper subset fits
/// against fewer local images and may leave extra survivors.
pub fn constants_document(
    fc: &FixtureCurve,
    bounds: &Bounds,
    seed: u64,
    probes: Option<&[Place]>,
) -> Result<ConstantsDocument, ConstructError> {
    let full = fc.curve.disc_support();
    let (image, constants) = prepare_with(fc, bounds, seed, probes.unwrap_or(&full))?;
    let torsion_delta = delta(&torsion_pair(fc)?, &constants).map_err(ConstructError::Brauer)?;
    Ok(ConstantsDocument {
        schema_version: SCHEMA_VERSION,
        kind: KIND_CONSTANTS.into(),
        curve: CurveRecord::of(fc),
        seed,
        bounds: *bounds,
        image: image.elements,
        constants,
        torsion_delta,
        digest: String::new(),
    })
    .map(sealed)
}

fn sealed<T: Document>(mut doc: T) -> T {
    seal(&mut doc);
    doc
}

pub fn forge_document(fc: &FixtureCurve, r: usize, bounds: &Bounds, seed: u64) -> Result<ForgeDocument, ConstructError> {
    let (image, constants) = prepare(fc, bounds, seed)?;
    let group = forge_group(&fc.curve, &image, &constants, r, bounds)?;
    let certificates = group.certify_span()?;
    if let Some(bad) = certificates.iter().find(|c| c.verdict != Verdict::Index4) {
        return Err(ConstructError::Postcondition(format!("{} has verdict {}", bad.representative, bad.verdict)));
    }
    Ok(ForgeDocument {
        schema_version: SCHEMA_VERSION,
        kind: KIND_FORGE.into(),
        curve: CurveRecord::of(fc),
        seed,
        bounds: *bounds,
        r,
        constants,
        generators: group.generators,
        traces: group.traces,
        certificates,
        digest: String::new(),
    })
    .map(sealed)
}

pub fn sha_document(
    fc: &FixtureCurve,
    r: usize,
    bounds: &Bounds,
    seed: u64,
    audit: bool,
) -> Result<ShaDocument, ConstructError> {
    let (image, constants) = prepare(fc, bounds, seed)?;
    let certificate = grow_sha(&fc.curve, &image, &constants, r, bounds, seed, audit)?;
    Ok(ShaDocument {
        schema_version: SCHEMA_VERSION,
        kind: KIND_SHA.into(),
        curve: CurveRecord::of(fc),
        seed,
        bounds: *bounds,
        r,
        audit,
        constants,
        certificate,
        digest: String::new(),
    })
    .map(sealed)
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("unknown document kind {0:?}")]
    Kind(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("recomputation failed: {0}")]
    Recompute(#[from] ConstructError),
}

impl VerifyError {
    /// Syntax-level problems, as opposed to a document that parses but fails checks.
    pub fn is_usage(&self) -> bool {
        matches!(self, VerifyError::Malformed(_) | VerifyError::Schema(_) | VerifyError::Kind(_))
    }
}

fn reject<T>(msg: impl Into<String>) -> Result<T, VerifyError> {
    Err(VerifyError::Rejected(msg.into()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), VerifyError> {
    if cond {
        Ok(())
    } else {
        reject(msg())
    }
}

fn parse_body<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, VerifyError> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => VerifyError::Rejected(format!("invalid field: {e}")),
        _ => VerifyError::Malformed(e.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub kind: String,
    pub curve: String,
    pub checks: usize,
}

struct Checker<'a> {
    fc: &'a FixtureCurve,
    bits: u32,
    checks: usize,
}

impl<'a> Checker<'a> {
    fn ok(&mut self, cond: bool, msg: impl FnOnce() -> String) -> Result<(), VerifyError> {
        self.checks += 1;
        ensure(cond, msg)
    }

    fn common(
        &mut self,
        curve: &CurveRecord,
        seed: u64,
        bounds: &Bounds,
        constants: &ObstructionConstants,
        probes: &[Place],
    ) -> Result<DescentImage, VerifyError> {
        self.ok(*curve == CurveRecord::of(self.fc), || format!("curve record differs from fixture entry {}", self.fc.id))?;
        let (image, fitted) = prepare_with(self.fc, bounds, seed, probes)?;
        self.ok(fitted == *constants, || "obstruction constants do not match a fresh fit".into())?;
        Ok(image)
    }

    fn index_certificate(
        &mut self,
        stored: &IndexCertificate,
        rep: &KummerPair,
        image: &DescentImage,
        constants: &ObstructionConstants,
    ) -> Result<(), VerifyError> {
        let fresh = certify_index(&LiftCoset { representative: rep.clone(), image: image.clone() }, constants)
            .map_err(ConstructError::from)?;
        self.ok(fresh == *stored, || format!("index certificate for {} does not recompute", rep))?;
        self.ok(stored.verdict == Verdict::Index4, || format!("{} is not certified index-4", rep))
    }

    fn evidence(
        &mut self,
        class: &KummerPair,
        item: &PlaceEvidence,
        expect_ext: Option<&SquareClass>,
        expect: bool,
    ) -> Result<(), VerifyError> {
        self.ok(item.ext.as_ref() == expect_ext, || format!("wrong field for evidence at {}", item.place))?;
        let prec = match &item.evidence {
            LocalEvidence::Hensel(w) => Some((w.p, w.prec)),
            LocalEvidence::Pairing(w) => Some((w.p, w.prec)),
            _ => None,
        };
        if let Some((p, k)) = prec {
            self.ok(k == max_precision(p, self.bits), || format!("witness precision at {} differs from the bound", p))?;
        }
        let model = DescentModel::new(self.fc.curve.e, class).map_err(ConstructError::from)?;
        match verify_evidence(&model, item.place, item.ext.as_ref(), &item.evidence) {
            Ok(v) => self.ok(v == expect, || format!("evidence for {} at {} proves the wrong verdict", class, item.place)),
            Err(e) => reject(format!("evidence for {} at {}: {}", class, item.place, e)),
        }
    }
}

fn combine(classes: &[KummerPair], mask: u32) -> KummerPair {
    classes
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .fold(KummerPair::one(), |acc, (_, c)| acc.mul(c))
}

fn check_seal<T: Document>(doc: &T, stored: &str) -> Result<(), VerifyError> {
    ensure(digest_of(doc) == stored, || "digest does not match the document body".into())
}

fn verify_constants(doc: &ConstantsDocument, ck: &mut Checker) -> Result<(), VerifyError> {
    let full = ck.fc.curve.disc_support();
    let probes = &doc.constants.fitted_support;
    ck.ok(!probes.is_empty() && probes.iter().all(|v| full.contains(v)), || "probe set is not within the bad places".into())?;
    let image = ck.common(&doc.curve, doc.seed, &doc.bounds, &doc.constants, probes)?;
    ck.ok(image.elements == doc.image, || "descent image does not recompute".into())?;
    let td = delta(&torsion_pair(ck.fc)?, &doc.constants).map_err(ConstructError::Brauer)?;
    ck.ok(td == doc.torsion_delta && td.is_zero(), || "torsion pair obstruction is not zero".into())
}

fn verify_forge(doc: &ForgeDocument, ck: &mut Checker) -> Result<(), VerifyError> {
    let image = ck.common(&doc.curve, doc.seed, &doc.bounds, &doc.constants, &ck.fc.curve.disc_support())?;
    ck.ok(doc.generators.len() == doc.r && doc.traces.len() == doc.r, || "generator count differs from r".into())?;
    for (i, (g, t)) in doc.generators.iter().zip(&doc.traces).enumerate() {
        ck.ok(admissible(g), || format!("generator {} is out of range", g))?;
        let expected = KummerPair::new(SquareClass::from_parts(false, t.places.iter().copied()), SquareClass::prime(t.q));
        ck.ok(*g == expected, || format!("generator {} does not match its trace", g))?;
        let ctx = ForgeContext::new(&ck.fc.curve, &doc.constants, &image, &doc.generators[..i])?;
        ck.ok(!ctx.bad.contains(&Place::Finite(t.q)), || format!("q = {} lies in the bad set", t.q))?;
        for h in &ctx.h_elems {
            let cls = quaternion(&h.first.mul(&g.first), &h.second.mul(&g.second)).map_err(ConstructError::Brauer)?;
            ck.ok(!cls.is_zero() && cls != ctx.c_class, || format!("{} fails the forging condition against {}", g, h))?;
        }
    }
    ck.ok(doc.certificates.len() + 1 == 1usize << doc.r, || "certificate count differs from 2^r - 1".into())?;
    for (m, cert) in (1u32..).zip(&doc.certificates) {
        ck.index_certificate(cert, &combine(&doc.generators, m), &image, &doc.constants)?;
    }
    Ok(())
}

fn verify_sha(doc: &ShaDocument, ck: &mut Checker) -> Result<(), VerifyError> {
    let image = ck.common(&doc.curve, doc.seed, &doc.bounds, &doc.constants, &ck.fc.curve.disc_support())?;
    let cert = &doc.certificate;
    ck.ok(cert.r == doc.r && cert.classes.len() == doc.r, || "class count differs from r".into())?;
    ck.ok(!cert.d.is_one(), || "d is a square".into())?;
    let audits = if doc.audit { AUDIT_PLACES * doc.r } else { 0 };
    ck.ok(cert.audit.len() == audits, || "audit entry count does not match the audit flag".into())?;
    let cfg = doc.bounds.sampler(doc.seed);
    let mut cache = LocalImageCache::new(&ck.fc.curve, &cfg);
    let mut used: Vec<Place> = Vec::new();
    for c in &cert.classes {
        ck.ok(admissible(&c.class), || format!("class {} is out of range", c.class))?;
        let bad = bad_places(&ck.fc.curve, &c.class);
        ck.ok(c.bad_places == bad, || format!("bad places of {} do not recompute", c.class))?;
        let mut sigma = Vec::new();
        for &v in &bad {
            let inside = cache.get(v).map_err(ConstructError::from)?.contains_local(&localize(&c.class, v));
            if !inside {
                sigma.push(v);
            }
        }
        let stored: Vec<Place> = c.sigma.iter().map(|e| e.place).collect();
        ck.ok(stored == sigma, || format!("obstruction set of {} does not recompute", c.class))?;
        ck.ok(sigma.iter().all(|v| !used.contains(v)), || format!("obstruction set of {} overlaps another", c.class))?;
        used.extend(sigma.iter().copied());
        for e in &c.sigma {
            ck.evidence(&c.class, e, None, false)?;
        }
        let places: Vec<Place> = c.trivialization.iter().map(|e| e.place).collect();
        ck.ok(places == bad, || format!("trivialization of {} does not cover its bad places", c.class))?;
        for e in &c.trivialization {
            let ext = if is_local_square(&cert.d, e.place) { None } else { Some(&cert.d) };
            ck.evidence(&c.class, e, ext, true)?;
        }
    }
    let classes: Vec<KummerPair> = cert.classes.iter().map(|c| c.class.clone()).collect();
    ck.ok(cert.span.len() + 1 == 1usize << doc.r, || "span certificate count differs from 2^r - 1".into())?;
    for (m, sc) in (1u32..).zip(&cert.span) {
        ck.index_certificate(sc, &combine(&classes, m), &image, &doc.constants)?;
    }
    for a in &cert.audit {
        let class = classes.get(a.class_index).ok_or_else(|| VerifyError::Rejected("audit index out of range".into()))?;
        ck.ok(
            !cert.classes[a.class_index].bad_places.contains(&a.evidence.place),
            || format!("audit place {} is a bad place", a.evidence.place),
        )?;
        ck.evidence(class, &a.evidence, None, true)?;
    }
    Ok(())
}

/// Re-checks a serialized document against the fixture it names.
pub fn verify_document(text: &str, fixture: &Fixture) -> Result<VerifyReport, VerifyError> {
    let header: Header = serde_json::from_str(text).map_err(|e| VerifyError::Malformed(e.to_string()))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(VerifyError::Schema(header.schema_version));
    }
    #[derive(Deserialize)]
    struct Named {
        curve: CurveRecord,
    }
    let named: Named = parse_body(text)?;
    let fc = fixture.get(&named.curve.id).map_err(|e| VerifyError::Rejected(e.to_string()))?;
    let mut ck = Checker { fc, bits: 0, checks: 1 };
    match header.kind.as_str() {
        KIND_CONSTANTS => {
            let doc: ConstantsDocument = parse_body(text)?;
            check_seal(&doc, &doc.digest)?;
            ck.bits = doc.bounds.precision_bits;
            verify_constants(&doc, &mut ck)?
        }
        KIND_FORGE => {
            let doc: ForgeDocument = parse_body(text)?;
            check_seal(&doc, &doc.digest)?;
            ck.bits = doc.bounds.precision_bits;
            verify_forge(&doc, &mut ck)?
        }
        KIND_SHA => {
            let doc: ShaDocument = parse_body(text)?;
            check_seal(&doc, &doc.digest)?;
            ck.bits = doc.bounds.precision_bits;
            verify_sha(&doc, &mut ck)?
        }
        other => return Err(VerifyError::Kind(other.to_string())),
    }
    Ok(VerifyReport { kind: header.kind, curve: fc.id.clone(), checks: ck.checks })
}

/// Recomputes the digest of a document, so that tests can probe the
/// mathematical checks behind the seal.
pub fn reseal(text: &str) -> Result<String, VerifyError> {
    fn go<T: Document>(text: &str) -> Result<String, VerifyError> {
        let mut doc: T = parse_body(text)?;
        seal(&mut doc);
        Ok(to_json(&doc))
    }
    let header: Header = serde_json::from_str(text).map_err(|e| VerifyError::Malformed(e.to_string()))?;
    match header.kind.as_str() {
        KIND_CONSTANTS => go::<ConstantsDocument>(text),
        KIND_FORGE => go::<ForgeDocument>(text),
        KIND_SHA => go::<ShaDocument>(text),
        other => Err(VerifyError::Kind(other.to_string())),
    }
}
