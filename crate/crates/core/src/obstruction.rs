//! The period-index obstruction `Delta(a,b) = (C1 a, C2 b) + (C1, C2)` over `Q`,
//! fitting of the constants, lift enumeration and index certificates.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{span, KummerPair, SquareClass};
use crate::brauer::{br_add, quaternion, BrauerClass2, BrauerError};
use crate::curve::{global_image, local_image, CurveError, DescentImage, FullTwoTorsionCurve, LocalImage, MWBasis};
use crate::localfield::{hilbert_symbol, local_class, Place, SamplerConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObstructionError {
    #[error("no constant pair survives the vanishing constraints")]
    NoSolution,
    #[error("surviving constants {0:?} are not image shifts of the primary choice")]
    AmbiguousBeyondShift(Vec<KummerPair>),
    #[error("surviving constants disagree on the verdict for {0}")]
    InconsistentCandidates(KummerPair),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Brauer(#[from] BrauerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstructionConstants {
    pub c1: SquareClass,
    pub c2: SquareClass,
    pub fitted_support: Vec<Place>,
    pub surviving_candidates: Vec<KummerPair>,
    /// Survivors whose quotient by the primary pair is not in the global image.
    pub beyond_shift: Vec<KummerPair>,
}

impl ObstructionConstants {
    /// Constants given directly, with no fitting record.
    pub fn fixed(c1: SquareClass, c2: SquareClass) -> Self {
        let pair = KummerPair::new(c1.clone(), c2.clone());
        ObstructionConstants {
            c1,
            c2,
            fitted_support: vec![],
            surviving_candidates: vec![pair],
            beyond_shift: vec![],
        }
    }

    pub fn primary(&self) -> KummerPair {
        KummerPair::new(self.c1.clone(), self.c2.clone())
    }
}

/// `Delta` for an explicit constant pair.
pub fn delta_with(pair: &KummerPair, c: &KummerPair) -> Result<BrauerClass2, BrauerError> {
    Ok(br_add(
        &quaternion(&c.first.mul(&pair.first), &c.second.mul(&pair.second))?,
        &quaternion(&c.first, &c.second)?,
    ))
}

pub fn delta(pair: &KummerPair, constants: &ObstructionConstants) -> Result<BrauerClass2, BrauerError> {
    delta_with(pair, &constants.primary())
}

/// `(a,b) + (a,C2) + (C1,b)`.
pub fn delta_expanded(pair: &KummerPair, c: &KummerPair) -> Result<BrauerClass2, BrauerError> {
    let (a, b) = (&pair.first, &pair.second);
    Ok(br_add(&br_add(&quaternion(a, b)?, &quaternion(a, &c.second)?), &quaternion(&c.first, b)?))
}

/// Local invariant of `Delta` at `v` for a pair of local classes.
pub fn local_delta(pair: &(SquareClass, SquareClass), c: &KummerPair, v: Place) -> u8 {
    (hilbert_symbol(&c.first.mul(&pair.0), &c.second.mul(&pair.1), v) + hilbert_symbol(&c.first, &c.second, v)) % 2
}

fn survives(c: &KummerPair, image: &DescentImage, locals: &[LocalImage]) -> Result<bool, BrauerError> {
    for x in &image.elements {
        if !delta_with(x, c)?.is_zero() {
            return Ok(false);
        }
    }
    for w in locals {
        if w.elements.iter().any(|pair| local_delta(pair, c, w.place) != 0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exhaustive search over pairs drawn from the group generated by -1 and the
/// primes of the discriminant support.
pub fn fit_constants(
    curve: &FullTwoTorsionCurve,
    basis: &MWBasis,
    places_to_probe: &[Place],
    cfg: &SamplerConfig,
) -> Result<ObstructionConstants, ObstructionError> {
    let image = global_image(curve, basis)?;
    let mut probes: Vec<Place> = places_to_probe.to_vec();
    probes.sort();
    probes.dedup();
    let locals = probes.iter().map(|v| local_image(curve, *v, cfg)).collect::<Result<Vec<_>, _>>()?;
    let mut gens = vec![SquareClass::minus_one()];
    gens.extend(curve.disc_primes().into_iter().map(SquareClass::prime));
    let classes: Vec<SquareClass> = span(&gens.iter().map(|g| KummerPair::new(g.clone(), SquareClass::one())).collect::<Vec<_>>())
        .into_iter()
        .map(|p| p.first)
        .collect();
    let mut survivors = Vec::new();
    for c1 in &classes {
        for c2 in &classes {
            let c = KummerPair::new(c1.clone(), c2.clone());
            if survives(&c, &image, &locals)? {
                survivors.push(c);
            }
        }
    }
    survivors.sort();
    let primary = survivors.first().cloned().ok_or(ObstructionError::NoSolution)?;
    let beyond_shift: Vec<KummerPair> =
        survivors.iter().filter(|s| !image.contains(&s.mul(&primary))).cloned().collect();
    let full = curve.disc_support().iter().all(|v| probes.contains(v));
    if full && !beyond_shift.is_empty() {
        return Err(ObstructionError::AmbiguousBeyondShift(beyond_shift));
    }
    Ok(ObstructionConstants {
        c1: primary.first,
        c2: primary.second,
        fitted_support: probes,
        surviving_candidates: survivors,
        beyond_shift,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftCoset {
    pub representative: KummerPair,
    pub image: DescentImage,
}

pub fn enumerate_lifts(coset: &LiftCoset) -> Vec<KummerPair> {
    coset.image.elements.iter().map(|h| coset.representative.mul(h)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    TrivialClass,
    Index2,
    Index4,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::TrivialClass => "trivial-class",
            Verdict::Index2 => "index-2",
            Verdict::Index4 => "index-4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftEntry {
    pub lift: KummerPair,
    pub delta: BrauerClass2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexCertificate {
    pub representative: KummerPair,
    pub constants: KummerPair,
    pub lifts: Vec<LiftEntry>,
    pub verdict: Verdict,
    /// Number of surviving constant pairs that reproduced the verdict.
    pub candidates_agreeing: usize,
    pub consistent: bool,
}

fn verdict_under(coset: &LiftCoset, c: &KummerPair) -> Result<(Verdict, Vec<LiftEntry>), BrauerError> {
    let mut lifts = Vec::new();
    for lift in enumerate_lifts(coset) {
        let d = delta_with(&lift, c)?;
        lifts.push(LiftEntry { lift, delta: d });
    }
    let verdict = if coset.image.contains(&coset.representative) {
        Verdict::TrivialClass
    } else if lifts.iter().any(|l| l.delta.is_zero()) {
        Verdict::Index2
    } else {
        Verdict::Index4
    };
    Ok((verdict, lifts))
}

pub fn certify_index(coset: &LiftCoset, constants: &ObstructionConstants) -> Result<IndexCertificate, ObstructionError> {
    let primary = constants.primary();
    let (verdict, lifts) = verdict_under(coset, &primary)?;
    let mut agreeing = 0;
    for c in &constants.surviving_candidates {
        let (v, _) = verdict_under(coset, c)?;
        if v != verdict {
            return Err(ObstructionError::InconsistentCandidates(coset.representative.clone()));
        }
        agreeing += 1;
    }
    Ok(IndexCertificate {
        representative: coset.representative.clone(),
        constants: primary,
        lifts,
        verdict,
        candidates_agreeing: agreeing,
        consistent: true,
    })
}

/// Whether `Delta` with constants shifted by `h` equals `x -> Delta(x h)` on the samples.
pub fn shift_delta_check(
    constants: &ObstructionConstants,
    h: &KummerPair,
    samples: &[KummerPair],
) -> Result<bool, BrauerError> {
    let c = constants.primary();
    let shifted = c.mul(h);
    for x in samples {
        if delta_with(x, &shifted)? != delta_with(&x.mul(h), &c)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Localize a global pair to transversal representatives at `v`.
pub fn localize(pair: &KummerPair, v: Place) -> (SquareClass, SquareClass) {
    (local_class(&pair.first, v), local_class(&pair.second, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::RationalPoint;

    fn kp(a: i128, b: i128) -> KummerPair {
        KummerPair::from_ints(a, b).unwrap()
    }

    fn cn1() -> (FullTwoTorsionCurve, MWBasis) {
        let c = FullTwoTorsionCurve::new(0, 1, -1).unwrap();
        (c, MWBasis::new(c, vec![], 0).unwrap())
    }

    #[test]
    fn delta_examples() {
        let c = kp(3, -7);
        assert!(delta_with(&kp(1, 1), &c).unwrap().is_zero());
        let one = kp(1, 1);
        for (a, b) in [(-1, -1), (2, 3), (-5, 7)] {
            assert_eq!(delta_with(&kp(a, b), &one).unwrap(), quaternion(&kp(a, b).first, &kp(a, b).second).unwrap());
        }
    }

    #[test]
    fn fit_on_rank_zero_curve() {
        let (c, basis) = cn1();
        let cfg = SamplerConfig::default();
        let k = fit_constants(&c, &basis, &c.disc_support(), &cfg).unwrap();
        assert_eq!(k.surviving_candidates, vec![kp(1, -1), kp(1, -2), kp(-1, 1), kp(-1, 2)]);
        assert_eq!(k.primary(), kp(1, -1));
        assert!(k.beyond_shift.is_empty());
        for x in [kp(-1, -1), kp(1, 2), kp(-1, -2)] {
            for s in &k.surviving_candidates {
                assert!(delta_with(&x, s).unwrap().is_zero());
            }
        }
        // (e3 - e1, e3 - e2) = (-1, -2)
        assert!(delta(&kp(-1, -2), &k).unwrap().is_zero());
    }

    #[test]
    fn truncated_probes_admit_more_survivors() {
        let (c, basis) = cn1();
        let cfg = SamplerConfig::default();
        let full = fit_constants(&c, &basis, &c.disc_support(), &cfg).unwrap();
        let trunc = fit_constants(&c, &basis, &[Place::Infinity], &cfg).unwrap();
        assert!(trunc.surviving_candidates.len() > full.surviving_candidates.len());
        assert!(!trunc.beyond_shift.is_empty());
    }

    #[test]
    fn lifts_and_verdicts() {
        let (c, basis) = cn1();
        let cfg = SamplerConfig::default();
        let k = fit_constants(&c, &basis, &c.disc_support(), &cfg).unwrap();
        let image = global_image(&c, &basis).unwrap();
        let trivial = LiftCoset { representative: kp(-1, -1), image: image.clone() };
        let lifts = enumerate_lifts(&trivial);
        assert_eq!(lifts.len(), 4);
        assert!(lifts.iter().all(|l| image.contains(l)));
        assert_eq!(certify_index(&trivial, &k).unwrap().verdict, Verdict::TrivialClass);

        let coset = LiftCoset { representative: kp(3, 1), image: image.clone() };
        let lifts = enumerate_lifts(&coset);
        assert!(lifts.iter().all(|l| !image.contains(l)));
        let mut distinct = lifts.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn index_two_when_some_lift_vanishes() {
        let (c, basis) = cn1();
        let cfg = SamplerConfig::default();
        let k = fit_constants(&c, &basis, &c.disc_support(), &cfg).unwrap();
        let image = global_image(&c, &basis).unwrap();
        // search for a nontrivial coset containing a Delta = 0 pair
        let mut found = false;
        'outer: for a in [-3i128, -1, 3, 5, 6, -6, 7] {
            for b in [-3i128, 1, 3, 5, 7, 10] {
                let x = kp(a, b);
                if image.contains(&x) || !delta(&x, &k).unwrap().is_zero() {
                    continue;
                }
                let cert = certify_index(&LiftCoset { representative: x.mul(&kp(-1, -2)), image: image.clone() }, &k)
                    .unwrap();
                assert_eq!(cert.verdict, Verdict::Index2);
                found = true;
                break 'outer;
            }
        }
        assert!(found);
    }

    #[test]
    fn rank_one_has_eight_lifts() {
        let c = FullTwoTorsionCurve::new(0, 5, -5).unwrap();
        let basis = MWBasis::new(c, vec![RationalPoint::affine_int(-4, 6)], 1).unwrap();
        let image = global_image(&c, &basis).unwrap();
        assert_eq!(enumerate_lifts(&LiftCoset { representative: kp(3, 7), image }).len(), 8);
    }

    #[test]
    fn shift_checks() {
        let (c, basis) = cn1();
        let cfg = SamplerConfig::default();
        let k = fit_constants(&c, &basis, &c.disc_support(), &cfg).unwrap();
        let samples: Vec<KummerPair> = (1..=50i128)
            .map(|i| kp(if i % 2 == 0 { -i } else { i }, if i % 3 == 0 { 2 * i + 1 } else { -(i + 4) }))
            .collect();
        assert!(shift_delta_check(&k, &kp(1, 1), &samples).unwrap());
        assert!(shift_delta_check(&k, &kp(-1, -1), &samples).unwrap());
        // a shift outside the image with Delta(h) != 0 breaks the identity
        let h = kp(3, 1);
        assert!(!delta(&h, &k).unwrap().is_zero());
        assert!(!shift_delta_check(&k, &h, &samples).unwrap());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn pair() -> impl Strategy<Value = KummerPair> {
            let n = (-300i128..300).prop_filter("nonzero", |v| *v != 0);
            (n.clone(), n).prop_map(|(a, b)| KummerPair::from_ints(a, b).unwrap())
        }

        proptest! {
            #[test]
            fn two_forms_agree(x in pair(), c in pair()) {
                prop_assert_eq!(delta_with(&x, &c).unwrap(), delta_expanded(&x, &c).unwrap());
            }

            #[test]
            fn quadratic(x in pair(), y in pair(), c in pair()) {
                let lhs = br_add(&br_add(&delta_with(&x.mul(&y), &c).unwrap(), &delta_with(&x, &c).unwrap()), &delta_with(&y, &c).unwrap());
                let rhs = br_add(&quaternion(&x.first, &y.second).unwrap(), &quaternion(&y.first, &x.second).unwrap());
                prop_assert_eq!(lhs, rhs);
            }
        }
    }
}
