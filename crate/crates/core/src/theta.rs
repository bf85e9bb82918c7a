//! Finite Heisenberg groups, their character twists, and an exhaustive check
//! that the coboundary of the identity-section lift factors as a linear term
//! times the quadratic cocycle.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThetaError {
    #[error("invalid group spec `{0}` (expected cyclic orders like `2x2`)")]
    BadGammaSpec(String),
    #[error("n must be at least 2")]
    BadModulus,
}

/// `(zeta^scalar, (P1, P2))` in the level-`n` Heisenberg group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeisenbergElement {
    pub n: u32,
    pub scalar: u32,
    pub point: [u32; 2],
}

impl HeisenbergElement {
    pub fn new(n: u32, scalar: u32, point: [u32; 2]) -> Self {
        HeisenbergElement { n, scalar: scalar % n, point: [point[0] % n, point[1] % n] }
    }

    pub fn identity(n: u32) -> Self {
        Self::new(n, 0, [0, 0])
    }

    pub fn is_central(&self) -> bool {
        self.point == [0, 0]
    }
}

/// Exponent of `f(P,Q) = e_n(P1, Q2)`.
fn f_exp(n: u32, p: [u32; 2], q: [u32; 2]) -> u32 {
    p[0] * q[1] % n
}

pub fn h_mul(x: &HeisenbergElement, y: &HeisenbergElement) -> HeisenbergElement {
    assert_eq!(x.n, y.n, "mixed levels");
    let n = x.n;
    HeisenbergElement::new(
        n,
        x.scalar + y.scalar + f_exp(n, x.point, y.point),
        [x.point[0] + y.point[0], x.point[1] + y.point[1]],
    )
}

pub fn h_inv(x: &HeisenbergElement) -> HeisenbergElement {
    let n = x.n;
    let neg = [(n - x.point[0]) % n, (n - x.point[1]) % n];
    let s = (2 * n - x.scalar - f_exp(n, x.point, neg)) % n;
    HeisenbergElement::new(n, s, neg)
}

/// Finite Galois data with trivial action on `E[n]` and `mu_n`: a product of
/// cyclic groups, a cocycle `eta` (a homomorphism) and a twist `chi` into
/// characters `P -> c1*P1 + c2*P2`, both given on generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiniteGaloisData {
    pub n: u32,
    pub gamma: Vec<u32>,
    pub eta: Vec<[u32; 2]>,
    pub chi: Vec<[u32; 2]>,
}

/// `(sigma, tau) -> exponent`, indexed by positions in `FiniteGaloisData::elements`.
pub type CocycleTable = Vec<Vec<u32>>;

impl FiniteGaloisData {
    pub fn elements(&self) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        for &m in &self.gamma {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..m).map(move |k| {
                        let mut v = prefix.clone();
                        v.push(k);
                        v
                    })
                })
                .collect();
        }
        out
    }

    fn index_of(&self, g: &[u32]) -> usize {
        g.iter().zip(&self.gamma).fold(0, |acc, (k, m)| acc * *m as usize + *k as usize)
    }

    fn op(&self, s: &[u32], t: &[u32]) -> Vec<u32> {
        s.iter().zip(t).zip(&self.gamma).map(|((a, b), m)| (a + b) % m).collect()
    }

    fn eval(&self, gens: &[[u32; 2]], g: &[u32]) -> [u32; 2] {
        let n = self.n;
        let mut acc = [0u32, 0u32];
        for (k, img) in g.iter().zip(gens) {
            acc[0] = (acc[0] + k * img[0]) % n;
            acc[1] = (acc[1] + k * img[1]) % n;
        }
        acc
    }

    pub fn eta_at(&self, g: &[u32]) -> [u32; 2] {
        self.eval(&self.eta, g)
    }

    pub fn chi_at(&self, g: &[u32], p: [u32; 2]) -> u32 {
        let c = self.eval(&self.chi, g);
        (c[0] * p[0] + c[1] * p[1]) % self.n
    }

    /// `eta` and `chi` respect the relations `m_k * g_k = 0`.
    pub fn is_valid(&self) -> bool {
        let n = self.n;
        self.eta.len() == self.gamma.len()
            && self.chi.len() == self.gamma.len()
            && self
                .gamma
                .iter()
                .enumerate()
                .all(|(k, m)| (0..2).all(|i| m * self.eta[k][i] % n == 0 && m * self.chi[k][i] % n == 0))
    }

    fn act(&self, sigma: &[u32], x: &HeisenbergElement) -> HeisenbergElement {
        HeisenbergElement::new(self.n, x.scalar + self.chi_at(sigma, x.point), x.point)
    }
}

/// `N_sigma * sigma(N_tau) * N_{sigma tau}^{-1}` by direct multiplication in the twisted group.
pub fn coboundary(data: &FiniteGaloisData) -> CocycleTable {
    let els = data.elements();
    let lift = |g: &[u32]| HeisenbergElement::new(data.n, 0, data.eta_at(g));
    els.iter()
        .map(|s| {
            els.iter()
                .map(|t| {
                    let st = data.op(s, t);
                    let prod = h_mul(&h_mul(&lift(s), &data.act(s, &lift(t))), &h_inv(&lift(&st)));
                    assert!(prod.is_central(), "coboundary left the center");
                    prod.scalar
                })
                .collect()
        })
        .collect()
}

/// `chi(sigma)(eta(tau)) + f(eta(sigma), eta(tau))`.
pub fn formula_rhs(data: &FiniteGaloisData) -> CocycleTable {
    let els = data.elements();
    els.iter()
        .map(|s| {
            els.iter()
                .map(|t| (data.chi_at(s, data.eta_at(t)) + f_exp(data.n, data.eta_at(s), data.eta_at(t))) % data.n)
                .collect()
        })
        .collect()
}

/// 2-cocycle identity for trivial action.
pub fn is_cocycle(data: &FiniteGaloisData, c: &CocycleTable) -> bool {
    let els = data.elements();
    let n = data.n;
    for s in &els {
        for t in &els {
            for r in &els {
                let (i, j, k) = (data.index_of(s), data.index_of(t), data.index_of(r));
                let st = data.index_of(&data.op(s, t));
                let tr = data.index_of(&data.op(t, r));
                let lhs = (c[j][k] + c[i][tr]) % n;
                let rhs = (c[st][k] + c[i][j]) % n;
                if lhs != rhs {
                    return false;
                }
            }
        }
    }
    true
}

pub fn verify_decomposition(data: &FiniteGaloisData) -> bool {
    let cb = coboundary(data);
    let rhs = formula_rhs(data);
    cb == rhs && is_cocycle(data, &cb) && is_cocycle(data, &rhs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThetaReport {
    pub n: u32,
    pub gamma: Vec<u32>,
    pub cases: u64,
    pub mismatches: u64,
}

fn homs(n: u32, gamma: &[u32]) -> Vec<Vec<[u32; 2]>> {
    let mut out: Vec<Vec<[u32; 2]>> = vec![vec![]];
    for &m in gamma {
        let imgs: Vec<[u32; 2]> = (0..n)
            .flat_map(|a| (0..n).map(move |b| [a, b]))
            .filter(|img| m * img[0] % n == 0 && m * img[1] % n == 0)
            .collect();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                imgs.iter().map(move |img| {
                    let mut v = prefix.clone();
                    v.push(*img);
                    v
                })
            })
            .collect();
    }
    out
}

/// Every `(eta, chi)` pair for the given level and group.
pub fn enumerate_data(n: u32, gamma: &[u32]) -> Vec<FiniteGaloisData> {
    let hs = homs(n, gamma);
    let mut out = Vec::with_capacity(hs.len() * hs.len());
    for eta in &hs {
        for chi in &hs {
            out.push(FiniteGaloisData { n, gamma: gamma.to_vec(), eta: eta.clone(), chi: chi.clone() });
        }
    }
    out
}

pub fn verify_all(n: u32, gamma: &[u32]) -> Result<ThetaReport, ThetaError> {
    if n < 2 {
        return Err(ThetaError::BadModulus);
    }
    let mut report = ThetaReport { n, gamma: gamma.to_vec(), cases: 0, mismatches: 0 };
    for data in enumerate_data(n, gamma) {
        report.cases += 1;
        if !verify_decomposition(&data) {
            report.mismatches += 1;
        }
    }
    Ok(report)
}

/// Parses `3`, `2x2` or `2,2` into cyclic orders.
pub fn parse_gamma(spec: &str) -> Result<Vec<u32>, ThetaError> {
    let bad = || ThetaError::BadGammaSpec(spec.to_string());
    let parts: Vec<&str> = spec.split(['x', ',', '*']).map(str::trim).collect();
    if parts.is_empty() {
        return Err(bad());
    }
    parts
        .iter()
        .map(|s| s.parse::<u32>().ok().filter(|m| *m >= 1).ok_or_else(bad))
        .collect()
}
