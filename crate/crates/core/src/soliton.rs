//! Ideal and Robust Soliton degree distributions.
//!
//! Degrees are 1-based: `pmf()[i - 1]` is `Pr(d = i)`. Nodes pick their code
//! degree by locating a fixed uniform draw `alpha` in the CDF, which is what
//! keeps a node's degree stable as its estimate of `K` grows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SolitonKind {
    Ideal,
    Robust { c: f64, delta: f64 },
}

impl SolitonKind {
    pub const DEFAULT_C: f64 = 0.1;
    pub const DEFAULT_DELTA: f64 = 0.5;

    pub fn robust_default() -> Self {
        SolitonKind::Robust { c: Self::DEFAULT_C, delta: Self::DEFAULT_DELTA }
    }

    pub fn distribution(&self, k: usize) -> Result<DegreeDistribution> {
        match *self {
            SolitonKind::Ideal => ideal_soliton(k),
            SolitonKind::Robust { c, delta } => robust_soliton(k, c, delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    kind: SolitonKind,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DegreeDistribution {
    fn from_pmf(kind: SolitonKind, pmf: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Absorb rounding so the last interval always closes at exactly 1.
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        DegreeDistribution { kind, pmf, cdf }
    }

    pub fn kind(&self) -> SolitonKind {
        self.kind
    }

    /// Support size `K`.
    pub fn k(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// `Pr(d = degree)`, zero outside `1..=K`.
    pub fn prob(&self, degree: usize) -> f64 {
        if degree == 0 {
            0.0
        } else {
            self.pmf.get(degree - 1).copied().unwrap_or(0.0)
        }
    }

    /// The pmf indexed by degree with an explicit empty degree-0 bin.
    pub fn pmf_with_zero(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.pmf.iter().copied()).collect()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }
}

pub fn ideal_soliton(k: usize) -> Result<DegreeDistribution> {
    if k == 0 {
        return Err(Error::invalid("soliton support K must be at least 1"));
    }
    let pmf = (1..=k).map(|i| ideal_rho(i, k)).collect();
    Ok(DegreeDistribution::from_pmf(SolitonKind::Ideal, pmf))
}

fn ideal_rho(i: usize, k: usize) -> f64 {
    if i == 1 {
        1.0 / k as f64
    } else {
        1.0 / (i as f64 * (i - 1) as f64)
    }
}

/// Spike position `ceil(K / R)` and `R = c ln(K/delta) sqrt(K)`.
pub fn robust_pivot(k: usize, c: f64, delta: f64) -> (f64, usize) {
    let r = c * (k as f64 / delta).ln() * (k as f64).sqrt();
    (r, (k as f64 / r).ceil() as usize)
}

/// Robust Soliton: ideal mass plus `tau(i) = R/(iK)` below the pivot and a
/// spike `R ln(R/delta)/K` at the pivot, normalised by `beta`.
pub fn robust_soliton(k: usize, c: f64, delta: f64) -> Result<DegreeDistribution> {
    if k == 0 {
        return Err(Error::invalid("soliton support K must be at least 1"));
    }
    if !(c > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("robust soliton needs c > 0 and delta in (0,1), got c={c}, delta={delta}")));
    }
    let (r, pivot) = robust_pivot(k, c, delta);
    if !r.is_finite() || r <= delta || pivot < 1 || pivot > k {
        return Err(Error::DegenerateRobustParameters { k, c, delta });
    }
    let kf = k as f64;
    let tau = |i: usize| -> f64 {
        if i < pivot {
            r / (i as f64 * kf)
        } else if i == pivot {
            r * (r / delta).ln() / kf
        } else {
            0.0
        }
    };
    let raw: Vec<f64> = (1..=k).map(|i| ideal_rho(i, k) + tau(i)).collect();
    let beta: f64 = raw.iter().sum();
    let pmf = raw.into_iter().map(|p| p / beta).collect();
    Ok(DegreeDistribution::from_pmf(SolitonKind::Robust { c, delta }, pmf))
}

/// Smallest degree `d` with `alpha <= cdf[d-1]`.
pub fn degree_from_alpha(dist: &DegreeDistribution, alpha: f64) -> usize {
    let idx = dist.cdf.partition_point(|&c| c < alpha);
    (idx + 1).min(dist.k())
}

/// Total-variation distance between two pmfs over degrees `0..`. The shorter
/// input is padded with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q)] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 || v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid(format!("{name} is not a probability vector (sum {s})")));
        }
    }
    let len = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    Ok(0.5 * (0..len).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>())
}

/// Distribution source for nodes whose `K` estimate changes over time.
///
/// Robust parameters are only valid once `K` is large enough for the spike to
/// fall inside the support; below that the ideal distribution is used.
#[derive(Debug, Clone)]
pub struct DegreeRule {
    kind: SolitonKind,
    cache: Vec<Option<DegreeDistribution>>,
}

impl DegreeRule {
    pub fn new(kind: SolitonKind) -> Self {
        DegreeRule { kind, cache: Vec::new() }
    }

    pub fn kind(&self) -> SolitonKind {
        self.kind
    }

    pub fn distribution(&mut self, k: usize) -> &DegreeDistribution {
        assert!(k >= 1, "degree rule needs K >= 1");
        if self.cache.len() <= k {
            self.cache.resize(k + 1, None);
        }
        let kind = self.kind;
        self.cache[k].get_or_insert_with(|| {
            kind.distribution(k)
                .or_else(|_| ideal_soliton(k))
                .expect("ideal soliton is defined for every K >= 1")
        })
    }

    pub fn degree(&mut self, k: usize, alpha: f64) -> usize {
        degree_from_alpha(self.distribution(k), alpha)
    }
}
