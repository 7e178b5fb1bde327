use crate::error::{Error, Result};
use crate::soliton::DegreeDistribution;

/// Inputs of the code-degree fulfilment bound.
#[derive(Debug, Clone)]
pub struct BoundInputs<'a> {
    pub d_u: usize,
    pub k: usize,
    /// Walk length.
    pub l: u64,
    /// Sum of all code degrees in the network.
    pub sigma_d: u64,
    pub omega: &'a DegreeDistribution,
}

/// Binomial coefficient as a float, exact for the small `k` used here.
pub fn binomial(k: usize, d: usize) -> f64 {
    if d > k {
        return 0.0;
    }
    let d = d.min(k - d);
    (0..d).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// Lower bound on the probability that a node with code degree `d_u`
/// fulfils it:
///
/// `min(1, Omega(d_u) C(k, d_u) (1 - (1 - d_u/k)^(L d_u / sigma_d))^d_u)`
///
/// where the exponent is the expected number of visits a packet pays to the
/// node over a walk of length `L`.
pub fn acceptance_bound(b: &BoundInputs<'_>) -> Result<f64> {
    if b.d_u == 0 || b.k == 0 || b.l == 0 || b.sigma_d == 0 {
        return Err(Error::invalid("bound inputs must be positive"));
    }
    if b.d_u > b.k {
        return Err(Error::invalid(format!("code degree {} exceeds k={}", b.d_u, b.k)));
    }
    if b.omega.k() != b.k {
        return Err(Error::invalid(format!("distribution has support {} but k={}", b.omega.k(), b.k)));
    }
    let d = b.d_u as f64;
    let visits = b.l as f64 * d / b.sigma_d as f64;
    let miss = (1.0 - d / b.k as f64).powf(visits);
    let raw = b.omega.prob(b.d_u) * binomial(b.k, b.d_u) * (1.0 - miss).powf(d);
    Ok(raw.min(1.0))
}
