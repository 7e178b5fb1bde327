//! Forwarding tables for the random walks and their spectral diagnostics.
//!
//! Three constructions are provided:
//!
//! * [`build_ddslt`]: `TP[u][v] = min(mu_v, mu_u * d_v / d_u)` with
//!   `mu_u = d_u / sum of neighbour code degrees`. Only one-hop information is
//!   needed and the walk is reversible with stationary weights `d_u`.
//! * [`build_metropolis`]: `min(1, d_v / d_u) / D_max`, where `D_max` is the
//!   largest node degree of the graph. Same stationary weights, but `D_max` is
//!   global knowledge.
//! * [`build_uniform`]: every neighbour with probability `1 / |N(u)|`. The
//!   stationary weights are node degrees, not code degrees.
//!
//! In all three the diagonal completes the row to one.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    Ddslt,
    Metropolis,
    Uniform,
    Dense,
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
    construction: Construction,
    /// Unnormalised weights the chain is reversible with respect to, when known.
    reversible_weights: Option<Vec<f64>>,
    /// Code degrees the matrix was built from (DDSLT matrices only).
    code_degrees: Option<Vec<usize>>,
}

impl TransitionMatrix {
    /// Wraps an arbitrary dense row-major matrix after checking it is stochastic.
    pub fn from_dense(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::invalid(format!("expected {} entries, got {}", n * n, entries.len())));
        }
        let tp = TransitionMatrix {
            n,
            entries,
            construction: Construction::Dense,
            reversible_weights: None,
            code_degrees: None,
        };
        tp.check_stochastic(STOCHASTIC_TOL)?;
        Ok(tp)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        TransitionMatrix::from_dense(n, entries).expect("identity is stochastic")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.entries[u * self.n..(u + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn reversible_weights(&self) -> Option<&[f64]> {
        self.reversible_weights.as_deref()
    }

    pub fn code_degrees(&self) -> Option<&[usize]> {
        self.code_degrees.as_deref()
    }

    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        for u in 0..self.n {
            let row = self.row(u);
            if let Some(v) = row.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::NotStochastic(format!("entry ({u}, {v}) = {}", row[v])));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::NotStochastic(format!("row {u} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Picks the next hop from row `u` given a uniform draw `r` in `[0, 1)`.
    /// Only neighbours and `u` itself are candidates.
    pub fn sample_next(&self, g: &Graph, u: usize, r: f64) -> usize {
        let row = self.row(u);
        let mut acc = 0.0;
        let mut last = u;
        for &v in g.neighbors(u) {
            let p = row[v];
            if p > 0.0 {
                acc += p;
                last = v;
                if r < acc {
                    return v;
                }
            }
        }
        if row[u] > 0.0 {
            return u;
        }
        last
    }

    /// `p * TP` for a row vector `p`.
    pub fn step_distribution(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (u, &pu) in p.iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.row(u)) {
                *o += pu * t;
            }
        }
        out
    }

    /// Distribution of a walk started at `start` after `steps` steps.
    pub fn distribution_after(&self, start: usize, steps: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.n];
        p[start] = 1.0;
        for _ in 0..steps {
            p = self.step_distribution(&p);
        }
        p
    }
}

fn require_no_isolated(g: &Graph) -> Result<()> {
    if g.n() > 1 {
        if let Some(u) = (0..g.n()).find(|&u| g.degree(u) == 0) {
            return Err(Error::IsolatedNode(u));
        }
    }
    Ok(())
}

fn check_degrees(g: &Graph, d: &[usize]) -> Result<()> {
    if d.len() != g.n() {
        return Err(Error::invalid(format!("{} code degrees for {} nodes", d.len(), g.n())));
    }
    if let Some(u) = d.iter().position(|&x| x == 0) {
        return Err(Error::invalid(format!("code degree of node {u} is zero")));
    }
    Ok(())
}

fn neighbour_sums(g: &Graph, d: &[usize]) -> Vec<f64> {
    (0..g.n()).map(|u| g.neighbors(u).iter().map(|&l| d[l] as f64).sum()).collect()
}

fn ddslt_entry(d: &[usize], sums: &[f64], u: usize, v: usize) -> f64 {
    let mu_u = d[u] as f64 / sums[u];
    let mu_v = d[v] as f64 / sums[v];
    mu_v.min(mu_u * d[v] as f64 / d[u] as f64)
}

// Diagonal completes the row; summed in adjacency order so that partial
// rebuilds reproduce full rebuilds bit for bit.
fn complete_row(entries: &mut [f64], n: usize, g: &Graph, u: usize) {
    let off: f64 = g.neighbors(u).iter().map(|&v| entries[u * n + v]).sum();
    entries[u * n + u] = (1.0 - off).max(0.0);
}

pub fn build_ddslt(g: &Graph, d: &[usize]) -> Result<TransitionMatrix> {
    check_degrees(g, d)?;
    require_no_isolated(g)?;
    let n = g.n();
    let sums = neighbour_sums(g, d);
    let mut entries = vec![0.0; n * n];
    for u in 0..n {
        for &v in g.neighbors(u) {
            entries[u * n + v] = ddslt_entry(d, &sums, u, v);
        }
        complete_row(&mut entries, n, g, u);
    }
    Ok(TransitionMatrix {
        n,
        entries,
        construction: Construction::Ddslt,
        reversible_weights: Some(d.iter().map(|&x| x as f64).collect()),
        code_degrees: Some(d.to_vec()),
    })
}

pub fn build_metropolis(g: &Graph, d: &[usize]) -> Result<TransitionMatrix> {
    check_degrees(g, d)?;
    require_no_isolated(g)?;
    let n = g.n();
    let d_max = g.max_degree().max(1) as f64;
    let mut entries = vec![0.0; n * n];
    for u in 0..n {
        for &v in g.neighbors(u) {
            entries[u * n + v] = (d[v] as f64 / d[u] as f64).min(1.0) / d_max;
        }
        complete_row(&mut entries, n, g, u);
    }
    Ok(TransitionMatrix {
        n,
        entries,
        construction: Construction::Metropolis,
        reversible_weights: Some(d.iter().map(|&x| x as f64).collect()),
        code_degrees: None,
    })
}

pub fn build_uniform(g: &Graph) -> Result<TransitionMatrix> {
    require_no_isolated(g)?;
    let n = g.n();
    let mut entries = vec![0.0; n * n];
    for u in 0..n {
        let deg = g.degree(u);
        if deg == 0 {
            entries[u * n + u] = 1.0;
            continue;
        }
        for &v in g.neighbors(u) {
            entries[u * n + v] = 1.0 / deg as f64;
        }
    }
    Ok(TransitionMatrix {
        n,
        entries,
        construction: Construction::Uniform,
        reversible_weights: Some((0..n).map(|u| g.degree(u).max(1) as f64).collect()),
        code_degrees: None,
    })
}

/// Rebuilds a DDSLT matrix after the code degree of `changed` moved.
///
/// Only `mu_changed` and `mu_w` for neighbours `w` of `changed` depend on
/// `d_changed`, so only entries touching those nodes are recomputed, plus the
/// diagonals of the rows that hold them (the two-hop ball around `changed`).
pub fn local_update(tp: &TransitionMatrix, g: &Graph, d: &[usize], changed: usize) -> Result<TransitionMatrix> {
    let mut out = tp.clone();
    out.apply_local_update(g, d, changed)?;
    Ok(out)
}

impl TransitionMatrix {
    /// In-place form of [`local_update`].
    pub fn apply_local_update(&mut self, g: &Graph, d: &[usize], changed: usize) -> Result<()> {
        check_degrees(g, d)?;
        let old = self
            .code_degrees
            .as_ref()
            .ok_or_else(|| Error::invalid("local update needs a matrix built by build_ddslt"))?;
        if old.len() != d.len() || changed >= d.len() {
            return Err(Error::invalid("code-degree vector does not match the matrix"));
        }
        if let Some(u) = (0..d.len()).find(|&u| u != changed && old[u] != d[u]) {
            return Err(Error::invalid(format!(
                "code degrees differ at node {u} as well as {changed}; local update handles one node"
            )));
        }
        if old[changed] == d[changed] {
            return Ok(());
        }
        let n = self.n;
        let mut touched = vec![false; n];
        touched[changed] = true;
        for &w in g.neighbors(changed) {
            touched[w] = true;
        }
        // Only the sums of changed's neighbours include d_changed.
        let sums = neighbour_sums(g, d);
        for u in g.ball(changed, 2) {
            let mut dirty = false;
            for &v in g.neighbors(u) {
                if touched[u] || touched[v] {
                    self.entries[u * n + v] = ddslt_entry(d, &sums, u, v);
                    dirty = true;
                }
            }
            if dirty {
                complete_row(&mut self.entries, n, g, u);
            }
        }
        if let Some(w) = self.reversible_weights.as_mut() {
            w[changed] = d[changed] as f64;
        }
        self.code_degrees.as_mut().expect("checked above")[changed] = d[changed];
        Ok(())
    }
}

/// Largest deviation from detailed balance `w_u TP[u][v] = w_v TP[v][u]`,
/// relative to the weight scale.
pub fn detailed_balance_error(tp: &TransitionMatrix, weights: &[f64]) -> f64 {
    let n = tp.n;
    let scale = weights.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for u in 0..n {
        for v in (u + 1)..n {
            let e = (weights[u] * tp.get(u, v) - weights[v] * tp.get(v, u)).abs() / scale;
            worst = worst.max(e);
        }
    }
    worst
}

/// Default iteration cap for [`stationary_distribution`].
pub const POWER_ITERATION_CAP: usize = 100_000;

/// Stationary distribution by power iteration from the uniform vector.
pub fn stationary_distribution(tp: &TransitionMatrix) -> Result<Vec<f64>> {
    stationary_distribution_with_cap(tp, POWER_ITERATION_CAP)
}

pub fn stationary_distribution_with_cap(tp: &TransitionMatrix, cap: usize) -> Result<Vec<f64>> {
    tp.check_stochastic(1e-9)?;
    let n = tp.n;
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..cap {
        let mut next = tp.step_distribution(&pi);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual < 1e-12 {
            return Ok(pi);
        }
    }
    Err(Error::NotConverged(cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Symmetrized,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues in non-increasing order.
    pub eigenvalues: Vec<f64>,
    pub method: SpectrumMethod,
}

impl Spectrum {
    pub fn slem(&self) -> f64 {
        match self.eigenvalues.len() {
            0 | 1 => 0.0,
            len => self.eigenvalues[1].max(-self.eigenvalues[len - 1]),
        }
    }

    /// The chain has a second unit-modulus eigenvalue (reducible or periodic).
    pub fn is_degenerate(&self) -> bool {
        self.slem() >= 1.0 - 1e-9
    }
}

/// Real spectrum of a transition matrix.
///
/// Reversible chains are similar to the symmetric matrix
/// `D^{1/2} TP D^{-1/2}` with `D = diag(pi)`, which has a guaranteed real
/// spectrum. Other matrices go through a general eigensolver and must turn
/// out to have a real spectrum.
pub fn spectrum(tp: &TransitionMatrix) -> Result<Spectrum> {
    tp.check_stochastic(1e-9)?;
    let n = tp.n;
    let weights = match tp.reversible_weights() {
        Some(w) if detailed_balance_error(tp, w) < 1e-10 => Some(w.to_vec()),
        _ => stationary_distribution(tp)
            .ok()
            .filter(|pi| pi.iter().all(|&p| p > 0.0) && detailed_balance_error(tp, pi) < 1e-10),
    };
    if let Some(w) = weights {
        let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |u, v| {
            let a = sqrt_w[u] * tp.get(u, v) / sqrt_w[v];
            let b = sqrt_w[v] * tp.get(v, u) / sqrt_w[u];
            0.5 * (a + b)
        });
        let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        return Ok(Spectrum { eigenvalues, method: SpectrumMethod::Symmetrized });
    }
    let m = DMatrix::from_row_slice(n, n, tp.entries());
    let complex = m.complex_eigenvalues();
    if let Some(z) = complex.iter().find(|z| z.im.abs() > 1e-9) {
        return Err(Error::invalid(format!("spectrum is not real (eigenvalue {} + {}i)", z.re, z.im)));
    }
    let mut eigenvalues: Vec<f64> = complex.iter().map(|z| z.re).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(Spectrum { eigenvalues, method: SpectrumMethod::General })
}

/// Second largest eigenvalue modulus, `max(lambda_2, -lambda_n)`.
pub fn slem(tp: &TransitionMatrix) -> Result<f64> {
    spectrum(tp).map(|s| s.slem())
}
