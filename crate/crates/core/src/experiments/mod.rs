//! Seeded experiment drivers and their result tables.
//!
//! Each driver fans out over independent seeds and aggregates with
//! order-independent reductions, so results do not depend on the number of
//! worker threads.

mod bound;
pub mod thresholds;

pub use bound::{acceptance_bound, binomial, BoundInputs};

use serde::{Deserialize, Serialize};

use crate::decoder::{decode_curve, Criterion};
use crate::error::{Error, Result};
use crate::graph::{generate_connected_rgg, radius_for};
use crate::protocol::Policy;
use crate::rng;
use crate::sim::{run_dissemination, step_for, walk_length, SimConfig};
use crate::soliton::{degree_from_alpha, ideal_soliton, tv_distance, DegreeRule};
use crate::transition::{build_ddslt, build_metropolis, build_uniform, slem};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    /// Independent dissemination runs.
    pub seeds: usize,
    /// Decoding trials per run and decoding ratio.
    pub trials: usize,
    pub radius_coeffs: Vec<f64>,
    /// Walk-length checkpoints, in units of `n ln n`.
    pub c1_checkpoints: Vec<f64>,
    pub etas: Vec<f64>,
    pub criterion: Criterion,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: SimConfig::default(),
            seeds: 20,
            trials: 200,
            radius_coeffs: vec![1.5, 2.0, 2.5],
            c1_checkpoints: parse_grid("0:5:0.25").expect("valid grid"),
            etas: parse_grid("1.0:2.5:0.25").expect("valid grid"),
            criterion: Criterion::Rank,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.seeds == 0 || self.trials == 0 {
            return Err(Error::invalid("seeds and trials must be at least 1"));
        }
        if self.radius_coeffs.is_empty() || self.c1_checkpoints.is_empty() || self.etas.is_empty() {
            return Err(Error::invalid("sweep grids must be non-empty"));
        }
        if self.c1_checkpoints.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::invalid("C1 checkpoints must be non-negative"));
        }
        Ok(())
    }

    /// Configuration of run `i`.
    pub fn run_config(&self, i: usize) -> SimConfig {
        SimConfig { seed: run_seed(self.base.seed, i), ..self.base.clone() }
    }
}

/// Seed of the `i`-th independent run derived from a base seed.
pub fn run_seed(base: u64, i: usize) -> u64 {
    rng::derive(base, i as u64)
}

/// Parses `start:end:step` into an inclusive grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad grid value {p:?} in {text:?}"))))
        .collect::<Result<_>>()?;
    match nums.as_slice() {
        [x] => Ok(vec![*x]),
        [start, end, step] => {
            if !(*step > 0.0) || end < start || !start.is_finite() || !end.is_finite() {
                return Err(Error::invalid(format!("grid {text:?} needs start <= end and a positive step")));
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(Error::invalid(format!("grid {text:?} is too large")));
            }
            Ok((0..count).map(|i| round9(start + i as f64 * step)).collect())
        }
        _ => Err(Error::invalid(format!("grid {text:?} must be start:end:step"))),
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn std_err(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub(crate) fn par_map<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub r: f64,
    pub c1: f64,
    pub fraction_k_reached: f64,
}

/// Mean fraction of nodes whose `k` estimate is exact at each checkpoint.
///
/// One run per seed and radius is enough: the state at step `t` does not
/// depend on the walk length as long as walks are still alive, so every run
/// uses the largest checkpoint as its walk length.
pub fn run_fig1(spec: &ExperimentSpec) -> Result<Vec<Fig1Row>> {
    spec.validate()?;
    let n = spec.base.n;
    let c_max = spec.c1_checkpoints.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut rows = Vec::new();
    for &r in &spec.radius_coeffs {
        let per_seed = par_map(spec.seeds, |i| {
            let cfg = SimConfig { radius_coeff: r, c1: c_max, snapshot_every: 1, ..spec.run_config(i) };
            let run = run_dissemination(&cfg)?;
            Ok(spec
                .c1_checkpoints
                .iter()
                .map(|&c| run.trace.at(step_for(n, c)).fraction_k_reached)
                .collect::<Vec<f64>>())
        })?;
        for (j, &c1) in spec.c1_checkpoints.iter().enumerate() {
            let vals: Vec<f64> = per_seed.iter().map(|v| v[j]).collect();
            rows.push(Fig1Row { r, c1, fraction_k_reached: mean(&vals) });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub eta: f64,
    pub ddslt_prob: f64,
    pub ltcds1_prob: f64,
    /// Standard error of the per-seed difference `ddslt - ltcds1`.
    pub diff_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Result {
    pub rows: Vec<Fig2Row>,
    /// Per-seed decoding probabilities, `[policy][seed][eta]`.
    pub per_seed: [Vec<Vec<f64>>; 2],
}

/// Decoding probability versus decoding ratio for both policies. The two
/// policies share graphs, sources and query orders seed by seed.
pub fn run_fig2(spec: &ExperimentSpec) -> Result<Fig2Result> {
    spec.validate()?;
    let per_seed = par_map(spec.seeds, |i| {
        let mut out = [Vec::new(), Vec::new()];
        for (slot, policy) in [Policy::Ddslt, Policy::Ltcds1].into_iter().enumerate() {
            let cfg = SimConfig { policy, snapshot_every: u64::MAX, ..spec.run_config(i) };
            let run = run_dissemination(&cfg)?;
            let decode_seed = rng::derive(cfg.seed, rng::STREAM_DECODE);
            let curve = decode_curve(&run.snapshot, &spec.etas, spec.trials, spec.criterion, decode_seed)?;
            out[slot] = curve.iter().map(|p| p.probability()).collect();
        }
        Ok(out)
    })?;
    let (ddslt, ltcds1): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_seed.into_iter().map(|[a, b]| (a, b)).unzip();
    let rows = spec
        .etas
        .iter()
        .enumerate()
        .map(|(j, &eta)| {
            let a: Vec<f64> = ddslt.iter().map(|v| v[j]).collect();
            let b: Vec<f64> = ltcds1.iter().map(|v| v[j]).collect();
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            Fig2Row { eta, ddslt_prob: mean(&a), ltcds1_prob: mean(&b), diff_se: std_err(&diff) }
        })
        .collect();
    Ok(Fig2Result { rows, per_seed: [ddslt, ltcds1] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub degree: usize,
    pub ddslt_pmf: f64,
    pub ltcds1_pmf: f64,
    pub ideal_pmf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Result {
    pub rows: Vec<Fig3Row>,
    /// Per-seed total-variation distance to the ideal pmf.
    pub tv_ddslt: Vec<f64>,
    pub tv_ltcds1: Vec<f64>,
    /// Per-seed share of baseline nodes that XORed nothing.
    pub ltcds1_zero_mass: Vec<f64>,
}

/// Final distribution of the number of XORed packets per node.
pub fn run_fig3(spec: &ExperimentSpec) -> Result<Fig3Result> {
    spec.validate()?;
    let k = spec.base.k;
    let ideal = ideal_soliton(k)?.pmf_with_zero();
    let per_seed = par_map(spec.seeds, |i| {
        let mut pmfs = [Vec::new(), Vec::new()];
        for (slot, policy) in [Policy::Ddslt, Policy::Ltcds1].into_iter().enumerate() {
            let cfg = SimConfig { policy, snapshot_every: u64::MAX, ..spec.run_config(i) };
            pmfs[slot] = run_dissemination(&cfg)?.snapshot.degree_pmf();
        }
        Ok(pmfs)
    })?;
    let mut tv_ddslt = Vec::new();
    let mut tv_ltcds1 = Vec::new();
    for [a, b] in &per_seed {
        tv_ddslt.push(tv_distance(a, &ideal)?);
        tv_ltcds1.push(tv_distance(b, &ideal)?);
    }
    let rows = (0..=k)
        .map(|d| Fig3Row {
            degree: d,
            ddslt_pmf: mean(&per_seed.iter().map(|p| p[0][d]).collect::<Vec<_>>()),
            ltcds1_pmf: mean(&per_seed.iter().map(|p| p[1][d]).collect::<Vec<_>>()),
            ideal_pmf: ideal[d],
        })
        .collect();
    let ltcds1_zero_mass = per_seed.iter().map(|p| p[1][0]).collect();
    Ok(Fig3Result { rows, tv_ddslt, tv_ltcds1, ltcds1_zero_mass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub step: u64,
    pub fraction_fulfilled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4Result {
    /// One row per round, starting after the first round.
    pub rows: Vec<Fig4Row>,
    /// Per-seed fraction at `ceil(2.5 n ln n)`.
    pub at_checkpoint: Vec<f64>,
    /// Per-seed fraction at the last round.
    pub at_end: Vec<f64>,
    pub checkpoint_step: u64,
}

impl Fig4Result {
    /// Mean fraction at `step`, holding the final value after the last round.
    pub fn at(&self, step: u64) -> f64 {
        let idx = self.rows.partition_point(|r| r.step <= step);
        self.rows[idx.saturating_sub(1)].fraction_fulfilled
    }
}

/// Share of nodes that have fulfilled their code degree, round by round.
pub fn run_fig4(spec: &ExperimentSpec) -> Result<Fig4Result> {
    spec.validate()?;
    let n = spec.base.n;
    let checkpoint_step = step_for(n, thresholds::FIG4_CHECKPOINT_C);
    let traces = par_map(spec.seeds, |i| {
        let cfg = SimConfig { policy: Policy::Ddslt, snapshot_every: 1, ..spec.run_config(i) };
        Ok(run_dissemination(&cfg)?.trace)
    })?;
    let last = traces.iter().map(|t| t.rounds).max().unwrap_or(0);
    let rows = (1..=last)
        .map(|step| {
            let vals: Vec<f64> = traces.iter().map(|t| t.at(step).fraction_degree_fulfilled).collect();
            Fig4Row { step, fraction_fulfilled: mean(&vals) }
        })
        .collect();
    Ok(Fig4Result {
        rows,
        at_checkpoint: traces.iter().map(|t| t.at(checkpoint_step).fraction_degree_fulfilled).collect(),
        at_end: traces.iter().map(|t| t.at(t.rounds).fraction_degree_fulfilled).collect(),
        checkpoint_step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub seed: u64,
    pub slem_uniform: f64,
    pub slem_eq1: f64,
    pub slem_eq2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Result {
    pub rows: Vec<Table1Row>,
    /// Medians of uniform, eq. 1 and eq. 2.
    pub medians: [f64; 3],
}

/// SLEM of the three forwarding tables on one connected RGG whose code
/// degrees are drawn per node from the ideal soliton for `k`.
pub fn table1_instance(n: usize, k: usize, radius_coeff: f64, seed: u64, retries: u32) -> Result<Table1Row> {
    let g = generate_connected_rgg(n, radius_for(n, radius_coeff), seed, retries)
        .map_err(|e| Error::GraphGeneration(Box::new(e)))?;
    let dist = ideal_soliton(k)?;
    let d: Vec<usize> = (0..n).map(|u| degree_from_alpha(&dist, rng::node_stream(seed, u).gen())).collect();
    Ok(Table1Row {
        seed,
        slem_uniform: slem(&build_uniform(&g)?)?,
        slem_eq1: slem(&build_ddslt(&g, &d)?)?,
        slem_eq2: slem(&build_metropolis(&g, &d)?)?,
    })
}

pub fn run_table1(spec: &ExperimentSpec) -> Result<Table1Result> {
    spec.validate()?;
    let b = &spec.base;
    let rows = par_map(spec.seeds, |i| {
        table1_instance(b.n, b.k, b.radius_coeff, run_seed(b.seed, i), b.max_graph_retries)
    })?;
    let col = |f: fn(&Table1Row) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    let medians = [col(|r| r.slem_uniform), col(|r| r.slem_eq1), col(|r| r.slem_eq2)];
    Ok(Table1Result { rows, medians })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub d: usize,
    pub bound: f64,
    /// Share of nodes with final code degree `d` that fulfilled it.
    pub empirical: f64,
    pub empirical_se: f64,
    /// Nodes observed in this degree class.
    pub nodes: usize,
}

/// Compares the fulfilment bound with the observed fulfilment frequency per
/// final code degree over degree-aware runs.
pub fn run_bound(spec: &ExperimentSpec) -> Result<Vec<BoundRow>> {
    spec.validate()?;
    let k = spec.base.k;
    let per_seed = par_map(spec.seeds, |i| {
        let cfg = SimConfig { policy: Policy::Ddslt, snapshot_every: u64::MAX, ..spec.run_config(i) };
        let run = run_dissemination(&cfg)?;
        let classes: Vec<(usize, bool)> =
            run.nodes.iter().map(|s| (s.code_degree, s.xored_count == s.code_degree)).collect();
        Ok(classes)
    })?;
    let sigma_sum: usize = per_seed.iter().map(|c| c.iter().map(|(d, _)| d).sum::<usize>()).sum();
    let sigma_d = ((sigma_sum as f64 / spec.seeds as f64).round() as u64).max(1);
    let l = walk_length(spec.base.n, spec.base.c1)?;
    let mut rule = DegreeRule::new(spec.base.dist);
    let omega = rule.distribution(k).clone();
    let mut rows = Vec::new();
    for d in 1..=k {
        let hits: Vec<f64> = per_seed
            .iter()
            .flatten()
            .filter(|(deg, _)| *deg == d)
            .map(|(_, ok)| if *ok { 1.0 } else { 0.0 })
            .collect();
        if hits.is_empty() {
            continue;
        }
        let p = mean(&hits);
        let bound = acceptance_bound(&BoundInputs { d_u: d, k, l, sigma_d, omega: &omega })?;
        rows.push(BoundRow {
            d,
            bound,
            empirical: p,
            empirical_se: (p * (1.0 - p) / hits.len() as f64).sqrt(),
            nodes: hits.len(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1.0:2.5:0.25").unwrap(), vec![1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5]);
        assert_eq!(parse_grid("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_grid("2").unwrap(), vec![2.0]);
        assert!(parse_grid("2:1:0.5").is_err());
        assert!(parse_grid("1:2:0").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((std_err(&[1.0, 2.0, 3.0]) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(std_err(&[5.0]), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec::default().validate().is_ok());
        assert!(ExperimentSpec { seeds: 0, ..ExperimentSpec::default() }.validate().is_err());
        assert!(ExperimentSpec { etas: vec![], ..ExperimentSpec::default() }.validate().is_err());
    }

    #[test]
    fn small_drivers_run() {
        let spec = ExperimentSpec {
            base: SimConfig { n: 30, k: 4, c1: 1.0, ..SimConfig::default() },
            seeds: 2,
            trials: 5,
            radius_coeffs: vec![2.0],
            c1_checkpoints: vec![0.0, 1.0],
            etas: vec![1.0, 2.0],
            criterion: Criterion::Rank,
        };
        let f1 = run_fig1(&spec).unwrap();
        assert_eq!(f1.len(), 2);
        assert_eq!(f1[0].fraction_k_reached, 0.0);
        let f2 = run_fig2(&spec).unwrap();
        assert_eq!(f2.rows.len(), 2);
        let f3 = run_fig3(&spec).unwrap();
        assert_eq!(f3.rows.len(), 5);
        let total: f64 = f3.rows.iter().map(|r| r.ddslt_pmf).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let f4 = run_fig4(&spec).unwrap();
        assert_eq!(f4.rows[0].step, 1);
        let t1 = run_table1(&spec).unwrap();
        assert!(t1.rows.iter().all(|r| r.slem_uniform < 1.0 && r.slem_eq1 < 1.0 && r.slem_eq2 < 1.0));
        let b = run_bound(&spec).unwrap();
        assert!(b.iter().all(|r| (0.0..=1.0).contains(&r.bound)));
    }
}
