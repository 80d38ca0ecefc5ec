//! Coupling-strength estimators and their significance.
//!
//! All measures are partial correlations `rho(X_{t-tau}; Y_t | U)` that differ
//! only in the condition set `U`:
//!
//! ```text
//!   CC    U = {}
//!   ITY   U = P(Y_t) \ {X_{t-tau}}
//!   ITX   U = P(X_{t-tau})
//!   MIT   U = P(Y_t) \ {X_{t-tau}}  u  P(X_{t-tau})
//!   MITS  U = (P(Y_t) u P(A*)) \ (A* u {X_{t-tau}})  u  P(X_{t-tau})
//! ```
//!
//! Lag bookkeeping: a parent `(Z, h)` of `X` enters at total lag `tau + h`
//! relative to `Y_t`.
//!
//! ```text
//!   t-tau-h        t-tau          t
//!     Z ----------> X -----------> Y
//!        lag h          lag tau
//!   node (Z, tau+h)  node (X, tau)  node (Y, 0)
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytic::{analytic_partial_correlation_with, CovarianceTable, DEFAULT_SERIES_TOL};
use crate::error::{Error, Result};
use crate::graph::{
    parents, shifted_parents, sidepath_candidates, sidepath_nodes, LaggedNode, TimeSeriesGraph,
    DEFAULT_SIDEPATH_EPS,
};
use crate::linreg::{self, build_block, residual_correlation, residual_pair, Regression, ResidualPair};
use crate::model::{TimeSeriesData, VarModel};
use crate::seeds;

/// Default number of bootstrap replicates.
pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;

/// Estimates at or beyond this magnitude are treated as exact (anti-)correlation.
pub const DEGENERATE_ESTIMATE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MeasureKind {
    Cc,
    Mit,
    Ity,
    Itx,
    Mits,
    Cmit,
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MeasureKind::Cc => "CC",
            MeasureKind::Mit => "MIT",
            MeasureKind::Ity => "ITY",
            MeasureKind::Itx => "ITX",
            MeasureKind::Mits => "MITS",
            MeasureKind::Cmit => "CMIT",
        };
        f.write_str(s)
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CC" => Ok(MeasureKind::Cc),
            "MIT" => Ok(MeasureKind::Mit),
            "ITY" => Ok(MeasureKind::Ity),
            "ITX" => Ok(MeasureKind::Itx),
            "MITS" => Ok(MeasureKind::Mits),
            "CMIT" => Ok(MeasureKind::Cmit),
            other => Err(Error::InvalidArgument(format!("unknown measure kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub kind: MeasureKind,
    pub source: LaggedNode,
    pub target: usize,
    pub estimate: f64,
    pub q: usize,
    pub n_eff: usize,
    pub t_stat: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
}

impl MeasureResult {
    /// Degrees of freedom of the Student-t reference distribution.
    pub fn df(&self) -> usize {
        self.n_eff - 2 - self.q
    }

    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance {
    pub t_stat: f64,
    pub p_value: f64,
    pub significant: bool,
    pub df: usize,
}

/// `t = rho sqrt((n - 2 - q) / (1 - rho^2))` with a two-sided Student-t p-value
/// on `n - 2 - q` degrees of freedom.
///
/// `|rho| = 1` gives an infinite statistic and `p = 0`.
pub fn significance(estimate: f64, n_eff: usize, q: usize, alpha: f64) -> Result<Significance> {
    if !estimate.is_finite() || estimate.abs() > 1.0 {
        return Err(Error::InvalidArgument(format!("estimate {estimate} outside [-1, 1]")));
    }
    if n_eff < q + 3 {
        return Err(Error::DegreesOfFreedom(format!(
            "n_eff = {n_eff} with {q} conditions leaves no degrees of freedom"
        )));
    }
    let df = n_eff - 2 - q;
    let (t_stat, p_value) = if estimate.abs() >= 1.0 {
        (estimate.signum() * f64::INFINITY, 0.0)
    } else {
        let t = estimate * (df as f64 / (1.0 - estimate * estimate)).sqrt();
        (t, two_sided_p(t, df as f64))
    };
    Ok(Significance { t_stat, p_value, significant: p_value < alpha, df })
}

pub(crate) fn two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn result_from(
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
    estimate: f64,
    n_eff: usize,
    q: usize,
) -> Result<MeasureResult> {
    let sig = significance(estimate, n_eff, q, 0.05)?;
    Ok(MeasureResult {
        kind,
        source,
        target,
        estimate,
        q,
        n_eff,
        t_stat: sig.t_stat,
        p_value: sig.p_value,
        ci: None,
    })
}

/// Lagged cross correlation `rho(X_{t-tau}; Y_t)` for `tau = 0..=tau_max`,
/// each lag on its own alignment.
pub fn cross_correlation_function(
    data: &TimeSeriesData,
    x: usize,
    y: usize,
    tau_max: usize,
) -> Result<Vec<MeasureResult>> {
    if 2 * tau_max >= data.len() {
        return Err(Error::Length(format!(
            "tau_max {tau_max} must be below half the series length {}",
            data.len()
        )));
    }
    (0..=tau_max)
        .map(|tau| {
            let source = LaggedNode::new(x, tau);
            let pc = linreg::sample_partial_correlation(data, source, LaggedNode::new(y, 0), &[])?;
            result_from(MeasureKind::Cc, source, y, pc.estimate, pc.n_eff, 0)
        })
        .collect()
}

/// Where the sidepath set of a link comes from.
#[derive(Debug, Clone, Copy)]
pub enum SidepathSource<'a> {
    /// Analytic partial correlations of a known model, thresholded at `eps`.
    Model { model: &'a VarModel, eps: f64 },
    /// Significance tests on the data at level `alpha`.
    Data { alpha: f64 },
}

impl<'a> SidepathSource<'a> {
    pub fn model(model: &'a VarModel) -> Self {
        SidepathSource::Model { model, eps: DEFAULT_SIDEPATH_EPS }
    }
}

/// The condition set of a measure. `sidepaths` is only used for MITS.
pub fn condition_set(
    graph: &TimeSeriesGraph,
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
    sidepaths: &BTreeSet<LaggedNode>,
) -> Result<Vec<LaggedNode>> {
    let mut target_parents = parents(graph, target)?;
    let source_parents = shifted_parents(graph, source)?;
    let set: BTreeSet<LaggedNode> = match kind {
        MeasureKind::Cc => BTreeSet::new(),
        MeasureKind::Ity => {
            target_parents.remove(&source);
            target_parents
        }
        MeasureKind::Itx => source_parents,
        MeasureKind::Mit => {
            target_parents.remove(&source);
            target_parents.extend(source_parents);
            target_parents
        }
        MeasureKind::Mits => {
            let mut set = target_parents;
            for &w in sidepaths {
                set.extend(shifted_parents(graph, w)?);
            }
            for w in sidepaths {
                set.remove(w);
            }
            set.remove(&source);
            set.extend(source_parents);
            set
        }
        MeasureKind::Cmit => {
            return Err(Error::InvalidArgument(
                "contemporaneous MIT has no lagged condition set".into(),
            ))
        }
    };
    Ok(set.into_iter().collect())
}

/// `rho(source; target_t | conds)` with significance.
pub fn measure_with_conditions(
    data: &TimeSeriesData,
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
    conds: &[LaggedNode],
) -> Result<MeasureResult> {
    let pair = measure_residuals(data, source, target, conds)?;
    let estimate = pair.correlation()?;
    result_from(kind, source, target, estimate, pair.n_eff(), pair.q)
}

fn measure_residuals(
    data: &TimeSeriesData,
    source: LaggedNode,
    target: usize,
    conds: &[LaggedNode],
) -> Result<ResidualPair> {
    let target_node = LaggedNode::new(target, 0);
    let unique: BTreeSet<LaggedNode> = conds.iter().copied().collect();
    if unique.len() != conds.len() {
        return Err(Error::Condition("duplicate node in condition set".into()));
    }
    if unique.contains(&source) || unique.contains(&target_node) {
        return Err(Error::Condition("the source or target node is also a condition".into()));
    }
    if source == target_node {
        return Err(Error::Condition("source and target are the same node".into()));
    }
    let prefix = conds.iter().map(|n| n.lag).max().unwrap_or(0).max(source.lag);
    let n_eff = data.len().saturating_sub(prefix);
    if n_eff <= conds.len() + 3 {
        return Err(Error::Length(format!(
            "{n_eff} aligned samples are too few for {} conditions",
            conds.len()
        )));
    }
    residual_pair(data, source, target_node, conds)
}

/// MIT, ITY or ITX (or CC) of `source -> target_t` with parents read from `graph`.
pub fn coupling_measure(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
) -> Result<MeasureResult> {
    if matches!(kind, MeasureKind::Mits | MeasureKind::Cmit) {
        return Err(Error::InvalidArgument(format!("{kind} needs its dedicated estimator")));
    }
    check_source(data, graph, source, target)?;
    let conds = condition_set(graph, kind, source, target, &BTreeSet::new())?;
    measure_with_conditions(data, kind, source, target, &conds)
}

fn check_source(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
    source: LaggedNode,
    target: usize,
) -> Result<()> {
    if graph.n_vars() != data.n_vars() {
        return Err(Error::Dimension(format!(
            "graph has {} variables, data has {}",
            graph.n_vars(),
            data.n_vars()
        )));
    }
    if source.var >= data.n_vars() || target >= data.n_vars() {
        return Err(Error::Key("variable index out of range".into()));
    }
    if source.lag == 0 {
        return Err(Error::InvalidArgument("lagged measures need tau >= 1".into()));
    }
    Ok(())
}

/// Sidepath nodes of a link, either from a model or from data tests.
pub fn sidepath_set(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
    sidepaths: SidepathSource<'_>,
    source: LaggedNode,
    target: usize,
) -> Result<BTreeSet<LaggedNode>> {
    match sidepaths {
        SidepathSource::Model { model, eps } => sidepath_nodes(graph, model, source, target, eps),
        SidepathSource::Data { alpha } => {
            let source_parents: Vec<LaggedNode> =
                shifted_parents(graph, source)?.into_iter().collect();
            let mut out = BTreeSet::new();
            for w in sidepath_candidates(graph, source, target)? {
                let pair = residual_pair(data, w, source, &source_parents)?;
                let rho = pair.correlation()?;
                if significance(rho, pair.n_eff(), pair.q, alpha)?.significant {
                    out.insert(w);
                }
            }
            Ok(out)
        }
    }
}

/// MIT with sidepaths left open: the sidepath nodes are replaced by their parents.
pub fn mits(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
    sidepaths: SidepathSource<'_>,
    source: LaggedNode,
    target: usize,
) -> Result<MeasureResult> {
    check_source(data, graph, source, target)?;
    let a_star = sidepath_set(data, graph, sidepaths, source, target)?;
    let conds = condition_set(graph, MeasureKind::Mits, source, target, &a_star)?;
    measure_with_conditions(data, MeasureKind::Mits, source, target, &conds)
}

/// Analytic value of a lagged measure for a model whose graph is `graph`.
pub fn analytic_measure(
    model: &VarModel,
    graph: &TimeSeriesGraph,
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
) -> Result<f64> {
    let a_star = if kind == MeasureKind::Mits {
        sidepath_nodes(graph, model, source, target, DEFAULT_SIDEPATH_EPS)?
    } else {
        BTreeSet::new()
    };
    let conds = condition_set(graph, kind, source, target, &a_star)?;
    let mut all = conds.clone();
    all.push(source);
    all.push(LaggedNode::new(target, 0));
    let table = CovarianceTable::for_nodes(model, &all, DEFAULT_SERIES_TOL)?;
    analytic_partial_correlation_with(&table, source, LaggedNode::new(target, 0), &conds)
}

/// Residuals of every variable after regressing it on its own parents, on a
/// common alignment.
fn parent_residuals(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
) -> Result<(DMatrix<f64>, Vec<BTreeSet<LaggedNode>>)> {
    let n = data.n_vars();
    let parent_sets = (0..n).map(|v| parents(graph, v)).collect::<Result<Vec<_>>>()?;
    let prefix = parent_sets.iter().flatten().map(|p| p.lag).max().unwrap_or(0);
    let mut resid = DMatrix::zeros(data.len().saturating_sub(prefix), n);
    for (v, ps) in parent_sets.iter().enumerate() {
        let nodes: Vec<LaggedNode> = ps.iter().copied().collect();
        let block = build_block(data, &nodes, prefix)?;
        let y = block.series(data, LaggedNode::new(v, 0))?;
        let r = Regression::fit(&block)?.residuals(&y)?;
        let scale = y.add_scalar(-y.mean()).norm_squared();
        if !(r.norm_squared() > 1e-20 * scale) {
            return Err(Error::Degenerate(format!("residual of variable {v} vanishes")));
        }
        resid.set_column(v, &r);
    }
    Ok((resid, parent_sets))
}

fn cmit_from_precision(
    precision: &DMatrix<f64>,
    parent_sets: &[BTreeSet<LaggedNode>],
    n_eff: usize,
    x: usize,
    y: usize,
) -> Result<MeasureResult> {
    let n = precision.nrows();
    let estimate = (-precision[(x, y)] / (precision[(x, x)] * precision[(y, y)]).sqrt()).clamp(-1.0, 1.0);
    let union: BTreeSet<LaggedNode> = parent_sets[x].union(&parent_sets[y]).copied().collect();
    let q = n - 2 + union.len();
    result_from(MeasureKind::Cmit, LaggedNode::new(x, 0), y, estimate, n_eff, q)
}

fn residual_precision(resid: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = resid.ncols();
    let cov = resid.tr_mul(resid) / resid.nrows() as f64;
    linreg::solve_spd(&cov, &DMatrix::identity(n, n), "residual covariance")
}

/// Contemporaneous MIT of `x_t -- y_t`: partial correlation of the parent
/// residuals of `x` and `y` given the parent residuals of all other variables.
///
/// `q` counts the other variables plus the union of the two parent sets.
pub fn contemporaneous_mit(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
    x: usize,
    y: usize,
) -> Result<MeasureResult> {
    if x == y {
        return Err(Error::InvalidArgument("contemporaneous MIT needs two distinct variables".into()));
    }
    if x >= data.n_vars() || y >= data.n_vars() {
        return Err(Error::Key("variable index out of range".into()));
    }
    if graph.n_vars() != data.n_vars() {
        return Err(Error::Dimension("graph and data disagree on variable count".into()));
    }
    let (resid, parent_sets) = parent_residuals(data, graph)?;
    let precision = residual_precision(&resid)?;
    cmit_from_precision(&precision, &parent_sets, resid.nrows(), x, y)
}

/// Contemporaneous MIT for every unordered pair `a < b`.
pub fn contemporaneous_mit_all(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
) -> Result<Vec<MeasureResult>> {
    let n = data.n_vars();
    if n < 2 {
        return Ok(Vec::new());
    }
    let (resid, parent_sets) = parent_residuals(data, graph)?;
    let precision = residual_precision(&resid)?;
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            out.push(cmit_from_precision(&precision, &parent_sets, resid.nrows(), a, b)?);
        }
    }
    Ok(out)
}

/// Percentile bootstrap interval of a measure from resampled residual pairs.
///
/// The residuals `(X_U, Y_U)` of the measure's regression are resampled with
/// replacement `n_boot` times; replicate `i` uses PRNG stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_ci(
    data: &TimeSeriesData,
    graph: &TimeSeriesGraph,
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
    level: f64,
    n_boot: usize,
    seed: u64,
) -> Result<ConfidenceInterval> {
    if matches!(kind, MeasureKind::Mits | MeasureKind::Cmit) {
        return Err(Error::InvalidArgument(format!(
            "{kind} intervals need explicit conditions; use bootstrap_ci_with_conditions"
        )));
    }
    check_source(data, graph, source, target)?;
    let conds = condition_set(graph, kind, source, target, &BTreeSet::new())?;
    bootstrap_ci_with_conditions(data, source, target, &conds, level, n_boot, seed)
}

pub fn bootstrap_ci_with_conditions(
    data: &TimeSeriesData,
    source: LaggedNode,
    target: usize,
    conds: &[LaggedNode],
    level: f64,
    n_boot: usize,
    seed: u64,
) -> Result<ConfidenceInterval> {
    if n_boot < 100 {
        return Err(Error::InvalidArgument("at least 100 bootstrap replicates are required".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("confidence level must lie in (0, 1)".into()));
    }
    let pair = measure_residuals(data, source, target, conds)?;
    pair.correlation()?;
    let n = pair.n_eff();
    let mut replicates: Vec<f64> = (0..n_boot as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(seed, i);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let x = DVector::from_iterator(n, idx.iter().map(|&k| pair.x[k]));
            let y = DVector::from_iterator(n, idx.iter().map(|&k| pair.y[k]));
            let (x, y) = (x.add_scalar(-x.mean()), y.add_scalar(-y.mean()));
            residual_correlation(&x, &y, pair.x_scale, pair.y_scale).unwrap_or(f64::NAN)
        })
        .collect();
    replicates.retain(|v| v.is_finite());
    if replicates.len() < n_boot / 2 {
        return Err(Error::Degenerate("most bootstrap replicates were degenerate".into()));
    }
    replicates.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        low: percentile(&replicates, tail),
        high: percentile(&replicates, 1.0 - tail),
        level,
    })
}

/// Linear-interpolated percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
