//! Time series graph estimation.
//!
//! Parent discovery is a lag-specific PC-style search:
//!
//! 1. Every `(X, tau)` with `1 <= tau <= tau_max` is a candidate parent of
//!    `Y_t`, including the own past of `Y`. Candidates are ranked once by
//!    their unconditional lagged correlation with `Y_t` (ties: larger `|t|`
//!    first, then smaller lag, then smaller variable index), and those not
//!    significant unconditionally are dropped.
//! 2. For `k = 1..=max_conds`, each remaining candidate is tested given the
//!    `k` highest-ranked *other* remaining candidates. Non-significant ones are
//!    removed at the end of the pass. Passes at a given `k` repeat until no
//!    removal happens or `max_iters` passes were made. The search stops early
//!    once fewer than `k + 1` candidates remain.
//!
//! All tests in a search share one alignment that drops the first `tau_max`
//! steps, so every test at a given `k` sees the same samples.
//!
//! The links found this way are then re-tested with MIT given the estimated
//! parents of both ends; non-significant links are pruned and the re-test is
//! repeated until the graph is stable. Contemporaneous links are added where
//! the contemporaneous MIT of the final graph is significant.

use std::collections::BTreeSet;
use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LaggedNode, TimeSeriesGraph};
use crate::linreg::{build_block, partial_correlation};
use crate::measures::{
    contemporaneous_mit_all, coupling_measure, significance, MeasureKind, MeasureResult,
};
use crate::model::TimeSeriesData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub tau_max: usize,
    pub alpha: f64,
    pub max_conds: usize,
    pub max_iters: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig { tau_max: 10, alpha: 0.05, max_conds: 3, max_iters: 10 }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.tau_max < 1 {
            return Err(Error::InvalidArgument("tau_max must be at least 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    fn check_length(&self, data: &TimeSeriesData) -> Result<()> {
        let needed = self.tau_max + self.max_conds + 3;
        if data.len() <= needed {
            return Err(Error::Length(format!(
                "series length {} must exceed tau_max + max_conds + 3 = {needed}",
                data.len()
            )));
        }
        Ok(())
    }
}

/// Estimated graph with the MIT of every retained directed link and the
/// contemporaneous MIT of every retained contemporaneous link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredGraph {
    pub graph: TimeSeriesGraph,
    pub links: Vec<MeasureResult>,
    pub contemporaneous: Vec<MeasureResult>,
}

struct Test {
    t_stat: f64,
    significant: bool,
}

fn conditional_test(
    data: &TimeSeriesData,
    source: LaggedNode,
    target: usize,
    conds: &[LaggedNode],
    config: &InferenceConfig,
) -> Result<Test> {
    let block = build_block(data, conds, config.tau_max)?;
    let x = block.series(data, source)?;
    let y = block.series(data, LaggedNode::new(target, 0))?;
    let estimate = partial_correlation(&x, &y, &block)?;
    let sig = significance(estimate, block.t_eff(), conds.len(), config.alpha)?;
    Ok(Test { t_stat: sig.t_stat, significant: sig.significant })
}

fn rank_order(a: &(LaggedNode, f64), b: &(LaggedNode, f64)) -> Ordering {
    b.1.abs()
        .total_cmp(&a.1.abs())
        .then(a.0.lag.cmp(&b.0.lag))
        .then(a.0.var.cmp(&b.0.var))
}

/// Lagged parents of `target` estimated from data.
pub fn infer_parents(
    data: &TimeSeriesData,
    target: usize,
    config: &InferenceConfig,
) -> Result<BTreeSet<LaggedNode>> {
    config.validate()?;
    config.check_length(data)?;
    if target >= data.n_vars() {
        return Err(Error::Key(format!("target index {target} out of range")));
    }

    let mut ranked = Vec::new();
    for tau in 1..=config.tau_max {
        for var in 0..data.n_vars() {
            let node = LaggedNode::new(var, tau);
            let test = conditional_test(data, node, target, &[], config)?;
            if test.significant {
                ranked.push((node, test.t_stat));
            }
        }
    }
    ranked.sort_by(rank_order);
    let mut current: Vec<LaggedNode> = ranked.into_iter().map(|(n, _)| n).collect();

    for k in 1..=config.max_conds {
        if current.len() < k + 1 {
            break;
        }
        for _ in 0..config.max_iters {
            let mut keep = Vec::with_capacity(current.len());
            for &node in &current {
                let conds: Vec<LaggedNode> =
                    current.iter().copied().filter(|&c| c != node).take(k).collect();
                if conditional_test(data, node, target, &conds, config)?.significant {
                    keep.push(node);
                }
            }
            let removed = keep.len() != current.len();
            current = keep;
            if !removed || current.len() < k + 1 {
                break;
            }
        }
    }
    log::debug!("target {target}: {} parents after search", current.len());
    Ok(current.into_iter().collect())
}

/// Estimates the full time series graph and the MIT values of its links.
pub fn infer_graph(data: &TimeSeriesData, config: &InferenceConfig) -> Result<InferredGraph> {
    config.validate()?;
    config.check_length(data)?;
    let parent_sets = (0..data.n_vars())
        .into_par_iter()
        .map(|target| infer_parents(data, target, config))
        .collect::<Result<Vec<_>>>()?;

    let mut graph = TimeSeriesGraph::new(data.var_names().to_vec());
    for (target, ps) in parent_sets.iter().enumerate() {
        for p in ps {
            graph.add_link(p.var, target, p.lag)?;
        }
    }

    let mut links = mit_of_links(data, &graph)?;
    for _ in 0..config.max_iters {
        let weak: Vec<(usize, usize, usize)> = links
            .iter()
            .filter(|r| !r.is_significant(config.alpha))
            .map(|r| (r.source.var, r.target, r.source.lag))
            .collect();
        if weak.is_empty() {
            break;
        }
        for (s, t, lag) in weak {
            graph.remove_link(s, t, lag);
        }
        links = mit_of_links(data, &graph)?;
    }
    // iteration cap reached while still pruning: drop what is left over
    for r in links.iter().filter(|r| !r.is_significant(config.alpha)) {
        graph.remove_link(r.source.var, r.target, r.source.lag);
    }
    links.retain(|r| r.is_significant(config.alpha));

    let mut contemporaneous = Vec::new();
    for r in contemporaneous_mit_all(data, &graph)? {
        if r.is_significant(config.alpha) {
            graph.add_contemporaneous(r.source.var, r.target)?;
            contemporaneous.push(r);
        }
    }
    Ok(InferredGraph { graph, links, contemporaneous })
}

fn mit_of_links(data: &TimeSeriesData, graph: &TimeSeriesGraph) -> Result<Vec<MeasureResult>> {
    let links: Vec<(usize, usize, usize)> = graph.directed_links().collect();
    links
        .into_par_iter()
        .map(|(s, t, lag)| coupling_measure(data, graph, MeasureKind::Mit, LaggedNode::new(s, lag), t))
        .collect()
}
