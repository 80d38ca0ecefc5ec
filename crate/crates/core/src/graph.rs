//! Time series graphs: lagged directed links and contemporaneous links.
//!
//! A directed link `(source, target, lag)` stands for `source_{t-lag} -> target_t`
//! at every `t`. Node lags in query results are counted backwards from the
//! target's time `t`, so `(Z, 2)` is `Z_{t-2}`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::analytic::{analytic_partial_correlation_with, CovarianceTable};
use crate::error::{Error, Result};
use crate::model::{validate_model, VarModel};

/// Default threshold for reading links off model coefficients.
pub const DEFAULT_LINK_EPS: f64 = 1e-12;

/// Default threshold on analytic partial correlations when deciding sidepath
/// membership. Looser than [`DEFAULT_LINK_EPS`] because the partial
/// correlations go through a truncated series and a matrix inversion.
pub const DEFAULT_SIDEPATH_EPS: f64 = 1e-8;

/// Variable `var` at time `t - lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaggedNode {
    pub var: usize,
    pub lag: usize,
}

impl LaggedNode {
    pub const fn new(var: usize, lag: usize) -> Self {
        LaggedNode { var, lag }
    }

    /// The same node seen from a reference time `extra` steps later.
    pub const fn shifted(self, extra: usize) -> Self {
        LaggedNode { var: self.var, lag: self.lag + extra }
    }
}

impl fmt::Display for LaggedNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, -{})", self.var, self.lag)
    }
}

/// Which innovation matrix defines contemporaneous links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ContemporaneousRule {
    /// Non-zero off-diagonal entries of the inverse innovation covariance.
    #[default]
    InverseCovariance,
    /// Non-zero off-diagonal entries of the innovation covariance itself.
    Covariance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSeriesGraph {
    var_names: Vec<String>,
    directed: BTreeSet<(usize, usize, usize)>,
    contemporaneous: BTreeSet<(usize, usize)>,
}

impl TimeSeriesGraph {
    pub fn new(var_names: Vec<String>) -> Self {
        TimeSeriesGraph {
            var_names,
            directed: BTreeSet::new(),
            contemporaneous: BTreeSet::new(),
        }
    }

    pub fn empty(n_vars: usize) -> Self {
        Self::new(crate::model::default_names(n_vars))
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.var_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Key(name.to_string()))
    }

    fn check_var(&self, var: usize) -> Result<()> {
        if var < self.n_vars() {
            Ok(())
        } else {
            Err(Error::Key(format!("variable index {var} out of range")))
        }
    }

    /// Adds `source_{t-lag} -> target_t`.
    pub fn add_link(&mut self, source: usize, target: usize, lag: usize) -> Result<()> {
        self.check_var(source)?;
        self.check_var(target)?;
        if lag == 0 {
            return Err(Error::InvalidArgument("directed links need lag >= 1".into()));
        }
        self.directed.insert((source, target, lag));
        Ok(())
    }

    pub fn remove_link(&mut self, source: usize, target: usize, lag: usize) -> bool {
        self.directed.remove(&(source, target, lag))
    }

    /// Adds the undirected link `a_t -- b_t`.
    pub fn add_contemporaneous(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_var(a)?;
        self.check_var(b)?;
        if a == b {
            return Err(Error::InvalidArgument("contemporaneous self-links are not allowed".into()));
        }
        self.contemporaneous.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn has_link(&self, source: usize, target: usize, lag: usize) -> bool {
        self.directed.contains(&(source, target, lag))
    }

    pub fn has_contemporaneous(&self, a: usize, b: usize) -> bool {
        self.contemporaneous.contains(&(a.min(b), a.max(b)))
    }

    /// Directed links as `(source, target, lag)`, sorted.
    pub fn directed_links(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    /// Contemporaneous links as `(a, b)` with `a < b`, sorted.
    pub fn contemporaneous_links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.contemporaneous.iter().copied()
    }

    pub fn max_lag(&self) -> usize {
        self.directed.iter().map(|l| l.2).max().unwrap_or(0)
    }

    pub fn neighbors(&self, var: usize) -> Result<BTreeSet<usize>> {
        self.check_var(var)?;
        Ok(self
            .contemporaneous
            .iter()
            .filter_map(|&(a, b)| {
                if a == var {
                    Some(b)
                } else if b == var {
                    Some(a)
                } else {
                    None
                }
            })
            .collect())
    }

    /// `10 * max_lag`, clamped to `1..=100`.
    pub fn default_horizon(&self) -> usize {
        (10 * self.max_lag()).clamp(1, 100)
    }
}

/// Reads the graph off the model: `X_{t-tau} -> Y_t` iff `|Phi_YX(tau)| > eps`
/// and `X_t -- Y_t` iff `|(Sigma^-1)_XY| > eps`.
pub fn graph_from_model(model: &VarModel, eps: f64) -> Result<TimeSeriesGraph> {
    graph_from_model_with(model, eps, ContemporaneousRule::InverseCovariance)
}

pub fn graph_from_model_with(
    model: &VarModel,
    eps: f64,
    rule: ContemporaneousRule,
) -> Result<TimeSeriesGraph> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let report = validate_model(model)?;
    if !report.stationary {
        return Err(Error::Stationarity { spectral_radius: report.spectral_radius });
    }
    let n = model.n_vars();
    let mut graph = TimeSeriesGraph::new(model.var_names().to_vec());
    for (s, phi) in model.phis().iter().enumerate() {
        for target in 0..n {
            for source in 0..n {
                if phi[(target, source)].abs() > eps {
                    graph.add_link(source, target, s + 1)?;
                }
            }
        }
    }
    let contemporaneous = match rule {
        ContemporaneousRule::InverseCovariance => Cholesky::new(model.sigma().clone())
            .ok_or_else(|| Error::Covariance("sigma is singular or indefinite".into()))?
            .inverse(),
        ContemporaneousRule::Covariance => model.sigma().clone(),
    };
    for a in 0..n {
        for b in a + 1..n {
            if contemporaneous[(a, b)].abs() > eps {
                graph.add_contemporaneous(a, b)?;
            }
        }
    }
    Ok(graph)
}

/// Parents of `target_t`: every `(Z, tau)` with `Z_{t-tau} -> target_t`,
/// including the target's own past.
pub fn parents(graph: &TimeSeriesGraph, target: usize) -> Result<BTreeSet<LaggedNode>> {
    graph.check_var(target)?;
    Ok(graph
        .directed
        .iter()
        .filter(|l| l.1 == target)
        .map(|&(source, _, lag)| LaggedNode::new(source, lag))
        .collect())
}

/// Parents of the node `node`, expressed relative to the reference time
/// `node.lag` steps after it.
pub fn shifted_parents(graph: &TimeSeriesGraph, node: LaggedNode) -> Result<BTreeSet<LaggedNode>> {
    Ok(parents(graph, node.var)?.into_iter().map(|p| p.shifted(node.lag)).collect())
}

/// Nodes with a directed path into `target_t`, at total lag at most `horizon`.
pub fn ancestors(
    graph: &TimeSeriesGraph,
    target: usize,
    horizon: usize,
) -> Result<BTreeSet<LaggedNode>> {
    graph.check_var(target)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let incoming: Vec<Vec<(usize, usize)>> = (0..graph.n_vars())
        .map(|v| {
            graph
                .directed
                .iter()
                .filter(|l| l.1 == v)
                .map(|&(s, _, lag)| (s, lag))
                .collect()
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([LaggedNode::new(target, 0)]);
    while let Some(node) = queue.pop_front() {
        for &(source, lag) in &incoming[node.var] {
            let next = LaggedNode::new(source, node.lag + lag);
            if next.lag <= horizon && seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    Ok(seen)
}

/// The sidepath set: ancestors of `target_t`, other than the source node and
/// its parents, whose partial correlation with the source given the source's
/// parents exceeds `eps` in magnitude. Partial correlations are computed from
/// the model's analytic covariance.
pub fn sidepath_nodes(
    graph: &TimeSeriesGraph,
    model: &VarModel,
    source: LaggedNode,
    target: usize,
    eps: f64,
) -> Result<BTreeSet<LaggedNode>> {
    let candidates = sidepath_candidates(graph, source, target)?;
    let source_parents: Vec<LaggedNode> = shifted_parents(graph, source)?.into_iter().collect();
    let max_lag = candidates
        .iter()
        .chain(&source_parents)
        .map(|n| n.lag)
        .max()
        .unwrap_or(0)
        .max(source.lag);
    let table = CovarianceTable::compute(model, max_lag, crate::analytic::DEFAULT_SERIES_TOL)?;
    let mut out = BTreeSet::new();
    for w in candidates {
        let rho = analytic_partial_correlation_with(&table, w, source, &source_parents)?;
        if rho.abs() > eps {
            out.insert(w);
        }
    }
    Ok(out)
}

/// Ancestors of `target_t` within the default horizon, minus the source node
/// and the source's parents. Also checks that `source -> target` is a link.
pub(crate) fn sidepath_candidates(
    graph: &TimeSeriesGraph,
    source: LaggedNode,
    target: usize,
) -> Result<BTreeSet<LaggedNode>> {
    graph.check_var(source.var)?;
    if !graph.has_link(source.var, target, source.lag) {
        return Err(Error::InvalidArgument(format!(
            "{} -> {target} at lag {} is not a link of the graph",
            source.var, source.lag
        )));
    }
    let horizon = graph.default_horizon().max(source.lag);
    let mut candidates = ancestors(graph, target, horizon)?;
    candidates.remove(&source);
    for p in shifted_parents(graph, source)? {
        candidates.remove(&p);
    }
    Ok(candidates)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum VarRef {
    Index(usize),
    Name(String),
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    var_names: Vec<String>,
    directed_links: Vec<(VarRef, VarRef, usize)>,
    #[serde(default)]
    contemporaneous_links: Vec<(VarRef, VarRef)>,
}

impl Serialize for TimeSeriesGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let name = |v: usize| VarRef::Name(self.var_names[v].clone());
        GraphDoc {
            var_names: self.var_names.clone(),
            directed_links: self.directed.iter().map(|&(a, b, l)| (name(a), name(b), l)).collect(),
            contemporaneous_links: self
                .contemporaneous
                .iter()
                .map(|&(a, b)| (name(a), name(b)))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TimeSeriesGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = GraphDoc::deserialize(d)?;
        let mut g = TimeSeriesGraph::new(doc.var_names);
        let resolve = |g: &TimeSeriesGraph, r: &VarRef| match r {
            VarRef::Index(i) => Ok(*i),
            VarRef::Name(n) => g.index_of(n),
        };
        for (a, b, lag) in &doc.directed_links {
            let (a, b) = (resolve(&g, a), resolve(&g, b));
            let (a, b) = (a.map_err(D::Error::custom)?, b.map_err(D::Error::custom)?);
            g.add_link(a, b, *lag).map_err(D::Error::custom)?;
        }
        for (a, b) in &doc.contemporaneous_links {
            let (a, b) = (resolve(&g, a), resolve(&g, b));
            let (a, b) = (a.map_err(D::Error::custom)?, b.map_err(D::Error::custom)?);
            g.add_contemporaneous(a, b).map_err(D::Error::custom)?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn set(nodes: &[(usize, usize)]) -> BTreeSet<LaggedNode> {
        nodes.iter().map(|&(v, l)| LaggedNode::new(v, l)).collect()
    }

    fn bivariate(a: f64, b: f64, c: f64) -> VarModel {
        let phi = DMatrix::from_row_slice(2, 2, &[a, 0.0, c, b]);
        VarModel::new(vec![phi], DMatrix::identity(2, 2), vec!["X".into(), "Y".into()]).unwrap()
    }

    /// X=0, W=1, Y=2: W_t = d X_{t-1}, Y_t = c X_{t-2} + b W_{t-1}.
    fn sidepath_model(c: f64, d: f64, b: f64) -> VarModel {
        let mut phi1 = DMatrix::zeros(3, 3);
        phi1[(1, 0)] = d;
        phi1[(2, 1)] = b;
        let mut phi2 = DMatrix::zeros(3, 3);
        phi2[(2, 0)] = c;
        VarModel::with_default_names(vec![phi1, phi2], DMatrix::identity(3, 3)).unwrap()
    }

    #[test]
    fn bivariate_links() {
        let g = graph_from_model(&bivariate(0.5, 0.4, 0.3), DEFAULT_LINK_EPS).unwrap();
        let links: Vec<_> = g.directed_links().collect();
        assert_eq!(links, vec![(0, 0, 1), (0, 1, 1), (1, 1, 1)]);
        assert_eq!(g.contemporaneous_links().count(), 0);
        assert_eq!(parents(&g, 1).unwrap(), set(&[(0, 1), (1, 1)]));
        assert_eq!(g.neighbors(0).unwrap().len(), 0);
    }

    #[test]
    fn empty_graph() {
        let m = VarModel::with_default_names(vec![DMatrix::zeros(2, 2)], DMatrix::identity(2, 2))
            .unwrap();
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        assert_eq!(g.directed_links().count() + g.contemporaneous_links().count(), 0);
        assert!(parents(&g, 0).unwrap().is_empty());
        assert!(ancestors(&g, 1, 5).unwrap().is_empty());
    }

    #[test]
    fn contemporaneous_from_inverse() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let m = VarModel::with_default_names(vec![DMatrix::zeros(2, 2)], sigma).unwrap();
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        assert_eq!(g.contemporaneous_links().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(g.directed_links().count(), 0);
    }

    #[test]
    fn inverse_and_plain_covariance_rules_differ() {
        // chain covariance: sigma has all entries non-zero, the inverse is tridiagonal
        let r = 0.5f64;
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, r, r * r, r, 1.0, r, r * r, r, 1.0]);
        let m = VarModel::with_default_names(vec![DMatrix::zeros(3, 3)], sigma).unwrap();
        let inv = graph_from_model(&m, 1e-9).unwrap();
        let plain = graph_from_model_with(&m, 1e-9, ContemporaneousRule::Covariance).unwrap();
        assert_eq!(inv.contemporaneous_links().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(plain.contemporaneous_links().count(), 3);
    }

    #[test]
    fn chain_parents_and_ancestors() {
        // X=0 -> Z=2 -> Y=1
        let mut g = TimeSeriesGraph::empty(3);
        g.add_link(0, 2, 1).unwrap();
        g.add_link(2, 1, 1).unwrap();
        assert_eq!(parents(&g, 1).unwrap(), set(&[(2, 1)]));
        let anc = ancestors(&g, 1, 3).unwrap();
        assert!(anc.contains(&LaggedNode::new(2, 1)));
        assert!(anc.contains(&LaggedNode::new(0, 2)));
        assert_eq!(anc.len(), 2);
    }

    #[test]
    fn bivariate_ancestors_horizon_two() {
        let g = graph_from_model(&bivariate(0.5, 0.4, 0.3), DEFAULT_LINK_EPS).unwrap();
        assert_eq!(ancestors(&g, 1, 2).unwrap(), set(&[(0, 1), (1, 1), (0, 2), (1, 2)]));
        assert!(ancestors(&g, 1, 0).is_err());
    }

    #[test]
    fn unknown_variable() {
        let g = TimeSeriesGraph::empty(2);
        assert!(matches!(parents(&g, 5), Err(Error::Key(_))));
        assert!(matches!(ancestors(&g, 2, 1), Err(Error::Key(_))));
        assert_eq!(g.index_of("X1").unwrap(), 1);
        assert!(matches!(g.index_of("nope"), Err(Error::Key(_))));
    }

    #[test]
    fn invalid_links() {
        let mut g = TimeSeriesGraph::empty(2);
        assert!(g.add_link(0, 1, 0).is_err());
        assert!(g.add_contemporaneous(1, 1).is_err());
    }

    #[test]
    fn no_sidepaths_in_bivariate_model() {
        let m = bivariate(0.5, 0.4, 0.3);
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        let s = sidepath_nodes(&g, &m, LaggedNode::new(0, 1), 1, DEFAULT_SIDEPATH_EPS).unwrap();
        assert!(s.is_empty(), "{s:?}");
    }

    #[test]
    fn sidepath_through_w() {
        let m = sidepath_model(0.5, 0.4, 0.6);
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        let s = sidepath_nodes(&g, &m, LaggedNode::new(0, 2), 2, DEFAULT_SIDEPATH_EPS).unwrap();
        assert_eq!(s, set(&[(1, 1)]));
    }

    #[test]
    fn no_sidepath_when_d_vanishes() {
        let m = sidepath_model(0.5, 0.0, 0.6);
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        let s = sidepath_nodes(&g, &m, LaggedNode::new(0, 2), 2, DEFAULT_SIDEPATH_EPS).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn contemporaneous_start_of_sidepath() {
        // X_t -- W_t and W_{t-1} -> Y_t: W_{t-1} is a sidepath node for X_{t-1} -> Y_t
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.0, 0.4, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let mut phi = DMatrix::zeros(3, 3);
        phi[(2, 0)] = 0.5;
        phi[(2, 1)] = 0.5;
        let m = VarModel::with_default_names(vec![phi], sigma).unwrap();
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        let s = sidepath_nodes(&g, &m, LaggedNode::new(0, 1), 2, DEFAULT_SIDEPATH_EPS).unwrap();
        assert_eq!(s, set(&[(1, 1)]));
    }

    #[test]
    fn sidepath_needs_a_link() {
        let m = bivariate(0.5, 0.4, 0.3);
        let g = graph_from_model(&m, DEFAULT_LINK_EPS).unwrap();
        assert!(sidepath_nodes(&g, &m, LaggedNode::new(1, 1), 0, 1e-8).is_err());
    }

    #[test]
    fn json_uses_names() {
        let g = graph_from_model(&bivariate(0.5, 0.4, 0.3), DEFAULT_LINK_EPS).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains(r#"["X","Y",1]"#), "{s}");
        let back: TimeSeriesGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let by_index = r#"{"var_names":["a","b"],"directed_links":[[0,1,2]],"contemporaneous_links":[[0,1]]}"#;
        let g: TimeSeriesGraph = serde_json::from_str(by_index).unwrap();
        assert!(g.has_link(0, 1, 2) && g.has_contemporaneous(1, 0));
        let bad = r#"{"var_names":["a"],"directed_links":[["a","zz",1]]}"#;
        assert!(serde_json::from_str::<TimeSeriesGraph>(bad).is_err());
    }
}
