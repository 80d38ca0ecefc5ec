//! Closed-form second moments of a stationary VAR process.
//!
//! The path matrices obey `Psi(0) = I`, `Psi(n) = sum_{s=1}^{min(n,p)} Phi(s) Psi(n-s)`
//! and the lagged covariance `Gamma(tau) = E[X_{t+tau} X_t^T]` is the series
//! `sum_n Psi(n + tau) Sigma Psi(n)^T`. Every estimator in the crate is tested
//! against values derived from these.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{parents, shifted_parents, LaggedNode, TimeSeriesGraph};
use crate::linreg::solve_spd;
use crate::model::{validate_model, VarModel};

/// Default relative tolerance on series terms.
pub const DEFAULT_SERIES_TOL: f64 = 1e-16;

/// Hard cap on the number of series terms.
pub const MAX_SERIES_TERMS: usize = 100_000;

/// `Psi(0..=n_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSequence {
    matrices: Vec<DMatrix<f64>>,
}

impl PsiSequence {
    fn start(n: usize) -> Self {
        PsiSequence { matrices: vec![DMatrix::identity(n, n)] }
    }

    fn push_next(&mut self, model: &VarModel) {
        let n = self.matrices.len();
        let dim = model.n_vars();
        let mut next = DMatrix::zeros(dim, dim);
        for (s, phi) in model.phis().iter().enumerate().take(n) {
            next += phi * &self.matrices[n - s - 1];
        }
        self.matrices.push(next);
    }

    pub fn n_max(&self) -> usize {
        self.matrices.len() - 1
    }

    /// `Psi(n)`; `None` beyond the computed range.
    pub fn get(&self, n: usize) -> Option<&DMatrix<f64>> {
        self.matrices.get(n)
    }

    /// `Psi(n)` with `Psi(n) = 0` for negative `n`.
    pub fn entry(&self, n: isize, i: usize, j: usize) -> f64 {
        if n < 0 {
            0.0
        } else {
            self.matrices[n as usize][(i, j)]
        }
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }
}

/// Path matrices up to `n_max`.
pub fn psi(model: &VarModel, n_max: usize) -> PsiSequence {
    let mut seq = PsiSequence::start(model.n_vars());
    for _ in 0..n_max {
        seq.push_next(model);
    }
    seq
}

/// `Gamma(0..=tau_max)` with an estimate of the truncated tail.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    gammas: Vec<DMatrix<f64>>,
    truncation_error: f64,
    terms: usize,
}

impl CovarianceTable {
    /// Sums the series until the largest term (over all lags) stays below
    /// `tol * ||Sigma||_F` for `max(3, p)` consecutive terms.
    ///
    /// The window is at least the model order because `Psi` can vanish for up
    /// to `p - 1` consecutive indices before becoming non-zero again.
    pub fn compute(model: &VarModel, tau_max: usize, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let report = validate_model(model)?;
        if !report.stationary {
            return Err(Error::Stationarity { spectral_radius: report.spectral_radius });
        }
        let dim = model.n_vars();
        let sigma = model.sigma();
        let threshold = tol * sigma.norm();
        let window = model.order().max(3);
        let rho = report.spectral_radius;

        let mut psis = PsiSequence::start(dim);
        while psis.n_max() < tau_max {
            psis.push_next(model);
        }
        let mut gammas = vec![DMatrix::zeros(dim, dim); tau_max + 1];
        let mut quiet = 0usize;
        let mut last_norm = f64::INFINITY;
        for n in 0..MAX_SERIES_TERMS {
            while psis.n_max() < n + tau_max {
                psis.push_next(model);
            }
            let right = sigma * psis.matrices[n].transpose();
            let mut largest = 0.0f64;
            for (tau, gamma) in gammas.iter_mut().enumerate() {
                let term = &psis.matrices[n + tau] * &right;
                largest = largest.max(term.norm());
                *gamma += term;
            }
            last_norm = largest;
            if largest < threshold {
                quiet += 1;
                if quiet >= window {
                    return Ok(CovarianceTable {
                        gammas,
                        truncation_error: tail_bound(largest, rho),
                        terms: n + 1,
                    });
                }
            } else {
                quiet = 0;
            }
        }
        Err(Error::Convergence {
            terms: MAX_SERIES_TERMS,
            error_bound: tail_bound(last_norm, rho),
        })
    }

    /// Covariance table covering every lag difference among `nodes`.
    pub fn for_nodes(model: &VarModel, nodes: &[LaggedNode], tol: f64) -> Result<Self> {
        let max = nodes.iter().map(|n| n.lag).max().unwrap_or(0);
        let min = nodes.iter().map(|n| n.lag).min().unwrap_or(0);
        Self::compute(model, max - min, tol)
    }

    pub fn tau_max(&self) -> usize {
        self.gammas.len() - 1
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// `Gamma(tau)` for `tau >= 0`.
    pub fn gamma(&self, tau: usize) -> Option<&DMatrix<f64>> {
        self.gammas.get(tau)
    }

    /// `Gamma_ij(tau) = E[X^i_{t+tau} X^j_t]` for any sign of `tau`.
    pub fn entry(&self, i: usize, j: usize, tau: isize) -> Option<f64> {
        if tau >= 0 {
            self.gammas.get(tau as usize).map(|g| g[(i, j)])
        } else {
            self.gammas.get((-tau) as usize).map(|g| g[(j, i)])
        }
    }

    /// `E[a b]` for two lagged nodes relative to the same reference time.
    pub fn moment(&self, a: LaggedNode, b: LaggedNode) -> Result<f64> {
        let diff = b.lag as isize - a.lag as isize;
        self.entry(a.var, b.var, diff).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "lag difference {diff} exceeds covariance table range {}",
                self.tau_max()
            ))
        })
    }

    /// `E[U^T V]` for node lists `u`, `v`.
    pub fn moment_matrix(&self, u: &[LaggedNode], v: &[LaggedNode]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(u.len(), v.len());
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in v.iter().enumerate() {
                m[(i, j)] = self.moment(a, b)?;
            }
        }
        Ok(m)
    }

    /// A table over a longer lag range. The receiver is left untouched.
    pub fn extended(&self, model: &VarModel, tau_max: usize, tol: f64) -> Result<Self> {
        if tau_max <= self.tau_max() {
            return Ok(self.clone());
        }
        Self::compute(model, tau_max, tol)
    }
}

fn tail_bound(last_term: f64, rho: f64) -> f64 {
    if rho <= 0.0 {
        0.0
    } else {
        last_term * rho / (1.0 - rho)
    }
}

/// Lagged covariances `Gamma(0..=tau_max)`.
pub fn lagged_covariance(model: &VarModel, tau_max: usize, tol: f64) -> Result<CovarianceTable> {
    CovarianceTable::compute(model, tau_max, tol)
}

/// `rho(x_{t-tau}; y_t) = Gamma_yx(tau) / sqrt(Var x Var y)`, the population
/// counterpart of the sample lag function with `x` leading.
pub fn analytic_cross_correlation(model: &VarModel, x: usize, y: usize, tau: usize) -> Result<f64> {
    let n = model.n_vars();
    if x >= n || y >= n {
        return Err(Error::Key(format!("variable index out of range for {n} variables")));
    }
    let table = CovarianceTable::compute(model, tau, DEFAULT_SERIES_TOL)?;
    let g0 = &table.gammas[0];
    let denom = (g0[(x, x)] * g0[(y, y)]).sqrt();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("zero process variance".into()));
    }
    Ok(table.gammas[tau][(y, x)] / denom)
}

/// `rho(a; b | conds)` from a covariance table.
pub fn analytic_partial_correlation_with(
    table: &CovarianceTable,
    a: LaggedNode,
    b: LaggedNode,
    conds: &[LaggedNode],
) -> Result<f64> {
    let ab = [a, b];
    let m_ab = table.moment_matrix(&ab, &ab)?;
    let resid = if conds.is_empty() {
        m_ab
    } else {
        let m_uu = table.moment_matrix(conds, conds)?;
        let m_ua = table.moment_matrix(conds, &ab)?;
        let solved = solve_spd(&m_uu, &m_ua, "condition covariance")?;
        m_ab - m_ua.transpose() * solved
    };
    let denom = (resid[(0, 0)] * resid[(1, 1)]).sqrt();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("zero conditional variance".into()));
    }
    Ok((resid[(0, 1)] / denom).clamp(-1.0, 1.0))
}

/// `rho(a; b | conds)` for the stationary process of `model`.
pub fn analytic_partial_correlation(
    model: &VarModel,
    a: LaggedNode,
    b: LaggedNode,
    conds: &[LaggedNode],
) -> Result<f64> {
    let mut all = vec![a, b];
    all.extend_from_slice(conds);
    let table = CovarianceTable::for_nodes(model, &all, DEFAULT_SERIES_TOL)?;
    analytic_partial_correlation_with(&table, a, b, conds)
}

/// Population least-squares coefficients of `target_t` on `regressors`:
/// `E[U^T U]^-1 E[U^T Y]`.
pub fn population_regression(
    model: &VarModel,
    target: usize,
    regressors: &[LaggedNode],
) -> Result<DVector<f64>> {
    let y = LaggedNode::new(target, 0);
    let mut all = vec![y];
    all.extend_from_slice(regressors);
    let table = CovarianceTable::for_nodes(model, &all, DEFAULT_SERIES_TOL)?;
    let gram = table.moment_matrix(regressors, regressors)?;
    let rhs = table.moment_matrix(regressors, &[y])?;
    Ok(solve_spd(&gram, &rhs, "regressor covariance")?.column(0).into_owned())
}

/// `E[eps_{X,t-tau} W^i_{t-g_i}] = sum_r Psi_{W_i r}(tau - g_i) Sigma_{rX}` for each
/// parent `W^i_{t-g_i}` of the target other than the source node.
pub fn sidepath_covariance(
    model: &VarModel,
    graph: &TimeSeriesGraph,
    source: LaggedNode,
    target: usize,
) -> Result<Vec<(LaggedNode, f64)>> {
    check_graph(model, graph)?;
    let w: Vec<LaggedNode> = parents(graph, target)?.into_iter().filter(|&n| n != source).collect();
    Ok(sidepath_entries(model, source, &w))
}

fn sidepath_entries(model: &VarModel, source: LaggedNode, w: &[LaggedNode]) -> Vec<(LaggedNode, f64)> {
    let paths = psi(model, source.lag);
    let sigma = model.sigma();
    w.iter()
        .map(|&node| {
            let steps = source.lag as isize - node.lag as isize;
            let value = (0..model.n_vars())
                .map(|r| paths.entry(steps, node.var, r) * sigma[(r, source.var)])
                .sum();
            (node, value)
        })
        .collect()
}

fn check_graph(model: &VarModel, graph: &TimeSeriesGraph) -> Result<()> {
    if graph.n_vars() != model.n_vars() {
        return Err(Error::Dimension(format!(
            "graph has {} variables, model has {}",
            graph.n_vars(),
            model.n_vars()
        )));
    }
    Ok(())
}

/// The ingredients of the MIT coupling-strength decomposition for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremQuantities {
    /// Link coefficient `Phi_YX(tau)`.
    pub c: f64,
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    /// Parents of the target other than the source and the source's parents.
    pub w_nodes: Vec<LaggedNode>,
    /// Parents of the source, relative to the target time.
    pub z_nodes: Vec<LaggedNode>,
    /// `E[eps_X^T W]`.
    pub sidepath_cov: DVector<f64>,
    /// Conditional covariance of `W` given `Z`.
    pub schur: DMatrix<f64>,
    pub cov_xy: f64,
    pub var_y: f64,
    pub var_x: f64,
}

impl TheoremQuantities {
    /// `cov_xy / sqrt(var_y var_x)`.
    pub fn mit(&self) -> f64 {
        self.cov_xy / (self.var_y * self.var_x).sqrt()
    }

    /// `c sigma_X / sqrt(sigma_Y^2 + c^2 sigma_X^2)`, the value without sidepaths.
    pub fn no_sidepath_mit(&self) -> f64 {
        no_sidepath_mit(self.c, self.sigma_x2, self.sigma_y2)
    }

    pub fn has_sidepath(&self, eps: f64) -> bool {
        self.sidepath_cov.iter().any(|v| v.abs() > eps)
    }
}

/// MIT of a link without sidepaths.
pub fn no_sidepath_mit(c: f64, sigma_x2: f64, sigma_y2: f64) -> f64 {
    c * sigma_x2.sqrt() / (sigma_y2 + c * c * sigma_x2).sqrt()
}

/// Residual (co)variances of the MIT regression, written through the sidepath
/// covariance and the Schur complement
/// `S_Z = E[W^T W] - E[W^T Z] E[Z^T Z]^-1 E[Z^T W]`.
///
/// Target parents that are also parents of the source are moved into `Z`;
/// their sidepath covariance is zero because they lie before the source.
pub fn theorem_quantities(
    model: &VarModel,
    graph: &TimeSeriesGraph,
    source: LaggedNode,
    target: usize,
    tol: f64,
) -> Result<TheoremQuantities> {
    check_graph(model, graph)?;
    if source.lag == 0 {
        return Err(Error::InvalidArgument("source lag must be at least 1".into()));
    }
    let z_set: BTreeSet<LaggedNode> = shifted_parents(graph, source)?;
    let w_nodes: Vec<LaggedNode> = parents(graph, target)?
        .into_iter()
        .filter(|n| *n != source && !z_set.contains(n))
        .collect();
    let z_nodes: Vec<LaggedNode> = z_set.into_iter().collect();

    let c = model.coefficient(target, source.var, source.lag);
    let sigma_x2 = model.sigma()[(source.var, source.var)];
    let sigma_y2 = model.sigma()[(target, target)];

    let e = DVector::from_iterator(
        w_nodes.len(),
        sidepath_entries(model, source, &w_nodes).into_iter().map(|(_, v)| v),
    );

    let mut all = w_nodes.clone();
    all.extend_from_slice(&z_nodes);
    let table = CovarianceTable::for_nodes(model, &all, tol)?;
    let ww = table.moment_matrix(&w_nodes, &w_nodes)?;
    let schur = if z_nodes.is_empty() || w_nodes.is_empty() {
        ww
    } else {
        let zz = table.moment_matrix(&z_nodes, &z_nodes)?;
        let zw = table.moment_matrix(&z_nodes, &w_nodes)?;
        let solved = solve_spd(&zz, &zw, "source parent covariance E[Z^T Z]")?;
        ww - zw.transpose() * solved
    };
    let correction = if w_nodes.is_empty() {
        0.0
    } else {
        let solved = solve_spd(&schur, &DMatrix::from_column_slice(e.len(), 1, e.as_slice()), "Schur complement S_Z")?;
        e.dot(&solved.column(0))
    };

    Ok(TheoremQuantities {
        c,
        sigma_x2,
        sigma_y2,
        w_nodes,
        z_nodes,
        sidepath_cov: e,
        schur,
        cov_xy: c * sigma_x2 - c * correction,
        var_y: sigma_y2 + c * c * sigma_x2 - c * c * correction,
        var_x: sigma_x2 - correction,
    })
}
