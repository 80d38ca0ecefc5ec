//! Stationary vector autoregressive processes with Gaussian innovations.
//!
//! A [`VarModel`] holds the lag coefficient matrices `phi[s - 1]` (the
//! coefficient of `X_{t-s}`) and the innovation covariance. [`simulate`]
//! draws realizations from it; [`validate_model`] reports the companion
//! spectral radius and whether the innovation covariance is positive definite.

use nalgebra::{Cholesky, DMatrix, Schur};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Models with a companion spectral radius at or above `1 - STATIONARITY_MARGIN`
/// are rejected.
pub const STATIONARITY_MARGIN: f64 = 1e-10;

/// Above this spectral radius estimators become badly conditioned; we only warn.
pub const NEAR_UNIT_ROOT: f64 = 0.999;

const MAX_DEFAULT_BURN_IN: usize = 10_000;

const SCHUR_MAX_ITERS: usize = 10_000;

/// An `N`-variate VAR(`p`) process `X_t = sum_s phi(s) X_{t-s} + eps_t`,
/// `eps_t ~ N(0, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct VarModel {
    phi: Vec<DMatrix<f64>>,
    sigma: DMatrix<f64>,
    var_names: Vec<String>,
}

/// On-disk layout of a model: row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub n_vars: usize,
    pub order: usize,
    pub phi: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<f64>>,
    pub var_names: Vec<String>,
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TryFrom<ModelDoc> for VarModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.phi.len() != doc.order {
            return Err(Error::Dimension(format!(
                "order is {} but {} coefficient matrices were given",
                doc.order,
                doc.phi.len()
            )));
        }
        let phi = doc
            .phi
            .iter()
            .enumerate()
            .map(|(s, m)| matrix_from_rows(m, doc.n_vars, &format!("phi[{s}]")))
            .collect::<Result<Vec<_>>>()?;
        let sigma = matrix_from_rows(&doc.sigma, doc.n_vars, "sigma")?;
        VarModel::new(phi, sigma, doc.var_names)
    }
}

impl From<VarModel> for ModelDoc {
    fn from(m: VarModel) -> Self {
        ModelDoc {
            n_vars: m.n_vars(),
            order: m.order(),
            phi: m.phi.iter().map(matrix_to_rows).collect(),
            sigma: matrix_to_rows(&m.sigma),
            var_names: m.var_names,
        }
    }
}

impl VarModel {
    /// Builds a model, checking shapes, finiteness, symmetry of `sigma` and
    /// name uniqueness. Stationarity and positive definiteness are left to
    /// [`validate_model`] so that invalid models can still be inspected.
    pub fn new(
        phi: Vec<DMatrix<f64>>,
        sigma: DMatrix<f64>,
        var_names: Vec<String>,
    ) -> Result<Self> {
        let n = sigma.nrows();
        if n == 0 || sigma.ncols() != n {
            return Err(Error::Dimension("sigma must be a non-empty square matrix".into()));
        }
        if phi.is_empty() {
            return Err(Error::Dimension("model order must be at least 1".into()));
        }
        for (s, m) in phi.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!("phi[{s}] must be {n}x{n}")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("phi[{s}] has non-finite entries")));
            }
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sigma has non-finite entries".into()));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Covariance(format!("sigma is not symmetric at ({i}, {j})")));
                }
            }
        }
        if var_names.len() != n {
            return Err(Error::Dimension(format!(
                "{} variable names given for {n} variables",
                var_names.len()
            )));
        }
        let mut sorted = var_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(Error::InvalidArgument("variable names must be distinct".into()));
        }
        Ok(VarModel { phi, sigma, var_names })
    }

    /// Model with default names `X0, X1, ...`.
    pub fn with_default_names(phi: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let names = default_names(sigma.nrows());
        Self::new(phi, sigma, names)
    }

    pub fn n_vars(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// Coefficient matrix for lag `s` (1-based); zero for lags beyond the order.
    pub fn phi(&self, s: usize) -> Option<&DMatrix<f64>> {
        if s == 0 {
            None
        } else {
            self.phi.get(s - 1)
        }
    }

    pub fn phis(&self) -> &[DMatrix<f64>] {
        &self.phi
    }

    /// `Phi_{target, source}(lag)`, zero outside the model order.
    pub fn coefficient(&self, target: usize, source: usize, lag: usize) -> f64 {
        self.phi(lag).map_or(0.0, |m| m[(target, source)])
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
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

    /// Returns a copy with `Phi_{target, source}(lag)` replaced.
    pub fn with_coefficient(&self, target: usize, source: usize, lag: usize, value: f64) -> Self {
        let mut out = self.clone();
        let n = self.n_vars();
        while out.phi.len() < lag {
            out.phi.push(DMatrix::zeros(n, n));
        }
        out.phi[lag - 1][(target, source)] = value;
        out
    }

    /// The `Np x Np` companion matrix of the stacked VAR(1) representation.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        let p = self.order();
        let mut c = DMatrix::zeros(n * p, n * p);
        for (s, m) in self.phi.iter().enumerate() {
            c.view_mut((0, s * n), (n, n)).copy_from(m);
        }
        for k in 0..n * (p - 1) {
            c[(n + k, k)] = 1.0;
        }
        c
    }

    /// Largest eigenvalue modulus of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        let c = self.companion_matrix();
        // The unbounded Schur iteration does not terminate on some nilpotent
        // matrices, so cap it and fall back to Gelfand's formula.
        match Schur::try_new(c.clone(), f64::EPSILON, SCHUR_MAX_ITERS) {
            Some(schur) => schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
            None => gelfand_radius(c),
        }
    }

    /// `10 p ceil(1 / (1 - rho))`, capped at 10^4.
    pub fn default_burn_in(&self) -> usize {
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return MAX_DEFAULT_BURN_IN;
        }
        // tolerate eigenvalue round-off, e.g. rho = 0.5 + 1e-16
        let mixing = (1.0 / (1.0 - rho) - 1e-9).ceil();
        let burn = 10.0 * self.order() as f64 * mixing;
        if burn.is_finite() {
            (burn as usize).min(MAX_DEFAULT_BURN_IN)
        } else {
            MAX_DEFAULT_BURN_IN
        }
    }
}

/// `lim ||C^k||^(1/k)` by repeated squaring, rescaling to avoid overflow.
fn gelfand_radius(mut c: DMatrix<f64>) -> f64 {
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..60 {
        let norm = c.norm();
        if norm == 0.0 {
            return 0.0;
        }
        c /= norm;
        log_scale += norm.ln() / k;
        c = &c * &c;
        k *= 2.0;
    }
    let norm = c.norm();
    if norm == 0.0 {
        0.0
    } else {
        (log_scale + norm.ln() / k).exp()
    }
}

pub(crate) fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stationary: bool,
    pub spectral_radius: f64,
    pub sigma_pd: bool,
}

/// Reports stationarity and positive definiteness of the innovation covariance.
pub fn validate_model(model: &VarModel) -> Result<ValidationReport> {
    let n = model.n_vars();
    if model.phis().iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::Dimension("coefficient matrices must be NxN".into()));
    }
    let spectral_radius = model.spectral_radius();
    let stationary = spectral_radius < 1.0 - STATIONARITY_MARGIN;
    if stationary && spectral_radius > NEAR_UNIT_ROOT {
        log::warn!(
            "spectral radius {spectral_radius} is close to one; estimates will be ill-conditioned"
        );
    }
    let sigma_pd = Cholesky::new(model.sigma().clone()).is_some();
    Ok(ValidationReport { stationary, spectral_radius, sigma_pd })
}

/// Validates and returns the lower Cholesky factor of sigma.
pub(crate) fn require_valid(model: &VarModel) -> Result<DMatrix<f64>> {
    let report = validate_model(model)?;
    if !report.stationary {
        return Err(Error::Stationarity { spectral_radius: report.spectral_radius });
    }
    Cholesky::new(model.sigma().clone())
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Covariance("Cholesky factorization failed".into()))
}

/// A `T x N` matrix of observations (row = time step).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    values: DMatrix<f64>,
    var_names: Vec<String>,
}

impl TimeSeriesData {
    pub fn new(values: DMatrix<f64>, var_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Length("time series must have at least one row".into()));
        }
        if values.ncols() != var_names.len() {
            return Err(Error::Dimension(format!(
                "{} columns but {} names",
                values.ncols(),
                var_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidArgument(format!(
                "non-finite value at row {r}, column {}",
                var_names[c]
            )));
        }
        Ok(TimeSeriesData { values, var_names })
    }

    /// Builds data from per-variable columns.
    pub fn from_columns(columns: &[Vec<f64>], var_names: Vec<String>) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::Dimension("columns must have equal length".into()));
        }
        let values = DMatrix::from_fn(t, columns.len(), |i, j| columns[j][i]);
        Self::new(values, var_names)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn column(&self, var: usize) -> &[f64] {
        let t = self.len();
        &self.values.as_slice()[var * t..(var + 1) * t]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.var_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Key(name.to_string()))
    }

    /// Rows `start..end` as a new data set.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Length(format!("invalid row range {start}..{end}")));
        }
        let values = self.values.rows(start, end - start).into_owned();
        Self::new(values, self.var_names.clone())
    }
}

/// Draws `length` steps of the process after discarding `burn_in` steps.
///
/// The state starts at zero. `burn_in = None` uses
/// [`VarModel::default_burn_in`]. Innovations are `L z` with `L` the lower
/// Cholesky factor of sigma and `z` i.i.d. standard normal from a ChaCha8
/// stream seeded by `seed`.
pub fn simulate(
    model: &VarModel,
    length: usize,
    seed: u64,
    burn_in: Option<usize>,
) -> Result<TimeSeriesData> {
    if length == 0 {
        return Err(Error::Length("simulation length must be at least 1".into()));
    }
    let chol = require_valid(model)?;
    let burn_in = burn_in.unwrap_or_else(|| model.default_burn_in());
    let n = model.n_vars();
    let total = burn_in + length;

    // Row-major copies for the inner loop.
    let phis: Vec<Vec<f64>> = model
        .phis()
        .iter()
        .map(|m| (0..n * n).map(|k| m[(k / n, k % n)]).collect())
        .collect();
    let lower: Vec<f64> = (0..n * n).map(|k| chol[(k / n, k % n)]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0f64; total * n];
    let mut z = vec![0.0f64; n];
    for t in 0..total {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let (past, rest) = buf.split_at_mut(t * n);
        let row = &mut rest[..n];
        for i in 0..n {
            let mut acc = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                acc += lower[i * n + k] * zk;
            }
            row[i] = acc;
        }
        for (s, phi) in phis.iter().enumerate() {
            let lag = s + 1;
            if lag > t {
                break;
            }
            let prev = &past[(t - lag) * n..(t - lag + 1) * n];
            for i in 0..n {
                let coeffs = &phi[i * n..(i + 1) * n];
                row[i] += coeffs.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    let values = DMatrix::from_row_slice(length, n, &buf[burn_in * n..]);
    TimeSeriesData::new(values, model.var_names().to_vec())
}
