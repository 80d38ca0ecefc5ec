//! Least squares on lagged regressors and sample partial correlation.
//!
//! All series are aligned to a common target time `t`. A node `(v, lag)`
//! contributes the value of variable `v` at `t - lag`; the first `prefix`
//! time steps are dropped once so every column uses the same samples.
//! Series are mean-centred before fitting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::LaggedNode;
use crate::model::TimeSeriesData;

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Residual sums of squares below this fraction of the centred sum of
/// squares count as a perfectly explained series.
const DEGENERATE_RATIO: f64 = 1e-20;

/// Condition number of a symmetric matrix from its eigenvalues.
pub fn symmetric_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `gram * x = rhs` for a symmetric positive definite `gram`, refusing
/// matrices whose condition number exceeds [`MAX_CONDITION`].
pub fn solve_spd(gram: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if gram.nrows() == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    let condition = symmetric_condition(gram);
    if condition > MAX_CONDITION {
        return Err(Error::Singularity { condition, context: context.to_string() });
    }
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or_else(|| Error::Singularity {
        condition,
        context: context.to_string(),
    })?;
    Ok(chol.solve(rhs))
}

/// Design matrix of lagged regressors aligned to a common target time.
#[derive(Debug, Clone)]
pub struct RegressorBlock {
    columns: Vec<LaggedNode>,
    matrix: DMatrix<f64>,
    prefix: usize,
}

impl RegressorBlock {
    pub fn columns(&self) -> &[LaggedNode] {
        &self.columns
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn q(&self) -> usize {
        self.columns.len()
    }

    /// Number of aligned samples.
    pub fn t_eff(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of leading time steps dropped by the alignment.
    pub fn prefix(&self) -> usize {
        self.prefix
    }

    /// The series of `node` on this block's rows.
    pub fn series(&self, data: &TimeSeriesData, node: LaggedNode) -> Result<DVector<f64>> {
        aligned_series(data, node, self.prefix)
    }
}

/// Values of `node` for target times `prefix..T`.
pub fn aligned_series(
    data: &TimeSeriesData,
    node: LaggedNode,
    prefix: usize,
) -> Result<DVector<f64>> {
    if node.var >= data.n_vars() {
        return Err(Error::Key(format!("variable index {} out of range", node.var)));
    }
    if node.lag > prefix {
        return Err(Error::InvalidArgument(format!(
            "lag {} exceeds the alignment prefix {prefix}",
            node.lag
        )));
    }
    if prefix >= data.len() {
        return Err(Error::Length(format!(
            "alignment prefix {prefix} leaves no samples from length {}",
            data.len()
        )));
    }
    let col = data.column(node.var);
    Ok(DVector::from_column_slice(&col[prefix - node.lag..data.len() - node.lag]))
}

/// Builds the regressor block for `nodes`, dropping `max(max lag, min_prefix)`
/// leading steps so that other series may use lags up to `min_prefix`.
pub fn build_block(
    data: &TimeSeriesData,
    nodes: &[LaggedNode],
    min_prefix: usize,
) -> Result<RegressorBlock> {
    let prefix = nodes.iter().map(|n| n.lag).max().unwrap_or(0).max(min_prefix);
    if prefix >= data.len() {
        return Err(Error::Length(format!(
            "largest lag {prefix} needs more than {} samples",
            data.len()
        )));
    }
    let t_eff = data.len() - prefix;
    let mut matrix = DMatrix::zeros(t_eff, nodes.len());
    for (j, &node) in nodes.iter().enumerate() {
        matrix.set_column(j, &aligned_series(data, node, prefix)?);
    }
    Ok(RegressorBlock { columns: nodes.to_vec(), matrix, prefix })
}

fn centered(v: &DVector<f64>) -> DVector<f64> {
    let mean = v.mean();
    v.map(|x| x - mean)
}

/// A fitted orthogonal factorization of a centred design, reusable for
/// several responses.
#[derive(Debug, Clone)]
pub struct Regression {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    t_eff: usize,
}

impl Regression {
    pub fn fit(block: &RegressorBlock) -> Result<Self> {
        let t_eff = block.t_eff();
        let k = block.q();
        if k == 0 {
            return Ok(Regression { q: DMatrix::zeros(t_eff, 0), r: DMatrix::zeros(0, 0), t_eff });
        }
        if t_eff <= k {
            return Err(Error::Length(format!("{t_eff} samples for {k} regressors")));
        }
        let mut design = block.matrix().clone();
        for mut col in design.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let qr = design.qr();
        let r = qr.r();
        // cond(R) = cond(design); R is small so a full SVD is cheap
        let sv = r.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        // the Gram matrix has the squared condition number
        if !(condition * condition <= MAX_CONDITION) {
            return Err(Error::Singularity {
                condition: condition * condition,
                context: "regressor Gram matrix".into(),
            });
        }
        Ok(Regression { q: qr.q(), r, t_eff })
    }

    fn check_len(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.t_eff {
            return Err(Error::Dimension(format!(
                "response has {} samples, block has {}",
                y.len(),
                self.t_eff
            )));
        }
        Ok(())
    }

    pub fn coefficients(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y)?;
        if self.r.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        let qty = self.q.tr_mul(&centered(y));
        self.r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Singularity { condition: f64::INFINITY, context: "R factor".into() })
    }

    /// Residual of the centred response after projecting out the design.
    pub fn residuals(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y)?;
        let yc = centered(y);
        if self.q.ncols() == 0 {
            return Ok(yc);
        }
        let proj = &self.q * self.q.tr_mul(&yc);
        Ok(yc - proj)
    }
}

/// Least-squares coefficients of `y` on the block (both centred).
pub fn ols(block: &RegressorBlock, y: &DVector<f64>) -> Result<DVector<f64>> {
    Regression::fit(block)?.coefficients(y)
}

/// Pearson correlation of two residual series, rejecting degenerate ones.
pub fn residual_correlation(
    rx: &DVector<f64>,
    ry: &DVector<f64>,
    x_scale: f64,
    y_scale: f64,
) -> Result<f64> {
    let sxx = rx.norm_squared();
    let syy = ry.norm_squared();
    if !(sxx > DEGENERATE_RATIO * x_scale) || !(syy > DEGENERATE_RATIO * y_scale) {
        return Err(Error::Degenerate("residual variance vanishes".into()));
    }
    let rho = rx.dot(ry) / (sxx * syy).sqrt();
    Ok(rho.clamp(-1.0, 1.0))
}

/// Correlation of the residuals of `x` and `y` after regressing each on the block.
pub fn partial_correlation(
    x: &DVector<f64>,
    y: &DVector<f64>,
    block: &RegressorBlock,
) -> Result<f64> {
    let reg = Regression::fit(block)?;
    let (rx, ry) = (reg.residuals(x)?, reg.residuals(y)?);
    residual_correlation(
        &rx,
        &ry,
        centered(x).norm_squared().max(f64::MIN_POSITIVE),
        centered(y).norm_squared().max(f64::MIN_POSITIVE),
    )
}

/// Sample partial correlation with its sample size and condition count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialCorrelation {
    pub estimate: f64,
    pub n_eff: usize,
    pub q: usize,
}

/// Residual series of two nodes given a condition set, on one alignment.
#[derive(Debug, Clone)]
pub struct ResidualPair {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub x_scale: f64,
    pub y_scale: f64,
    pub q: usize,
}

impl ResidualPair {
    pub fn n_eff(&self) -> usize {
        self.x.len()
    }

    pub fn correlation(&self) -> Result<f64> {
        residual_correlation(&self.x, &self.y, self.x_scale, self.y_scale)
    }
}

/// Regresses `a` and `b` on `conds`, all aligned at the largest lag involved.
pub fn residual_pair(
    data: &TimeSeriesData,
    a: LaggedNode,
    b: LaggedNode,
    conds: &[LaggedNode],
) -> Result<ResidualPair> {
    let prefix = a.lag.max(b.lag);
    let block = build_block(data, conds, prefix)?;
    let reg = Regression::fit(&block)?;
    let x = block.series(data, a)?;
    let y = block.series(data, b)?;
    Ok(ResidualPair {
        x_scale: centered(&x).norm_squared().max(f64::MIN_POSITIVE),
        y_scale: centered(&y).norm_squared().max(f64::MIN_POSITIVE),
        x: reg.residuals(&x)?,
        y: reg.residuals(&y)?,
        q: conds.len(),
    })
}

/// `rho(a; b | conds)` estimated from data.
pub fn sample_partial_correlation(
    data: &TimeSeriesData,
    a: LaggedNode,
    b: LaggedNode,
    conds: &[LaggedNode],
) -> Result<PartialCorrelation> {
    let pair = residual_pair(data, a, b, conds)?;
    Ok(PartialCorrelation { estimate: pair.correlation()?, n_eff: pair.n_eff(), q: pair.q })
}
