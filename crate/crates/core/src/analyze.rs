//! The lag-function matrix workflow: lagged cross correlations of every pair,
//! MIT at the links of an estimated graph, significance and bootstrap
//! intervals, in one table.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LaggedNode, TimeSeriesGraph};
use crate::infer::{infer_graph, InferenceConfig};
use crate::measures::{
    bootstrap_ci, bootstrap_ci_with_conditions, cross_correlation_function, ConfidenceInterval,
    MeasureKind, MeasureResult, DEFAULT_BOOTSTRAP_REPS,
};
use crate::model::TimeSeriesData;
use crate::seeds;

/// Removes the mean of each phase `t mod period` from every column, e.g. the
/// calendar-month climatology of monthly data with `period = 12`.
pub fn deseasonalize(data: &TimeSeriesData, period: usize) -> Result<TimeSeriesData> {
    if period < 2 {
        return Err(Error::InvalidArgument("period must be at least 2".into()));
    }
    if data.len() < 2 * period {
        return Err(Error::Length(format!("need at least two full periods of {period} steps")));
    }
    let mut values = data.values().clone();
    for mut col in values.column_iter_mut() {
        for phase in 0..period {
            let (sum, count) = col
                .iter()
                .skip(phase)
                .step_by(period)
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            let mean = sum / count as f64;
            for t in (phase..col.len()).step_by(period) {
                col[t] -= mean;
            }
        }
    }
    TimeSeriesData::new(values, data.var_names().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    pub inference: InferenceConfig,
    /// Bootstrap interval level.
    pub level: f64,
    /// Bootstrap replicates; 0 disables intervals.
    pub n_boot: usize,
    pub seed: u64,
    /// Period for per-phase mean removal, if any.
    pub deseasonalize: Option<usize>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            inference: InferenceConfig::default(),
            level: 0.9,
            n_boot: DEFAULT_BOOTSTRAP_REPS,
            seed: 0,
            deseasonalize: None,
        }
    }
}

/// One `(source, target, lag)` cell of the lag-function matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagFunctionRow {
    pub source: String,
    pub target: String,
    pub lag: usize,
    pub cc: f64,
    pub cc_p: f64,
    pub cc_significant: bool,
    pub cc_ci_low: Option<f64>,
    pub cc_ci_high: Option<f64>,
    /// Present where the estimated graph has the link.
    pub mit: Option<f64>,
    pub mit_p: Option<f64>,
    pub mit_significant: bool,
    pub mit_ci_low: Option<f64>,
    pub mit_ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub graph: TimeSeriesGraph,
    pub links: Vec<MeasureResult>,
    pub rows: Vec<LagFunctionRow>,
}

impl Analysis {
    pub fn row(&self, source: &str, target: &str, lag: usize) -> Option<&LagFunctionRow> {
        self.rows.iter().find(|r| r.source == source && r.target == target && r.lag == lag)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs graph estimation and fills the lag-function matrix for lags
/// `0..=tau_max` (lag 0 only for distinct variables).
pub fn analyze(data: &TimeSeriesData, config: &AnalyzeConfig) -> Result<Analysis> {
    let owned;
    let data = match config.deseasonalize {
        Some(period) => {
            owned = deseasonalize(data, period)?;
            &owned
        }
        None => data,
    };
    let tau_max = config.inference.tau_max;
    let alpha = config.inference.alpha;
    let inferred = infer_graph(data, &config.inference)?;
    let names = data.var_names();
    let n = data.n_vars();

    let mut links = inferred.links.clone();
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for x in 0..n {
        for y in 0..n {
            let cc = cross_correlation_function(data, x, y, tau_max)?;
            for r in cc.into_iter().filter(|r| x != y || r.source.lag > 0) {
                let lag = r.source.lag;
                cell += 1;
                let cc_ci = interval(config, || {
                    bootstrap_ci_with_conditions(
                        data,
                        r.source,
                        y,
                        &[],
                        config.level,
                        config.n_boot,
                        seeds::derive(config.seed, 2 * cell),
                    )
                })?;
                let mut row = LagFunctionRow {
                    source: names[x].clone(),
                    target: names[y].clone(),
                    lag,
                    cc: r.estimate,
                    cc_p: r.p_value,
                    cc_significant: r.p_value < alpha,
                    cc_ci_low: cc_ci.map(|c| c.low),
                    cc_ci_high: cc_ci.map(|c| c.high),
                    mit: None,
                    mit_p: None,
                    mit_significant: false,
                    mit_ci_low: None,
                    mit_ci_high: None,
                };
                if let Some(link) = links
                    .iter_mut()
                    .find(|l| l.source == LaggedNode::new(x, lag) && l.target == y)
                {
                    let ci = interval(config, || {
                        bootstrap_ci(
                            data,
                            &inferred.graph,
                            MeasureKind::Mit,
                            link.source,
                            y,
                            config.level,
                            config.n_boot,
                            seeds::derive(config.seed, 2 * cell + 1),
                        )
                    })?;
                    link.ci = ci;
                    row.mit = Some(link.estimate);
                    row.mit_p = Some(link.p_value);
                    row.mit_significant = link.p_value < alpha;
                    row.mit_ci_low = ci.map(|c| c.low);
                    row.mit_ci_high = ci.map(|c| c.high);
                }
                rows.push(row);
            }
        }
    }
    Ok(Analysis { graph: inferred.graph, links, rows })
}

fn interval(
    config: &AnalyzeConfig,
    f: impl FnOnce() -> Result<ConfidenceInterval>,
) -> Result<Option<ConfidenceInterval>> {
    if config.n_boot == 0 {
        Ok(None)
    } else {
        f().map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, VarModel};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn deseasonalize_removes_phase_means() {
        let col: Vec<f64> = (0..48).map(|t| (t % 12) as f64 * 2.0 + 1.0).collect();
        let d = TimeSeriesData::from_columns(&[col], vec!["a".into()]).unwrap();
        let out = deseasonalize(&d, 12).unwrap();
        assert!(out.column(0).iter().all(|v| v.abs() < 1e-12));
        assert!(deseasonalize(&d, 1).is_err());
        assert!(deseasonalize(&d.slice_rows(0, 20).unwrap(), 12).is_err());
    }

    #[test]
    fn analysis_table_shape() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.3, 0.4]);
        let m = VarModel::new(vec![phi], DMatrix::identity(2, 2), vec!["X".into(), "Y".into()]).unwrap();
        let d = simulate(&m, 2_000, 9, None).unwrap();
        let config = AnalyzeConfig {
            inference: InferenceConfig { tau_max: 3, ..Default::default() },
            n_boot: 100,
            ..Default::default()
        };
        let a = analyze(&d, &config).unwrap();
        // 2 auto pairs x 3 lags + 2 cross pairs x 4 lags
        assert_eq!(a.rows.len(), 14);
        let xy1 = a.row("X", "Y", 1).unwrap();
        assert!(xy1.mit.is_some() && xy1.mit_significant && xy1.cc_significant);
        assert!(xy1.mit_ci_low.unwrap() < xy1.mit.unwrap());
        assert_abs_diff_eq!(xy1.mit.unwrap(), 0.3 / 1.09f64.sqrt(), epsilon = 0.07);
        assert!(a.links.iter().all(|l| l.ci.is_some()));
        assert_eq!(analyze(&d, &config).unwrap(), a);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("source,target,lag,cc,cc_p,"));
        assert_eq!(text.lines().count(), 15);
    }
}
