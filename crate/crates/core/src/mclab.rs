//! Monte Carlo ensembles of short simulations: sampling distributions of the
//! t-statistics, q-q data against Student-t, and Kolmogorov-Smirnov fits.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::{graph_from_model, sidepath_nodes, LaggedNode, DEFAULT_LINK_EPS, DEFAULT_SIDEPATH_EPS};
use crate::measures::{condition_set, measure_with_conditions, MeasureKind, DEGENERATE_ESTIMATE};
use crate::model::{require_valid, simulate, VarModel};
use crate::seeds;

/// Smallest ensemble accepted by the routines here.
pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSample {
    pub kind: MeasureKind,
    /// t-statistics of the non-degenerate replications, in replication order.
    pub t_values: Vec<f64>,
    pub df: usize,
    pub model_tag: String,
    pub reps: usize,
    /// Replications dropped because the estimate hit `|rho| = 1`.
    pub excluded: usize,
}

impl EnsembleSample {
    /// Wraps externally produced t-values.
    pub fn from_values(kind: MeasureKind, t_values: Vec<f64>, df: usize, tag: &str) -> Result<Self> {
        if t_values.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("t-values must be finite".into()));
        }
        if df < 1 {
            return Err(Error::DegreesOfFreedom("df must be at least 1".into()));
        }
        Ok(EnsembleSample {
            kind,
            reps: t_values.len(),
            t_values,
            df,
            model_tag: tag.to_string(),
            excluded: 0,
        })
    }

    fn require_reps(&self) -> Result<()> {
        if self.t_values.len() < MIN_REPS {
            return Err(Error::InvalidArgument(format!(
                "at least {MIN_REPS} replications are required, got {}",
                self.t_values.len()
            )));
        }
        Ok(())
    }

    fn distribution(&self) -> StudentsT {
        StudentsT::new(0.0, 1.0, self.df as f64).expect("df is positive")
    }
}

/// Simulates `reps` series of length `length` and collects the t-statistic of
/// `kind` for `source -> target_t`, conditioning on the model's own graph.
///
/// Replication `i` simulates with a seed derived from `(seed, i)`, so the
/// result does not depend on how the work is scheduled.
pub fn run_ensemble(
    model: &VarModel,
    kind: MeasureKind,
    source: LaggedNode,
    target: usize,
    length: usize,
    reps: usize,
    seed: u64,
) -> Result<EnsembleSample> {
    if reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!("reps must be at least {MIN_REPS}")));
    }
    if kind == MeasureKind::Cmit || source.lag == 0 {
        return Err(Error::InvalidArgument("ensembles cover lagged measures only".into()));
    }
    require_valid(model)?;
    if source.var >= model.n_vars() || target >= model.n_vars() {
        return Err(Error::Key("variable index out of range".into()));
    }
    let graph = graph_from_model(model, DEFAULT_LINK_EPS)?;
    let a_star = if kind == MeasureKind::Mits && graph.has_link(source.var, target, source.lag) {
        sidepath_nodes(&graph, model, source, target, DEFAULT_SIDEPATH_EPS)?
    } else {
        BTreeSet::new()
    };
    let conds = condition_set(&graph, kind, source, target, &a_star)?;
    let prefix = conds.iter().map(|n| n.lag).max().unwrap_or(0).max(source.lag);
    let q = conds.len();
    if length <= prefix + q + 3 {
        return Err(Error::Length(format!(
            "series length {length} too short for lag {prefix} and {q} conditions"
        )));
    }
    let df = length - prefix - 2 - q;

    let outcomes: Vec<Option<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let data = simulate(model, length, seeds::derive(seed, i), None)?;
            match measure_with_conditions(&data, kind, source, target, &conds) {
                Ok(r) if r.estimate.abs() < DEGENERATE_ESTIMATE => Ok(Some(r.t_stat)),
                Ok(_) | Err(Error::Degenerate(_)) | Err(Error::Singularity { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let t_values: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let excluded = reps - t_values.len();
    if excluded > 0 {
        log::info!("{excluded} of {reps} replications were degenerate and excluded");
    }
    Ok(EnsembleSample {
        kind,
        reps: t_values.len(),
        t_values,
        df,
        model_tag: format!(
            "{kind} {}(t-{}) -> {}(t), T = {length}",
            model.var_names()[source.var],
            source.lag,
            model.var_names()[target]
        ),
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub empirical: f64,
    /// Asymptotic standard error of the empirical quantile under the reference law.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqPlot {
    pub points: Vec<QqPoint>,
    /// All empirical values coincide, so the plot is a vertical line.
    pub degenerate: bool,
}

impl QqPlot {
    /// Largest `|empirical - theoretical|` over plotting positions in `[lo, hi]`.
    pub fn max_deviation(&self, lo: f64, hi: f64) -> f64 {
        let n = self.points.len() as f64;
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let p = (*i as f64 + 0.5) / n;
                p >= lo && p <= hi
            })
            .map(|(_, pt)| (pt.empirical - pt.theoretical).abs())
            .fold(0.0, f64::max)
    }
}

/// Sorted t-values against Student-t quantiles at plotting positions `(i - 0.5)/n`.
pub fn qq_points(sample: &EnsembleSample) -> Result<QqPlot> {
    sample.require_reps()?;
    let dist = sample.distribution();
    let mut sorted = sample.t_values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &empirical)| {
            let p = (i as f64 + 0.5) / n;
            let theoretical = dist.inverse_cdf(p);
            let std_error = (p * (1.0 - p) / n).sqrt() / dist.pdf(theoretical);
            QqPoint { theoretical, empirical, std_error }
        })
        .collect();
    let degenerate = sorted.first() == sorted.last();
    Ok(QqPlot { points, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
}

/// One-sample Kolmogorov-Smirnov test of the t-values against Student-t with
/// `sample.df` degrees of freedom, with the asymptotic p-value.
pub fn ks_test(sample: &EnsembleSample) -> Result<KsResult> {
    sample.require_reps()?;
    let dist = sample.distribution();
    let mut sorted = sample.t_values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult { d, p: kolmogorov_sf(n.sqrt() * d) })
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi theta form of the CDF, fast for small x
        let c = -PI * PI / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            let term = (c * m * m).exp();
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        (1.0 - (2.0 * PI).sqrt() / x * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Summary of an ensemble as written by the command line front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub kind: MeasureKind,
    pub model_tag: String,
    pub df: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
    pub reps: usize,
    pub excluded_count: usize,
}

pub fn summarize(sample: &EnsembleSample) -> Result<EnsembleSummary> {
    let ks = ks_test(sample)?;
    Ok(EnsembleSummary {
        kind: sample.kind,
        model_tag: sample.model_tag.clone(),
        df: sample.df,
        d: ks.d,
        p: ks.p,
        reps: sample.reps,
        excluded_count: sample.excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StudentT};

    fn t_sample(df: usize, n: usize, seed: u64) -> EnsembleSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = StudentT::new(df as f64).unwrap();
        let v = (0..n).map(|_| dist.sample(&mut rng)).collect();
        EnsembleSample::from_values(MeasureKind::Mit, v, df, "synthetic").unwrap()
    }

    fn bivariate(a: f64, b: f64, c: f64) -> VarModel {
        let phi = DMatrix::from_row_slice(2, 2, &[a, 0.0, c, b]);
        VarModel::new(vec![phi], DMatrix::identity(2, 2), vec!["X".into(), "Y".into()]).unwrap()
    }

    #[test]
    fn kolmogorov_reference_values() {
        // scipy.special.kolmogorov
        assert_abs_diff_eq!(kolmogorov_sf(0.5), 0.9639452436648751, epsilon = 1e-9);
        assert_abs_diff_eq!(kolmogorov_sf(1.0), 0.26999967167735456, epsilon = 1e-9);
        assert_abs_diff_eq!(kolmogorov_sf(1.36), 0.049485876755377876, epsilon = 1e-9);
        assert_abs_diff_eq!(kolmogorov_sf(2.0), 0.0006709252557796953, epsilon = 1e-9);
        assert_abs_diff_eq!(kolmogorov_sf(0.2), 1.0, epsilon = 1e-9);
        // both branches agree where they meet
        assert_abs_diff_eq!(kolmogorov_sf(1.0 - 1e-12), kolmogorov_sf(1.0), epsilon = 1e-9);
    }

    #[test]
    fn ks_detects_shift() {
        let mut s = t_sample(10, 1000, 1);
        assert!(ks_test(&s).unwrap().p > 1e-3);
        s.t_values.iter_mut().for_each(|t| *t += 1.0);
        assert!(ks_test(&s).unwrap().p < 1e-6);
    }

    #[test]
    fn qq_of_exact_sample_is_diagonal() {
        let s = t_sample(14, 5000, 2);
        let qq = qq_points(&s).unwrap();
        assert!(!qq.degenerate);
        assert_eq!(qq.points.len(), 5000);
        let outside = qq
            .points
            .iter()
            .filter(|p| (p.empirical - p.theoretical).abs() > 3.0 * p.std_error)
            .count();
        assert!(outside < 100, "{outside} points outside 3 standard errors");
        assert_abs_diff_eq!(qq.points[2500].theoretical, 0.0, epsilon = 1e-3);
    }

    #[test]
    fn constant_sample_is_flagged() {
        let s = EnsembleSample::from_values(MeasureKind::Cc, vec![0.3; 200], 5, "const").unwrap();
        assert!(qq_points(&s).unwrap().degenerate);
        let small = EnsembleSample::from_values(MeasureKind::Cc, vec![0.3; 50], 5, "small").unwrap();
        assert!(qq_points(&small).is_err() && ks_test(&small).is_err());
    }

    #[test]
    fn ensemble_is_reproducible() {
        let m = bivariate(0.9, 0.9, 0.0);
        let a = run_ensemble(&m, MeasureKind::Mit, LaggedNode::new(0, 1), 1, 20, 200, 7).unwrap();
        let b = run_ensemble(&m, MeasureKind::Mit, LaggedNode::new(0, 1), 1, 20, 200, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.df, 20 - 2 - 2 - 2);
        assert_eq!(a.reps + a.excluded, 200);
        let cc = run_ensemble(&m, MeasureKind::Cc, LaggedNode::new(0, 1), 1, 20, 200, 7).unwrap();
        assert_eq!(cc.df, 17);
        assert!(run_ensemble(&m, MeasureKind::Mit, LaggedNode::new(0, 1), 1, 20, 50, 7).is_err());
    }

    #[test]
    fn white_noise_cc_fits_student_t() {
        let m = bivariate(0.0, 0.0, 0.0);
        let s = run_ensemble(&m, MeasureKind::Cc, LaggedNode::new(0, 1), 1, 20, 2000, 11).unwrap();
        assert!(ks_test(&s).unwrap().p > 0.001);
    }
}
