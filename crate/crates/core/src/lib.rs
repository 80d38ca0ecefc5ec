//! Coupling strength of links in multivariate autoregressive processes.
//!
//! The crate simulates VAR processes, computes their lagged covariance in
//! closed form, and estimates partial correlation measures (MIT, ITY, ITX,
//! MITS) on time series graphs together with Student-t significance tests.
//!
//! ```
//! use mvtc_core::prelude::*;
//! use nalgebra::DMatrix;
//!
//! let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.3, 0.4]);
//! let model = VarModel::new(vec![phi], DMatrix::identity(2, 2), vec!["X".into(), "Y".into()]).unwrap();
//! let graph = graph_from_model(&model, DEFAULT_LINK_EPS).unwrap();
//! let q = theorem_quantities(&model, &graph, LaggedNode::new(0, 1), 1, DEFAULT_SERIES_TOL).unwrap();
//! assert!((q.mit() - 0.3 / (1.0f64 + 0.09).sqrt()).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod analyze;
pub mod error;
pub mod graph;
pub mod infer;
pub mod io;
pub mod linreg;
pub mod mclab;
pub mod measures;
pub mod model;
mod seeds;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::analytic::{
        analytic_cross_correlation, analytic_partial_correlation, lagged_covariance, psi,
        sidepath_covariance, theorem_quantities, CovarianceTable, PsiSequence, TheoremQuantities,
        DEFAULT_SERIES_TOL,
    };
    pub use crate::error::{Error, Result};
    pub use crate::graph::{
        ancestors, graph_from_model, parents, sidepath_nodes, ContemporaneousRule, LaggedNode,
        TimeSeriesGraph, DEFAULT_LINK_EPS,
    };
    pub use crate::infer::{infer_graph, infer_parents, InferenceConfig};
    pub use crate::measures::{
        bootstrap_ci, contemporaneous_mit, coupling_measure, cross_correlation_function, mits,
        significance, MeasureKind, MeasureResult, SidepathSource,
    };
    pub use crate::model::{simulate, validate_model, TimeSeriesData, VarModel};
}
