#![allow(dead_code)]

use mvtc_core::prelude::*;
use mvtc_core::graph::DEFAULT_SIDEPATH_EPS;
use nalgebra::DMatrix;
use rand::Rng;

pub fn bivariate(a: f64, b: f64, c: f64) -> VarModel {
    let phi = DMatrix::from_row_slice(2, 2, &[a, 0.0, c, b]);
    VarModel::new(vec![phi], DMatrix::identity(2, 2), vec!["X".into(), "Y".into()]).unwrap()
}

/// X -> W at lag 1 (d), W -> Y at lag 1 (b), X -> Y at lag 2 (c).
pub fn sidepath_model(c: f64, d: f64, b: f64) -> VarModel {
    let mut phi1 = DMatrix::zeros(3, 3);
    phi1[(1, 0)] = d;
    phi1[(2, 1)] = b;
    let mut phi2 = DMatrix::zeros(3, 3);
    phi2[(2, 0)] = c;
    VarModel::new(vec![phi1, phi2], DMatrix::identity(3, 3), vec!["X".into(), "W".into(), "Y".into()])
        .unwrap()
}

/// A random stationary model with a designated link `source -> target` that
/// has no sidepath.
pub struct LinkedModel {
    pub model: VarModel,
    pub source: LaggedNode,
    pub target: usize,
}

fn signed(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let v = rng.random_range(lo..hi);
    if rng.random_bool(0.5) { v } else { -v }
}

pub fn random_linked_model(rng: &mut impl Rng) -> LinkedModel {
    loop {
        let n = rng.random_range(2..=4usize);
        let p = rng.random_range(1..=3usize);
        let mut phi = vec![DMatrix::zeros(n, n); p];
        for (s, m) in phi.iter_mut().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let prob = if i == j && s == 0 { 0.7 } else { 0.2 };
                    if rng.random_bool(prob) {
                        m[(i, j)] = signed(rng, 0.1, 0.5);
                    }
                }
            }
        }
        let x = rng.random_range(0..n);
        let y = (x + rng.random_range(1..n)) % n;
        let tau = rng.random_range(1..=p);
        let c = signed(rng, 0.2, 0.6);
        phi[tau - 1][(y, x)] = c;
        let sigma = DMatrix::from_fn(n, n, |i, j| if i == j { rng.random_range(0.5..2.0) } else { 0.0 });
        let Ok(mut model) = VarModel::with_default_names(phi.clone(), sigma.clone()) else { continue };
        let rho = model.spectral_radius();
        if rho > 0.9 {
            // shrink everything but the designated coefficient
            let scale = 0.85 / rho;
            let shrunk: Vec<_> = phi.iter().map(|m| m * scale).collect();
            model = VarModel::with_default_names(shrunk, sigma).unwrap();
            model = model.with_coefficient(y, x, tau, c);
            if model.spectral_radius() > 0.95 {
                continue;
            }
        }
        let graph = graph_from_model(&model, DEFAULT_LINK_EPS).unwrap();
        let source = LaggedNode::new(x, tau);
        if sidepath_nodes(&graph, &model, source, y, DEFAULT_SIDEPATH_EPS).unwrap().is_empty() {
            return LinkedModel { model, source, target: y };
        }
    }
}

/// `Gamma(0..=tau_max)` from the discrete Lyapunov equation of the companion
/// form, solved densely through the Kronecker product.
pub fn lyapunov_gammas(model: &VarModel, tau_max: usize) -> Vec<DMatrix<f64>> {
    let n = model.n_vars();
    let a = model.companion_matrix();
    let k = a.nrows();
    let mut q = DMatrix::zeros(k, k);
    q.view_mut((0, 0), (n, n)).copy_from(model.sigma());
    let lhs = DMatrix::identity(k * k, k * k) - a.kronecker(&a);
    let vec_q = DMatrix::from_column_slice(k * k, 1, q.as_slice());
    let vec_p = lhs.lu().solve(&vec_q).expect("stationary model");
    let p = DMatrix::from_column_slice(k, k, vec_p.as_slice());
    let mut out = Vec::new();
    let mut power = DMatrix::identity(k, k);
    for _ in 0..=tau_max {
        out.push((&power * &p).view((0, 0), (n, n)).into_owned());
        power = &a * power;
    }
    out
}

/// Sample `E[X_{t+tau} X_t^T]` about the sample mean.
pub fn sample_gamma(data: &TimeSeriesData, tau: usize) -> DMatrix<f64> {
    let v = data.values();
    let t = v.nrows();
    let means: Vec<f64> = (0..v.ncols()).map(|j| v.column(j).mean()).collect();
    DMatrix::from_fn(v.ncols(), v.ncols(), |i, j| {
        (0..t - tau)
            .map(|s| (v[(s + tau, i)] - means[i]) * (v[(s, j)] - means[j]))
            .sum::<f64>()
            / (t - tau) as f64
    })
}
