//! Two-stage training on a pruned support: one large first-layer gradient
//! step from a symmetric initialization restricted to `J`, then ridge
//! regression on the resulting random features.
//!
//! In multi-index mode the first-order component `μ̂ = (1/n) Σ y_i x_i`,
//! restricted to `J`, is fitted separately and added back at prediction time.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::model::{augment, sample_dataset, Dataset, IndexModel};
use crate::network::{pairwise_output, partner, relu, symmetric_bias, symmetric_output_and_bias, NetParams};
use crate::numeric::{neumaier_sum, CompensatedVec};
use crate::pruning::{prune_network, BiasInit, PruneConfig, Source, SupportSet};
use crate::rng::{seeded, STREAM_BIAS, STREAM_REINIT};

/// Index model family the pipeline is configured for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Single-index: no first-order preprocessing.
    Single,
    /// Multi-index: subtract and re-add `⟨μ̂|_J, x⟩`.
    Multi,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "multi" => Ok(Mode::Multi),
            other => Err(invalid(format!("unknown mode `{other}` (single|multi)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Multi => "multi",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// First-layer step size; the first-layer weight decay is always `1/eta1`.
    pub eta1: f64,
    pub lambda_t: f64,
    pub t_max: usize,
    /// Relative gradient tolerance: stop once `‖∇‖ ≤ grad_tol · (1 + |objective|)`.
    pub grad_tol: f64,
    /// Sparsity level `M` passed to pruning.
    pub sparsity: usize,
    pub c: f64,
    pub m: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Skip pruning and train on `J = [d]`.
    pub unpruned: bool,
    pub prune_bias: BiasInit,
}

/// Calibration constant of the default first-layer step.
pub const DEFAULT_KAPPA: f64 = 1.0;
/// Default relative stopping tolerance of the second layer.
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;

impl TrainConfig {
    /// Defaults for augmented dimension `d`, sample size `n` and information
    /// exponent `k_star`:
    /// `η_1 = κ ln(d) M^{(k*−1)/2}` (single) or `κ ln(d) M` (multi), `λ_t = m / ln² d`,
    /// `T_max = 50 ⌈ln(n m)⌉`, `c = 1 / ln d`.
    pub fn defaults(d: usize, n: usize, sparsity: usize, m: usize, mode: Mode, k_star: usize, kappa: f64, seed: u64) -> Self {
        let big_m = sparsity as f64;
        let ln_d = (d as f64).ln();
        let eta1 = kappa
            * ln_d
            * match mode {
                Mode::Single => big_m.powf((k_star.max(1) as f64 - 1.0) / 2.0),
                Mode::Multi => big_m,
            };
        Self {
            eta1,
            lambda_t: m as f64 / (ln_d * ln_d),
            t_max: 50 * ((n * m) as f64).ln().ceil().max(1.0) as usize,
            grad_tol: DEFAULT_GRAD_TOL,
            sparsity,
            c: 1.0 / ln_d,
            m,
            mode,
            seed,
            unpruned: false,
            prune_bias: BiasInit::Gaussian,
        }
    }

    /// First-layer weight decay, tied to the step.
    pub fn lambda1(&self) -> f64 {
        1.0 / self.eta1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 > 0.0 && self.eta1.is_finite()) {
            return Err(invalid("eta1 must be positive and finite"));
        }
        if !(self.lambda_t > 0.0) {
            return Err(invalid("lambda_t must be positive"));
        }
        if self.t_max < 1 {
            return Err(invalid("T_max must be at least 1"));
        }
        if self.m < 1 {
            return Err(invalid("m must be at least 1"));
        }
        Ok(())
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig { bias_init: self.prune_bias, ..PruneConfig::new(self.sparsity, self.c, self.m, self.seed) }
    }
}

/// Fitted network plus the first-order term.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub a: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `μ̂|_J`; zero in single-index mode.
    pub mu_hat: Array1<f64>,
    pub support: SupportSet,
    pub m: usize,
}

/// Fresh `a(0), b(0)` and first-layer rows uniform on the unit sphere of `span{e_j : j ∈ J}`.
pub fn restricted_reinit(support: &SupportSet, m: usize, d: usize, seed: u64) -> Result<NetParams> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if support.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: support.dim() });
    }
    if m < 1 {
        return Err(invalid("m must be at least 1"));
    }
    let mut rng = seeded(seed, STREAM_REINIT);
    let (a, b) = symmetric_output_and_bias(m, &mut rng);
    let positions = support.positions();
    let mut w = Array2::zeros((2 * m, d));
    for j in 0..m {
        let draw: Vec<f64> = positions.iter().map(|_| rng.sample(StandardNormal)).collect();
        let norm = draw.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (&p, x) in positions.iter().zip(&draw) {
            w[[j, p]] = x / norm;
            w[[partner(j, m), p]] = x / norm;
        }
    }
    Ok(NetParams { a, w, b, m })
}

/// Gradient rows `∇_{W_j} R_n` restricted to `J`, computed from the columns in `J` only.
pub fn restricted_gradient(data: &Dataset, net: &NetParams, support: &SupportSet) -> Result<Array2<f64>> {
    let (n, d) = data.x.dim();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if net.d() != d || support.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: net.d() });
    }
    let positions = support.positions();
    let xj = data.x.select(Axis(1), &positions).as_standard_layout().into_owned();
    let wj = net.w.select(Axis(1), &positions);
    let pre = xj.dot(&wj.t());
    let m = net.m;
    let mut out = Array2::zeros((2 * m, d));
    for j in 0..m {
        let mut acc = CompensatedVec::zeros(positions.len());
        for i in 0..n {
            if pre[[i, j]] + net.b[j] > 0.0 {
                acc.add_scaled(data.y[i], xj.row(i).as_slice().expect("row-major"));
            }
        }
        let sum = acc.value();
        let scale_j = -net.a[j] / n as f64;
        let k = partner(j, m);
        let scale_k = -net.a[k] / n as f64;
        for (q, &p) in positions.iter().enumerate() {
            out[[j, p]] = scale_j * sum[q];
            out[[k, p]] = scale_k * sum[q];
        }
    }
    Ok(out)
}

/// `W(1) = W(0) − η_1 (∇|_J + λ_1 W(0))` with `λ_1 = 1/η_1`. The decay cancels
/// `W(0)` exactly, leaving `W(1) = −η_1 ∇|_J`.
pub fn first_layer_step(data: &Dataset, net: &NetParams, support: &SupportSet, eta1: f64) -> Result<Array2<f64>> {
    if !(eta1 > 0.0) {
        return Err(invalid("eta1 must be positive"));
    }
    let grad = restricted_gradient(data, net, support)?;
    // Only the support columns are scaled, so entries outside J stay +0.
    let mut w1 = Array2::zeros(grad.raw_dim());
    for p in support.positions() {
        w1.column_mut(p).zip_mut_with(&grad.column(p), |w, g| *w = -eta1 * g);
    }
    Ok(w1)
}

/// Second-layer solution and solver diagnostics.
#[derive(Debug, Clone)]
pub struct SecondLayer {
    pub a: Array1<f64>,
    pub b1: Array1<f64>,
    /// Objective after each iteration, starting with the value at `a = 0`.
    pub objective: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Hidden features `φ(W x_i + b)` for every sample.
pub fn hidden_features(x: ndarray::ArrayView2<f64>, w: ndarray::ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut h = x.dot(&w.t());
    h += &b.insert_axis(Axis(0));
    h.mapv_inplace(relu);
    h
}

/// Ridge objective `R_n(a) + (λ/2)‖a‖²` in Gram form.
struct Ridge {
    gram: Array2<f64>,
    rhs: Array1<f64>,
    y_sq: f64,
    lambda: f64,
}

impl Ridge {
    fn new(features: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Self {
        let n = y.len() as f64;
        Self {
            gram: features.t().dot(features) / n,
            rhs: features.t().dot(y) / n,
            y_sq: neumaier_sum(y.iter().map(|v| v * v)) / n,
            lambda,
        }
    }

    fn objective(&self, a: &Array1<f64>) -> f64 {
        0.5 * a.dot(&self.gram.dot(a)) - a.dot(&self.rhs) + 0.5 * self.y_sq + 0.5 * self.lambda * a.dot(a)
    }

    fn gradient(&self, a: &Array1<f64>) -> Array1<f64> {
        self.gram.dot(a) - &self.rhs + a * self.lambda
    }
}

/// Draw `b(1)` and run gradient descent on `R_n + (λ_t/2)‖a‖²` from `a = 0`
/// with step `1/(L + λ_t)`, `L = (1/n) Σ ‖φ(W(1) x_i + b(1))‖²`.
pub fn second_layer_fit(
    data: &Dataset,
    w1: &Array2<f64>,
    m: usize,
    lambda_t: f64,
    t_max: usize,
    grad_tol: f64,
    seed: u64,
) -> Result<SecondLayer> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if w1.nrows() != 2 * m || w1.ncols() != data.d() {
        return Err(Error::DimensionMismatch { expected: 2 * m, got: w1.nrows() });
    }
    let mut rng = seeded(seed, STREAM_BIAS);
    let b1 = symmetric_bias(m, &mut rng);
    let features = hidden_features(data.x.view(), w1.view(), b1.view());
    let ridge = Ridge::new(&features, &data.y, lambda_t);
    let smooth: f64 = (0..2 * m).map(|j| ridge.gram[[j, j]]).sum();
    let step = 1.0 / (smooth + lambda_t);

    let mut a = Array1::zeros(2 * m);
    let mut objective = vec![ridge.objective(&a)];
    let mut grad = ridge.gradient(&a);
    let mut grad_norm = grad.dot(&grad).sqrt();
    let mut iterations = 0;
    let mut converged = grad_norm <= grad_tol * (1.0 + objective[0].abs());
    while !converged && iterations < t_max {
        a.scaled_add(-step, &grad);
        let obj = ridge.objective(&a);
        if !obj.is_finite() {
            return Err(Error::NonFinite("second-layer objective".into()));
        }
        objective.push(obj);
        grad = ridge.gradient(&a);
        grad_norm = grad.dot(&grad).sqrt();
        iterations += 1;
        converged = grad_norm <= grad_tol * (1.0 + obj.abs());
    }
    if !objective[0].is_finite() || !grad_norm.is_finite() {
        return Err(Error::NonFinite("second-layer objective".into()));
    }
    Ok(SecondLayer { a, b1, objective, grad_norm, iterations, converged })
}

/// Diagnostics collected by [`fit_traced`].
#[derive(Debug, Clone)]
pub struct FitTrace {
    pub second_layer: SecondLayer,
    pub init: NetParams,
}

/// Prune (unless `unpruned`), optionally remove `⟨μ̂|_J, x⟩`, take the first-layer
/// step, fit the second layer.
pub fn fit_traced(data: &Dataset, cfg: &TrainConfig) -> Result<(Predictor, FitTrace)> {
    if !data.augmented {
        return Err(Error::NotAugmented);
    }
    cfg.validate()?;
    let (n, d) = data.x.dim();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let support = if cfg.unpruned { SupportSet::full(d) } else { prune_network(data, &cfg.prune_config())? };
    fit_on_support(data, cfg, support)
}

/// Everything after pruning: optional `μ̂` removal, first-layer step, second layer.
pub fn fit_on_support(data: &Dataset, cfg: &TrainConfig, support: SupportSet) -> Result<(Predictor, FitTrace)> {
    if !data.augmented {
        return Err(Error::NotAugmented);
    }
    cfg.validate()?;
    let (n, d) = data.x.dim();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if support.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: support.dim() });
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let (mu_hat, work) = match cfg.mode {
        Mode::Single => (Array1::zeros(d), data.clone()),
        Mode::Multi => {
            let mut acc = CompensatedVec::zeros(d);
            for (row, y) in data.x.rows().into_iter().zip(&data.y) {
                acc.add_scaled(*y, row.as_slice().expect("row-major"));
            }
            let mu = Array1::from(acc.value()) / n as f64 * support.mask();
            let resid = &data.y - &data.x.dot(&mu);
            (mu, data.with_labels(resid)?)
        }
    };
    let init = restricted_reinit(&support, cfg.m, d, cfg.seed)?;
    let w1 = first_layer_step(&work, &init, &support, cfg.eta1)?;
    if w1.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("first-layer weights".into()));
    }
    let second = second_layer_fit(&work, &w1, cfg.m, cfg.lambda_t, cfg.t_max, cfg.grad_tol, cfg.seed)?;
    let predictor = Predictor { a: second.a.clone(), w1, b1: second.b1.clone(), mu_hat, support, m: cfg.m };
    Ok((predictor, FitTrace { second_layer: second, init }))
}

pub fn fit(data: &Dataset, cfg: &TrainConfig) -> Result<Predictor> {
    fit_traced(data, cfg).map(|(p, _)| p)
}

impl Predictor {
    pub fn d(&self) -> usize {
        self.w1.ncols()
    }

    /// The network part as [`NetParams`].
    pub fn network(&self) -> NetParams {
        NetParams { a: self.a.clone(), w: self.w1.clone(), b: self.b1.clone(), m: self.m }
    }

    /// Predictions for every row of `x`.
    pub fn predict_batch(&self, x: ndarray::ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.ncols() });
        }
        let h = hidden_features(x, self.w1.view(), self.b1.view());
        Ok(x.rows()
            .into_iter()
            .zip(h.rows())
            .map(|(xi, hi)| xi.dot(&self.mu_hat) + pairwise_output(self.a.view(), hi, self.m))
            .collect())
    }

    /// Serialize as a line-oriented text bundle.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let join = |v: &Array1<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let sparse = |v: ArrayView1<f64>| {
            v.iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, x)| format!("{}:{}", i + 1, x))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(out, "{PREDICTOR_HEADER}")?;
        writeln!(out, "d {}", self.d())?;
        writeln!(out, "m {}", self.m)?;
        let j: Vec<String> = self.support.indices().iter().map(|i| i.to_string()).collect();
        writeln!(out, "J {}", j.join(" "))?;
        writeln!(out, "mu {}", sparse(self.mu_hat.view()))?;
        writeln!(out, "a {}", join(&self.a))?;
        writeln!(out, "b {}", join(&self.b1))?;
        for (j, row) in self.w1.rows().into_iter().enumerate() {
            writeln!(out, "w {} {}", j + 1, sparse(row))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != PREDICTOR_HEADER {
            return Err(Error::Parse(format!("expected header `{PREDICTOR_HEADER}`, found `{header}`")));
        }
        let bad = |what: &str| Error::Parse(format!("malformed predictor field `{what}`"));
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let (mut d, mut m) = (None, None);
        let (mut j, mut mu, mut a, mut b) = (None, None, None, None);
        let mut rows: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        let parse_sparse = |items: &[&str], what: &str| -> Result<Vec<(usize, f64)>> {
            items
                .iter()
                .map(|it| {
                    let (i, v) = it.split_once(':').ok_or_else(|| bad(what))?;
                    Ok((i.parse::<usize>().map_err(|_| bad(what))?, num(v, what)?))
                })
                .collect()
        };
        for line in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            match key {
                "d" => d = Some(rest.first().and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad("d"))?),
                "m" => m = Some(rest.first().and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad("m"))?),
                "J" => j = Some(rest.iter().map(|s| s.parse::<usize>().map_err(|_| bad("J"))).collect::<Result<Vec<_>>>()?),
                "mu" => mu = Some(parse_sparse(&rest, "mu")?),
                "a" => a = Some(rest.iter().map(|s| num(s, "a")).collect::<Result<Vec<_>>>()?),
                "b" => b = Some(rest.iter().map(|s| num(s, "b")).collect::<Result<Vec<_>>>()?),
                "w" => {
                    let idx = rest.first().and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad("w"))?;
                    rows.push((idx, parse_sparse(&rest[1..], "w")?));
                }
                other => return Err(Error::Parse(format!("unknown predictor field `{other}`"))),
            }
        }
        let d = d.ok_or_else(|| bad("d"))?;
        let m = m.ok_or_else(|| bad("m"))?;
        let mut support = SupportSet::empty(d);
        for i in j.ok_or_else(|| bad("J"))? {
            support.insert(i, Source::Forced)?;
        }
        let mut mu_hat = Array1::zeros(d);
        for (i, v) in mu.ok_or_else(|| bad("mu"))? {
            *mu_hat.get_mut(i.wrapping_sub(1)).ok_or_else(|| bad("mu"))? = v;
        }
        let a = Array1::from(a.ok_or_else(|| bad("a"))?);
        let b1 = Array1::from(b.ok_or_else(|| bad("b"))?);
        if a.len() != 2 * m || b1.len() != 2 * m || rows.len() != 2 * m {
            return Err(bad("width"));
        }
        let mut w1 = Array2::zeros((2 * m, d));
        for (r, entries) in rows {
            for (i, v) in entries {
                *w1.get_mut((r.wrapping_sub(1), i.wrapping_sub(1))).ok_or_else(|| bad("w"))? = v;
            }
        }
        Ok(Predictor { a, w1, b1, mu_hat, support, m })
    }
}

/// First line of a serialized predictor.
pub const PREDICTOR_HEADER: &str = "sparse-index-lab/predictor v1";

/// `⟨μ̂|_J, x⟩ + Σ_j a_j φ(⟨W(1)_j, x⟩ + b(1)_j)`.
pub fn predict(p: &Predictor, x: ArrayView1<f64>) -> Result<f64> {
    if x.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), got: x.len() });
    }
    let h = (p.w1.dot(&x) + &p.b1).mapv(relu);
    Ok(x.dot(&p.mu_hat) + pairwise_output(p.a.view(), h.view(), p.m))
}

/// Fresh test inputs for a predictor: model samples, augmented when the
/// predictor has one more coordinate than the model.
pub fn test_sample(p: &Predictor, model: &IndexModel, n_test: usize, seed: u64) -> Result<(Array2<f64>, Array1<f64>)> {
    let raw = sample_dataset(model, n_test, seed)?;
    let signal: Array1<f64> = raw.x.rows().into_iter().map(|r| model.mean_response(r)).collect();
    let x = if p.d() == model.d() + 1 {
        augment(&raw, seed)?.x
    } else if p.d() == model.d() {
        raw.x
    } else {
        return Err(Error::DimensionMismatch { expected: p.d(), got: model.d() });
    };
    Ok((x, signal))
}

/// Monte-Carlo `E[(ŷ(x) − f*(x))²]`, the excess over the noise floor.
pub fn excess_risk(p: &Predictor, model: &IndexModel, n_test: usize, seed: u64) -> Result<f64> {
    let (x, signal) = test_sample(p, model, n_test, seed)?;
    let yhat = p.predict_batch(x.view())?;
    let mse = neumaier_sum(yhat.iter().zip(&signal).map(|(a, b)| (a - b).powi(2))) / n_test as f64;
    if !mse.is_finite() {
        return Err(Error::NonFinite("excess risk".into()));
    }
    Ok(mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::LinkSpec;
    use crate::model::{make_sparse_direction, Profile};
    use crate::network::grad_w_row;
    use nalgebra::{DMatrix, DVector};
    use ndarray::array;

    fn data(n: usize, d: usize, s: usize, seed: u64) -> (IndexModel, Dataset) {
        let v = make_sparse_direction(d, s, Profile::Flat).unwrap();
        let model = IndexModel::single(v, LinkSpec::he_normalized(2).unwrap(), 0.1).unwrap();
        let raw = sample_dataset(&model, n, seed).unwrap();
        (model, augment(&raw, seed).unwrap())
    }

    fn support(d: usize, idx: &[usize]) -> SupportSet {
        let mut s = SupportSet::empty(d);
        for &i in idx {
            s.insert(i, Source::Forced).unwrap();
        }
        s
    }

    #[test]
    fn reinit_rows_live_on_support() {
        let j = support(10, &[2, 5, 9]);
        let net = restricted_reinit(&j, 6, 10, 4).unwrap();
        for (r, row) in net.w.rows().into_iter().enumerate() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
            for (p, v) in row.iter().enumerate() {
                if !j.contains(p + 1) {
                    assert_eq!(*v, 0.0, "row {r} col {p}");
                }
            }
        }
        let single = restricted_reinit(&support(10, &[4]), 3, 10, 1).unwrap();
        for row in single.w.rows() {
            assert_eq!(row[3].abs(), 1.0);
        }
        assert!(matches!(restricted_reinit(&SupportSet::empty(10), 3, 10, 1), Err(Error::EmptySupport)));
    }

    #[test]
    fn first_step_cancels_initial_weights_exactly() {
        let (_, data) = data(300, 12, 3, 2);
        let d = data.d();
        let j = support(d, &[1, 2, 3, 7, d]);
        let net = restricted_reinit(&j, 4, d, 3).unwrap();
        for eta in [0.3, 1.0, 7.5] {
            let w1 = first_layer_step(&data, &net, &j, eta).unwrap();
            for r in 0..8 {
                let g = grad_w_row(&data, net.a[r], net.w.row(r), net.b[r]).unwrap();
                for p in 0..d {
                    let want = if j.contains(p + 1) { -eta * g[p] } else { 0.0 };
                    assert_eq!(w1[[r, p]].to_bits(), want.to_bits());
                }
            }
            for r in 0..4 {
                assert_eq!(w1.row(r).to_owned(), -&w1.row(partner(r, 4)));
            }
        }
    }

    fn normal_equations(features: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Array1<f64> {
        let n = y.len() as f64;
        let k = features.ncols();
        let f = DMatrix::from_fn(features.nrows(), k, |i, j| features[[i, j]]);
        let yv = DVector::from_iterator(y.len(), y.iter().copied());
        let lhs = f.transpose() * &f / n + DMatrix::identity(k, k) * lambda;
        let rhs = f.transpose() * yv / n;
        let sol = lhs.lu().solve(&rhs).unwrap();
        Array1::from_iter(sol.iter().copied())
    }

    #[test]
    fn ridge_descent_matches_normal_equations() {
        let (_, data) = data(32, 5, 2, 9);
        let net = restricted_reinit(&SupportSet::full(6), 2, 6, 1).unwrap();
        let w1 = net.w.mapv(|v| 1.5 * v);
        let fit = second_layer_fit(&data, &w1, 2, 0.05, 200_000, 1e-12, 5).unwrap();
        assert!(fit.converged);
        let features = hidden_features(data.x.view(), w1.view(), fit.b1.view());
        let direct = normal_equations(&features, &data.y, 0.05);
        for (a, b) in fit.a.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(fit.objective.windows(2).all(|w| w[1] <= w[0] + 1e-15 * w[0].abs()));
    }

    #[test]
    fn huge_ridge_drives_weights_to_zero() {
        let (_, data) = data(64, 5, 2, 1);
        let net = restricted_reinit(&SupportSet::full(6), 3, 6, 1).unwrap();
        let fit = second_layer_fit(&data, &net.w, 3, 1e9, 100, 1e-10, 1).unwrap();
        assert!(fit.a.iter().all(|a| a.abs() < 1e-8));
    }

    #[test]
    fn prediction_is_linear_term_plus_network() {
        let (_, data) = data(500, 16, 2, 3);
        let d = data.d();
        let cfg = TrainConfig { mode: Mode::Multi, ..TrainConfig::defaults(d, 500, 4, 8, Mode::Multi, 2, 1.0, 7) };
        let p = fit(&data, &cfg).unwrap();
        for i in 0..d {
            if !p.support.contains(i + 1) {
                assert_eq!(p.mu_hat[i], 0.0);
                assert!(p.w1.column(i).iter().all(|v| *v == 0.0));
            }
        }
        let mut zeroed = p.clone();
        zeroed.mu_hat.fill(0.0);
        let net = p.network();
        for row in data.x.rows().into_iter().take(100) {
            let lhs = predict(&p, row).unwrap();
            let rhs = row.dot(&p.mu_hat) + crate::network::forward(&net, row).unwrap();
            assert_eq!(lhs, rhs);
            let x2 = row.mapv(|v| 2.0 * v);
            let diff = predict(&p, x2.view()).unwrap() - predict(&zeroed, x2.view()).unwrap();
            assert!((diff - 2.0 * row.dot(&p.mu_hat)).abs() < 1e-12);
        }
        let batch = p.predict_batch(data.x.view()).unwrap();
        for (i, row) in data.x.rows().into_iter().enumerate() {
            assert!((batch[i] - predict(&p, row).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_predictor_and_risk() {
        let (model, data) = data(200, 8, 2, 4);
        let d = data.d();
        let p = Predictor {
            a: Array1::zeros(4),
            w1: Array2::zeros((4, d)),
            b1: Array1::zeros(4),
            mu_hat: Array1::zeros(d),
            support: SupportSet::full(d),
            m: 2,
        };
        assert_eq!(predict(&p, data.x.row(0)).unwrap(), 0.0);
        let r = excess_risk(&p, &model, 40_000, 1).unwrap();
        assert!((r - 1.0).abs() < 0.05, "{r}");
        assert!(predict(&p, array![1.0].view()).is_err());
    }

    #[test]
    fn predictor_round_trip() {
        let (_, data) = data(300, 10, 2, 5);
        let cfg = TrainConfig::defaults(data.d(), 300, 3, 4, Mode::Multi, 2, 1.0, 2);
        let p = fit(&data, &cfg).unwrap();
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with(PREDICTOR_HEADER));
        let q = Predictor::read(&buf[..]).unwrap();
        assert_eq!(q.a, p.a);
        assert_eq!(q.w1, p.w1);
        assert_eq!(q.b1, p.b1);
        assert_eq!(q.mu_hat, p.mu_hat);
        assert_eq!(q.support.indices(), p.support.indices());
        assert!(Predictor::read(&b"nope\n"[..]).is_err());
    }

    #[test]
    fn pure_noise_learns_nothing_harmful() {
        let d = 16;
        let v = make_sparse_direction(d, 2, Profile::Flat).unwrap();
        let zero_link = LinkSpec::from_monomials(vec![0.0]).unwrap();
        let model = IndexModel::single(v, zero_link, 1.0).unwrap();
        let data = augment(&sample_dataset(&model, 2000, 3).unwrap(), 3).unwrap();
        let cfg = TrainConfig::defaults(d + 1, 2000, 4, 8, Mode::Single, 2, 1.0, 1);
        let p = fit(&data, &cfg).unwrap();
        // Test risk against fresh noisy labels stays near Var(y) = 1.
        let (x, _) = test_sample(&p, &model, 20_000, 77).unwrap();
        let noise = sample_dataset(&model, 20_000, 77).unwrap().y;
        let yhat = p.predict_batch(x.view()).unwrap();
        let risk = (&yhat - &noise).mapv(|e| e * e).mean().unwrap();
        assert!((risk - 1.0).abs() < 0.1, "{risk}");
    }

    #[test]
    fn defaults_follow_documented_shapes() {
        let c = TrainConfig::defaults(257, 4000, 16, 64, Mode::Single, 2, 1.0, 0);
        let ln_d = 257f64.ln();
        assert!((c.eta1 - 4.0 * ln_d).abs() < 1e-12);
        assert!((c.lambda_t - 64.0 / (257f64.ln().powi(2))).abs() < 1e-12);
        assert_eq!(c.t_max, 50 * (256_000f64.ln().ceil() as usize));
        assert!((c.lambda1() - 0.25 / ln_d).abs() < 1e-15);
        let m = TrainConfig::defaults(257, 4000, 16, 64, Mode::Multi, 2, 0.5, 0);
        assert!((m.eta1 - 8.0 * ln_d).abs() < 1e-12);
        assert!("multi".parse::<Mode>().unwrap() == Mode::Multi);
        assert!("x".parse::<Mode>().is_err());
    }
}
