//! Population gradients `E[y · x · φ'(⟨w, x⟩ + b)]` in closed form and by
//! Monte Carlo, plus the small fixture models with known gradients.
//!
//! All outputs are in correlation form; the per-neuron gradient of the risk at
//! a zero-output network is `−a_j` times these.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::hermite::{factorial, relu_shift_coeffs, LinkSpec};
use crate::model::{check_assumption_full_rank, IndexModel};
use crate::network::Sign;
use crate::pruning::shifted_basis;
use crate::rng::{seeded, STREAM_MC};

const UNIT_TOL: f64 = 1e-9;

fn check_unit(v: ArrayView1<f64>, what: &str) -> Result<()> {
    let norm = v.dot(&v).sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(invalid(format!("{what} must be a unit vector (norm {norm})")));
    }
    Ok(())
}

/// Which terms of the two series to keep.
#[derive(Clone, Copy)]
enum Terms {
    All,
    Split(Sign),
}

impl Terms {
    // v-series term k is kept for Plus when k is odd; w-series for Plus when k is even.
    fn keep_v(self, k: usize) -> bool {
        match self {
            Terms::All => true,
            Terms::Split(Sign::Plus) => k % 2 == 1,
            Terms::Split(Sign::Minus) => k % 2 == 0,
        }
    }

    fn keep_w(self, k: usize) -> bool {
        match self {
            Terms::All => true,
            Terms::Split(Sign::Plus) => k % 2 == 0,
            Terms::Split(Sign::Minus) => k % 2 == 1,
        }
    }
}

/// Coefficients `(α, β)` with gradient `α·v + β·w`.
fn series_coeffs(link: &LinkSpec, u: f64, b: f64, terms: Terms) -> (f64, f64) {
    let p = link.degree();
    let rho = relu_shift_coeffs(p + 2, b);
    let mut along_v = 0.0;
    let mut along_w = 0.0;
    let mut upow = 1.0;
    for k in 0..=p {
        let inv_fact = 1.0 / factorial(k);
        if k < p && terms.keep_v(k) {
            along_v += link.gamma(k + 1) * rho[k + 1] * upow * inv_fact;
        }
        if terms.keep_w(k) {
            along_w += link.gamma(k) * rho[k + 2] * upow * inv_fact;
        }
        upow *= u;
    }
    (along_v, along_w)
}

fn single(link: &LinkSpec, v: ArrayView1<f64>, w: ArrayView1<f64>, b: f64, terms: Terms) -> Result<Array1<f64>> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: v.len(), got: w.len() });
    }
    check_unit(v, "v")?;
    check_unit(w, "w")?;
    let (alpha, beta) = series_coeffs(link, v.dot(&w), b, terms);
    Ok(&v * alpha + &w * beta)
}

/// `E[σ(⟨v,x⟩) x φ'(⟨w,x⟩ + b)]` for a polynomial link:
///
/// ```text
/// v · Σ_{k=0}^{p−1} γ_{k+1} ρ_{k+1}(b) u^k / k!  +  w · Σ_{k=0}^{p} γ_k ρ_{k+2}(b) u^k / k!,   u = ⟨v, w⟩.
/// ```
pub fn population_grad_single(link: &LinkSpec, v: ArrayView1<f64>, w: ArrayView1<f64>, b: f64) -> Result<Array1<f64>> {
    single(link, v, w, b, Terms::All)
}

/// The same expectation through `φ'₊` or `φ'₋` (see [`crate::network::Sign`]).
/// `Plus` keeps the odd-`k` terms of the `v` series and even-`k` terms of the
/// `w` series; `Minus` keeps the complement.
pub fn population_grad_single_evenodd(
    link: &LinkSpec,
    v: ArrayView1<f64>,
    w: ArrayView1<f64>,
    b: f64,
    sign: Sign,
) -> Result<Array1<f64>> {
    single(link, v, w, b, Terms::Split(sign))
}

/// Exact population gradient for an additive model `y = Σ_c σ_c(⟨V_c, x⟩) + noise`.
pub fn population_grad_model(model: &IndexModel, w: ArrayView1<f64>, b: f64) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(model.d());
    for (col, link) in model.directions().columns().into_iter().zip(model.links()) {
        out += &single(link, col, w, b, Terms::All)?;
    }
    Ok(out)
}

/// Even/odd split of [`population_grad_model`].
pub fn population_grad_model_evenodd(model: &IndexModel, w: ArrayView1<f64>, b: f64, sign: Sign) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(model.d());
    for (col, link) in model.directions().columns().into_iter().zip(model.links()) {
        out += &single(link, col, w, b, Terms::Split(sign))?;
    }
    Ok(out)
}

/// `H = V D Vᵀ` with `D = E[σ*(z) z zᵀ]` estimated by Monte Carlo.
pub fn second_order_operator(model: &IndexModel, mc_samples: usize, seed: u64) -> Result<Array2<f64>> {
    let (dmat, _) = check_assumption_full_rank(model.links(), mc_samples, seed, 0.0)?;
    let v = model.directions();
    Ok(v.dot(&dmat).dot(&v.t()))
}

/// Leading term `ρ_2(b) · (H w)|_J` (with `J = supp(w)`) alongside a Monte-Carlo
/// estimate of the full gradient.
pub fn population_grad_multi_leading(
    model: &IndexModel,
    w: ArrayView1<f64>,
    b: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let h = second_order_operator(model, mc_samples, seed)?;
    let leading = leading_term(h.view(), w, b)?;
    let (mc, _) = mc_population_grad(model, w, b, mc_samples, seed.wrapping_add(1))?;
    Ok((leading, mc))
}

/// `ρ_2(b) · (H w)` restricted to the support of `w`.
pub fn leading_term(h: ArrayView2<f64>, w: ArrayView1<f64>, b: f64) -> Result<Array1<f64>> {
    if h.nrows() != w.len() || h.ncols() != w.len() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: w.len() });
    }
    check_unit(w, "w")?;
    let rho2 = relu_shift_coeffs(2, b)[2];
    let hw = h.dot(&w);
    Ok(Array1::from_shape_fn(w.len(), |i| if w[i] != 0.0 { rho2 * hw[i] } else { 0.0 }))
}

/// Sample mean of `y · x · φ'(⟨w, x⟩ + b)` and its per-coordinate standard error.
pub fn mc_population_grad(
    model: &IndexModel,
    w: ArrayView1<f64>,
    b: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let d = model.d();
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: w.len() });
    }
    if mc_samples < 2 {
        return Err(invalid("mc_samples must be at least 2"));
    }
    let mut rng = seeded(seed, STREAM_MC);
    let noise = model.noise_delta().sqrt();
    let mut x = Array1::<f64>::zeros(d);
    // Welford per coordinate.
    let mut mean = Array1::<f64>::zeros(d);
    let mut m2 = Array1::<f64>::zeros(d);
    for t in 0..mc_samples {
        for xi in x.iter_mut() {
            *xi = rng.sample(StandardNormal);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let y = model.mean_response(x.view()) + noise * eps;
        let gate = if x.dot(&w) + b > 0.0 { y } else { 0.0 };
        let count = (t + 1) as f64;
        for c in 0..d {
            let val = gate * x[c];
            let delta = val - mean[c];
            mean[c] += delta / count;
            m2[c] += delta * (val - mean[c]);
        }
    }
    let n = mc_samples as f64;
    let stderr = m2.mapv(|s| (s / (n - 1.0) / n).sqrt());
    Ok((mean, stderr))
}

/// One stored fixture value: the risk gradient (with `a_j = 1`, `b = 0`) at probe
/// `ē_i` with shift `c` (`c = 1` is the plain basis vector `e_i`).
#[derive(Debug, Clone)]
pub struct FixtureEntry {
    pub i: usize,
    pub c: f64,
    pub gradient: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct FixtureTable {
    pub name: String,
    pub model: IndexModel,
    pub entries: Vec<FixtureEntry>,
}

impl FixtureTable {
    pub fn get(&self, i: usize, c: f64) -> Option<&Array1<f64>> {
        self.entries.iter().find(|e| e.i == i && e.c == c).map(|e| &e.gradient)
    }

    /// Probe direction for an entry (1-based `i`).
    pub fn probe(&self, i: usize, c: f64) -> Result<Array1<f64>> {
        if c == 1.0 {
            let mut e = Array1::zeros(self.model.d());
            e[i - 1] = 1.0;
            Ok(e)
        } else {
            shifted_basis(i, self.model.d(), c)
        }
    }

    /// Rows `fixture,i,c,coord,value` with 1-based `coord`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for e in &self.entries {
            for (coord, value) in e.gradient.iter().enumerate() {
                writeln!(out, "{},{},{},{},{}", self.name, e.i, e.c, coord + 1, value)?;
            }
        }
        Ok(())
    }
}

/// Write every fixture with a header line.
pub fn write_fixtures_csv<W: Write>(tables: &[FixtureTable], mut out: W) -> Result<()> {
    writeln!(out, "fixture,i,c,coord,value")?;
    for t in tables {
        t.write_csv(&mut out)?;
    }
    Ok(())
}

/// Ambient dimension of the two quadratic fixtures.
pub const PATHOLOGICAL_DIM: usize = 6;

/// Dimension, support size and entry size of the cancellation fixture.
pub const CANCELLATION_DIM: usize = 128;
pub const CANCELLATION_SUPPORT: usize = 8;

/// Link `γ̃_2 h_2 + γ̃_4 h_4` (unit-variance Hermite basis) with `γ̃_2 = 1`, `γ̃_4 = 2√3`.
pub fn cancellation_link() -> Result<LinkSpec> {
    LinkSpec::from_hermite(vec![0.0, 0.0, 2f64.sqrt(), 0.0, 24f64.sqrt() * 2.0 * 3f64.sqrt()])
}

/// The e_1 coordinate of the zero-bias gradient at `e_1` as a function of the
/// leading entry `v_1`, relative to its informative part.
fn cancellation_ratio(v1: f64) -> f64 {
    let link = cancellation_link().expect("valid link");
    let rho = relu_shift_coeffs(6, 0.0);
    let (g2, g4) = (link.gamma(2), link.gamma(4));
    let informative = v1 * (g2 * rho[2] * v1 + g4 * rho[4] * v1.powi(3) / 6.0);
    let extra = g2 * rho[4] * v1 * v1 / 2.0 + g4 * rho[6] * v1.powi(4) / 24.0;
    ((informative + extra) / informative).abs()
}

/// Relative residual of the cancellation at `c = 1` used for the default `ε`.
pub const CANCELLATION_TOL: f64 = 1e-4;

/// Largest `ε` for which the informative and extra terms of the cancellation
/// fixture cancel to within `tol` (relative) at `c = 1`.
pub fn cancellation_epsilon(support: usize, tol: f64) -> f64 {
    if support <= 1 {
        return 0.0;
    }
    let k = (support - 1) as f64;
    let mut lo = 0.0;
    let mut hi = (1.0 / k).sqrt();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cancellation_ratio((1.0 - k * mid * mid).sqrt()) <= tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `v = (√(1 − (s−1)ε²), ε, …, ε, 0, …, 0)` with `s − 1` copies of `ε`.
pub fn cancellation_direction(d: usize, support: usize, eps: f64) -> Result<Array1<f64>> {
    if support < 1 || support > d {
        return Err(invalid("cancellation support must lie in [1, d]"));
    }
    let k = (support - 1) as f64;
    if k * eps * eps >= 1.0 {
        return Err(invalid("cancellation epsilon too large"));
    }
    let mut v = Array1::zeros(d);
    v[0] = (1.0 - k * eps * eps).sqrt();
    for e in v.iter_mut().skip(1).take(support - 1) {
        *e = eps;
    }
    Ok(v)
}

/// The cancellation model in dimension `d` with `support` nonzero entries.
pub fn cancellation_model(d: usize, support: usize, noise_delta: f64) -> Result<IndexModel> {
    let v = cancellation_direction(d, support, cancellation_epsilon(support, CANCELLATION_TOL))?;
    IndexModel::single(v, cancellation_link()?, noise_delta)
}

/// Closed-form gradient of the cancellation model at `ē_i` (zero bias):
/// informative part along `v` and extra part along the probe.
pub fn cancellation_gradient(v: ArrayView1<f64>, probe: ArrayView1<f64>) -> Result<Array1<f64>> {
    let link = cancellation_link()?;
    let rho = relu_shift_coeffs(6, 0.0);
    let (g2, g4) = (link.gamma(2), link.gamma(4));
    let u = v.dot(&probe);
    let informative = g2 * rho[2] * u + g4 * rho[4] * u.powi(3) / 6.0;
    let extra = g2 * rho[4] * u * u / 2.0 + g4 * rho[6] * u.powi(4) / 24.0;
    Ok(-(&v * informative + &probe * extra))
}

/// `Σ_{c=1,2} He_2(x_c)/√2`, optionally plus `⟨μ, x⟩` with `μ = −(e_1 + e_2)/√π`, in dimension `d ≥ 2`.
pub fn quadratic_fixture_model(d: usize, tilted: bool) -> Result<IndexModel> {
    if d < 2 {
        return Err(invalid("quadratic fixture needs d >= 2"));
    }
    // f(t) = He_2(t)/√2 per coordinate direction, γ_2 = √2.
    let quad = LinkSpec::from_hermite(vec![0.0, 0.0, 2f64.sqrt()])?;
    let mut frame = Array2::zeros((d, 2));
    frame[[0, 0]] = 1.0;
    frame[[1, 1]] = 1.0;
    if !tilted {
        IndexModel::new(frame, vec![quad.clone(), quad], 0.0)
    } else {
        // ⟨μ, x⟩ with μ = −(e_1 + e_2)/√π splits as a linear term −t/√π in each direction.
        let tilt = LinkSpec::from_hermite(vec![0.0, -1.0 / PI.sqrt()])?;
        let f = quad.plus(&tilt)?;
        IndexModel::new(frame, vec![f.clone(), f], 0.0)
    }
}

/// Fixtures: (i) `y` with two quadratic directions; (ii) `y̌ = y + ⟨μ, x⟩`
/// with `μ = −(e_1 + e_2)/√π`; (iii) the shifted-basis cancellation model.
pub fn pathological_fixtures() -> Result<Vec<FixtureTable>> {
    let d = PATHOLOGICAL_DIM;
    let k = 1.0 / (2.0 * PI.sqrt());
    let unit = |i: usize| {
        let mut e = Array1::<f64>::zeros(d);
        e[i] = 1.0;
        e
    };

    let mut plain = Vec::new();
    let mut tilted = Vec::new();
    for i in 1..=d {
        let g_plain = match i {
            1 | 2 => unit(i - 1) * -k,
            _ => Array1::zeros(d),
        };
        let g_tilted = match i {
            1 => unit(1) * k,
            2 => unit(0) * k,
            _ => (unit(0) + unit(1)) * k,
        };
        plain.push(FixtureEntry { i, c: 1.0, gradient: g_plain });
        tilted.push(FixtureEntry { i, c: 1.0, gradient: g_tilted });
    }

    let model = cancellation_model(CANCELLATION_DIM, CANCELLATION_SUPPORT, 0.0)?;
    let v = model.directions().column(0).to_owned();
    let mut entries = Vec::new();
    for &c in &[1.0, 0.5, 0.25, 0.125] {
        for i in [1usize, 2, CANCELLATION_SUPPORT + 1] {
            let probe = if c == 1.0 {
                let mut e = Array1::zeros(CANCELLATION_DIM);
                e[i - 1] = 1.0;
                e
            } else {
                shifted_basis(i, CANCELLATION_DIM, c)?
            };
            entries.push(FixtureEntry { i, c, gradient: cancellation_gradient(v.view(), probe.view())? });
        }
    }

    Ok(vec![
        FixtureTable { name: "quadratic".into(), model: quadratic_fixture_model(d, false)?, entries: plain },
        FixtureTable { name: "quadratic_tilted".into(), model: quadratic_fixture_model(d, true)?, entries: tilted },
        FixtureTable { name: "cancellation".into(), model, entries },
    ])
}
