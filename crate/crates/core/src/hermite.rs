//! Probabilists' Hermite polynomials and the scalar link machinery built on them.
//!
//! Every link in this crate is written in the convention
//!
//! ```text
//! σ(t) = Σ_k (γ_k / k!) He_k(t),        γ_k = E[σ(Z) He_k(Z)],
//! ```
//!
//! where `He_k` are the probabilists' Hermite polynomials with
//! `E[He_j(Z) He_k(Z)] = k! δ_jk`. Under this convention `t²` has
//! `γ = [1, 0, 2]` (not `[1, 0, 1]`), and the unit-variance link is
//! `Σ_{k≥1} γ_k² / k! = 1`. Code that assumes the other common convention
//! `σ = Σ γ_k He_k` will silently disagree with every scaling in the crate.
//!
//! The monomial ↔ Hermite basis change is done with exact integer
//! coefficients of `He_k` (tabulated up to [`MAX_DEGREE`]); quadrature is only
//! used as an independent check.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest polynomial degree supported by the exact basis change.
pub const MAX_DEGREE: usize = 32;

/// Default relative tolerance for deciding that a Hermite coefficient is nonzero.
pub const DEFAULT_COEFF_TOL: f64 = 1e-10;

/// `He_k(t)` via the three-term recurrence `He_{k+1} = t He_k − k He_{k−1}`.
pub fn he_eval(k: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    match k {
        0 => return 1.0,
        1 => return t,
        _ => {}
    }
    for j in 1..k {
        let next = t * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// All of `He_0(t), …, He_p(t)` in one pass.
pub fn he_eval_all(p: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(p + 1);
    out.push(1.0);
    if p >= 1 {
        out.push(t);
    }
    for j in 1..p {
        let next = t * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// Integer monomial coefficients of `He_0 … He_MAX_DEGREE`; row `k` holds
/// `[c_0, …, c_k]` with `He_k(t) = Σ c_i t^i`.
pub fn he_monomial_table() -> &'static [Vec<i128>] {
    static TABLE: OnceLock<Vec<Vec<i128>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows: Vec<Vec<i128>> = vec![vec![1], vec![0, 1]];
        for k in 1..MAX_DEGREE {
            let mut next = vec![0i128; k + 2];
            for (i, &c) in rows[k].iter().enumerate() {
                next[i + 1] += c;
            }
            for (i, &c) in rows[k - 1].iter().enumerate() {
                next[i] -= k as i128 * c;
            }
            rows.push(next);
        }
        rows
    })
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Hermite coefficient `ρ_k(b)` of the shifted ReLU `t ↦ max(t + b, 0)`:
/// `ρ_1(b) = 1 − Φ(−b)` and `ρ_k(b) = e^{−b²/2}/√(2π) · He_{k−2}(−b)` for `k ≥ 2`.
///
/// `k = 0` returns the mean `E[max(Z + b, 0)] = bΦ(b) + φ(b)`.
pub fn relu_shift_coeff(k: usize, b: f64) -> f64 {
    match k {
        0 => b * std_normal_cdf(b) + std_normal_pdf(b),
        1 => 1.0 - std_normal_cdf(-b),
        _ => std_normal_pdf(b) * he_eval(k - 2, -b),
    }
}

/// `ρ_0(b), …, ρ_p(b)` in one pass.
pub fn relu_shift_coeffs(p: usize, b: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(p + 1);
    out.push(relu_shift_coeff(0, b));
    if p >= 1 {
        out.push(relu_shift_coeff(1, b));
    }
    if p >= 2 {
        let pdf = std_normal_pdf(b);
        out.extend(he_eval_all(p - 2, -b).into_iter().map(|h| pdf * h));
    }
    out
}

/// Monomial coefficients `c_0..c_p` → Hermite coefficients `γ_0..γ_p`
/// with `Σ c_k t^k = Σ (γ_k / k!) He_k(t)`.
pub fn to_hermite(monomial_coeffs: &[f64]) -> Result<Vec<f64>> {
    let p = monomial_coeffs.len().saturating_sub(1);
    if p > MAX_DEGREE {
        return Err(Error::DegreeTooLarge { degree: p, max: MAX_DEGREE });
    }
    let table = he_monomial_table();
    let mut residual = monomial_coeffs.to_vec();
    let mut gamma = vec![0.0; monomial_coeffs.len()];
    // He_k is monic, so peel off the leading monomial from the top down.
    for k in (0..monomial_coeffs.len()).rev() {
        let h = residual[k];
        if h == 0.0 {
            continue;
        }
        for (i, &c) in table[k].iter().enumerate() {
            if c != 0 {
                residual[i] -= h * c as f64;
            }
        }
        residual[k] = 0.0;
        gamma[k] = h * factorial(k);
    }
    Ok(gamma)
}

/// Inverse of [`to_hermite`].
pub fn from_hermite(hermite_coeffs: &[f64]) -> Result<Vec<f64>> {
    let p = hermite_coeffs.len().saturating_sub(1);
    if p > MAX_DEGREE {
        return Err(Error::DegreeTooLarge { degree: p, max: MAX_DEGREE });
    }
    let table = he_monomial_table();
    let mut mono = vec![0.0; hermite_coeffs.len()];
    for (k, &g) in hermite_coeffs.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let scale = g / factorial(k);
        for (i, &c) in table[k].iter().enumerate() {
            if c != 0 {
                mono[i] += scale * c as f64;
            }
        }
    }
    Ok(mono)
}

fn trim_trailing_zeros(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && *v.last().unwrap() == 0.0 {
        v.pop();
    }
    if v.is_empty() {
        v.push(0.0);
    }
    v
}

/// A polynomial link stored in both bases.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    monomial_coeffs: Vec<f64>,
    hermite_coeffs: Vec<f64>,
    info_exponent: Option<usize>,
}

impl LinkSpec {
    pub fn from_monomials(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("link monomial coefficient".into()));
        }
        let monomial_coeffs = trim_trailing_zeros(coeffs);
        let hermite_coeffs = to_hermite(&monomial_coeffs)?;
        Ok(Self::assemble(monomial_coeffs, hermite_coeffs))
    }

    pub fn from_hermite(gamma: Vec<f64>) -> Result<Self> {
        if gamma.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("link Hermite coefficient".into()));
        }
        let hermite_coeffs = trim_trailing_zeros(gamma);
        let monomial_coeffs = from_hermite(&hermite_coeffs)?;
        Ok(Self::assemble(monomial_coeffs, hermite_coeffs))
    }

    /// The raw polynomial `He_k` (so `γ_k = k!`).
    pub fn he(k: usize) -> Result<Self> {
        let mut gamma = vec![0.0; k + 1];
        gamma[k] = factorial(k);
        Self::from_hermite(gamma)
    }

    /// `He_k / √k!`, the unit-variance version of [`LinkSpec::he`].
    pub fn he_normalized(k: usize) -> Result<Self> {
        let mut gamma = vec![0.0; k + 1];
        gamma[k] = factorial(k).sqrt();
        Self::from_hermite(gamma)
    }

    fn assemble(monomial_coeffs: Vec<f64>, hermite_coeffs: Vec<f64>) -> Self {
        let info_exponent = first_nonzero(&hermite_coeffs, DEFAULT_COEFF_TOL);
        Self { monomial_coeffs, hermite_coeffs, info_exponent }
    }

    pub fn monomial_coeffs(&self) -> &[f64] {
        &self.monomial_coeffs
    }

    pub fn hermite_coeffs(&self) -> &[f64] {
        &self.hermite_coeffs
    }

    /// `γ_k`, zero past the degree.
    pub fn gamma(&self, k: usize) -> f64 {
        self.hermite_coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.hermite_coeffs.len() - 1
    }

    /// Information exponent at the default tolerance, if the link is non-constant.
    pub fn info_exponent(&self) -> Option<usize> {
        self.info_exponent
    }

    /// Horner evaluation of the monomial form.
    pub fn eval(&self, t: f64) -> f64 {
        self.monomial_coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Evaluation through the Hermite form; used to cross-check the two bases.
    pub fn eval_hermite(&self, t: f64) -> f64 {
        let he = he_eval_all(self.degree(), t);
        self.hermite_coeffs
            .iter()
            .enumerate()
            .map(|(k, g)| g / factorial(k) * he[k])
            .sum()
    }

    /// `E[σ(Z)²] = Σ_k γ_k² / k!`.
    pub fn second_moment(&self) -> f64 {
        self.hermite_coeffs
            .iter()
            .enumerate()
            .map(|(k, g)| g * g / factorial(k))
            .sum()
    }

    /// `Var σ(Z) = Σ_{k≥1} γ_k² / k!`.
    pub fn variance(&self) -> f64 {
        self.hermite_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, g)| g * g / factorial(k))
            .sum()
    }

    /// `(scale · σ)`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        Self::from_hermite(self.hermite_coeffs.iter().map(|g| g * scale).collect())
    }

    /// Pointwise sum of two links.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        let len = self.hermite_coeffs.len().max(other.hermite_coeffs.len());
        Self::from_hermite((0..len).map(|k| self.gamma(k) + other.gamma(k)).collect())
    }
}

fn first_nonzero(gamma: &[f64], rel_tol: f64) -> Option<usize> {
    let largest = gamma.iter().skip(1).fold(0.0f64, |m, g| m.max(g.abs()));
    if largest == 0.0 {
        return None;
    }
    let threshold = rel_tol * largest;
    gamma.iter().enumerate().skip(1).find(|(_, g)| g.abs() > threshold).map(|(k, _)| k)
}

/// Centre and scale the link so that `E[σ(Z)] = 0` and `E[σ(Z)²] = 1`.
pub fn normalize_link(spec: &LinkSpec) -> Result<LinkSpec> {
    let norm = spec.variance().sqrt();
    if !(norm > 0.0) || spec.info_exponent.is_none() {
        return Err(Error::DegenerateLink);
    }
    if spec.gamma(0) == 0.0 && (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(spec.clone());
    }
    let mut gamma: Vec<f64> = spec.hermite_coeffs.iter().map(|g| g / norm).collect();
    gamma[0] = 0.0;
    LinkSpec::from_hermite(gamma)
}

/// Smallest `k ≥ 1` with `|γ_k| > rel_tol · max_{j≥1} |γ_j|`.
pub fn information_exponent(spec: &LinkSpec, rel_tol: f64) -> Result<usize> {
    first_nonzero(&spec.hermite_coeffs, rel_tol).ok_or(Error::DegenerateLink)
}

/// Gauss–Hermite rule for the standard normal weight: `E[f(Z)] ≈ Σ w_i f(x_i)`.
///
/// Exact for polynomials of degree `≤ 2n − 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "Gauss-Hermite rule needs at least two nodes");
        // Golub-Welsch start, then Newton on the orthonormal recurrence.
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));

        let mut weights = Vec::with_capacity(n);
        for x in nodes.iter_mut() {
            for _ in 0..8 {
                let (hn, hn1) = orthonormal_he_pair(n, *x);
                let step = hn / ((n as f64).sqrt() * hn1);
                *x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        for i in 0..n / 2 {
            let half = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -half;
            nodes[n - 1 - i] = half;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        for &x in &nodes {
            let (_, hn1) = orthonormal_he_pair(n, x);
            weights.push(1.0 / (n as f64 * hn1 * hn1));
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(h_n(x), h_{n−1}(x))` with `h_k = He_k / √k!`.
fn orthonormal_he_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `E[f(Z)]`, `Z ~ N(0, 1)`, by an `nodes`-point Gauss–Hermite rule.
pub fn gauss_hermite_expect<F: Fn(f64) -> f64>(f: F, nodes: usize) -> f64 {
    GaussHermite::new(nodes).expect(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn he_eval_examples() {
        assert_eq!(he_eval(2, 1.0), 0.0);
        assert_eq!(he_eval(0, 7.3), 1.0);
        assert_eq!(he_eval(4, 0.0), 3.0);
    }

    #[test]
    fn monomial_table_matches_closed_forms() {
        let t = he_monomial_table();
        assert_eq!(t[4], vec![3, 0, -6, 0, 1]);
        assert_eq!(t[5], vec![0, 15, 0, -10, 0, 1]);
        // He_32(0) = (−1)^16 · 31!!
        let double_fact: i128 = (1..=31).step_by(2).product();
        assert_eq!(t[32][0], double_fact);
    }

    #[test]
    fn relu_coefficients_at_zero() {
        assert_abs_diff_eq!(relu_shift_coeff(1, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(relu_shift_coeff(2, 0.0), INV_SQRT_2PI, epsilon = 1e-15);
        assert_abs_diff_eq!(relu_shift_coeff(3, 0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(relu_shift_coeff(4, 0.0), -INV_SQRT_2PI, epsilon = 1e-15);
        assert_abs_diff_eq!(relu_shift_coeff(6, 0.0), 3.0 * INV_SQRT_2PI, epsilon = 1e-15);
    }

    #[test]
    fn relu_coefficients_match_quadrature_projection() {
        // ρ_k(b) = E[φ(Z+b) He_k(Z)]; the kink makes quadrature slow, so use a
        // fine trapezoid on the density instead.
        for &b in &[-1.3, 0.0, 0.7, 2.0] {
            for k in 1..=6 {
                let h = 1e-4;
                let mut acc = 0.0;
                let mut z = -12.0;
                while z < 12.0 {
                    let f = |z: f64| (z + b).max(0.0) * he_eval(k, z) * std_normal_pdf(z);
                    acc += 0.5 * h * (f(z) + f(z + h));
                    z += h;
                }
                assert_abs_diff_eq!(relu_shift_coeff(k, b), acc, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn vectorised_coeffs_agree() {
        for &b in &[-2.0, 0.3, 1.1] {
            let all = relu_shift_coeffs(8, b);
            for (k, v) in all.iter().enumerate() {
                assert_eq!(*v, relu_shift_coeff(k, b));
            }
        }
    }

    fn projection(mono: &[f64], k: usize) -> f64 {
        let link = |t: f64| mono.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        gauss_hermite_expect(|t| link(t) * he_eval(k, t), 24)
    }

    #[test]
    fn to_hermite_examples_against_quadrature() {
        let sq = to_hermite(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(sq, vec![1.0, 0.0, 2.0]);
        for k in 0..=2 {
            assert_abs_diff_eq!(sq[k], projection(&[0.0, 0.0, 1.0], k), epsilon = 1e-12);
        }
        assert_eq!(to_hermite(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        let cube = to_hermite(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(cube, vec![0.0, 3.0, 0.0, 6.0]);
        for k in 0..=3 {
            assert_abs_diff_eq!(cube[k], projection(&[0.0, 0.0, 0.0, 1.0], k), epsilon = 1e-12);
        }
    }

    #[test]
    fn degree_limit() {
        assert!(matches!(
            to_hermite(&vec![1.0; MAX_DEGREE + 2]),
            Err(Error::DegreeTooLarge { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let he2 = LinkSpec::he(2).unwrap();
        let n = normalize_link(&he2).unwrap();
        assert_abs_diff_eq!(n.gamma(2), 2.0 / 2f64.sqrt(), epsilon = 1e-15);
        let again = normalize_link(&n).unwrap();
        assert_eq!(again, n);

        let sq = LinkSpec::from_monomials(vec![0.0, 0.0, 1.0]).unwrap();
        let ns = normalize_link(&sq).unwrap();
        assert_abs_diff_eq!(ns.gamma(0), 0.0);
        assert_abs_diff_eq!(ns.gamma(2), 2f64.sqrt(), epsilon = 1e-15);
        let mean = gauss_hermite_expect(|t| ns.eval(t), 16);
        let second = gauss_hermite_expect(|t| ns.eval(t).powi(2), 16);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(second, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_rejects_constant() {
        let c = LinkSpec::from_monomials(vec![3.0]).unwrap();
        assert!(matches!(normalize_link(&c), Err(Error::DegenerateLink)));
        let z = LinkSpec::from_monomials(vec![0.0, 0.0]).unwrap();
        assert!(matches!(normalize_link(&z), Err(Error::DegenerateLink)));
    }

    #[test]
    fn information_exponent_examples() {
        let he2 = normalize_link(&LinkSpec::he(2).unwrap()).unwrap();
        assert_eq!(information_exponent(&he2, DEFAULT_COEFF_TOL).unwrap(), 2);
        let mix = LinkSpec::he(1).unwrap().plus(&LinkSpec::he(3).unwrap()).unwrap();
        assert_eq!(information_exponent(&normalize_link(&mix).unwrap(), DEFAULT_COEFF_TOL).unwrap(), 1);
        // (1/√2) He_2 + (2√3/√4!) He_4
        let g2 = 2.0 / 2f64.sqrt();
        let g4 = 24.0 * 2.0 * 3f64.sqrt() / 24f64.sqrt();
        let cancel = LinkSpec::from_hermite(vec![0.0, 0.0, g2, 0.0, g4]).unwrap();
        assert_eq!(information_exponent(&cancel, DEFAULT_COEFF_TOL).unwrap(), 2);
        assert!(matches!(
            information_exponent(&LinkSpec::from_monomials(vec![1.0]).unwrap(), 1e-10),
            Err(Error::DegenerateLink)
        ));
    }

    #[test]
    fn quadrature_examples() {
        assert_abs_diff_eq!(gauss_hermite_expect(|t| t * t, 8), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gauss_hermite_expect(|t| he_eval(3, t).powi(2), 16), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gauss_hermite_expect(|t| he_eval(2, t) * he_eval(4, t), 16), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonality_suite() {
        let rule = GaussHermite::new(32);
        for j in 0..=10 {
            for k in 0..=10 {
                let got = rule.expect(|t| he_eval(j, t) * he_eval(k, t));
                let want = if j == k { factorial(k) } else { 0.0 };
                assert!((got - want).abs() <= 1e-8, "j={j} k={k} got={got}");
            }
        }
    }

    #[test]
    fn derivative_recurrence_by_finite_differences() {
        let h = 1e-6;
        for k in 1..=8 {
            for i in 0..10 {
                let t = -2.3 + 0.51 * i as f64;
                let fd = (he_eval(k, t + h) - he_eval(k, t - h)) / (2.0 * h);
                let exact = k as f64 * he_eval(k - 1, t);
                let rel = (fd - exact).abs() / exact.abs().max(1.0);
                assert!(rel <= 1e-6, "k={k} t={t} fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn relu_derivative_second_moment_bounded() {
        // E[φ'(Z+b)²] = Φ(b) ≤ 1; the quadrature rule smooths the step, so
        // compare against a fine grid rather than demand exactness.
        for &b in &[-2.0, 0.0, 2.0] {
            let q = gauss_hermite_expect(|z| if z + b > 0.0 { 1.0 } else { 0.0 }, 64);
            assert!(q <= 1.0 + 1e-12);
            assert_abs_diff_eq!(q, std_normal_cdf(b), epsilon = 0.05);
        }
    }

    #[test]
    fn hermite_and_monomial_forms_agree() {
        let link = LinkSpec::from_monomials(vec![0.3, -1.0, 0.5, 0.0, 0.25, 0.1]).unwrap();
        for i in 0..16 {
            let t = -3.0 + 0.4 * i as f64;
            assert_abs_diff_eq!(link.eval(t), link.eval_hermite(t), epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn basis_change_round_trip(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 1..9),
            ts in proptest::collection::vec(-3.0f64..3.0, 100),
        ) {
            let gamma = to_hermite(&coeffs).unwrap();
            for &t in &ts {
                let he = he_eval_all(gamma.len() - 1, t);
                let via_hermite: f64 = gamma.iter().enumerate().map(|(k, g)| g / factorial(k) * he[k]).sum();
                let direct = coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c);
                prop_assert!((via_hermite - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            }
            let back = from_hermite(&gamma).unwrap();
            for (a, b) in back.iter().zip(&coeffs) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn normalized_links_have_unit_variance(coeffs in proptest::collection::vec(-2.0f64..2.0, 2..7)) {
            let link = LinkSpec::from_monomials(coeffs).unwrap();
            prop_assume!(link.variance() > 1e-6);
            let n = normalize_link(&link).unwrap();
            prop_assert_eq!(n.gamma(0), 0.0);
            prop_assert!((n.variance() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(n.info_exponent(), link.info_exponent());
        }
    }
}
