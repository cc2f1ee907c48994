//! Two-layer ReLU network `ŷ(x) = Σ_j a_j φ(⟨W_j, x⟩ + b_j)` of width `2m`
//! under symmetric initialization.
//!
//! Neurons are paired as `j ↔ 2m − 1 − j` (zero-based), so every index has
//! exactly one partner. At initialization partners share `W_j` and `b_j` and
//! carry opposite `a_j`, which makes the network output identically zero.
//!
//! The ReLU derivative uses `φ'(0) = 0`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::numeric::{neumaier_sum, CompensatedVec};
use crate::rng::{seeded, STREAM_NET_INIT};

#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

#[inline]
pub fn relu_prime(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Index of the symmetric partner of neuron `j` in a width-`2m` layer.
#[inline]
pub fn partner(j: usize, m: usize) -> usize {
    2 * m - 1 - j
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub a: Array1<f64>,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub m: usize,
}

/// `a_j ~ Unif{−1, 1}` and `b_j ~ N(0, 1)` for the first `m` neurons, mirrored
/// onto their partners with `a` negated.
pub fn symmetric_output_and_bias<R: Rng>(m: usize, rng: &mut R) -> (Array1<f64>, Array1<f64>) {
    let mut a = Array1::zeros(2 * m);
    let mut b = Array1::zeros(2 * m);
    for j in 0..m {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let bias: f64 = rng.sample(StandardNormal);
        a[j] = sign;
        a[partner(j, m)] = -sign;
        b[j] = bias;
        b[partner(j, m)] = bias;
    }
    (a, b)
}

/// Symmetric bias vector alone (used when re-drawing biases before the second layer).
pub fn symmetric_bias<R: Rng>(m: usize, rng: &mut R) -> Array1<f64> {
    let mut b = Array1::zeros(2 * m);
    for j in 0..m {
        let bias: f64 = rng.sample(StandardNormal);
        b[j] = bias;
        b[partner(j, m)] = bias;
    }
    b
}

/// Symmetric initialization with first-layer rows uniform on `S^{d−1}`.
pub fn init_symmetric(m: usize, d: usize, seed: u64) -> Result<NetParams> {
    if m == 0 || d == 0 {
        return Err(crate::error::invalid("network needs m >= 1 and d >= 1"));
    }
    let mut rng = seeded(seed, STREAM_NET_INIT);
    let (a, b) = symmetric_output_and_bias(m, &mut rng);
    let mut w = Array2::zeros((2 * m, d));
    for j in 0..m {
        let row: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = row.dot(&row).sqrt();
        let row = row / norm;
        w.row_mut(j).assign(&row);
        w.row_mut(partner(j, m)).assign(&row);
    }
    Ok(NetParams { a, w, b, m })
}

impl NetParams {
    pub fn width(&self) -> usize {
        2 * self.m
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    fn check(&self) -> Result<()> {
        let width = self.width();
        for len in [self.a.len(), self.b.len(), self.w.nrows()] {
            if len != width {
                return Err(Error::DimensionMismatch { expected: width, got: len });
            }
        }
        Ok(())
    }

    /// Hidden activations `φ(W x + b)`.
    pub fn hidden(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check()?;
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.len() });
        }
        Ok((self.w.dot(&x) + &self.b).mapv(relu))
    }
}

/// Output summed over partner pairs, so the symmetric-init network returns
/// exactly `0.0`.
pub(crate) fn pairwise_output(a: ArrayView1<f64>, hidden: ArrayView1<f64>, m: usize) -> f64 {
    (0..m)
        .map(|j| {
            let k = partner(j, m);
            a[j] * hidden[j] + a[k] * hidden[k]
        })
        .sum()
}

pub fn forward(net: &NetParams, x: ArrayView1<f64>) -> Result<f64> {
    let h = net.hidden(x)?;
    Ok(pairwise_output(net.a.view(), h.view(), net.m))
}

fn predictions(net: &NetParams, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    net.check()?;
    if x.ncols() != net.d() {
        return Err(Error::DimensionMismatch { expected: net.d(), got: x.ncols() });
    }
    let mut pre = x.dot(&net.w.t());
    pre += &net.b.view().insert_axis(Axis(0));
    pre.mapv_inplace(relu);
    Ok(pre.rows().into_iter().map(|h| pairwise_output(net.a.view(), h, net.m)).collect())
}

/// `R_n = (1/2n) Σ (ŷ(x_i) − y_i)²`.
pub fn empirical_risk(net: &NetParams, data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let yhat = predictions(net, data.x.view())?;
    let sq = neumaier_sum(yhat.iter().zip(&data.y).map(|(p, y)| (p - y).powi(2)));
    Ok(sq / (2.0 * data.n() as f64))
}

/// `∇_{W_j} R_n = (−a_j/n) Σ_i y_i x_i φ'(⟨w, x_i⟩ + b_j)`, valid wherever the
/// network output vanishes (symmetric initialization).
pub fn grad_w_row(data: &Dataset, a_j: f64, w: ArrayView1<f64>, b_j: f64) -> Result<Array1<f64>> {
    let d = data.d();
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: w.len() });
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let t = data.x.dot(&w);
    let mut acc = CompensatedVec::zeros(d);
    for (i, row) in data.x.rows().into_iter().enumerate() {
        if t[i] + b_j > 0.0 {
            acc.add_scaled(data.y[i], row.as_slice().expect("row-major features"));
        }
    }
    let scale = -a_j / n as f64;
    Ok(Array1::from(acc.value()).mapv(|v| scale * v))
}

/// Which half of the activation split.
///
/// `Plus` is the gradient through the even part `φ₊(t; b) = (φ(t+b) + φ(−t+b))/2`
/// and carries the odd-order Hermite terms along `V` (order 1, 3, …);
/// `Minus` goes through the odd part `φ₋(t; b) = (φ(t+b) − φ(−t+b))/2` and
/// carries the first-order (linear) component. Their sum is the full gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

/// Per-neuron gradients at the shared probe direction `ē` through both halves
/// of the activation split.
#[derive(Debug, Clone)]
pub struct EvenOddGradients {
    pub plus: Array2<f64>,
    pub minus: Array2<f64>,
}

impl EvenOddGradients {
    pub fn get(&self, sign: Sign) -> &Array2<f64> {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    /// `∇⁺ + ∇⁻`, the unsplit gradient.
    pub fn full(&self) -> Array2<f64> {
        &self.plus + &self.minus
    }
}

/// Row `j` of the result is `−(a_j/n) Σ_i y_i x_i φ'_±(⟨ē, x_i⟩; b_j)` where
///
/// ```text
/// φ'₊(t; b) = (φ'(t+b) − φ'(−t+b)) / 2,    φ'₋(t; b) = (φ'(t+b) + φ'(−t+b)) / 2,
/// ```
///
/// i.e. half the sum/difference of the gradient at `ē` and the gradient of
/// `w ↦ R_n(a, −w, b)` at `ē`.
///
/// Both indicator combinations depend on the sample only through `|t|`
/// thresholded at `|b_j|`, so samples are sorted once by `|t|` and every
/// neuron reads a prefix sum: `O(n·d + width·d)` instead of `O(n·d·width)`.
pub fn even_odd_gradients(
    data: &Dataset,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    probe: ArrayView1<f64>,
) -> Result<EvenOddGradients> {
    let (n, d) = data.x.dim();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if probe.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: probe.len() });
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let width = a.len();
    let t = data.x.dot(&probe);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| t[j].abs().total_cmp(&t[i].abs()).then(i.cmp(&j)));

    // For b > 0 the active set is {|t| ≥ b}; for b ≤ 0 it is {|t| > |b|}.
    // Visit neurons by shrinking threshold (strict before inclusive on ties)
    // so each active set extends the previous one.
    let mut neurons: Vec<usize> = (0..width).collect();
    neurons.sort_by(|&i, &j| {
        b[j].abs()
            .total_cmp(&b[i].abs())
            .then((b[i] > 0.0).cmp(&(b[j] > 0.0)))
            .then(i.cmp(&j))
    });

    let mut signed = CompensatedVec::zeros(d);
    let mut unsigned = CompensatedVec::zeros(d);
    let mut signed_at = vec![Vec::new(); width];
    let mut unsigned_at = vec![Vec::new(); width];
    let mut pos = 0;
    let push = |i: usize, signed: &mut CompensatedVec, unsigned: &mut CompensatedVec| {
        let row = data.x.row(i);
        let row = row.as_slice().expect("row-major features");
        let y = data.y[i];
        signed.add_scaled(if t[i] > 0.0 { y } else { -y }, row);
        unsigned.add_scaled(y, row);
    };
    for &k in &neurons {
        let beta = b[k].abs();
        let inclusive = b[k] > 0.0;
        while pos < n {
            let at = t[order[pos]].abs();
            let active = if inclusive { at >= beta } else { at > beta };
            if !active {
                break;
            }
            push(order[pos], &mut signed, &mut unsigned);
            pos += 1;
        }
        signed_at[k] = signed.value();
        unsigned_at[k] = unsigned.value();
    }
    while pos < n {
        push(order[pos], &mut signed, &mut unsigned);
        pos += 1;
    }
    let total = unsigned.value();

    let mut plus = Array2::zeros((width, d));
    let mut minus = Array2::zeros((width, d));
    for k in 0..width {
        let scale = -a[k] / (2.0 * n as f64);
        for c in 0..d {
            plus[[k, c]] = scale * signed_at[k][c];
            let u = if b[k] > 0.0 { 2.0 * total[c] - unsigned_at[k][c] } else { unsigned_at[k][c] };
            minus[[k, c]] = scale * u;
        }
    }
    Ok(EvenOddGradients { plus, minus })
}

/// One half of [`even_odd_gradients`].
pub fn grad_even_odd(
    data: &Dataset,
    a: ArrayView1<f64>,
    probe: ArrayView1<f64>,
    b: ArrayView1<f64>,
    sign: Sign,
) -> Result<Array2<f64>> {
    let both = even_odd_gradients(data, a, b, probe)?;
    Ok(match sign {
        Sign::Plus => both.plus,
        Sign::Minus => both.minus,
    })
}

/// `∇_a R_n = (1/n) Σ_i (ŷ_i − y_i) φ(W x_i + b)`.
pub fn grad_a(net: &NetParams, data: &Dataset) -> Result<Array1<f64>> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    net.check()?;
    let mut hidden = data.x.dot(&net.w.t());
    hidden += &net.b.view().insert_axis(Axis(0));
    hidden.mapv_inplace(relu);
    let resid: Array1<f64> = hidden
        .rows()
        .into_iter()
        .zip(&data.y)
        .map(|(h, y)| pairwise_output(net.a.view(), h, net.m) - y)
        .collect();
    let mut acc = CompensatedVec::zeros(net.width());
    for (h, r) in hidden.rows().into_iter().zip(resid.iter()) {
        acc.add_scaled(*r, h.as_slice().expect("row-major hidden"));
    }
    Ok(Array1::from(acc.value()) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::LinkSpec;
    use crate::model::{make_sparse_direction, sample_dataset, IndexModel, Profile};
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn fixture(n: usize, d: usize, seed: u64) -> Dataset {
        let link = LinkSpec::from_monomials(vec![0.1, 0.7, -0.4, 0.3]).unwrap();
        let model = IndexModel::single(make_sparse_direction(d, 2.min(d), Profile::Flat).unwrap(), link, 0.2).unwrap();
        sample_dataset(&model, n, seed).unwrap()
    }

    fn random_net(m: usize, d: usize, seed: u64) -> NetParams {
        let mut rng = seeded(seed, 99);
        let mut net = init_symmetric(m, d, seed).unwrap();
        for v in net.a.iter_mut().chain(net.w.iter_mut()).chain(net.b.iter_mut()) {
            *v = StandardNormal.sample(&mut rng);
        }
        net
    }

    #[test]
    fn symmetric_init_properties() {
        let net = init_symmetric(5, 7, 3).unwrap();
        assert_eq!(net.a.sum(), 0.0);
        for j in 0..5 {
            let k = partner(j, 5);
            assert_eq!(net.a[j], -net.a[k]);
            assert_eq!(net.b[j], net.b[k]);
            assert_eq!(net.w.row(j), net.w.row(k));
            assert!(net.a[j] == 1.0 || net.a[j] == -1.0);
        }
        for row in net.w.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
        let mut rng = seeded(1, 1);
        for _ in 0..100 {
            let x: Array1<f64> = (0..7).map(|_| StandardNormal.sample(&mut rng)).collect();
            assert_eq!(forward(&net, x.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn forward_examples() {
        let mut net = init_symmetric(1, 3, 0).unwrap();
        net.a.fill(0.0);
        assert_eq!(forward(&net, array![1.0, 2.0, 3.0].view()).unwrap(), 0.0);
        let net = NetParams {
            a: array![1.0, 0.0],
            w: array![[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            b: array![0.0, 0.0],
            m: 1,
        };
        assert_eq!(forward(&net, array![2.0, 5.0, -1.0].view()).unwrap(), 2.0);
        assert!(matches!(forward(&net, array![1.0].view()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn risk_examples() {
        let data = fixture(20, 4, 1);
        let net = init_symmetric(3, 4, 0).unwrap();
        let at_init = empirical_risk(&net, &data).unwrap();
        let want = data.y.mapv(|y| y * y).sum() / 40.0;
        assert!((at_init - want).abs() < 1e-14);

        let ones = data.with_labels(Array1::ones(20)).unwrap();
        assert_eq!(empirical_risk(&net, &ones).unwrap(), 0.5);

        let single = Dataset::new(array![[1.0, 0.0]], array![1.0], false, 0).unwrap();
        let net = NetParams { a: array![3.0, 0.0], w: array![[1.0, 0.0], [0.0, 0.0]], b: array![0.0, 0.0], m: 1 };
        assert_eq!(empirical_risk(&net, &single).unwrap(), 2.0);

        let perfect = Dataset::new(array![[1.0, 0.0], [2.0, 1.0]], array![3.0, 6.0], false, 0).unwrap();
        assert_eq!(empirical_risk(&net, &perfect).unwrap(), 0.0);
    }

    #[test]
    fn grad_w_row_examples() {
        let data = fixture(30, 3, 2);
        let zero = data.with_labels(Array1::zeros(30)).unwrap();
        let g = grad_w_row(&zero, 1.0, array![1.0, 0.0, 0.0].view(), 0.3).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let one = Dataset::new(array![[1.0]], array![1.0], false, 0).unwrap();
        assert_eq!(grad_w_row(&one, 1.0, array![1.0].view(), 0.0).unwrap(), array![-1.0]);
    }

    #[test]
    fn grad_w_row_matches_finite_differences_of_mirrored_pair() {
        // Only row j moves; its partner keeps ŷ ≡ 0 at the base point.
        for seed in 0..5 {
            let data = fixture(64, 8, seed);
            let net = init_symmetric(4, 8, seed + 10).unwrap();
            let j = 1;
            let g = grad_w_row(&data, net.a[j], net.w.row(j), net.b[j]).unwrap();
            let h = 1e-6;
            for c in 0..8 {
                let mut up = net.clone();
                let mut dn = net.clone();
                up.w[[j, c]] += h;
                dn.w[[j, c]] -= h;
                let fd = (empirical_risk(&up, &data).unwrap() - empirical_risk(&dn, &data).unwrap()) / (2.0 * h);
                let rel = (fd - g[c]).abs() / g[c].abs().max(1e-3);
                assert!(rel <= 1e-5, "seed {seed} coord {c}: fd {fd} formula {}", g[c]);
            }
        }
    }

    /// Direct evaluation of the split from its definition, for checking the
    /// prefix-sum implementation.
    fn even_odd_direct(data: &Dataset, a: &Array1<f64>, b: &Array1<f64>, probe: &Array1<f64>) -> (Array2<f64>, Array2<f64>) {
        let n = data.n() as f64;
        let t = data.x.dot(probe);
        let mut plus = Array2::zeros((a.len(), data.d()));
        let mut minus = Array2::zeros((a.len(), data.d()));
        for j in 0..a.len() {
            for (i, row) in data.x.rows().into_iter().enumerate() {
                let f1 = relu_prime(t[i] + b[j]);
                let f2 = relu_prime(-t[i] + b[j]);
                let wp = -a[j] / n * data.y[i] * 0.5 * (f1 - f2);
                let wm = -a[j] / n * data.y[i] * 0.5 * (f1 + f2);
                plus.row_mut(j).scaled_add(wp, &row);
                minus.row_mut(j).scaled_add(wm, &row);
            }
        }
        (plus, minus)
    }

    #[test]
    fn prefix_split_matches_definition() {
        for seed in 0..5 {
            let data = fixture(200, 6, seed);
            let net = init_symmetric(7, 6, seed).unwrap();
            let probe = net.w.row(0).to_owned();
            let fast = even_odd_gradients(&data, net.a.view(), net.b.view(), probe.view()).unwrap();
            let (p, m) = even_odd_direct(&data, &net.a, &net.b, &probe);
            for (x, y) in fast.plus.iter().zip(p.iter()).chain(fast.minus.iter().zip(m.iter())) {
                assert!((x - y).abs() <= 1e-13, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn split_reconstructs_full_gradient() {
        let data = fixture(300, 5, 8);
        let net = init_symmetric(4, 5, 8).unwrap();
        let probe = net.w.row(2).to_owned();
        let split = even_odd_gradients(&data, net.a.view(), net.b.view(), probe.view()).unwrap();
        let full = split.full();
        for j in 0..net.width() {
            let direct = grad_w_row(&data, net.a[j], probe.view(), net.b[j]).unwrap();
            for c in 0..5 {
                assert!((full[[j, c]] - direct[c]).abs() <= 1e-14, "{} vs {}", full[[j, c]], direct[c]);
            }
        }
        let again = even_odd_gradients(&data, net.a.view(), net.b.view(), probe.view()).unwrap();
        assert_eq!(again.full(), full);
    }

    #[test]
    fn ties_on_the_kink_follow_the_zero_derivative_convention() {
        // Sample 0 lands exactly on t = −b for the single neuron (b = 0.5 > 0).
        let x = array![[-0.5, 1.0], [0.2, -0.3], [1.5, 0.4], [-2.0, 0.9]];
        let y = array![1.0, -0.5, 2.0, 0.7];
        let data = Dataset::new(x, y, false, 0).unwrap();
        let a = array![1.0, -1.0];
        let b = array![0.5, 0.5];
        let probe = array![1.0, 0.0];
        let fast = even_odd_gradients(&data, a.view(), b.view(), probe.view()).unwrap();
        let (p, m) = even_odd_direct(&data, &a, &b, &probe);
        assert_eq!(fast.plus.row(0).to_vec(), p.row(0).to_vec());
        assert!(fast.minus.iter().zip(m.iter()).all(|(u, v)| (u - v).abs() < 1e-15));
        // On the kink φ'(t + b) = φ'(0) = 0, so sample 0 enters only through φ'(−t + b) = 1.
        let g = grad_w_row(&data, 1.0, probe.view(), 0.5).unwrap();
        let without: Array1<f64> = {
            let mut acc = Array1::zeros(2);
            for i in 1..4 {
                if data.x[[i, 0]] + 0.5 > 0.0 {
                    acc.scaled_add(data.y[i], &data.x.row(i));
                }
            }
            acc * (-1.0 / 4.0)
        };
        assert_eq!(g, without);
    }

    #[test]
    fn grad_a_examples_and_finite_differences() {
        let data = fixture(64, 8, 4);
        let mut net = init_symmetric(4, 8, 1).unwrap();
        net.a.fill(0.0);
        let g0 = grad_a(&net, &data).unwrap();
        let mut want = Array1::<f64>::zeros(8);
        for (i, row) in data.x.rows().into_iter().enumerate() {
            let h = net.hidden(row).unwrap();
            want.scaled_add(-data.y[i] / 64.0, &h);
        }
        for (g, w) in g0.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-14);
        }

        for seed in 0..5 {
            let data = fixture(64, 8, 100 + seed);
            let net = random_net(4, 8, seed);
            let g = grad_a(&net, &data).unwrap();
            let h = 1e-5;
            for c in 0..8 {
                let mut up = net.clone();
                let mut dn = net.clone();
                up.a[c] += h;
                dn.a[c] -= h;
                let fd = (empirical_risk(&up, &data).unwrap() - empirical_risk(&dn, &data).unwrap()) / (2.0 * h);
                let rel = (fd - g[c]).abs() / g[c].abs().max(1e-8);
                assert!(rel <= 1e-5, "seed {seed} coord {c}: {fd} vs {}", g[c]);
            }
        }
    }

    #[test]
    fn grad_a_vanishes_for_perfect_fit() {
        let data = fixture(40, 3, 0);
        let net = random_net(2, 3, 5);
        let yhat: Array1<f64> = data.x.rows().into_iter().map(|r| forward(&net, r).unwrap()).collect();
        let fitted = data.with_labels(yhat).unwrap();
        assert!(grad_a(&net, &fitted).unwrap().iter().all(|v| v.abs() < 1e-14));
    }
}
