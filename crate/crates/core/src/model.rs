//! Sparse index models: direction construction, soft sparsity, sampling,
//! augmentation, and the full-rank check on the multi-index link.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::hermite::{factorial, LinkSpec};
use crate::rng::{seeded, STREAM_AUGMENT, STREAM_FEATURES, STREAM_FRAME, STREAM_MC, STREAM_NOISE};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Entry profile of a sparse unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `s` equal entries `1/√s`.
    Flat,
    /// One dominant entry `√(1 − (s−1)ε²)` followed by `s − 1` entries equal to `ε`.
    Dominated(f64),
}

pub fn make_sparse_direction(d: usize, s: usize, profile: Profile) -> Result<Array1<f64>> {
    if s == 0 || s > d {
        return Err(invalid(format!("sparsity s={s} must lie in [1, d={d}]")));
    }
    let mut v = Array1::zeros(d);
    match profile {
        Profile::Flat => {
            let e = 1.0 / (s as f64).sqrt();
            v.slice_mut(s![..s]).fill(e);
        }
        Profile::Dominated(eps) => {
            if !(eps > 0.0 && eps < 1.0 / (s as f64).sqrt()) {
                return Err(invalid(format!("dominated profile needs 0 < eps < s^(-1/2), got {eps}")));
            }
            v[0] = (1.0 - (s - 1) as f64 * eps * eps).sqrt();
            v.slice_mut(s![1..s]).fill(eps);
        }
    }
    Ok(v)
}

/// `d × r` orthonormal frame; column `j` lives in the contiguous block
/// `[j·⌊d/r⌋, (j+1)·⌊d/r⌋)` with `s` flat entries at seed-shuffled positions.
pub fn make_sparse_frame(d: usize, r: usize, s: usize, seed: u64) -> Result<Array2<f64>> {
    if r == 0 || s == 0 || r * s > d {
        return Err(invalid(format!("frame needs r·s <= d (r={r}, s={s}, d={d})")));
    }
    let block = d / r;
    let mut rng = seeded(seed, STREAM_FRAME);
    let mut frame = Array2::zeros((d, r));
    let e = 1.0 / (s as f64).sqrt();
    for j in 0..r {
        let mut positions: Vec<usize> = (0..block).collect();
        positions.shuffle(&mut rng);
        for &p in &positions[..s] {
            frame[[j * block + p, j]] = e;
        }
    }
    Ok(frame)
}

/// `‖V‖_{2,q}^q = Σ_i ‖V_{i*}‖^q`; for `q = 0` the number of nonzero rows.
pub fn soft_sparsity(v: ArrayView2<f64>, q: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&q) {
        return Err(invalid(format!("soft sparsity needs q in [0, 2), got {q}")));
    }
    let row_norms = v.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    Ok(if q == 0.0 {
        row_norms.iter().filter(|&&n| n > 0.0).count() as f64
    } else {
        row_norms.iter().map(|n| n.powf(q)).sum()
    })
}

/// Largest absolute entry of `VᵀV − I`.
pub fn orthonormality_defect(v: ArrayView2<f64>) -> f64 {
    let gram = v.t().dot(&v);
    gram.indexed_iter()
        .map(|((i, j), g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// `y = Σ_j σ_j(⟨V_{*j}, x⟩) + √Δ ε`.
///
/// With one column this is the single-index model; with several columns the
/// link is additive across directions, which covers the function class used
/// by the lower bound and all multi-index fixtures.
#[derive(Debug, Clone)]
pub struct IndexModel {
    directions: Array2<f64>,
    links: Vec<LinkSpec>,
    noise_delta: f64,
}

impl IndexModel {
    pub fn new(directions: Array2<f64>, links: Vec<LinkSpec>, noise_delta: f64) -> Result<Self> {
        let (d, r) = directions.dim();
        if r == 0 || r > d {
            return Err(invalid(format!("need 1 <= r <= d, got r={r}, d={d}")));
        }
        if links.len() != r {
            return Err(Error::DimensionMismatch { expected: r, got: links.len() });
        }
        if !(noise_delta >= 0.0) || !noise_delta.is_finite() {
            return Err(invalid(format!("noise level must be finite and >= 0, got {noise_delta}")));
        }
        let defect = orthonormality_defect(directions.view());
        if defect > ORTHONORMAL_TOL {
            return Err(invalid(format!("directions are not orthonormal (defect {defect:e})")));
        }
        Ok(Self { directions, links, noise_delta })
    }

    pub fn single(v: Array1<f64>, link: LinkSpec, noise_delta: f64) -> Result<Self> {
        let d = v.len();
        Self::new(v.into_shape_with_order((d, 1)).expect("column"), vec![link], noise_delta)
    }

    /// `(1/√(r·k!)) Σ_j He_k(⟨V_{*j}, x⟩)`.
    pub fn hermite_family(directions: Array2<f64>, k: usize, noise_delta: f64) -> Result<Self> {
        let r = directions.ncols();
        let scale = 1.0 / (r as f64 * factorial(k)).sqrt();
        let link = LinkSpec::he(k)?.scaled(scale)?;
        Self::new(directions, vec![link; r], noise_delta)
    }

    pub fn d(&self) -> usize {
        self.directions.nrows()
    }

    pub fn r(&self) -> usize {
        self.directions.ncols()
    }

    pub fn directions(&self) -> ArrayView2<'_, f64> {
        self.directions.view()
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn noise_delta(&self) -> f64 {
        self.noise_delta
    }

    /// The same model viewed in `d + 1` coordinates, with a zero row appended
    /// for the augmented coordinate.
    pub fn augmented(&self) -> Self {
        let (d, r) = self.directions.dim();
        let mut v = Array2::zeros((d + 1, r));
        v.slice_mut(s![..d, ..]).assign(&self.directions);
        Self { directions: v, links: self.links.clone(), noise_delta: self.noise_delta }
    }

    /// Noiseless response `σ*(Vᵀx)`.
    pub fn mean_response(&self, x: ArrayView1<f64>) -> f64 {
        self.links
            .iter()
            .zip(self.directions.columns())
            .map(|(link, col)| link.eval(col.dot(&x)))
            .sum()
    }
}

/// Labelled sample; `augmented` marks that the last column is pure noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub augmented: bool,
    pub seed: u64,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, augmented: bool, seed: u64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        Ok(Self { x, y, augmented, seed })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Same features, new labels.
    pub fn with_labels(&self, y: Array1<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.augmented, self.seed)
    }

    /// CSV with header `x_1,…,x_d,y`; floats in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.d()).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.d() + 1);
        for (row, y) in self.x.rows().into_iter().zip(self.y.iter()) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(y.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, augmented: bool, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let d = header.len().checked_sub(1).ok_or_else(|| Error::Parse("empty header".into()))?;
        for (i, name) in header.iter().enumerate() {
            let want = if i < d { format!("x_{}", i + 1) } else { "y".into() };
            if name != want {
                return Err(Error::Parse(format!("column {i}: expected `{want}`, found `{name}`")));
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse(format!("bad float `{field}`")))?;
                if i < d {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        let n = ys.len();
        let x = Array2::from_shape_vec((n, d), xs).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(x, Array1::from(ys), augmented, seed)
    }
}

/// Draw `n` iid Gaussian inputs and their responses.
pub fn sample_dataset(model: &IndexModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = model.d();
    let mut feat_rng = seeded(seed, STREAM_FEATURES);
    let x = Array2::from_shape_simple_fn((n, d), || feat_rng.sample::<f64, _>(StandardNormal));
    let mut noise_rng = seeded(seed, STREAM_NOISE);
    let scale = model.noise_delta.sqrt();
    let y: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|row| {
            let eps: f64 = noise_rng.sample(StandardNormal);
            model.mean_response(row) + scale * eps
        })
        .collect();
    Dataset::new(x, y, false, seed)
}

/// Append one independent standard-normal feature.
pub fn augment(data: &Dataset, seed: u64) -> Result<Dataset> {
    if data.augmented {
        return Err(Error::AlreadyAugmented);
    }
    let (n, d) = data.x.dim();
    let mut rng = seeded(seed, STREAM_AUGMENT);
    let mut x = Array2::zeros((n, d + 1));
    x.slice_mut(s![.., ..d]).assign(&data.x);
    for i in 0..n {
        x[[i, d]] = rng.sample(StandardNormal);
    }
    Dataset::new(x, data.y.clone(), true, data.seed)
}

/// Monte-Carlo estimate of `D = E[σ*(z) z zᵀ]` for the additive link
/// `σ*(z) = Σ_j links[j](z_j)`, and whether its smallest singular value exceeds `tol`.
pub fn check_assumption_full_rank(
    links: &[LinkSpec],
    mc_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<(Array2<f64>, bool)> {
    let r = links.len();
    if r == 0 || mc_samples == 0 {
        return Err(invalid("full-rank check needs r >= 1 and mc_samples >= 1"));
    }
    let mut rng = seeded(seed, STREAM_MC);
    let mut acc = Array2::<f64>::zeros((r, r));
    let mut z = vec![0.0; r];
    for _ in 0..mc_samples {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let y: f64 = links.iter().zip(&z).map(|(l, &zj)| l.eval(zj)).sum();
        for a in 0..r {
            for b in a..r {
                acc[[a, b]] += y * z[a] * z[b];
            }
        }
    }
    acc.mapv_inplace(|v| v / mc_samples as f64);
    for a in 0..r {
        for b in 0..a {
            acc[[a, b]] = acc[[b, a]];
        }
    }
    let sigma_min = smallest_singular_value(acc.view());
    Ok((acc, sigma_min > tol))
}

pub fn smallest_singular_value(m: ArrayView2<f64>) -> f64 {
    let (rows, cols) = m.dim();
    let dm = DMatrix::from_fn(rows, cols, |i, j| m[[i, j]]);
    dm.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}
