//! Sparse near-orthogonal frame families and the correlational-query accuracy bound.
//!
//! Frames are assembled block-wise: the `d` coordinates are split into `r`
//! contiguous blocks of size `⌊d/r⌋`, column `i` of every frame lives in block
//! `i`, so each frame is exactly orthonormal and frames only interact through
//! same-block columns.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{orthonormality_defect, soft_sparsity};
use crate::rng::{seeded, STREAM_PACKING};

fn draw_ps<R: Rng>(rng: &mut R, len: usize, s: usize) -> Array1<f64> {
    let half = s as f64 / (2.0 * len as f64);
    let val = 1.0 / (s as f64).sqrt();
    Array1::from_shape_fn(len, |_| {
        let u: f64 = rng.random();
        if u < half {
            val
        } else if u < 2.0 * half {
            -val
        } else {
            0.0
        }
    })
}

/// One draw from `P_s`: coordinates iid, `±1/√s` with probability `s/(2d)` each, else 0.
pub fn sample_ps(d: usize, s: usize, seed: u64) -> Result<Array1<f64>> {
    if s < 1 || s > d {
        return Err(invalid(format!("P_s needs 1 <= s <= d (s = {s}, d = {d})")));
    }
    Ok(draw_ps(&mut seeded(seed, STREAM_PACKING), d, s))
}

/// `(1/r) Σ_{i,j} |⟨V¹_{*i}, V²_{*j}⟩|^k`.
pub fn avg_correlation(v1: ArrayView2<f64>, v2: ArrayView2<f64>, k: u32) -> Result<f64> {
    if v1.dim() != v2.dim() {
        return Err(Error::DimensionMismatch { expected: v1.ncols(), got: v2.ncols() });
    }
    let r = v1.ncols();
    if r == 0 {
        return Err(invalid("frames need at least one column"));
    }
    let gram = v1.t().dot(&v2);
    Ok(gram.iter().map(|g| g.abs().powi(k as i32)).sum::<f64>() / r as f64)
}

/// `max_{i,j} |⟨V¹_{*i}, V²_{*j}⟩|`.
pub fn max_column_coherence(v1: ArrayView2<f64>, v2: ArrayView2<f64>) -> Result<f64> {
    if v1.dim() != v2.dim() {
        return Err(Error::DimensionMismatch { expected: v1.ncols(), got: v2.ncols() });
    }
    Ok(v1.t().dot(&v2).iter().fold(0.0f64, |m, g| m.max(g.abs())))
}

/// `d^{−min(α, 1/2)·k/2}`, the query accuracy below which learning the class
/// needs superpolynomially many queries (polylog factors dropped).
pub fn csq_tau_bound(d: usize, alpha: f64, k: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    if k < 1 || d < 1 {
        return Err(invalid("need k >= 1 and d >= 1"));
    }
    Ok((d as f64).powf(-alpha.min(0.5) * k as f64 / 2.0))
}

/// The default coherence cap `8 C e ln(d²) / min(√⌊d/r⌋, s)` with `C = 1`.
pub fn default_coherence_cap(d: usize, r: usize, s: usize) -> f64 {
    let dt = (d / r.max(1)) as f64;
    8.0 * std::f64::consts::E * (2.0 * (d as f64).ln()) / dt.sqrt().min(s as f64)
}

#[derive(Debug, Clone)]
pub struct PackingConfig {
    pub d: usize,
    pub r: usize,
    pub s: usize,
    pub count: usize,
    pub k: u32,
    pub coherence_cap: f64,
    /// Draw budget per block.
    pub max_attempts: usize,
    pub seed: u64,
    /// Exponent used when reporting soft sparsity.
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct Packing {
    pub frames: Vec<Array2<f64>>,
    pub s: usize,
    pub k: u32,
    pub q: f64,
    pub coherence_cap: f64,
    /// Largest pairwise average correlation.
    pub achieved_coherence: f64,
    /// Largest single column inner product over all pairs.
    pub max_column_coherence: f64,
    /// Fraction of draws accepted, over all blocks.
    pub acceptance_rate: f64,
    /// `false` when the draw budget ran out before `count` frames were built.
    pub complete: bool,
}

/// Rejection-sample a block-structured frame family.
pub fn build_packing(cfg: &PackingConfig) -> Result<Packing> {
    let PackingConfig { d, r, s, count, k, coherence_cap, max_attempts, seed, q } = *cfg;
    if r < 1 || d < r {
        return Err(invalid("need 1 <= r <= d"));
    }
    let dt = d / r;
    if s < 1 || 2 * s > dt {
        return Err(invalid(format!("need 1 <= s <= ⌊d/r⌋/2 (s = {s}, block = {dt})")));
    }
    if count < 1 {
        return Err(invalid("count must be at least 1"));
    }
    let mut rng = seeded(seed, STREAM_PACKING);
    let (lo, hi) = (s as f64 / 2.0, 1.5 * s as f64);
    let mut blocks: Vec<Vec<Array1<f64>>> = Vec::with_capacity(r);
    let (mut drawn, mut accepted) = (0usize, 0usize);
    for _ in 0..r {
        let mut kept: Vec<Array1<f64>> = Vec::new();
        let mut attempts = 0;
        while kept.len() < count && attempts < max_attempts {
            attempts += 1;
            let raw = draw_ps(&mut rng, dt, s);
            let nnz = raw.iter().filter(|x| **x != 0.0).count() as f64;
            if nnz < lo || nnz > hi {
                continue;
            }
            let u = &raw / raw.dot(&raw).sqrt();
            if kept.iter().all(|w| w.dot(&u).abs() <= coherence_cap) {
                kept.push(u);
            }
        }
        drawn += attempts;
        accepted += kept.len();
        blocks.push(kept);
    }
    let built = blocks.iter().map(Vec::len).min().unwrap_or(0);
    let frames: Vec<Array2<f64>> = (0..built)
        .map(|f| {
            let mut v = Array2::zeros((d, r));
            for (b, kept) in blocks.iter().enumerate() {
                for (t, x) in kept[f].iter().enumerate() {
                    v[[b * dt + t, b]] = *x;
                }
            }
            v
        })
        .collect();
    let (achieved, max_col) = pairwise_coherence(&frames, k)?;
    Ok(Packing {
        frames,
        s,
        k,
        q,
        coherence_cap,
        achieved_coherence: achieved,
        max_column_coherence: max_col,
        acceptance_rate: if drawn == 0 { 0.0 } else { accepted as f64 / drawn as f64 },
        complete: built == count,
    })
}

fn pairwise_coherence(frames: &[Array2<f64>], k: u32) -> Result<(f64, f64)> {
    let mut achieved = 0.0f64;
    let mut max_col = 0.0f64;
    for a in 0..frames.len() {
        for b in a + 1..frames.len() {
            achieved = achieved.max(avg_correlation(frames[a].view(), frames[b].view(), k)?);
            max_col = max_col.max(max_column_coherence(frames[a].view(), frames[b].view())?);
        }
    }
    Ok((achieved, max_col))
}

/// Result of re-checking a packing from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingAudit {
    pub max_orthonormality_defect: f64,
    pub max_avg_correlation: f64,
    pub max_column_coherence: f64,
    pub max_soft_sparsity: f64,
    /// `3 r (s/2)^{(2−q)/2}`.
    pub sparsity_bound: f64,
}

impl PackingAudit {
    /// All type invariants hold.
    pub fn passes(&self, packing: &Packing) -> bool {
        self.max_orthonormality_defect <= 1e-10
            && self.max_avg_correlation <= packing.achieved_coherence
            && self.max_column_coherence <= packing.coherence_cap
            && self.max_soft_sparsity <= self.sparsity_bound
    }
}

impl Packing {
    /// Recompute every invariant directly from the frames.
    pub fn audit(&self) -> Result<PackingAudit> {
        let r = self.frames.first().map(|f| f.ncols()).unwrap_or(1);
        let mut defect = 0.0f64;
        let mut sparsity = 0.0f64;
        for f in &self.frames {
            defect = defect.max(orthonormality_defect(f.view()));
            sparsity = sparsity.max(soft_sparsity(f.view(), self.q)?);
        }
        let (avg, col) = pairwise_coherence(&self.frames, self.k)?;
        Ok(PackingAudit {
            max_orthonormality_defect: defect,
            max_avg_correlation: avg,
            max_column_coherence: col,
            max_soft_sparsity: sparsity,
            sparsity_bound: 3.0 * r as f64 * (self.s as f64 / 2.0).powf((2.0 - self.q) / 2.0),
        })
    }

    /// Pairwise values `(a, b, avg_correlation, max column inner product)` with 1-based frame ids.
    pub fn pair_table(&self) -> Result<Vec<(usize, usize, f64, f64)>> {
        let mut out = Vec::new();
        for a in 0..self.frames.len() {
            for b in a + 1..self.frames.len() {
                out.push((
                    a + 1,
                    b + 1,
                    avg_correlation(self.frames[a].view(), self.frames[b].view(), self.k)?,
                    max_column_coherence(self.frames[a].view(), self.frames[b].view())?,
                ));
            }
        }
        Ok(out)
    }

    /// `frame_NNN.csv` files (`row,col,value`, 1-based, nonzeros only),
    /// `coherence.csv` with all pairs, and `manifest.txt`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (f, frame) in self.frames.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("frame_{:03}.csv", f + 1)))?;
            w.write_record(["row", "col", "value"])?;
            for ((i, j), v) in frame.indexed_iter() {
                if *v != 0.0 {
                    w.write_record([(i + 1).to_string(), (j + 1).to_string(), v.to_string()])?;
                }
            }
            w.flush()?;
        }
        let mut w = csv::Writer::from_path(dir.join("coherence.csv"))?;
        w.write_record(["frame_a", "frame_b", "avg_correlation", "max_column_coherence"])?;
        for (a, b, avg, col) in self.pair_table()? {
            w.write_record([a.to_string(), b.to_string(), avg.to_string(), col.to_string()])?;
        }
        w.flush()?;
        let mut m = fs::File::create(dir.join("manifest.txt"))?;
        writeln!(m, "frames={}", self.frames.len())?;
        writeln!(m, "s={}", self.s)?;
        writeln!(m, "k={}", self.k)?;
        writeln!(m, "q={}", self.q)?;
        writeln!(m, "coherence_cap={}", self.coherence_cap)?;
        writeln!(m, "achieved_coherence={}", self.achieved_coherence)?;
        writeln!(m, "max_column_coherence={}", self.max_column_coherence)?;
        writeln!(m, "acceptance_rate={}", self.acceptance_rate)?;
        writeln!(m, "complete={}", self.complete)?;
        Ok(())
    }
}
