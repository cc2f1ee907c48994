//! Gradient-based pruning: probe the symmetric-init network at shifted basis
//! directions, split each per-neuron gradient into its even/odd parts,
//! truncate rows to their `M` largest entries and keep the coordinates whose
//! probes carry the most gradient mass.
//!
//! Coordinates are 1-based throughout this module (`1..=d`, with `d` the
//! augmented coordinate).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::Dataset;
use crate::network::{even_odd_gradients, symmetric_output_and_bias, EvenOddGradients, Sign};
use crate::rng::{seeded, STREAM_PRUNE_INIT};

/// `ē_i = c·e_i + √(1 − c²)·e_d` for `i < d`, and `ē_d = e_d`.
pub fn shifted_basis(i: usize, d: usize, c: f64) -> Result<Array1<f64>> {
    if i < 1 || i > d {
        return Err(invalid(format!("basis index {i} outside 1..={d}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid(format!("shift c = {c} outside (0, 1)")));
    }
    let mut e = Array1::zeros(d);
    if i == d {
        e[d - 1] = 1.0;
    } else {
        e[i - 1] = c;
        e[d - 1] = (1.0 - c * c).sqrt();
    }
    Ok(e)
}

/// Positions of the `m` largest-magnitude entries, ties to the smaller index,
/// in rank order.
pub fn top_m_positions(v: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let cmp = |a: &usize, b: &usize| v[*b].abs().total_cmp(&v[*a].abs()).then(a.cmp(b));
    if m < idx.len() && m > 0 {
        idx.select_nth_unstable_by(m - 1, cmp);
        idx.truncate(m);
    }
    idx.truncate(m);
    idx.sort_by(cmp);
    idx
}

/// Keep the `m` largest-magnitude entries, zero the rest.
pub fn top_m(v: ArrayView1<f64>, m: usize) -> Array1<f64> {
    let slice = v.to_vec();
    let mut out = Array1::zeros(v.len());
    for p in top_m_positions(&slice, m) {
        out[p] = slice[p];
    }
    out
}

fn truncated_sq_norm(row: &[f64], m: usize) -> f64 {
    top_m_positions(row, m).into_iter().map(|p| row[p] * row[p]).sum()
}

/// Bias draw for the pruning network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasInit {
    /// `b_j ~ N(0, 1)`, mirrored.
    Gaussian,
    /// All biases zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    /// Number of coordinates kept per ranking and per truncated row.
    pub sparsity: usize,
    /// Shrinkage of the probe toward `e_i`.
    pub c: f64,
    /// Half-width of the probing network.
    pub m: usize,
    pub seed: u64,
    /// Probe index used by the odd-part step (default: `d`).
    pub line3_probe: Option<usize>,
    pub bias_init: BiasInit,
}

impl PruneConfig {
    pub fn new(sparsity: usize, c: f64, m: usize, seed: u64) -> Self {
        Self { sparsity, c, m, seed, line3_probe: None, bias_init: BiasInit::Gaussian }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.m < 1 {
            return Err(invalid("pruning needs m >= 1"));
        }
        if self.sparsity < 1 || self.sparsity > d {
            return Err(invalid(format!("M = {} outside 1..={d}", self.sparsity)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(invalid(format!("c = {} outside (0, 1)", self.c)));
        }
        if let Some(p) = self.line3_probe {
            if p < 1 || p > d {
                return Err(invalid(format!("line-3 probe {p} outside 1..={d}")));
            }
        }
        Ok(())
    }
}

/// Why an index was kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    /// Support of the truncated odd-part gradient at the line-3 probe.
    Line3,
    /// Top-`M` by even-part (φ₊) gradient mass.
    EvenTopM,
    /// Top-`M` by odd-part (φ₋) gradient mass.
    OddTopM,
    /// Added explicitly (e.g. the unpruned baseline).
    Forced,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::Line3 => "line3",
            Source::EvenTopM => "even_topM",
            Source::OddTopM => "odd_topM",
            Source::Forced => "forced",
        }
    }

    fn parse(tag: &str) -> Result<Self> {
        Ok(match tag {
            "line3" => Source::Line3,
            "even_topM" => Source::EvenTopM,
            "odd_topM" => Source::OddTopM,
            "forced" => Source::Forced,
            other => return Err(Error::Parse(format!("unknown support source `{other}`"))),
        })
    }
}

/// Sorted set of 1-based coordinates with provenance tags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportSet {
    entries: BTreeMap<usize, Vec<Source>>,
    d: usize,
}

impl SupportSet {
    pub fn empty(d: usize) -> Self {
        Self { entries: BTreeMap::new(), d }
    }

    /// `J = [d]`.
    pub fn full(d: usize) -> Self {
        let mut s = Self::empty(d);
        for i in 1..=d {
            s.insert(i, Source::Forced).expect("in range");
        }
        s
    }

    pub fn insert(&mut self, i: usize, source: Source) -> Result<()> {
        if i < 1 || i > self.d {
            return Err(invalid(format!("support index {i} outside 1..={}", self.d)));
        }
        let tags = self.entries.entry(i).or_default();
        if !tags.contains(&source) {
            tags.push(source);
            tags.sort();
        }
        Ok(())
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.entries.contains_key(&i)
    }

    /// Sorted 1-based indices.
    pub fn indices(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    /// Sorted 0-based positions, for indexing arrays.
    pub fn positions(&self) -> Vec<usize> {
        self.entries.keys().map(|i| i - 1).collect()
    }

    pub fn sources(&self, i: usize) -> &[Source] {
        self.entries.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    /// 0/1 mask over the `d` coordinates.
    pub fn mask(&self) -> Array1<f64> {
        let mut m = Array1::zeros(self.d);
        for p in self.positions() {
            m[p] = 1.0;
        }
        m
    }

    /// `‖V|_{Jᶜ}‖_F²` for a `d × r` frame (rows beyond the frame are zero).
    pub fn residual(&self, frame: ndarray::ArrayView2<f64>) -> f64 {
        frame
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(p, _)| !self.contains(p + 1))
            .fold(0.0, |acc, (_, row)| acc + row.dot(&row))
    }

    /// One index per line with its tags: `12 # source=line3,even_topM`.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# d={}", self.d)?;
        for (i, tags) in &self.entries {
            let tags: Vec<&str> = tags.iter().map(|t| t.tag()).collect();
            writeln!(out, "{i} # source={}", tags.join(","))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut set: Option<Self> = None;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(d) = line.strip_prefix("# d=") {
                let d = d.trim().parse().map_err(|_| Error::Parse(format!("bad dimension line `{line}`")))?;
                set = Some(Self::empty(d));
                continue;
            }
            let set = set.as_mut().ok_or_else(|| Error::Parse("support file lacks `# d=` header".into()))?;
            let (idx, tags) = line.split_once('#').ok_or_else(|| Error::Parse(format!("missing tags in `{line}`")))?;
            let i: usize = idx.trim().parse().map_err(|_| Error::Parse(format!("bad index in `{line}`")))?;
            let tags = tags
                .trim()
                .strip_prefix("source=")
                .ok_or_else(|| Error::Parse(format!("missing `source=` in `{line}`")))?;
            for t in tags.split(',') {
                set.insert(i, Source::parse(t.trim())?)?;
            }
        }
        set.ok_or_else(|| Error::Parse("empty support file".into()))
    }
}

impl fmt::Display for SupportSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.entries.keys().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", idx.join(","))
    }
}

/// Intermediate quantities of one pruning run.
#[derive(Debug, Clone)]
pub struct PruneTrace {
    /// `‖∇̃⁺(ē_i)‖_F²` for `i = 1..=d` (index `i − 1`).
    pub plus_mass: Vec<f64>,
    /// `‖∇̃⁻(ē_i)‖_F²`.
    pub minus_mass: Vec<f64>,
    /// Mass of the truncated unsplit gradient, for the naive ranking.
    pub full_mass: Vec<f64>,
    /// Neuron used by the line-3 step, if any had `b_j ≥ 0`.
    pub line3_neuron: Option<usize>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
}

/// Coordinates ordered by descending mass, ascending index on ties (1-based).
pub fn rank_by_mass(mass: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..mass.len()).collect();
    idx.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    idx.into_iter().map(|p| p + 1).collect()
}

fn mass(g: &EvenOddGradients, sign: Option<Sign>, m: usize) -> f64 {
    let rows = match sign {
        Some(s) => g.get(s).clone(),
        None => g.full(),
    };
    rows.rows()
        .into_iter()
        .map(|r| truncated_sq_norm(r.as_slice().expect("row-major gradient"), m))
        .sum()
}

/// Draw `(a(0), b(0))` as the pruning network does.
pub fn prune_init(cfg: &PruneConfig) -> (Array1<f64>, Array1<f64>) {
    let mut rng = seeded(cfg.seed, STREAM_PRUNE_INIT);
    let (a, mut b) = symmetric_output_and_bias(cfg.m, &mut rng);
    if cfg.bias_init == BiasInit::Zero {
        b.fill(0.0);
    }
    (a, b)
}

/// Run the pruning pass and return the support with its trace.
pub fn prune_network_traced(data: &Dataset, cfg: &PruneConfig) -> Result<(SupportSet, PruneTrace)> {
    if !data.augmented {
        return Err(Error::NotAugmented);
    }
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = data.d();
    cfg.validate(d)?;
    let big_m = cfg.sparsity;
    let (a, b) = prune_init(cfg);

    let masses: Vec<(f64, f64, f64)> = (1..=d)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let probe = shifted_basis(i, d, cfg.c)?;
            let g = even_odd_gradients(data, a.view(), b.view(), probe.view())?;
            Ok((mass(&g, Some(Sign::Plus), big_m), mass(&g, Some(Sign::Minus), big_m), mass(&g, None, big_m)))
        })
        .collect::<Result<_>>()?;
    let plus_mass: Vec<f64> = masses.iter().map(|m| m.0).collect();
    let minus_mass: Vec<f64> = masses.iter().map(|m| m.1).collect();
    let full_mass: Vec<f64> = masses.iter().map(|m| m.2).collect();
    if plus_mass.iter().chain(&minus_mass).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pruning gradient mass".into()));
    }

    let mut support = SupportSet::empty(d);
    let line3_neuron = (0..cfg.m).find(|&j| b[j] >= 0.0);
    if let Some(j) = line3_neuron {
        let probe = shifted_basis(cfg.line3_probe.unwrap_or(d), d, cfg.c)?;
        let g = even_odd_gradients(data, a.view(), b.view(), probe.view())?;
        let row = g.minus.row(j).to_vec();
        for p in top_m_positions(&row, big_m) {
            if row[p] != 0.0 {
                support.insert(p + 1, Source::Line3)?;
            }
        }
    }
    for i in rank_by_mass(&plus_mass).into_iter().take(big_m) {
        support.insert(i, Source::EvenTopM)?;
    }
    for i in rank_by_mass(&minus_mass).into_iter().take(big_m) {
        support.insert(i, Source::OddTopM)?;
    }
    Ok((support, PruneTrace { plus_mass, minus_mass, full_mass, line3_neuron, a, b }))
}

/// The pruning pass; requires augmented data.
pub fn prune_network(data: &Dataset, cfg: &PruneConfig) -> Result<SupportSet> {
    prune_network_traced(data, cfg).map(|(s, _)| s)
}

/// Baseline without the even/odd split: the top `M` coordinates by truncated
/// unsplit gradient mass at the same probes.
pub fn prune_naive(data: &Dataset, cfg: &PruneConfig) -> Result<(SupportSet, Vec<usize>)> {
    let (_, trace) = prune_network_traced(data, cfg)?;
    let order = rank_by_mass(&trace.full_mass);
    let mut support = SupportSet::empty(data.d());
    for &i in order.iter().take(cfg.sparsity) {
        support.insert(i, Source::EvenTopM)?;
    }
    Ok((support, order))
}
