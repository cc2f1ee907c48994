//! Grid sweeps: generate, augment, fit, measure, and append one CSV row per
//! record as soon as it is ready.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::config::KvConfig;
use crate::error::{invalid, Error, Result};
use crate::hermite::{normalize_link, LinkSpec};
use crate::model::{augment, Dataset, make_sparse_direction, make_sparse_frame, sample_dataset, soft_sparsity, IndexModel, Profile};
use crate::rng::derive_seed;
use crate::training::{excess_risk, fit, Mode, TrainConfig};

/// Parse a link name: `he<k>` (unit-variance `He_k`), `poly:c0:c1:…`
/// (monomial coefficients, normalized), or `null` (the zero function).
pub fn parse_link(name: &str) -> Result<LinkSpec> {
    if name == "null" {
        return LinkSpec::from_monomials(vec![0.0]);
    }
    if let Some(k) = name.strip_prefix("he") {
        let k: usize = k.parse().map_err(|_| invalid(format!("bad link `{name}`")))?;
        if k == 0 {
            return Err(invalid("he0 is constant"));
        }
        return LinkSpec::he_normalized(k);
    }
    if let Some(rest) = name.strip_prefix("poly:") {
        let coeffs = rest
            .split(':')
            .map(|c| c.parse::<f64>().map_err(|_| invalid(format!("bad coefficient `{c}` in `{name}`"))))
            .collect::<Result<Vec<_>>>()?;
        return normalize_link(&LinkSpec::from_monomials(coeffs)?);
    }
    Err(invalid(format!("unknown link `{name}` (he<k> | poly:c0:c1:... | null)")))
}

/// Experiment grid and fixed settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub d: Vec<usize>,
    pub n: Vec<usize>,
    /// Pruning sparsity level `M`.
    pub sparsity: Vec<usize>,
    pub s: Vec<usize>,
    /// When non-empty, replaces `s` by `round(d^α)`.
    pub alpha: Vec<f64>,
    /// Exponent for the reported soft sparsity of the model frame.
    pub q: Vec<f64>,
    pub r: Vec<usize>,
    pub link: Vec<String>,
    pub mode: Vec<Mode>,
    pub seeds: usize,
    pub base_seed: u64,
    pub m: usize,
    pub delta: f64,
    pub kappa: f64,
    /// Probe shift; `None` uses `1/ln(d+1)`.
    pub c: Option<f64>,
    pub n_test: usize,
    pub lambda_t: Option<f64>,
    pub t_max: Option<usize>,
    pub jobs: usize,
    pub out: PathBuf,
    pub resume: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            d: vec![256],
            n: vec![2000],
            sparsity: vec![16],
            s: vec![16],
            alpha: vec![],
            q: vec![1.0],
            r: vec![1],
            link: vec!["he2".into()],
            mode: vec![Mode::Single],
            seeds: 3,
            base_seed: 0,
            m: 64,
            delta: 0.25,
            kappa: 1.0,
            c: None,
            n_test: 20_000,
            lambda_t: None,
            t_max: None,
            jobs: 1,
            out: PathBuf::from("results.csv"),
            resume: false,
        }
    }
}

impl SweepSpec {
    /// Read a spec from config keys; absent keys keep their defaults.
    /// Keys: `d n M s alpha q r link mode seeds seed m delta kappa c n_test lambda_t t_max jobs out resume`.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let mut spec = Self::default();
        let known = [
            "d", "n", "M", "s", "alpha", "q", "r", "link", "mode", "seeds", "seed", "m", "delta", "kappa", "c", "n_test",
            "lambda_t", "t_max", "jobs", "out", "resume",
        ];
        if let Some(k) = cfg.keys().find(|k| !known.contains(k)) {
            return Err(Error::Parse(format!("unknown config key `{k}`")));
        }
        macro_rules! list {
            ($key:expr, $field:ident) => {
                if let Some(v) = cfg.list($key)? {
                    spec.$field = v;
                }
            };
        }
        macro_rules! scalar {
            ($key:expr, $field:ident) => {
                if let Some(v) = cfg.scalar($key)? {
                    spec.$field = v;
                }
            };
        }
        list!("d", d);
        list!("n", n);
        list!("M", sparsity);
        list!("s", s);
        list!("alpha", alpha);
        list!("q", q);
        list!("r", r);
        list!("link", link);
        list!("mode", mode);
        scalar!("seeds", seeds);
        scalar!("seed", base_seed);
        scalar!("m", m);
        scalar!("delta", delta);
        scalar!("kappa", kappa);
        scalar!("n_test", n_test);
        scalar!("jobs", jobs);
        scalar!("resume", resume);
        if let Some(c) = cfg.scalar("c")? {
            spec.c = Some(c);
        }
        if let Some(l) = cfg.scalar("lambda_t")? {
            spec.lambda_t = Some(l);
        }
        if let Some(t) = cfg.scalar("t_max")? {
            spec.t_max = Some(t);
        }
        if let Some(o) = cfg.get("out") {
            spec.out = PathBuf::from(o);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d", self.d.len()),
            ("n", self.n.len()),
            ("M", self.sparsity.len()),
            ("q", self.q.len()),
            ("r", self.r.len()),
            ("link", self.link.len()),
            ("mode", self.mode.len()),
        ];
        if let Some((k, _)) = sizes.iter().find(|(_, l)| *l == 0) {
            return Err(invalid(format!("grid axis `{k}` is empty")));
        }
        if self.s.is_empty() && self.alpha.is_empty() {
            return Err(invalid("grid needs `s` or `alpha`"));
        }
        if self.seeds == 0 {
            return Err(invalid("need at least one seed"));
        }
        if self.m == 0 || self.n_test == 0 {
            return Err(invalid("m and n_test must be positive"));
        }
        for l in &self.link {
            parse_link(l)?;
        }
        Ok(())
    }

    /// All grid points in a fixed order.
    pub fn points(&self) -> Vec<GridPoint> {
        let sparsities: Vec<(usize, f64)> = if self.alpha.is_empty() {
            self.s.iter().map(|&s| (s, f64::NAN)).collect()
        } else {
            Vec::new()
        };
        let mut out = Vec::new();
        for &d in &self.d {
            let svals: Vec<(usize, f64)> = if self.alpha.is_empty() {
                sparsities.clone()
            } else {
                self.alpha.iter().map(|&a| (((d as f64).powf(a)).round().max(1.0) as usize, a)).collect()
            };
            for &n in &self.n {
                for &big_m in &self.sparsity {
                    for &(s, alpha) in &svals {
                        for &q in &self.q {
                            for &r in &self.r {
                                for link in &self.link {
                                    for &mode in &self.mode {
                                        for seed_index in 0..self.seeds {
                                            out.push(GridPoint { d, n, big_m, s, alpha, q, r, link: link.clone(), mode, seed_index });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub d: usize,
    pub n: usize,
    pub big_m: usize,
    pub s: usize,
    pub alpha: f64,
    pub q: f64,
    pub r: usize,
    pub link: String,
    pub mode: Mode,
    pub seed_index: usize,
}

fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

impl GridPoint {
    /// Seed of the data and fit, derived from every grid coordinate.
    pub fn seed(&self, base: u64) -> u64 {
        derive_seed(
            base,
            &[
                self.d as u64,
                self.n as u64,
                self.big_m as u64,
                self.s as u64,
                self.alpha.to_bits(),
                self.q.to_bits(),
                self.r as u64,
                hash_str(&self.link),
                self.mode as u64,
                self.seed_index as u64,
            ],
        )
    }

    fn model_seed(&self, base: u64) -> u64 {
        derive_seed(base, &[self.d as u64, self.s as u64, self.r as u64, hash_str(&self.link), self.seed_index as u64])
    }

    /// The index model of this point (flat direction for `r = 1`, block frame otherwise).
    pub fn model(&self, base: u64, delta: f64) -> Result<IndexModel> {
        let link = parse_link(&self.link)?;
        if self.r == 1 {
            let v = make_sparse_direction(self.d, self.s, Profile::Flat)?;
            IndexModel::single(v, link, delta)
        } else {
            let frame = make_sparse_frame(self.d, self.r, self.s, self.model_seed(base))?;
            let scaled = link.scaled(1.0 / (self.r as f64).sqrt())?;
            IndexModel::new(frame, vec![scaled; self.r], delta)
        }
    }
}

/// Which pipeline produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Pruned,
    Unpruned,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Pruned => "pruned",
            Arm::Unpruned => "unpruned",
        }
    }
}

/// One measured grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub arm: Arm,
    pub point: GridPoint,
    pub seed: u64,
    pub support_size: usize,
    pub support_residual: f64,
    pub soft_sparsity: f64,
    pub excess_risk: f64,
    pub wall_time_ms: u64,
    pub error: String,
}

pub const CSV_HEADER: [&str; 19] = [
    "arm", "d", "n", "M", "s", "alpha", "q", "r", "link", "mode", "seed_index", "seed", "support_size", "support_residual",
    "soft_sparsity", "excess_risk", "wall_time_ms", "error", "key",
];

impl ResultRecord {
    /// Identity of the record for resuming.
    pub fn key(&self) -> String {
        record_key(self.arm, &self.point)
    }

    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    fn fields(&self) -> Vec<String> {
        let p = &self.point;
        vec![
            self.arm.name().into(),
            p.d.to_string(),
            p.n.to_string(),
            p.big_m.to_string(),
            p.s.to_string(),
            p.alpha.to_string(),
            p.q.to_string(),
            p.r.to_string(),
            p.link.clone(),
            p.mode.to_string(),
            p.seed_index.to_string(),
            self.seed.to_string(),
            self.support_size.to_string(),
            self.support_residual.to_string(),
            self.soft_sparsity.to_string(),
            self.excess_risk.to_string(),
            self.wall_time_ms.to_string(),
            self.error.replace(['\n', '\r'], " "),
            self.key(),
        ]
    }

    fn from_fields(f: &csv::StringRecord) -> Result<Self> {
        if f.len() != CSV_HEADER.len() {
            return Err(Error::Parse(format!("record has {} fields, expected {}", f.len(), CSV_HEADER.len())));
        }
        let bad = |i: usize| Error::Parse(format!("bad `{}` field `{}`", CSV_HEADER[i], &f[i]));
        macro_rules! num {
            ($i:expr) => {
                f[$i].parse().map_err(|_| bad($i))?
            };
        }
        let arm = match &f[0] {
            "pruned" => Arm::Pruned,
            "unpruned" => Arm::Unpruned,
            _ => return Err(bad(0)),
        };
        let point = GridPoint {
            d: num!(1),
            n: num!(2),
            big_m: num!(3),
            s: num!(4),
            alpha: num!(5),
            q: num!(6),
            r: num!(7),
            link: f[8].to_string(),
            mode: f[9].parse().map_err(|_| bad(9))?,
            seed_index: num!(10),
        };
        Ok(Self {
            arm,
            point,
            seed: num!(11),
            support_size: num!(12),
            support_residual: num!(13),
            soft_sparsity: num!(14),
            excess_risk: num!(15),
            wall_time_ms: num!(16),
            error: f[17].to_string(),
        })
    }
}

fn record_key(arm: Arm, p: &GridPoint) -> String {
    format!(
        "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
        arm.name(),
        p.d,
        p.n,
        p.big_m,
        p.s,
        p.alpha,
        p.q,
        p.r,
        p.link,
        p.mode,
        p.seed_index
    )
}

/// Model and augmented training sample of one grid point.
pub fn point_data(spec: &SweepSpec, point: &GridPoint) -> Result<(IndexModel, Dataset)> {
    let seed = point.seed(spec.base_seed);
    let model = point.model(spec.base_seed, spec.delta)?;
    let data = augment(&sample_dataset(&model, point.n, seed)?, seed)?;
    Ok((model, data))
}

/// Training configuration of one grid point, with the sweep's overrides applied.
pub fn point_train_config(spec: &SweepSpec, point: &GridPoint, model: &IndexModel, data: &Dataset) -> TrainConfig {
    let k_star = model.links()[0].info_exponent().unwrap_or(1);
    let mut cfg =
        TrainConfig::defaults(data.d(), point.n, point.big_m, spec.m, point.mode, k_star, spec.kappa, point.seed(spec.base_seed));
    if let Some(c) = spec.c {
        cfg.c = c;
    }
    if let Some(l) = spec.lambda_t {
        cfg.lambda_t = l;
    }
    if let Some(t) = spec.t_max {
        cfg.t_max = t;
    }
    cfg
}

/// Run one grid point through one arm. Failures become records with `error` set.
pub fn run_point(spec: &SweepSpec, point: &GridPoint, arm: Arm) -> ResultRecord {
    let start = Instant::now();
    let seed = point.seed(spec.base_seed);
    let mut rec = ResultRecord {
        arm,
        point: point.clone(),
        seed,
        support_size: 0,
        support_residual: f64::NAN,
        soft_sparsity: f64::NAN,
        excess_risk: f64::NAN,
        wall_time_ms: 0,
        error: String::new(),
    };
    let outcome = (|| -> Result<(usize, f64, f64, f64)> {
        let (model, data) = point_data(spec, point)?;
        let sparsity = soft_sparsity(model.directions(), point.q)?;
        let mut cfg = point_train_config(spec, point, &model, &data);
        cfg.unpruned = arm == Arm::Unpruned;
        let predictor = fit(&data, &cfg)?;
        let residual = predictor.support.residual(model.augmented().directions());
        let risk = excess_risk(&predictor, &model, spec.n_test, derive_seed(seed, &[0x7e57]))?;
        Ok((predictor.support.len(), residual, sparsity, risk))
    })();
    match outcome {
        Ok((size, residual, sparsity, risk)) => {
            rec.support_size = size;
            rec.support_residual = residual;
            rec.soft_sparsity = sparsity;
            rec.excess_risk = risk;
        }
        Err(e) => rec.error = e.to_string(),
    }
    rec.wall_time_ms = start.elapsed().as_millis() as u64;
    rec
}

/// Read the valid records of an existing results file, dropping a torn last line.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("{} does not have the results header", path.display())));
    }
    for row in reader.records() {
        match row.map_err(Error::from).and_then(|r| ResultRecord::from_fields(&r)) {
            Ok(rec) => out.push(rec),
            Err(_) => break,
        }
    }
    Ok(out)
}

fn write_all(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(CSV_HEADER)?;
        for r in records {
            w.write_record(r.fields())?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Execute `(point, arm)` jobs with incremental appends, then rewrite the
/// file in grid order.
fn execute(spec: &SweepSpec, jobs: Vec<(GridPoint, Arm)>) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let path = spec.out.as_path();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let previous = if spec.resume { read_records(path)? } else { Vec::new() };
    let done: HashSet<String> = previous.iter().map(ResultRecord::key).collect();
    // Start from a clean file holding only intact earlier records.
    write_all(path, &previous)?;
    let sink = Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(OpenOptions::new().append(true).open(path)?));

    let todo: Vec<&(GridPoint, Arm)> = jobs.iter().filter(|(p, a)| !done.contains(&record_key(*a, p))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let fresh: Vec<ResultRecord> = pool.install(|| {
        todo.par_iter()
            .map(|(p, a)| {
                let rec = run_point(spec, p, *a);
                let mut w = sink.lock().expect("csv sink poisoned");
                // A failed append leaves the record in memory; the final rewrite still has it.
                let _ = w.write_record(rec.fields()).and_then(|_| w.flush().map_err(csv::Error::from));
                rec
            })
            .collect()
    });
    drop(sink);

    let mut by_key: BTreeMap<String, ResultRecord> = BTreeMap::new();
    for r in previous.into_iter().chain(fresh) {
        by_key.insert(r.key(), r);
    }
    let ordered: Vec<ResultRecord> = jobs.iter().filter_map(|(p, a)| by_key.remove(&record_key(*a, p))).collect();
    write_all(path, &ordered)?;
    Ok(ordered)
}

/// Pruned pipeline at every grid point and seed.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRecord>> {
    let jobs = spec.points().into_iter().map(|p| (p, Arm::Pruned)).collect();
    execute(spec, jobs)
}

/// Paired pruned and unpruned (`J = [d]`) records with identical seeds.
pub fn compare_pruned_unpruned(spec: &SweepSpec) -> Result<Vec<ResultRecord>> {
    let jobs = spec.points().into_iter().flat_map(|p| [(p.clone(), Arm::Pruned), (p, Arm::Unpruned)]).collect();
    execute(spec, jobs)
}

/// Truncate a results file to its header and first `keep` records (for crash simulation).
pub fn truncate_records(path: &Path, keep: usize, torn_tail: bool) -> Result<()> {
    let file = BufReader::new(File::open(path)?);
    let lines: Vec<String> = file.lines().collect::<std::io::Result<_>>()?;
    let mut out = File::create(path)?;
    for l in lines.iter().take(keep + 1) {
        writeln!(out, "{l}")?;
    }
    if torn_tail {
        if let Some(l) = lines.get(keep + 1) {
            write!(out, "{}", &l[..l.len() / 2])?;
        }
    }
    Ok(())
}
