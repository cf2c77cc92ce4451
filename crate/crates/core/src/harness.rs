//! Seeded experiment sweeps: configuration, per-cell execution, persistence and
//! summary statistics.
//!
//! A sweep runs every (seed, variant) cell of an [`ExperimentConfig`]. Each finished
//! cell is written atomically to `traces/{variant}_{seed}.json` before the next
//! one starts on that worker. The sorted `manifest.json`, `summary.csv` and
//! `plotdata.csv` are derived from the cell files afterwards, so every output byte
//! is a function of the configuration alone.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{ClientModel, DesignOptions};
use crate::env::{AdversaryConfig, BanditInstance, Environment, NoiseKind};
use crate::error::{Error, Result};
use crate::policy::{run_policy, Estimator, PolicyConfig, RegretTrace, Schedule, ThresholdConfig, ThresholdIndex};
use crate::privacy::PrivacyParams;
use crate::rng::SeedTree;
use crate::robust::RobustOptions;

pub const CONFIG_VERSION: u32 = 1;

/// JSON schema every configuration is checked against before it is parsed.
pub const CONFIG_SCHEMA: &str = include_str!("../schema/experiment-config.v1.json");

pub const PLOTDATA_HEADER: &str = "variant,seed,plays,cumulative_regret";

/// Where the bandit instance of each run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// An instance object, with `actions` inline or as a path.
    Inline(serde_json::Value),
    /// Path to an instance file.
    File(PathBuf),
    /// A fresh random instance per seed; all variants of a seed share it.
    Random {
        dim: usize,
        arms: usize,
        #[serde(default)]
        noise: NoiseKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub horizon: u64,
    /// Defaults to `max(2, ceil(ln T))`.
    #[serde(default)]
    pub batches: Option<usize>,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        match self.batches {
            Some(b) => Schedule::new(self.horizon, b),
            None => Schedule::with_default_batches(self.horizon),
        }
    }
}

/// Learner thresholds; `alpha` defaults to the adversary's rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSpec {
    pub c_gamma: f64,
    pub delta: f64,
    pub alpha: Option<f64>,
    pub nu: f64,
    pub index: ThresholdIndex,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        let t = ThresholdConfig::default();
        ThresholdSpec {
            c_gamma: t.c_gamma,
            delta: t.delta,
            alpha: None,
            nu: t.nu,
            index: t.index,
        }
    }
}

/// The policy variants a sweep can run. `Robust` always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Spectral-filter estimator, corruption-aware thresholds, configured privacy.
    Robust,
    /// Least squares with the corruption terms of the thresholds zeroed.
    Vanilla,
    /// The robust learner with privacy switched off for clients and learner.
    NonPrivate,
    /// Least squares with the same corruption-aware thresholds as the robust learner.
    NonRobust,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Robust, Variant::Vanilla, Variant::NonPrivate, Variant::NonRobust];

    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Robust => "robust",
            Variant::Vanilla => "vanilla",
            Variant::NonPrivate => "non_private",
            Variant::NonRobust => "non_robust",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.tag() == tag)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub instance: InstanceSpec,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_model")]
    pub model: ClientModel,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub privacy: PrivacyParams,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub estimator: RobustOptions,
    #[serde(default)]
    pub design: DesignOptions,
    #[serde(default)]
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub baselines: Vec<Variant>,
    /// Play counts reported by the summary; defaults to quarters of the horizon.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    /// Directory relative instance paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_model() -> ClientModel {
    ClientModel::M1
}

fn schema_validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| {
        let schema: serde_json::Value = serde_json::from_str(CONFIG_SCHEMA).expect("bundled schema is valid JSON");
        jsonschema::validator_for(&schema).expect("bundled schema compiles")
    })
}

/// JSON pointer `/a/b/0` rendered as `a.b[0]`.
fn pointer_to_field(pointer: &str) -> String {
    let mut out = String::new();
    for part in pointer.split('/').filter(|p| !p.is_empty()) {
        if part.chars().all(|c| c.is_ascii_digit()) {
            let _ = write!(out, "[{part}]");
        } else {
            if !out.is_empty() {
                out.push('.');
            }
            out.push_str(part);
        }
    }
    if out.is_empty() {
        out.push_str("<root>");
    }
    out
}

impl ExperimentConfig {
    /// Parses and validates a configuration. Relative paths inside it resolve
    /// against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", format!("not valid JSON: {e}")))?;
        Self::from_value(value, base_dir)
    }

    pub fn from_value(value: serde_json::Value, base_dir: Option<&Path>) -> Result<Self> {
        if let Some(err) = schema_validator().iter_errors(&value).next() {
            let mut pointer = err.instance_path.to_string();
            if let jsonschema::error::ValidationErrorKind::AdditionalProperties { unexpected } = &err.kind {
                if let Some(key) = unexpected.first() {
                    pointer = format!("{pointer}/{key}");
                }
            }
            return Err(Error::config(pointer_to_field(&pointer), err.to_string()));
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.base_dir = base_dir.map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config("version", format!("unsupported version {}", self.version)));
        }
        self.schedule.build()?;
        self.adversary.validate()?;
        self.privacy.validate()?;
        self.threshold_config().validate()?;
        self.estimator.lambda_rule.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::config("seeds", format!("seed {dup} listed twice")));
        }
        if self.baselines.contains(&Variant::Robust) {
            return Err(Error::config("baselines", "robust always runs and is not a baseline"));
        }
        if !(self.design.tol > 0.0) || self.design.max_iters == 0 || !(self.design.support_constant > 0.0) {
            return Err(Error::config("design", "tol, max_iters and support_constant must be positive"));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.schedule.horizon) {
            return Err(Error::config(
                "checkpoints",
                format!("checkpoint {c} outside 1..={}", self.schedule.horizon),
            ));
        }
        match &self.instance {
            InstanceSpec::Random { dim, arms, .. } if *dim == 0 || *arms == 0 => {
                Err(Error::config("instance.random", "dim and arms must be positive"))
            }
            InstanceSpec::Random { .. } => Ok(()),
            _ => self.fixed_instance().map(|_| ()),
        }
    }

    fn fixed_instance(&self) -> Result<BanditInstance> {
        let base_dir = self.base_dir.as_deref();
        let field_err = |field: &str, e: Error| match e {
            e @ Error::ConfigInvalid { .. } => e,
            other => Error::config(field, other.to_string()),
        };
        match &self.instance {
            InstanceSpec::Inline(v) => {
                BanditInstance::from_json(&v.to_string(), base_dir).map_err(|e| field_err("instance.inline", e))
            }
            InstanceSpec::File(p) => {
                let path = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                BanditInstance::load(&path).map_err(|e| field_err("instance.file", e))
            }
            InstanceSpec::Random { .. } => unreachable!("random instances are drawn per seed"),
        }
    }

    /// All variants in canonical order, robust first.
    pub fn variants(&self) -> Vec<Variant> {
        Variant::ALL
            .into_iter()
            .filter(|v| *v == Variant::Robust || self.baselines.contains(v))
            .collect()
    }

    pub fn threshold_config(&self) -> ThresholdConfig {
        ThresholdConfig {
            c_gamma: self.threshold.c_gamma,
            delta: self.threshold.delta,
            alpha: self.threshold.alpha.unwrap_or(self.adversary.alpha),
            nu: self.threshold.nu,
            model: self.model,
            index: self.threshold.index,
        }
    }

    /// Checkpoints used by the summary.
    pub fn effective_checkpoints(&self) -> Vec<u64> {
        if !self.checkpoints.is_empty() {
            let mut c = self.checkpoints.clone();
            c.sort_unstable();
            c.dedup();
            return c;
        }
        let t = self.schedule.horizon;
        let mut c: Vec<u64> = (1..=4).map(|k| (t * k / 4).max(1)).collect();
        c.dedup();
        c
    }

    /// Hex SHA-256 of the canonical JSON form; stamped on every cell file.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Master seed tree of one seed index.
fn seed_root(cfg: &ExperimentConfig, seed: u64) -> SeedTree {
    SeedTree::new(cfg.master_seed).child("seed", seed)
}

/// Seed tree of one (seed, variant) cell.
pub fn cell_seeds(cfg: &ExperimentConfig, seed: u64, variant: Variant) -> SeedTree {
    seed_root(cfg, seed).tagged("variant", variant.tag())
}

/// The instance used by every variant of `seed`.
pub fn instance_for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<BanditInstance> {
    match &cfg.instance {
        InstanceSpec::Random { dim, arms, noise } => {
            let mut rng = seed_root(cfg, seed).child("instance", 0).rng(0);
            BanditInstance::random(*dim, *arms, *noise, &mut rng)
        }
        _ => cfg.fixed_instance(),
    }
}

/// Policy configuration and client privacy for one variant.
pub fn variant_setup(cfg: &ExperimentConfig, variant: Variant) -> Result<(PolicyConfig, PrivacyParams)> {
    let schedule = cfg.schedule.build()?;
    let mut threshold = cfg.threshold_config();
    let mut privacy = cfg.privacy;
    let estimator = match variant {
        Variant::Robust => Estimator::Robust(cfg.estimator),
        Variant::NonPrivate => {
            privacy = PrivacyParams::disabled();
            Estimator::Robust(cfg.estimator)
        }
        Variant::Vanilla => {
            threshold.alpha = 0.0;
            Estimator::Vanilla
        }
        Variant::NonRobust => Estimator::Vanilla,
    };
    let policy = PolicyConfig {
        schedule,
        threshold,
        estimator,
        design: cfg.design,
        privacy,
    };
    Ok((policy, privacy))
}

/// Runs one (seed, variant) cell in memory.
pub fn run_cell(cfg: &ExperimentConfig, seed: u64, variant: Variant) -> Result<RegretTrace> {
    let instance = instance_for_seed(cfg, seed)?;
    let (policy, privacy) = variant_setup(cfg, variant)?;
    let seeds = cell_seeds(cfg, seed, variant);
    let mut env = Environment::new(instance, cfg.adversary, privacy, seeds.child("env", 0))?.without_observation_log();
    run_policy(&mut env, &policy, &seeds.child("learner", 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CellOutcome {
    Completed { trace: RegretTrace },
    Failed { error: String },
}

/// Contents of one `traces/{variant}_{seed}.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub variant: Variant,
    pub seed: u64,
    pub fingerprint: String,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

impl CellRecord {
    pub fn file_name(variant: Variant, seed: u64) -> String {
        format!("{}_{}.json", variant.tag(), seed)
    }

    pub fn trace(&self) -> Option<&RegretTrace> {
        match &self.outcome {
            CellOutcome::Completed { trace } => Some(trace),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    /// Skip cells whose trace file is already complete for this configuration.
    pub resume: bool,
}

/// Share of completed runs in which the optimal arm was never eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Survival {
    pub runs: usize,
    pub survived: usize,
}

impl Survival {
    pub fn rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.survived as f64 / self.runs as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub fingerprint: String,
    /// One record per cell, ordered by variant then seed.
    pub cells: Vec<CellRecord>,
    pub summary: SummaryTable,
    pub survival: BTreeMap<Variant, Survival>,
    /// Elapsed time of the sweep; `None` for results loaded from disk. Never persisted.
    pub wall_clock: Option<Duration>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| c.trace().is_none())
    }

    pub fn traces(&self, variant: Variant) -> impl Iterator<Item = (u64, &RegretTrace)> {
        self.cells
            .iter()
            .filter(move |c| c.variant == variant)
            .filter_map(|c| c.trace().map(|t| (c.seed, t)))
    }
}

/// Writes `bytes` to `path` through a synced temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn read_cell(path: &Path) -> Option<CellRecord> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn execute_cell(cfg: &ExperimentConfig, fingerprint: &str, traces_dir: &Path, resume: bool, seed: u64, variant: Variant) -> Result<CellRecord> {
    let path = traces_dir.join(CellRecord::file_name(variant, seed));
    if resume {
        if let Some(rec) = read_cell(&path) {
            if rec.fingerprint == fingerprint && rec.variant == variant && rec.seed == seed && rec.trace().is_some() {
                log::debug!("resume: keeping {}", path.display());
                return Ok(rec);
            }
        }
    }
    let outcome = match run_cell(cfg, seed, variant) {
        Ok(trace) => CellOutcome::Completed { trace },
        Err(e) => {
            log::warn!("cell {variant}/{seed} failed: {e}");
            CellOutcome::Failed { error: e.to_string() }
        }
    };
    let rec = CellRecord {
        variant,
        seed,
        fingerprint: fingerprint.to_string(),
        outcome,
    };
    let bytes = serde_json::to_vec_pretty(&rec).map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(&path, &bytes)?;
    Ok(rec)
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    variant: Variant,
    seed: u64,
    file: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    final_regret: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    fingerprint: String,
    config: ExperimentConfig,
    cells: Vec<ManifestEntry>,
}

fn manifest_for(cfg: &ExperimentConfig, fingerprint: &str, cells: &[CellRecord]) -> Manifest {
    let cells = cells
        .iter()
        .map(|c| {
            let (status, error, final_regret) = match &c.outcome {
                CellOutcome::Completed { trace } => ("completed", None, Some(trace.final_regret())),
                CellOutcome::Failed { error } => ("failed", Some(error.clone()), None),
            };
            ManifestEntry {
                variant: c.variant,
                seed: c.seed,
                file: format!("traces/{}", CellRecord::file_name(c.variant, c.seed)),
                status: status.to_string(),
                error,
                final_regret,
            }
        })
        .collect();
    Manifest {
        version: CONFIG_VERSION,
        fingerprint: fingerprint.to_string(),
        config: cfg.clone(),
        cells,
    }
}

fn survival_of(cells: &[CellRecord]) -> BTreeMap<Variant, Survival> {
    let mut out: BTreeMap<Variant, Survival> = BTreeMap::new();
    for c in cells {
        if let Some(t) = c.trace() {
            let s = out.entry(c.variant).or_insert(Survival { runs: 0, survived: 0 });
            s.runs += 1;
            if t.optimal_eliminated_in.is_none() {
                s.survived += 1;
            }
        }
    }
    out
}

/// Runs every cell of the sweep and writes the output directory.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &SweepOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let fingerprint = cfg.fingerprint();
    let traces_dir = opts.out_dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|e| Error::Io(format!("{}: {e}", traces_dir.display())))?;

    let cells: Vec<(Variant, u64)> = cfg
        .variants()
        .into_iter()
        .flat_map(|v| {
            let mut seeds = cfg.seeds.clone();
            seeds.sort_unstable();
            seeds.into_iter().map(move |s| (v, s))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    let records = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, s)| execute_cell(cfg, &fingerprint, &traces_dir, opts.resume, s, v))
            .collect::<Result<Vec<_>>>()
    })?;

    let summary = summarize(&records, &cfg.effective_checkpoints())?;
    let manifest = manifest_for(cfg, &fingerprint, &records);
    let manifest_bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(&opts.out_dir.join("manifest.json"), &manifest_bytes)?;
    write_atomic(&opts.out_dir.join("summary.csv"), summary.to_csv().as_bytes())?;
    emit_plotdata(&records, &opts.out_dir.join("plotdata.csv"))?;

    Ok(SweepResult {
        fingerprint,
        survival: survival_of(&records),
        cells: records,
        summary,
        wall_clock: Some(start.elapsed()),
    })
}

/// Reloads a finished sweep from its output directory.
pub fn load_results(out_dir: &Path) -> Result<SweepResult> {
    let path = out_dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cells = Vec::with_capacity(manifest.cells.len());
    for entry in &manifest.cells {
        let p = out_dir.join(&entry.file);
        let rec = read_cell(&p).ok_or_else(|| Error::Io(format!("{}: missing or unreadable trace", p.display())))?;
        if rec.fingerprint != manifest.fingerprint {
            return Err(Error::Io(format!("{}: trace belongs to a different configuration", p.display())));
        }
        cells.push(rec);
    }
    let summary = summarize(&cells, &manifest.config.effective_checkpoints())?;
    Ok(SweepResult {
        fingerprint: manifest.fingerprint,
        survival: survival_of(&cells),
        cells,
        summary,
        wall_clock: None,
    })
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub checkpoint: u64,
    pub runs: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub const HEADER: [&'static str; 8] = ["variant", "checkpoint", "runs", "mean", "median", "q25", "q75", "iqr"];

    fn fields(r: &SummaryRow) -> [String; 8] {
        [
            r.variant.tag().to_string(),
            r.checkpoint.to_string(),
            r.runs.to_string(),
            r.mean.to_string(),
            r.median.to_string(),
            r.q25.to_string(),
            r.q75.to_string(),
            r.iqr.to_string(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record(Self::fields(r)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Right-aligned text table with four decimals.
    pub fn to_text(&self) -> String {
        let rows: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.variant.tag().to_string(),
                    r.checkpoint.to_string(),
                    r.runs.to_string(),
                    format!("{:.4}", r.mean),
                    format!("{:.4}", r.median),
                    format!("{:.4}", r.q25),
                    format!("{:.4}", r.q75),
                    format!("{:.4}", r.iqr),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = Self::HEADER.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, f) in widths.iter_mut().zip(r) {
                *w = (*w).max(f.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, fields: &[&str]| {
            let cells: Vec<String> = fields
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (f, w))| if i == 0 { format!("{f:<w$}") } else { format!("{f:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        };
        line(&mut out, &Self::HEADER);
        for r in &rows {
            let fs: Vec<&str> = r.iter().map(String::as_str).collect();
            line(&mut out, &fs);
        }
        out
    }
}

/// Per-checkpoint statistics of cumulative regret, one block of rows per variant.
pub fn summarize(cells: &[CellRecord], checkpoints: &[u64]) -> Result<SummaryTable> {
    let mut by_variant: BTreeMap<Variant, Vec<&RegretTrace>> = BTreeMap::new();
    for c in cells {
        if let Some(t) = c.trace() {
            by_variant.entry(c.variant).or_default().push(t);
        }
    }
    let mut rows = Vec::new();
    for (variant, traces) in by_variant {
        for &cp in checkpoints {
            let mut values = traces.iter().map(|t| t.cumulative_at(cp)).collect::<Result<Vec<f64>>>()?;
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let q25 = quantile(&values, 0.25);
            let q75 = quantile(&values, 0.75);
            rows.push(SummaryRow {
                variant,
                checkpoint: cp,
                runs: values.len(),
                mean,
                median: quantile(&values, 0.5),
                q25,
                q75,
                iqr: q75 - q25,
            });
        }
    }
    Ok(SummaryTable { rows })
}

/// Long-format rows `variant,seed,plays,cumulative_regret`, one per recorded round.
pub fn plotdata_csv(cells: &[CellRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PLOTDATA_HEADER.split(',')).expect("in-memory write");
    for c in cells {
        if let Some(t) = c.trace() {
            for r in &t.rounds {
                w.write_record([
                    c.variant.tag().to_string(),
                    c.seed.to_string(),
                    r.cumulative_plays.to_string(),
                    r.cumulative_regret.to_string(),
                ])
                .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn emit_plotdata(cells: &[CellRecord], path: &Path) -> Result<()> {
    write_atomic(path, plotdata_csv(cells).as_bytes())
}
