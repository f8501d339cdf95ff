//! Sweep driver: configuration, cached Lanczos runs, CSV output, and
//! critical-temperature estimates from heat-capacity peaks.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::lanczos::{
    operator_fingerprint, run_lanczos_counted, LanczosConfig, LanczosError, LanczosRun, Reorthogonalization,
    RunCounters, StopRule,
};
use crate::models::{ModelError, ModelSpec, StartingBlock};
use crate::mpo::Mpo;
use crate::oracle::OracleError;
use crate::thermal::{correlation_zz, thermal_sweep, Symmetry, ThermalError, ThermalSweepResult};

/// Fixed leading columns of every sweep CSV.
pub const CSV_HEADER: [&str; 10] = ["model", "L", "param", "T", "logZ", "energy_density", "s", "c", "F_T", "D_T"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cache mismatch: {0}")]
    CacheMismatch(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::CacheMismatch(_) => 4,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LanczosError> for CliError {
    fn from(e: LanczosError) -> Self {
        match e {
            LanczosError::VersionMismatch { .. } => CliError::CacheMismatch(e.to_string()),
            LanczosError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ThermalError> for CliError {
    fn from(e: ThermalError) -> Self {
        match e {
            ThermalError::Lanczos(l) => l.into(),
            ThermalError::Model(m) => m.into(),
            ThermalError::InvalidOffset(_) | ThermalError::SymmetryViolated(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooLarge { .. } | OracleError::BadPair(..) | OracleError::BadTemperature(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub enum Observable {
    #[serde(rename = "s")]
    Entropy,
    #[serde(rename = "c")]
    SpecificHeat,
    #[serde(rename = "F_T")]
    Fidelity,
    #[serde(rename = "D_T")]
    TraceDistance,
}

impl Observable {
    pub fn parse(token: &str) -> Result<Self, CliError> {
        match token.trim() {
            "s" => Ok(Self::Entropy),
            "c" => Ok(Self::SpecificHeat),
            "F_T" => Ok(Self::Fidelity),
            "D_T" => Ok(Self::TraceDistance),
            other => Err(CliError::Config(format!("unknown observable `{other}` (expected s, c, F_T, D_T)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryMode {
    #[default]
    None,
    SpinFlip,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `ising` or `lmg`.
    pub family: String,
    pub sizes: Vec<usize>,
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    /// Transverse fields for the Ising chain.
    #[serde(default)]
    pub g: Vec<f64>,
    /// Fields for the LMG model.
    #[serde(default)]
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSection {
    #[serde(default = "default_tmin")]
    pub min: f64,
    #[serde(default = "one")]
    pub max: f64,
    #[serde(default = "default_tstep")]
    pub step: f64,
    /// Offset `δT` for fidelity and trace distance.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanczosSection {
    #[serde(default = "default_kmax")]
    pub k_max: usize,
    #[serde(default = "default_dmax")]
    pub d_max: usize,
    #[serde(default = "default_breakdown")]
    pub breakdown_tol: f64,
    #[serde(default)]
    pub reorthogonalize: bool,
    /// Stop early once `ln Z` at the coldest grid point changes by less
    /// than this between steps.
    #[serde(default)]
    pub stop_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    /// 1-based site pairs `[i, j]`, `i < j`.
    #[serde(default)]
    pub correlators: Vec<[usize; 2]>,
    #[serde(default)]
    pub symmetry: SymmetryMode,
    #[serde(default = "default_out")]
    pub path: PathBuf,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default = "one_usize")]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default = "TemperatureSection::default")]
    pub temperature: TemperatureSection,
    #[serde(default = "LanczosSection::default")]
    pub lanczos: LanczosSection,
    #[serde(default = "OutputSection::default")]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_tmin() -> f64 {
    0.1
}
fn default_tstep() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.01
}
fn default_kmax() -> usize {
    70
}
fn default_dmax() -> usize {
    60
}
fn default_breakdown() -> f64 {
    1e-12
}
fn default_observables() -> Vec<Observable> {
    vec![Observable::Entropy, Observable::SpecificHeat, Observable::Fidelity, Observable::TraceDistance]
}
fn default_out() -> PathBuf {
    PathBuf::from("sweep.csv")
}

impl Default for TemperatureSection {
    fn default() -> Self {
        Self { min: default_tmin(), max: one(), step: default_tstep(), delta: default_delta() }
    }
}

impl Default for LanczosSection {
    fn default() -> Self {
        Self {
            k_max: default_kmax(),
            d_max: default_dmax(),
            breakdown_tol: default_breakdown(),
            reorthogonalize: false,
            stop_tol: None,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            observables: default_observables(),
            correlators: Vec::new(),
            symmetry: SymmetryMode::None,
            path: default_out(),
            cache: None,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Grid `min, min + step, …` up to `max` (inclusive within rounding).
    pub fn temperatures(&self) -> Result<Vec<f64>, CliError> {
        let t = &self.temperature;
        if !(t.min > 0.0 && t.min.is_finite()) {
            return Err(CliError::Config(format!("temperature.min = {} must be positive", t.min)));
        }
        if !(t.step > 0.0 && t.step.is_finite()) {
            return Err(CliError::Config(format!("temperature.step = {} must be positive", t.step)));
        }
        if !(t.max >= t.min && t.max.is_finite()) {
            return Err(CliError::Config(format!("temperature.max = {} is below temperature.min", t.max)));
        }
        let n = ((t.max - t.min) / t.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| t.min + k as f64 * t.step).collect())
    }

    /// All `(L, coupling)` combinations in configuration order.
    pub fn models(&self) -> Result<Vec<ModelSpec>, CliError> {
        let m = &self.model;
        if m.sizes.is_empty() {
            return Err(CliError::Config("model.sizes is empty".into()));
        }
        let mut out = Vec::new();
        for &l in &m.sizes {
            match m.family.as_str() {
                "ising" => {
                    if m.g.is_empty() {
                        return Err(CliError::Config("model.g is empty for the ising family".into()));
                    }
                    out.extend(m.g.iter().map(|&g| ModelSpec::ising(l, m.j, g)));
                }
                "lmg" => {
                    if m.h.is_empty() {
                        return Err(CliError::Config("model.h is empty for the lmg family".into()));
                    }
                    out.extend(m.h.iter().map(|&h| ModelSpec::lmg(l, h)));
                }
                other => return Err(CliError::Config(format!("model.family `{other}` (expected ising or lmg)"))),
            }
        }
        for s in &out {
            s.validate()?;
        }
        Ok(out)
    }

    pub fn lanczos_config(&self, temperatures: &[f64]) -> Result<LanczosConfig, CliError> {
        let l = &self.lanczos;
        let mut cfg = LanczosConfig::new(l.k_max, l.d_max);
        cfg.breakdown_tol = l.breakdown_tol;
        if l.reorthogonalize {
            cfg = cfg.with_reorthogonalization(Reorthogonalization::Full);
        }
        if let Some(tol) = l.stop_tol {
            let coldest = temperatures.iter().copied().fold(f64::INFINITY, f64::min);
            cfg = cfg.with_stop_rule(StopRule::boltzmann(1.0 / coldest, tol));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything checked before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let temps = self.temperatures()?;
        let models = self.models()?;
        self.lanczos_config(&temps)?;
        let o = &self.output;
        if o.observables.is_empty() && o.correlators.is_empty() {
            return Err(CliError::Config("output.observables is empty and no correlators requested".into()));
        }
        if !(self.temperature.delta > 0.0 && self.temperature.delta.is_finite()) {
            return Err(CliError::Config(format!("temperature.delta = {} must be positive", self.temperature.delta)));
        }
        if o.workers == 0 {
            return Err(CliError::Config("output.workers must be at least 1".into()));
        }
        for m in &models {
            for &[i, j] in &o.correlators {
                if i == 0 || i >= j || j > m.sites {
                    return Err(CliError::Config(format!(
                        "correlator pair [{i}, {j}] invalid for L = {} (need 1 <= i < j <= L)",
                        m.sites
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Disk cache of finished runs, one file per (operator, start, settings).
#[derive(Clone, Debug)]
pub struct RunCache {
    pub dir: PathBuf,
}

impl RunCache {
    pub fn file_name(spec: &ModelSpec, start: &StartingBlock, cfg: &LanczosConfig) -> String {
        let reorth = match cfg.reorthogonalization {
            Reorthogonalization::Off => "plain",
            Reorthogonalization::Full => "reorth",
        };
        let stop = if cfg.stop_rules.is_empty() { String::new() } else { format!("_stop{}", cfg.stop_rules.len()) };
        let raw = format!(
            "{}_L{}_{}_D{}_K{}_tol{:e}_{}{}_{}.run",
            spec.family_name(),
            spec.sites,
            spec.param_label(),
            cfg.d_max,
            cfg.k_max,
            cfg.breakdown_tol,
            reorth,
            stop,
            start.label
        );
        raw.chars().map(|c| if c.is_ascii_alphanumeric() || "._-=+".contains(c) { c } else { '_' }).collect()
    }

    fn load(&self, path: &Path, fingerprint: u64) -> Result<Option<LanczosRun>, CliError> {
        if !path.exists() {
            return Ok(None);
        }
        let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let run = LanczosRun::read_from(&mut BufReader::new(f)).map_err(|e| match e {
            LanczosError::VersionMismatch { .. } => CliError::CacheMismatch(format!("{}: {e}", path.display())),
            other => CliError::CacheMismatch(format!("{}: unreadable cached run: {other}", path.display())),
        })?;
        if run.operator_fingerprint != fingerprint {
            return Err(CliError::CacheMismatch(format!(
                "{}: cached run was built on a different operator",
                path.display()
            )));
        }
        Ok(Some(run))
    }

    fn store(&self, path: &Path, run: &LanczosRun) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        write_atomically(path, |w| run.write_to(w).map_err(|e| std::io::Error::other(e.to_string())))
    }
}

/// Fetches a run from cache or computes (and stores) it.
pub fn obtain_run(
    spec: &ModelSpec,
    h: &Mpo,
    start: &StartingBlock,
    cfg: &LanczosConfig,
    cache: Option<&RunCache>,
    counters: &RunCounters,
) -> Result<LanczosRun, CliError> {
    let path = cache.map(|c| c.dir.join(RunCache::file_name(spec, start, cfg)));
    if let (Some(c), Some(p)) = (cache, path.as_ref()) {
        if let Some(run) = c.load(p, operator_fingerprint(h))? {
            counters.record_cache_hit();
            return Ok(run);
        }
    }
    let run = run_lanczos_counted(h, start, cfg, counters)?.with_operator_label(spec.to_string());
    if let (Some(c), Some(p)) = (cache, path.as_ref()) {
        c.store(p, &run)?;
    }
    Ok(run)
}

/// Sweep result for one model, ready for CSV output.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSweep {
    pub spec: ModelSpec,
    pub result: ThermalSweepResult,
}

#[derive(Debug)]
pub struct SweepReport {
    pub sweeps: Vec<ModelSweep>,
    pub counters: RunCounters,
}

fn sweep_one(
    cfg: &RunConfig,
    spec: &ModelSpec,
    temps: &[f64],
    lcfg: &LanczosConfig,
    cache: Option<&RunCache>,
    counters: &RunCounters,
) -> Result<ModelSweep, CliError> {
    let h = spec.build()?;
    let start = StartingBlock::identity(spec.sites)?;
    let z_run = obtain_run(spec, &h, &start, lcfg, cache, counters)?;
    let mut result = thermal_sweep(&z_run, temps, cfg.temperature.delta)?;
    if !cfg.output.correlators.is_empty() {
        let pairs: Vec<(usize, usize)> = cfg.output.correlators.iter().map(|&[i, j]| (i, j)).collect();
        let betas: Vec<f64> = temps.iter().map(|t| 1.0 / t).collect();
        let symmetry = match cfg.output.symmetry {
            SymmetryMode::None => Symmetry::None,
            SymmetryMode::SpinFlip => Symmetry::SpinFlip,
        };
        let mut cache_err = None;
        let corr = correlation_zz(&h, &z_run, &pairs, &betas, symmetry, |block| {
            obtain_run(spec, &h, block, lcfg, cache, counters).map_err(|e| {
                let msg = e.to_string();
                cache_err = Some(e);
                LanczosError::Format(msg)
            })
        });
        let corr = match (corr, cache_err) {
            (Err(_), Some(e)) => return Err(e),
            (c, _) => c?,
        };
        for (b, point) in result.points.iter_mut().enumerate() {
            point.correlators = corr.values.iter().map(|row| row[b]).collect();
        }
        result.correlator_pairs = pairs;
    }
    Ok(ModelSweep { spec: *spec, result })
}

/// Runs every model in the configuration without writing anything.
pub fn compute_sweep(cfg: &RunConfig) -> Result<SweepReport, CliError> {
    cfg.validate()?;
    let temps = cfg.temperatures()?;
    let models = cfg.models()?;
    let lcfg = cfg.lanczos_config(&temps)?;
    let cache = cfg.output.cache.clone().map(|dir| RunCache { dir });
    let counters = RunCounters::new();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let sweeps = pool.install(|| {
        models
            .par_iter()
            .map(|spec| sweep_one(cfg, spec, &temps, &lcfg, cache.as_ref(), &counters))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    Ok(SweepReport { sweeps, counters })
}

/// [`compute_sweep`] followed by an atomic CSV write to `output.path`.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport, CliError> {
    let report = compute_sweep(cfg)?;
    let observables = &cfg.output.observables;
    write_atomically(&cfg.output.path, |w| write_csv(w, &report.sweeps, observables))?;
    Ok(report)
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with the fixed header plus one `Czz_i_j` column per pair.
/// Observables not in `observables` are left empty.
pub fn write_csv(w: &mut impl Write, sweeps: &[ModelSweep], observables: &[Observable]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let pairs = sweeps.first().map(|s| s.result.correlator_pairs.clone()).unwrap_or_default();
    let mut header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(pairs.iter().map(|(i, j)| format!("Czz_{i}_{j}")));
    out.write_record(&header)?;
    let want = |o: Observable, x: f64| if observables.contains(&o) { fmt_float(x) } else { String::new() };
    for sweep in sweeps {
        for p in &sweep.result.points {
            let mut rec = vec![
                sweep.spec.family_name().to_string(),
                sweep.spec.sites.to_string(),
                sweep.spec.param_label(),
                fmt_float(p.temperature),
                fmt_float(p.log_z),
                fmt_float(p.energy_density),
                want(Observable::Entropy, p.entropy_density),
                want(Observable::SpecificHeat, p.specific_heat),
                want(Observable::Fidelity, p.fidelity),
                want(Observable::TraceDistance, p.trace_distance),
            ];
            rec.extend(p.correlators.iter().map(|&c| fmt_float(c)));
            out.write_record(&rec)?;
        }
    }
    out.flush()
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomically(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let f = fs::File::create(&tmp)?;
        let mut w = BufWriter::new(f);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        drop(w);
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// One row of a sweep CSV, as read back for peak finding.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub model: String,
    pub sites: usize,
    pub param: String,
    pub temperature: f64,
    pub values: BTreeMap<String, f64>,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?.clone();
    if header.len() < CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(CliError::Config(format!("{}: unexpected CSV header", path.display())));
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let bad = |field: &str| CliError::Config(format!("{}: row {}: bad `{field}`", path.display(), n + 2));
        let sites = rec[1].parse().map_err(|_| bad("L"))?;
        let temperature = rec[3].parse().map_err(|_| bad("T"))?;
        let mut values = BTreeMap::new();
        for (name, v) in header.iter().zip(rec.iter()).skip(4) {
            if !v.is_empty() {
                values.insert(name.to_string(), v.parse().map_err(|_| bad(name))?);
            }
        }
        rows.push(CsvRow { model: rec[0].to_string(), sites, param: rec[2].to_string(), temperature, values });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Maximum,
    Minimum,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakEstimate {
    pub t_peak: f64,
    pub uncertainty: f64,
    /// Fitted value at the vertex.
    pub value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PeakError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("extremum at the grid boundary T = {0}")]
    Boundary(f64),
    #[error("need at least 2 sizes, got {0}")]
    TooFewSizes(usize),
    #[error("non-finite or unsorted series")]
    BadSeries,
    #[error("h = {0} outside (0, 1)")]
    FieldOutOfRange(f64),
}

impl From<PeakError> for CliError {
    fn from(e: PeakError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Discrete extremum refined by the parabola through it and its neighbours.
pub fn find_peak(series: &[(f64, f64)], kind: Extremum) -> Result<PeakEstimate, PeakError> {
    if series.len() < 3 {
        return Err(PeakError::TooFewPoints(series.len()));
    }
    if series.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) || series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(PeakError::BadSeries);
    }
    let key = |v: f64| if kind == Extremum::Maximum { v } else { -v };
    let (k, _) = series
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bv), (i, &(_, v))| if key(v) > bv { (i, key(v)) } else { (bk, bv) });
    if k == 0 || k == series.len() - 1 {
        return Err(PeakError::Boundary(series[k].0));
    }
    let (x0, y0) = series[k - 1];
    let (x1, y1) = series[k];
    let (x2, y2) = series[k + 1];
    // Divided differences of the interpolating parabola.
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    let b = d01 - a * (x0 + x1);
    let c = y0 - x0 * (a * x0 + b);
    let vertex = if a != 0.0 { -b / (2.0 * a) } else { x1 };
    let vertex = vertex.clamp(x0, x2);
    let half_step = 0.5 * (x2 - x0) / 2.0;
    Ok(PeakEstimate {
        t_peak: vertex,
        uncertainty: half_step.max((vertex - x1).abs()),
        value: a * vertex * vertex + b * vertex + c,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TcEstimate {
    pub t_c: f64,
    /// Shift when the third-largest size joins the fit; `None` with two sizes.
    pub uncertainty: Option<f64>,
}

/// `T_peak = T_c + a/L` through the two largest sizes.
pub fn extrapolate_tc(peaks: &[(usize, f64)]) -> Result<TcEstimate, PeakError> {
    let mut pts: Vec<(usize, f64)> = peaks.to_vec();
    pts.sort_by_key(|p| std::cmp::Reverse(p.0));
    pts.dedup_by_key(|p| p.0);
    if pts.len() < 2 {
        return Err(PeakError::TooFewSizes(pts.len()));
    }
    if pts.iter().any(|p| p.0 == 0 || !p.1.is_finite()) {
        return Err(PeakError::BadSeries);
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|&(l, t)| (1.0 / l as f64, t)).collect();
    let intercept = |xy: &[(f64, f64)]| {
        let n = xy.len() as f64;
        let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
        let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        my - sxy / sxx * mx
    };
    let t_c = intercept(&xy[..2]);
    let uncertainty = (xy.len() >= 3).then(|| (t_c - intercept(&xy[..3])).abs());
    Ok(TcEstimate { t_c, uncertainty })
}

/// Mean-field critical temperature `h / (2 atanh h)` of the LMG model.
pub fn exact_tc(h: f64) -> Result<f64, PeakError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(PeakError::FieldOutOfRange(h));
    }
    Ok(h / (2.0 * h.atanh()))
}
