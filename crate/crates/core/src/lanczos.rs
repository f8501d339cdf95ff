//! Global block Lanczos over MPOs and the Gauss quadrature rule it induces.
//!
//! The "vectors" of the recurrence are whole operators in MPO form and the
//! inner product is Hilbert–Schmidt. Starting from a block `B`, the iteration
//! produces a symmetric tridiagonal matrix `T_k`; its eigenvalues are the
//! nodes and `‖B‖² · (first eigenvector components)²` the weights of a
//! `k`-point Gauss rule for the spectral measure of `A` seen from `B`, so
//! `trace(B† f(A) B) ≈ Σ_j w_j f(λ_j)`.

use std::fmt;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::models::StartingBlock;
use crate::mpo::{read_f64, read_u32, read_u64, Mpo, MpoError};
use crate::tensor::{symtridiag_eig, TensorError, C64};

const RUN_MAGIC: &[u8; 8] = b"MPOQRUN\0";
/// Version tag of the serialized [`LanczosRun`] format.
pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LanczosError {
    #[error("invalid Lanczos configuration: {0}")]
    InvalidConfig(String),
    #[error("starting block has zero norm")]
    ZeroStart,
    #[error("operator is not Hermitian (relative anti-Hermitian part {0:.3e})")]
    NotHermitian(f64),
    #[error("non-finite value in iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("iteration {iteration}: <U, A U> has imaginary part {imag:.3e} for real part {real:.3e}")]
    ComplexAlpha { iteration: usize, real: f64, imag: f64 },
    #[error("quadrature weight {weight:.3e} at node {node} is negative")]
    NegativeWeight { node: f64, weight: f64 },
    #[error("function value {value} at node {node} is not finite")]
    NonFiniteFunction { node: f64, value: f64 },
    #[error("unsupported run file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed run file: {0}")]
    Format(String),
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl From<std::io::Error> for LanczosError {
    fn from(e: std::io::Error) -> Self {
        LanczosError::Mpo(MpoError::Io(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reorthogonalization {
    Off,
    /// Project each new block against every stored basis element.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopKind {
    /// `|G(k) - G(k-1)| / |G(k)|` of the probe estimate.
    RelativeChange,
    /// Relative movement of the extreme nodes.
    NodeRangeStagnation,
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Probe {
    /// `e^{-βλ}`, tracked in the log domain.
    Boltzmann { beta: f64 },
    Custom(ScalarFn),
}

impl fmt::Debug for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Boltzmann { beta } => write!(f, "Boltzmann {{ beta: {beta} }}"),
            Probe::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StopRule {
    pub kind: StopKind,
    pub tolerance: f64,
    pub probe: Probe,
    /// Consecutive iterations the criterion must hold.
    pub patience: usize,
}

impl StopRule {
    /// Relative change of `Σ w e^{-βλ}` below `tolerance` three times in a row.
    pub fn boltzmann(beta: f64, tolerance: f64) -> Self {
        Self { kind: StopKind::RelativeChange, tolerance, probe: Probe::Boltzmann { beta }, patience: 3 }
    }

    pub fn node_range(tolerance: f64) -> Self {
        Self {
            kind: StopKind::NodeRangeStagnation,
            tolerance,
            probe: Probe::Boltzmann { beta: 0.0 },
            patience: 3,
        }
    }

    /// A scale-free measure of change between consecutive rules.
    fn change(&self, prev: &QuadratureRule, cur: &QuadratureRule) -> f64 {
        match self.kind {
            StopKind::RelativeChange => match &self.probe {
                Probe::Boltzmann { beta } => {
                    let a = prev.log_sum_exp(-beta);
                    let b = cur.log_sum_exp(-beta);
                    (a - b).exp_m1().abs()
                }
                Probe::Custom(f) => {
                    let a: f64 = prev.nodes.iter().zip(&prev.weights).map(|(x, w)| w * f(*x)).sum();
                    let b: f64 = cur.nodes.iter().zip(&cur.weights).map(|(x, w)| w * f(*x)).sum();
                    if b == 0.0 {
                        (a - b).abs()
                    } else {
                        ((a - b) / b).abs()
                    }
                }
            },
            StopKind::NodeRangeStagnation => {
                let (p0, p1) = prev.node_range();
                let (c0, c1) = cur.node_range();
                let scale = c0.abs().max(c1.abs()).max(f64::MIN_POSITIVE);
                (p0 - c0).abs().max((p1 - c1).abs()) / scale
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LanczosConfig {
    pub k_max: usize,
    pub d_max: usize,
    /// Breakdown when `β_i < breakdown_tol · β₁`.
    pub breakdown_tol: f64,
    pub reorthogonalization: Reorthogonalization,
    pub stop_rules: Vec<StopRule>,
}

impl LanczosConfig {
    pub fn new(k_max: usize, d_max: usize) -> Self {
        Self {
            k_max,
            d_max,
            breakdown_tol: 1e-12,
            reorthogonalization: Reorthogonalization::Off,
            stop_rules: Vec::new(),
        }
    }

    pub fn with_reorthogonalization(mut self, mode: Reorthogonalization) -> Self {
        self.reorthogonalization = mode;
        self
    }

    pub fn with_stop_rule(mut self, rule: StopRule) -> Self {
        self.stop_rules.push(rule);
        self
    }

    pub fn validate(&self) -> Result<(), LanczosError> {
        if self.k_max < 1 {
            return Err(LanczosError::InvalidConfig("K_max must be at least 1".into()));
        }
        if self.d_max < 1 {
            return Err(LanczosError::InvalidConfig("D_max must be at least 1".into()));
        }
        if !(self.breakdown_tol > 0.0 && self.breakdown_tol < 1.0) {
            return Err(LanczosError::InvalidConfig(format!(
                "breakdown tolerance {} outside (0, 1)",
                self.breakdown_tol
            )));
        }
        for r in &self.stop_rules {
            if !(r.tolerance > 0.0) {
                return Err(LanczosError::InvalidConfig(format!("stop tolerance {} must be positive", r.tolerance)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedMaxDimension,
    Breakdown,
    StopRule,
}

impl Termination {
    fn code(self) -> u8 {
        match self {
            Termination::ReachedMaxDimension => 0,
            Termination::Breakdown => 1,
            Termination::StopRule => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Termination::ReachedMaxDimension),
            1 => Some(Termination::Breakdown),
            2 => Some(Termination::StopRule),
            _ => None,
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::ReachedMaxDimension => "reached K_max",
            Termination::Breakdown => "breakdown",
            Termination::StopRule => "stop rule",
        })
    }
}

/// Recurrence coefficients of `T_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalProjection {
    /// Diagonal `α_1..α_k`.
    pub alphas: Vec<f64>,
    /// Off-diagonal `β_2..β_k`.
    pub betas: Vec<f64>,
    /// Norm of the starting block.
    pub beta1: f64,
    pub termination: Termination,
}

impl TridiagonalProjection {
    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn quadrature(&self) -> Result<QuadratureRule, LanczosError> {
        QuadratureRule::from_coefficients(&self.alphas, &self.betas, self.beta1)
    }
}

/// Gauss rule for the spectral measure: `∫ f dμ ≈ Σ_j w_j f(λ_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    /// Ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn from_coefficients(alphas: &[f64], betas: &[f64], beta1: f64) -> Result<Self, LanczosError> {
        let eig = symtridiag_eig(alphas, betas)?;
        let mass = beta1 * beta1;
        let k = eig.dim();
        let mut weights = Vec::with_capacity(k);
        for j in 0..k {
            let v = eig.vector_component(0, j);
            let w = mass * v * v;
            if w < 0.0 {
                if w < -1e-12 * mass {
                    return Err(LanczosError::NegativeWeight { node: eig.eigenvalues[j], weight: w });
                }
                weights.push(0.0);
            } else {
                weights.push(w);
            }
        }
        Ok(Self { nodes: eig.eigenvalues, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn node_range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// `Σ_j w_j f(λ_j)`.
    pub fn integrate(&self, f: &dyn Fn(f64) -> f64) -> Result<f64, LanczosError> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(x);
            if !v.is_finite() {
                return Err(LanczosError::NonFiniteFunction { node: x, value: v });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// `ln Σ_j w_j e^{s λ_j}` without overflow.
    pub fn log_sum_exp(&self, s: f64) -> f64 {
        let mut top = f64::NEG_INFINITY;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            if w > 0.0 {
                top = top.max(s * x + w.ln());
            }
        }
        if top == f64::NEG_INFINITY {
            return top;
        }
        let acc: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| (s * x + w.ln() - top).exp())
            .sum();
        top + acc.ln()
    }
}

/// Truncation bookkeeping for one Lanczos step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepCompression {
    /// Total discarded squared singular values across the step's operations.
    pub discarded: f64,
    pub max_bond: usize,
}

#[derive(Clone, Debug)]
pub struct LanczosRun {
    pub projection: TridiagonalProjection,
    pub quadrature: QuadratureRule,
    pub compression_log: Vec<StepCompression>,
    pub operator_label: String,
    pub start_label: String,
    pub sites: usize,
    /// Content hash of the operator, used to refuse mixing runs of different Hamiltonians.
    pub operator_fingerprint: u64,
    /// The orthonormalized basis, kept only with full reorthogonalization.
    pub basis: Option<Vec<Mpo>>,
}

impl PartialEq for LanczosRun {
    fn eq(&self, other: &Self) -> bool {
        self.projection == other.projection
            && self.quadrature == other.quadrature
            && self.compression_log == other.compression_log
            && self.operator_label == other.operator_label
            && self.start_label == other.start_label
            && self.sites == other.sites
            && self.operator_fingerprint == other.operator_fingerprint
    }
}

/// FNV-1a over the bit patterns of every site tensor.
pub fn operator_fingerprint(a: &Mpo) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for s in a.sites() {
        for &e in s.shape() {
            feed(&(e as u64).to_le_bytes());
        }
        for z in s.data() {
            feed(&z.re.to_bits().to_le_bytes());
            feed(&z.im.to_bits().to_le_bytes());
        }
    }
    h
}

fn hermiticity_defect(a: &Mpo) -> Result<f64, LanczosError> {
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let diff = a.direct_sum(&a.adjoint().scale_real(-1.0))?;
    Ok(diff.frobenius_norm() / norm)
}

/// Runs the global Lanczos recurrence of `a` from `start`.
///
/// Per step: `β_i = ‖V_{i-1}‖`, `U_i = V_{i-1}/β_i`, `V_i = A U_i - β_i U_{i-1}`,
/// `α_i = Re<U_i, V_i>`, `V_i -= α_i U_i`, with every sum and product capped
/// at `d_max`. Stops on breakdown (`β_i < tol·β₁`), at `k_max`, or when a
/// stop rule holds for its patience window.
pub fn run_lanczos(a: &Mpo, start: &StartingBlock, cfg: &LanczosConfig) -> Result<LanczosRun, LanczosError> {
    cfg.validate()?;
    if a.len() != start.mpo.len() {
        return Err(MpoError::LengthMismatch { left: a.len(), right: start.mpo.len() }.into());
    }
    let defect = hermiticity_defect(a)?;
    if defect > 1e-10 {
        return Err(LanczosError::NotHermitian(defect));
    }

    let d_max = cfg.d_max;
    let keep_basis = cfg.reorthogonalization == Reorthogonalization::Full;
    let mut basis: Vec<Mpo> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut beta1 = 0.0;
    let mut log = Vec::new();
    let mut termination = Termination::ReachedMaxDimension;
    let mut prev_rule: Option<QuadratureRule> = None;
    let mut streaks = vec![0usize; cfg.stop_rules.len()];

    let mut u_prev: Option<Mpo> = None;
    let mut v = start.mpo.clone();
    for i in 1..=cfg.k_max {
        let beta = v.frobenius_norm();
        if !beta.is_finite() {
            return Err(LanczosError::NonFinite { iteration: i });
        }
        if i == 1 {
            if beta == 0.0 {
                return Err(LanczosError::ZeroStart);
            }
            beta1 = beta;
        } else if beta < cfg.breakdown_tol * beta1 {
            termination = Termination::Breakdown;
            break;
        } else {
            betas.push(beta);
        }
        let u = v.scale_real(1.0 / beta);

        let mut step = StepCompression::default();
        let mut note = |rep: &crate::mpo::CompressionReport| {
            step.discarded += rep.total_discarded();
            step.max_bond = step.max_bond.max(rep.max_bond);
        };

        let (mut w, rep) = a.multiply(&u, d_max)?;
        note(&rep);
        if let Some(prev) = &u_prev {
            let (next, rep) = w.sum(&prev.scale_real(-beta), d_max)?;
            note(&rep);
            w = next;
        }
        let alpha_c: C64 = u.inner_product(&w)?;
        if !alpha_c.re.is_finite() || !alpha_c.im.is_finite() {
            return Err(LanczosError::NonFinite { iteration: i });
        }
        if alpha_c.im.abs() > 1e-8 * alpha_c.re.abs() + 1e-12 {
            return Err(LanczosError::ComplexAlpha { iteration: i, real: alpha_c.re, imag: alpha_c.im });
        }
        let alpha = alpha_c.re;
        let (next, rep) = w.sum(&u.scale_real(-alpha), d_max)?;
        note(&rep);
        w = next;

        if keep_basis {
            for b in basis.iter().chain(std::iter::once(&u)) {
                let c = b.inner_product(&w)?;
                let (next, rep) = w.sum(&b.scale(-c), d_max)?;
                note(&rep);
                w = next;
            }
            basis.push(u.clone());
        }

        alphas.push(alpha);
        log.push(step);
        u_prev = Some(u);
        v = w;

        if !cfg.stop_rules.is_empty() {
            let rule = QuadratureRule::from_coefficients(&alphas, &betas, beta1)?;
            let mut fired = false;
            if let Some(prev) = &prev_rule {
                for (r, streak) in cfg.stop_rules.iter().zip(streaks.iter_mut()) {
                    if r.change(prev, &rule) < r.tolerance {
                        *streak += 1;
                    } else {
                        *streak = 0;
                    }
                    fired |= *streak >= r.patience;
                }
            }
            prev_rule = Some(rule);
            if fired && i < cfg.k_max {
                termination = Termination::StopRule;
                break;
            }
        }
    }

    let projection = TridiagonalProjection { alphas, betas, beta1, termination };
    let quadrature = projection.quadrature()?;
    Ok(LanczosRun {
        projection,
        quadrature,
        compression_log: log,
        operator_label: String::new(),
        start_label: start.label.clone(),
        sites: a.len(),
        operator_fingerprint: operator_fingerprint(a),
        basis: keep_basis.then_some(basis),
    })
}

/// Counts Lanczos executions by kind of starting block.
#[derive(Debug, Default)]
pub struct RunCounters {
    identity_starts: AtomicUsize,
    projector_starts: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl RunCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_start(&self, start: &StartingBlock) {
        if start.is_identity() {
            self.identity_starts.fetch_add(1, Ordering::Relaxed);
        } else {
            self.projector_starts.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn record_cache_hit(&self) {
        self.cache_hits.fetch_add(1, Ordering::Relaxed);
    }

    pub fn identity_starts(&self) -> usize {
        self.identity_starts.load(Ordering::Relaxed)
    }

    pub fn projector_starts(&self) -> usize {
        self.projector_starts.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }
}

/// [`run_lanczos`] that also bumps `counters`.
pub fn run_lanczos_counted(
    a: &Mpo,
    start: &StartingBlock,
    cfg: &LanczosConfig,
    counters: &RunCounters,
) -> Result<LanczosRun, LanczosError> {
    counters.record_start(start);
    run_lanczos(a, start, cfg)
}

/// `Σ_j w_j f(λ_j)`, i.e. `β₁² (f(T_k))_{11}`.
pub fn evaluate(run: &LanczosRun, f: &dyn Fn(f64) -> f64) -> Result<f64, LanczosError> {
    run.quadrature.integrate(f)
}

/// [`evaluate`] for several functions against the cached rule.
pub fn evaluate_many(run: &LanczosRun, fs: &[&dyn Fn(f64) -> f64]) -> Vec<Result<f64, LanczosError>> {
    fs.iter().map(|f| run.quadrature.integrate(*f)).collect()
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String, LanczosError> {
    let n = read_u64(r)? as usize;
    if n > 1 << 20 {
        return Err(LanczosError::Format("label too long".into()));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| LanczosError::Format("label is not UTF-8".into()))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, LanczosError> {
    (0..n).map(|_| read_f64(r).map_err(LanczosError::from)).collect()
}

impl LanczosRun {
    pub fn k(&self) -> usize {
        self.projection.k()
    }

    pub fn with_operator_label(mut self, label: impl Into<String>) -> Self {
        self.operator_label = label.into();
        self
    }

    /// Little-endian, versioned. The quadrature is rebuilt on load.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), LanczosError> {
        let p = &self.projection;
        w.write_all(RUN_MAGIC)?;
        w.write_all(&RUN_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sites as u64).to_le_bytes())?;
        w.write_all(&self.operator_fingerprint.to_le_bytes())?;
        w.write_all(&[p.termination.code()])?;
        w.write_all(&p.beta1.to_le_bytes())?;
        w.write_all(&(p.alphas.len() as u64).to_le_bytes())?;
        for a in &p.alphas {
            w.write_all(&a.to_le_bytes())?;
        }
        for b in &p.betas {
            w.write_all(&b.to_le_bytes())?;
        }
        w.write_all(&(self.compression_log.len() as u64).to_le_bytes())?;
        for s in &self.compression_log {
            w.write_all(&s.discarded.to_le_bytes())?;
            w.write_all(&(s.max_bond as u64).to_le_bytes())?;
        }
        write_str(w, &self.operator_label)?;
        write_str(w, &self.start_label)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, LanczosError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != RUN_MAGIC {
            return Err(LanczosError::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != RUN_FORMAT_VERSION {
            return Err(LanczosError::VersionMismatch { found: version, expected: RUN_FORMAT_VERSION });
        }
        let sites = read_u64(r)? as usize;
        let operator_fingerprint = read_u64(r)?;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let termination =
            Termination::from_code(code[0]).ok_or_else(|| LanczosError::Format("bad termination code".into()))?;
        let beta1 = read_f64(r)?;
        let k = read_u64(r)? as usize;
        if k == 0 || k > 1 << 20 {
            return Err(LanczosError::Format(format!("implausible Krylov dimension {k}")));
        }
        let alphas = read_f64s(r, k)?;
        let betas = read_f64s(r, k - 1)?;
        let n_log = read_u64(r)? as usize;
        if n_log > 1 << 20 {
            return Err(LanczosError::Format("compression log too long".into()));
        }
        let mut compression_log = Vec::with_capacity(n_log);
        for _ in 0..n_log {
            let discarded = read_f64(r)?;
            let max_bond = read_u64(r)? as usize;
            compression_log.push(StepCompression { discarded, max_bond });
        }
        let operator_label = read_str(r)?;
        let start_label = read_str(r)?;
        let projection = TridiagonalProjection { alphas, betas, beta1, termination };
        let quadrature = projection.quadrature()?;
        Ok(Self {
            projection,
            quadrature,
            compression_log,
            operator_label,
            start_label,
            sites,
            operator_fingerprint,
            basis: None,
        })
    }
}
