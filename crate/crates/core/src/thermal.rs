//! Thermal observables as functionals of one quadrature rule.
//!
//! Every exponential is taken relative to a reference node (the smallest
//! node in play), so `e^{-βλ}` never overflows however large `β·L` gets.
//! Ratios like `F/Z` are weighted means of the normalized quadrature
//! distribution rather than quotients of separately exponentiated traces.

use std::collections::HashMap;

use thiserror::Error;

use crate::lanczos::{LanczosError, LanczosRun, QuadratureRule};
use crate::models::{projector_block, spin_flip_violation, z_decomposition, zz_decomposition, ModelError, StartingBlock};
use crate::mpo::Mpo;

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("inverse temperature {0} must be finite and non-negative")]
    InvalidBeta(f64),
    #[error("inverse temperatures must be strictly increasing")]
    Unsorted,
    #[error("fidelity offset {0} must be positive")]
    InvalidOffset(f64),
    #[error("quadrature rule carries no mass")]
    EmptyMeasure,
    #[error("runs were built on different operators")]
    MismatchedOperators,
    #[error("Gram-operator node {node:.3e} is negative beyond tolerance (largest node {max:.3e})")]
    NegativeNode { node: f64, max: f64 },
    #[error("Hamiltonian does not commute with the global spin flip (relative commutator {0:.3e})")]
    SymmetryViolated(f64),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inverse temperatures plus the offset used for fidelity and trace distance.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaGrid {
    pub betas: Vec<f64>,
    pub delta_t: f64,
}

impl BetaGrid {
    pub fn new(betas: Vec<f64>, delta_t: f64) -> Result<Self, ThermalError> {
        for &b in &betas {
            if !b.is_finite() || b < 0.0 {
                return Err(ThermalError::InvalidBeta(b));
            }
        }
        if betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ThermalError::Unsorted);
        }
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(ThermalError::InvalidOffset(delta_t));
        }
        Ok(Self { betas, delta_t })
    }

    /// `β = 1/T` for each temperature, sorted by increasing `β`.
    pub fn from_temperatures(temperatures: &[f64], delta_t: f64) -> Result<Self, ThermalError> {
        let mut betas: Vec<f64> = temperatures.iter().map(|&t| 1.0 / t).collect();
        betas.sort_by(f64::total_cmp);
        Self::new(betas, delta_t)
    }
}

/// Moments of the Gibbs weights at one inverse temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionTraces {
    pub beta: f64,
    /// `ln Z`.
    pub log_z: f64,
    /// `F/Z = trace(H e^{-βH}) / Z`.
    pub mean_energy: f64,
    /// `G/Z = trace(H² e^{-βH}) / Z`.
    pub second_moment: f64,
    /// `G/Z - (F/Z)²`, accumulated directly as a variance.
    pub energy_variance: f64,
    /// Smallest node; `ln Z = shifted_log_z - β·reference`.
    pub reference: f64,
    pub shifted_log_z: f64,
}

impl PartitionTraces {
    /// [`entropy_density`] without the cancellation between `β F/Z` and
    /// `ln Z`, which share the large term `∓β·reference`.
    pub fn entropy_density(&self, sites: usize) -> f64 {
        (self.beta * (self.mean_energy - self.reference) + self.shifted_log_z) / sites as f64
    }
}

/// Log-sums `ln Σ_j w_j e^{-β(λ_j - λ_ref)}` for one or more rules sharing a
/// reference node.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedExponentials {
    pub reference: f64,
    /// Indexed `[rule][beta]`.
    pub log_sums: Vec<Vec<f64>>,
}

impl ShiftedExponentials {
    pub fn new(rules: &[&QuadratureRule], betas: &[f64]) -> Result<Self, ThermalError> {
        let reference = rules
            .iter()
            .flat_map(|r| r.nodes.iter().zip(&r.weights).filter(|(_, &w)| w > 0.0).map(|(&x, _)| x))
            .fold(f64::INFINITY, f64::min);
        if !reference.is_finite() {
            return Err(ThermalError::EmptyMeasure);
        }
        let log_sums = rules
            .iter()
            .map(|r| betas.iter().map(|&b| shifted_log_sum(r, b, reference)).collect())
            .collect();
        Ok(Self { reference, log_sums })
    }

    /// `ln Σ w e^{-βλ}` for rule `r` at grid index `b`.
    pub fn log_trace(&self, r: usize, b: usize, beta: f64) -> f64 {
        self.log_sums[r][b] - beta * self.reference
    }
}

fn shifted_log_sum(rule: &QuadratureRule, beta: f64, reference: f64) -> f64 {
    // Arguments are ≤ 0 because reference ≤ every node with positive weight.
    let s: f64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| w * (-beta * (x - reference)).exp())
        .sum();
    s.ln()
}

/// `ln Z`, `F/Z`, `G/Z` from one rule at one `β`.
pub fn partition_traces_at(rule: &QuadratureRule, beta: f64) -> Result<PartitionTraces, ThermalError> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(ThermalError::InvalidBeta(beta));
    }
    let reference = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, _)| x)
        .fold(f64::INFINITY, f64::min);
    if !reference.is_finite() {
        return Err(ThermalError::EmptyMeasure);
    }
    let shifted: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| if w > 0.0 { w * (-beta * (x - reference)).exp() } else { 0.0 })
        .collect();
    let total: f64 = shifted.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(ThermalError::EmptyMeasure);
    }
    let mean: f64 = shifted.iter().zip(&rule.nodes).map(|(p, x)| p * x).sum::<f64>() / total;
    let variance: f64 =
        shifted.iter().zip(&rule.nodes).map(|(p, x)| p * (x - mean) * (x - mean)).sum::<f64>() / total;
    Ok(PartitionTraces {
        beta,
        log_z: total.ln() - beta * reference,
        mean_energy: mean,
        second_moment: variance + mean * mean,
        energy_variance: variance,
        reference,
        shifted_log_z: total.ln(),
    })
}

/// [`partition_traces_at`] over a list of `β`. `β = 0` with an identity
/// start uses the exact `ln Z = L ln 2`.
pub fn partition_traces(run: &LanczosRun, betas: &[f64]) -> Result<Vec<PartitionTraces>, ThermalError> {
    betas
        .iter()
        .map(|&b| {
            let mut t = partition_traces_at(&run.quadrature, b)?;
            if b == 0.0 && run.start_label == "identity" {
                t.log_z = run.sites as f64 * std::f64::consts::LN_2;
                t.shifted_log_z = t.log_z;
            }
            Ok(t)
        })
        .collect()
}

/// `s = (β F/Z + ln Z) / L`.
pub fn entropy_density(log_z: f64, mean_energy: f64, beta: f64, sites: usize) -> f64 {
    (beta * mean_energy + log_z) / sites as f64
}

/// `c = (β²/L) (G/Z - (F/Z)²)`.
pub fn specific_heat(traces: &PartitionTraces, sites: usize) -> f64 {
    traces.beta * traces.beta * traces.energy_variance / sites as f64
}

fn log_z(rule: &QuadratureRule, beta: f64) -> f64 {
    rule.log_sum_exp(-beta)
}

/// `Z((β0+β1)/2) / sqrt(Z(β0) Z(β1))`, in the log domain.
pub fn thermal_fidelity(run: &LanczosRun, beta0: f64, beta1: f64) -> Result<f64, ThermalError> {
    for b in [beta0, beta1] {
        if !b.is_finite() || b < 0.0 {
            return Err(ThermalError::InvalidBeta(b));
        }
    }
    let q = &run.quadrature;
    let mid = log_z(q, 0.5 * (beta0 + beta1));
    let z0 = log_z(q, beta0);
    let z1 = log_z(q, beta1);
    if !(mid.is_finite() && z0.is_finite() && z1.is_finite()) {
        return Err(ThermalError::EmptyMeasure);
    }
    Ok((mid - 0.5 * (z0 + z1)).exp())
}

/// `‖e^{-β0 H}/Z(β0) - e^{-β1 H}/Z(β1)‖₁`, unnormalized (range `[0, 2]`).
///
/// `|·|` is not smooth, so this converges more slowly in the Krylov
/// dimension than the smooth observables.
pub fn trace_distance_thermal(run: &LanczosRun, beta0: f64, beta1: f64) -> Result<f64, ThermalError> {
    for b in [beta0, beta1] {
        if !b.is_finite() || b < 0.0 {
            return Err(ThermalError::InvalidBeta(b));
        }
    }
    let q = &run.quadrature;
    let z0 = log_z(q, beta0);
    let z1 = log_z(q, beta1);
    if !(z0.is_finite() && z1.is_finite()) {
        return Err(ThermalError::EmptyMeasure);
    }
    Ok(q
        .nodes
        .iter()
        .zip(&q.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| {
            let lw = w.ln();
            ((lw - beta0 * x - z0).exp() - (lw - beta1 * x - z1).exp()).abs()
        })
        .sum())
}

/// `trace sqrt(A†A)` from a run on the Gram operator `A†A`.
pub fn trace_norm_gram(run: &LanczosRun) -> Result<f64, ThermalError> {
    let q = &run.quadrature;
    let max = q.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut acc = 0.0;
    for (&x, &w) in q.nodes.iter().zip(&q.weights) {
        if x < -1e-6 * max {
            return Err(ThermalError::NegativeNode { node: x, max });
        }
        acc += w * x.max(0.0).sqrt();
    }
    Ok(acc)
}

/// `trace |H|` from a run on a Hermitian `H`.
pub fn trace_norm_hermitian(run: &LanczosRun) -> f64 {
    run.quadrature.nodes.iter().zip(&run.quadrature.weights).map(|(x, w)| w * x.abs()).sum()
}

/// Exact `A† A` in MPO form, capped at `d_max`.
pub fn gram_operator(a: &Mpo, d_max: usize) -> Result<Mpo, ThermalError> {
    let (g, _) = a.adjoint().multiply(a, d_max).map_err(LanczosError::from)?;
    Ok(g)
}

/// One positive part of a decomposed observable: `sign · trace(√O e^{-βH} √O)`.
#[derive(Clone, Copy, Debug)]
pub struct SignedRun<'a> {
    pub sign: f64,
    pub run: &'a LanczosRun,
}

/// `⟨O⟩(β) = Σ_parts sign · trace(O_part e^{-βH}) / Z(β)` with `Z` from the
/// identity-start run. All runs share one reference node.
pub fn expectation(z_run: &LanczosRun, parts: &[SignedRun<'_>], betas: &[f64]) -> Result<Vec<f64>, ThermalError> {
    for p in parts {
        if p.run.operator_fingerprint != z_run.operator_fingerprint || p.run.sites != z_run.sites {
            return Err(ThermalError::MismatchedOperators);
        }
    }
    for &b in betas {
        if !b.is_finite() || b < 0.0 {
            return Err(ThermalError::InvalidBeta(b));
        }
    }
    let mut rules: Vec<&QuadratureRule> = vec![&z_run.quadrature];
    rules.extend(parts.iter().map(|p| &p.run.quadrature));
    let shifted = ShiftedExponentials::new(&rules, betas)?;
    Ok((0..betas.len())
        .map(|b| {
            let lz = shifted.log_sums[0][b];
            parts
                .iter()
                .enumerate()
                .map(|(r, p)| p.sign * (shifted.log_sums[r + 1][b] - lz).exp())
                .sum()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    None,
    /// `H` commutes with `Π σx`, so `⟨σz_i⟩ = 0` and the four two-site
    /// projector terms pair up.
    SpinFlip,
}

/// `C_zz(i, j)` per requested pair and `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlators {
    pub pairs: Vec<(usize, usize)>,
    /// Indexed `[pair][beta]`.
    pub values: Vec<Vec<f64>>,
}

/// Two-site connected correlators `⟨σz_i σz_j⟩ - ⟨σz_i⟩⟨σz_j⟩`.
///
/// `run_from` executes (or fetches) a Lanczos run of `h` for a starting
/// block. Without symmetry, the negative halves of `σz = Π0 - Π1` and
/// `σzσz = (Π00 + Π11) - (Π10 + Π01)` are the complements of the positive
/// halves (they sum to the identity), so each pair costs one run on
/// `Π00 + Π11` plus the single-site `Π0` runs, which are shared between
/// pairs. With spin-flip symmetry `⟨σz⟩ = 0` and only `Π0Π0` and `Π1Π0` are run.
pub fn correlation_zz<F>(
    h: &Mpo,
    z_run: &LanczosRun,
    pairs: &[(usize, usize)],
    betas: &[f64],
    symmetry: Symmetry,
    mut run_from: F,
) -> Result<Correlators, ThermalError>
where
    F: FnMut(&StartingBlock) -> Result<LanczosRun, LanczosError>,
{
    let len = h.len();
    if symmetry == Symmetry::SpinFlip {
        let v = spin_flip_violation(h)?;
        if v > 1e-10 {
            return Err(ThermalError::SymmetryViolated(v));
        }
    }
    // ⟨2P - 1⟩ for a projector P.
    let signed = |run: &LanczosRun| -> Result<Vec<f64>, ThermalError> {
        Ok(expectation(z_run, &[SignedRun { sign: 2.0, run }], betas)?.into_iter().map(|p| p - 1.0).collect())
    };
    let mut magnetization: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut single_site_z = |site: usize, run_from: &mut F| -> Result<Vec<f64>, ThermalError> {
        if let Some(m) = magnetization.get(&site) {
            return Ok(m.clone());
        }
        let (p0, _) = z_decomposition(len, site)?;
        let m = signed(&run_from(&p0)?)?;
        magnetization.insert(site, m.clone());
        Ok(m)
    };

    let mut values = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let row = match symmetry {
            Symmetry::SpinFlip => {
                let b00 = projector_block(len, &[(i, 0), (j, 0)])?;
                let b10 = projector_block(len, &[(i, 1), (j, 0)])?;
                let r00 = run_from(&b00)?;
                let r10 = run_from(&b10)?;
                expectation(z_run, &[SignedRun { sign: 2.0, run: &r00 }, SignedRun { sign: -2.0, run: &r10 }], betas)?
            }
            Symmetry::None => {
                let (pos, _) = zz_decomposition(len, i, j)?;
                let zz = signed(&run_from(&pos)?)?;
                let zi = single_site_z(i, &mut run_from)?;
                let zj = single_site_z(j, &mut run_from)?;
                zz.iter().zip(zi.iter().zip(&zj)).map(|(c, (a, b))| c - a * b).collect()
            }
        };
        values.push(row);
    }
    Ok(Correlators { pairs: pairs.to_vec(), values })
}

/// One temperature of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalPoint {
    pub temperature: f64,
    pub beta: f64,
    pub log_z: f64,
    /// `F / (Z L)`.
    pub energy_density: f64,
    pub entropy_density: f64,
    pub specific_heat: f64,
    /// `F_T(1/T, 1/(T + δT))`.
    pub fidelity: f64,
    /// `D_T(1/T, 1/(T + δT))`.
    pub trace_distance: f64,
    pub correlators: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalSweepResult {
    pub sites: usize,
    pub correlator_pairs: Vec<(usize, usize)>,
    pub points: Vec<ThermalPoint>,
}

/// Every scalar observable at each temperature from one identity-start run.
pub fn thermal_sweep(run: &LanczosRun, temperatures: &[f64], delta_t: f64) -> Result<ThermalSweepResult, ThermalError> {
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(ThermalError::InvalidOffset(delta_t));
    }
    let sites = run.sites;
    let points = temperatures
        .iter()
        .map(|&t| {
            let beta = 1.0 / t;
            let beta_next = 1.0 / (t + delta_t);
            let tr = partition_traces(run, &[beta])?[0];
            Ok(ThermalPoint {
                temperature: t,
                beta,
                log_z: tr.log_z,
                energy_density: tr.mean_energy / sites as f64,
                entropy_density: tr.entropy_density(sites),
                specific_heat: specific_heat(&tr, sites),
                fidelity: thermal_fidelity(run, beta, beta_next)?,
                trace_distance: trace_distance_thermal(run, beta, beta_next)?,
                correlators: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>, ThermalError>>()?;
    Ok(ThermalSweepResult { sites, correlator_pairs: Vec::new(), points })
}
