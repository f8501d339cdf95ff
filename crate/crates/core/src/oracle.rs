//! Dense exact-diagonalization reference for small chains.
//!
//! Deliberately computed along different routes than [`crate::thermal`]:
//! entropy as `-Σ p ln p`, fidelity as `Σ sqrt(p q)`, trace distance as
//! `Σ |p - q|` over the normalized Boltzmann distributions.

use thiserror::Error;

use crate::mpo::{Mpo, MpoError};
use crate::tensor::{hermitian_eig, real_symmetric_eig, real_symmetric_eigenvalues, TensorError, C64};
use crate::thermal::{ThermalPoint, ThermalSweepResult};

/// Default largest chain the oracle will diagonalize.
pub const ORACLE_SITE_LIMIT: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{sites} sites exceeds the oracle limit of {limit}")]
    TooLarge { sites: usize, limit: usize },
    #[error("operator is not Hermitian (relative residual {0:.3e})")]
    NotHermitian(f64),
    #[error("correlators need eigenvectors; diagonalize with vectors enabled")]
    NoEigenvectors,
    #[error("site pair ({0}, {1}) out of range")]
    BadPair(usize, usize),
    #[error("temperature {0} must be positive and finite")]
    BadTemperature(f64),
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseSpectrum {
    pub sites: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Row-major `n x n`, eigenvectors as columns.
    pub eigenvectors: Option<Vec<C64>>,
}

impl DenseSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_i f(λ_i)`.
    pub fn trace_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues.iter().map(|&x| f(x)).sum()
    }

    /// Normalized Boltzmann weights and `ln Z`.
    pub fn boltzmann(&self, beta: f64) -> (Vec<f64>, f64) {
        let e0 = self.eigenvalues[0];
        let raw: Vec<f64> = self.eigenvalues.iter().map(|&x| (-beta * (x - e0)).exp()).collect();
        let s: f64 = raw.iter().sum();
        let log_z = s.ln() - beta * e0;
        (raw.into_iter().map(|r| r / s).collect(), log_z)
    }

    pub fn log_z(&self, beta: f64) -> f64 {
        self.boltzmann(beta).1
    }

    pub fn mean_energy(&self, beta: f64) -> f64 {
        let (p, _) = self.boltzmann(beta);
        p.iter().zip(&self.eigenvalues).map(|(p, x)| p * x).sum()
    }

    pub fn entropy_density(&self, beta: f64) -> f64 {
        let (p, _) = self.boltzmann(beta);
        -p.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>() / self.sites as f64
    }

    pub fn specific_heat(&self, beta: f64) -> f64 {
        let (p, _) = self.boltzmann(beta);
        let e: f64 = p.iter().zip(&self.eigenvalues).map(|(p, x)| p * x).sum();
        let var: f64 = p.iter().zip(&self.eigenvalues).map(|(p, x)| p * (x - e) * (x - e)).sum();
        beta * beta * var / self.sites as f64
    }

    pub fn fidelity(&self, beta0: f64, beta1: f64) -> f64 {
        let (p, _) = self.boltzmann(beta0);
        let (q, _) = self.boltzmann(beta1);
        p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum()
    }

    pub fn trace_distance(&self, beta0: f64, beta1: f64) -> f64 {
        let (p, _) = self.boltzmann(beta0);
        let (q, _) = self.boltzmann(beta1);
        p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Thermal probability of each computational basis state.
    fn basis_populations(&self, beta: f64) -> Result<Vec<f64>, OracleError> {
        let v = self.eigenvectors.as_ref().ok_or(OracleError::NoEigenvectors)?;
        let n = self.dim();
        let (p, _) = self.boltzmann(beta);
        Ok((0..n)
            .map(|x| (0..n).map(|k| p[k] * v[x * n + k].norm_sqr()).sum())
            .collect())
    }

    /// `⟨σz_i σz_j⟩ - ⟨σz_i⟩⟨σz_j⟩`, sites 1-based.
    pub fn connected_zz(&self, beta: f64, i: usize, j: usize) -> Result<f64, OracleError> {
        let l = self.sites;
        if i == 0 || j == 0 || i > l || j > l || i == j {
            return Err(OracleError::BadPair(i, j));
        }
        let pop = self.basis_populations(beta)?;
        // Site 1 is the most significant bit; bit 0 is |0⟩, the σz = +1 state.
        let z = |x: usize, site: usize| if (x >> (l - site)) & 1 == 0 { 1.0 } else { -1.0 };
        let (mut zi, mut zj, mut zz) = (0.0, 0.0, 0.0);
        for (x, p) in pop.iter().enumerate() {
            zi += p * z(x, i);
            zj += p * z(x, j);
            zz += p * z(x, i) * z(x, j);
        }
        Ok(zz - zi * zj)
    }
}

/// Full spectrum of `h` (eigenvalues only), `L ≤ 12`.
pub fn exact_spectrum(h: &Mpo) -> Result<DenseSpectrum, OracleError> {
    exact_spectrum_with(h, ORACLE_SITE_LIMIT, false)
}

/// As [`exact_spectrum`] with an explicit site limit and optional eigenvectors.
pub fn exact_spectrum_with(h: &Mpo, limit: usize, vectors: bool) -> Result<DenseSpectrum, OracleError> {
    if h.len() > limit {
        return Err(OracleError::TooLarge { sites: h.len(), limit });
    }
    let dense = h.to_dense_with_limit(limit)?;
    let n = dense.shape()[0];
    let data = dense.data();
    let norm = dense.frobenius_norm();
    let mut residual = 0.0;
    for r in 0..n {
        for c in 0..n {
            residual += (data[r * n + c] - data[c * n + r].conj()).norm_sqr();
        }
    }
    let residual = residual.sqrt() / norm.max(f64::MIN_POSITIVE);
    if residual > 1e-8 {
        return Err(OracleError::NotHermitian(residual));
    }
    let real = data.iter().all(|z| z.im == 0.0);
    let (eigenvalues, eigenvectors) = match (real, vectors) {
        (true, false) => {
            let re: Vec<f64> = data.iter().map(|z| z.re).collect();
            (real_symmetric_eigenvalues(n, &re)?, None)
        }
        (true, true) => {
            let re: Vec<f64> = data.iter().map(|z| z.re).collect();
            let (vals, vecs) = real_symmetric_eig(n, &re)?;
            (vals, Some(vecs.into_iter().map(|x| C64::new(x, 0.0)).collect()))
        }
        (false, want) => {
            let (vals, vecs) = hermitian_eig(&dense)?;
            (vals, want.then(|| vecs.into_data()))
        }
    };
    Ok(DenseSpectrum { sites: h.len(), eigenvalues, eigenvectors })
}

/// Every observable at each temperature by direct eigenvalue sums.
pub fn exact_observables(
    spec: &DenseSpectrum,
    temperatures: &[f64],
    delta_t: f64,
    pairs: &[(usize, usize)],
) -> Result<ThermalSweepResult, OracleError> {
    let l = spec.sites as f64;
    let points = temperatures
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t.is_finite()) {
                return Err(OracleError::BadTemperature(t));
            }
            let beta = 1.0 / t;
            let beta_next = 1.0 / (t + delta_t);
            let correlators =
                pairs.iter().map(|&(i, j)| spec.connected_zz(beta, i, j)).collect::<Result<Vec<_>, _>>()?;
            Ok(ThermalPoint {
                temperature: t,
                beta,
                log_z: spec.log_z(beta),
                energy_density: spec.mean_energy(beta) / l,
                entropy_density: spec.entropy_density(beta),
                specific_heat: spec.specific_heat(beta),
                fidelity: spec.fidelity(beta, beta_next),
                trace_distance: spec.trace_distance(beta, beta_next),
                correlators,
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(ThermalSweepResult { sites: spec.sites, correlator_pairs: pairs.to_vec(), points })
}
