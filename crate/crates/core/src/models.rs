//! Benchmark Hamiltonians as exact MPOs, and projector starting blocks.
//!
//! Site indices in this module's public interface are 1-based.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mpo::{Mpo, MpoError};
use crate::tensor::{DenseTensor, C64};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model needs at least 2 sites, got {0}")]
    TooShort(usize),
    #[error("coupling {0} is not finite")]
    NonFinite(&'static str),
    #[error("site {site} out of range 1..={len}")]
    SiteOutOfRange { site: usize, len: usize },
    #[error("site {0} listed more than once")]
    DuplicateSite(usize),
    #[error("projector state must be 0 or 1, got {0}")]
    BadState(u8),
    #[error("correlator sites must satisfy i < j, got ({0}, {1})")]
    SiteOrder(usize, usize),
    #[error("starting block has zero norm")]
    ZeroBlock,
    #[error(transparent)]
    Mpo(#[from] MpoError),
}

fn real(rows: usize, vals: &[f64]) -> DenseTensor {
    DenseTensor::from_real_matrix(rows, rows, vals).expect("square literal")
}

pub fn pauli_x() -> DenseTensor {
    real(2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_z() -> DenseTensor {
    real(2, &[1.0, 0.0, 0.0, -1.0])
}

/// `|s><s|` on one qubit.
pub fn projector(state: u8) -> DenseTensor {
    if state == 0 {
        real(2, &[1.0, 0.0, 0.0, 0.0])
    } else {
        real(2, &[0.0, 0.0, 0.0, 1.0])
    }
}

/// Assembles a uniform three-channel MPO from its operator-valued transfer
/// matrix. Channel 0 is "nothing placed yet", 2 is "term complete"; the chain
/// starts in 0 and must end in 2.
fn three_channel_mpo(len: usize, entries: &[(usize, usize, DenseTensor)]) -> Result<Mpo, ModelError> {
    let d = 2;
    let bulk = DenseTensor::from_fn(vec![3, d, d, 3], |ix| {
        entries
            .iter()
            .filter(|(l, r, _)| *l == ix[0] && *r == ix[3])
            .map(|(_, _, op)| op.get(&[ix[1], ix[2]]))
            .sum()
    });
    let sites = (0..len)
        .map(|site| {
            let rows: Vec<usize> = if site == 0 { vec![0] } else { vec![0, 1, 2] };
            let cols: Vec<usize> = if site == len - 1 { vec![2] } else { vec![0, 1, 2] };
            DenseTensor::from_fn(vec![rows.len(), d, d, cols.len()], |ix| {
                bulk.get(&[rows[ix[0]], ix[1], ix[2], cols[ix[3]]])
            })
        })
        .collect();
    Ok(Mpo::new(sites)?)
}

/// `J Σ σx_i σx_{i+1} + g Σ σz_i` on an open chain; bond dimension 3.
pub fn ising_mpo(len: usize, j: f64, g: f64) -> Result<Mpo, ModelError> {
    if len < 2 {
        return Err(ModelError::TooShort(len));
    }
    if !j.is_finite() {
        return Err(ModelError::NonFinite("J"));
    }
    if !g.is_finite() {
        return Err(ModelError::NonFinite("g"));
    }
    let id = DenseTensor::identity(2);
    three_channel_mpo(
        len,
        &[
            (0, 0, id.clone()),
            (0, 1, pauli_x().scale(C64::new(j, 0.0))),
            (1, 2, pauli_x()),
            (0, 2, pauli_z().scale(C64::new(g, 0.0))),
            (2, 2, id),
        ],
    )
}

/// `-S_x²/L - 2h S_z` with `S_α = Σ σ^α_i / 2`; bond dimension 3.
///
/// `S_x²/L` expands into `I/4 + (1/2L) Σ_{i<j} σx_i σx_j`. The all-pairs term
/// is carried by channel 1, which stays open for any distance; the constant is
/// spread as `-I/(4L)` over every site so the MPO is the literal operator.
pub fn lmg_mpo(len: usize, h: f64) -> Result<Mpo, ModelError> {
    if len < 2 {
        return Err(ModelError::TooShort(len));
    }
    if !h.is_finite() {
        return Err(ModelError::NonFinite("h"));
    }
    let l = len as f64;
    let id = DenseTensor::identity(2);
    let local = pauli_z()
        .scale(C64::new(-h, 0.0))
        .add(&id.scale(C64::new(-0.25 / l, 0.0)))
        .expect("same shape");
    three_channel_mpo(
        len,
        &[
            (0, 0, id.clone()),
            (0, 1, pauli_x().scale(C64::new(-0.5 / l, 0.0))),
            (1, 1, id.clone()),
            (1, 2, pauli_x()),
            (0, 2, local),
            (2, 2, id),
        ],
    )
}

/// `Π σx_i`, the global flip exchanging `|0>` and `|1>` on every site.
pub fn spin_flip_mpo(len: usize) -> Result<Mpo, ModelError> {
    Ok(Mpo::product(&vec![pauli_x(); len])?)
}

/// `‖[H, F]‖ / ‖H‖` for the global flip `F`, computed in MPO form.
pub fn spin_flip_violation(h: &Mpo) -> Result<f64, ModelError> {
    let f = spin_flip_mpo(h.len())?;
    let hf = h.product_exact(&f)?;
    let fh = f.product_exact(h)?;
    let comm = hf.direct_sum(&fh.scale_real(-1.0))?;
    let norm = h.frobenius_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    // F is unitary, so ‖HF‖ = ‖H‖.
    Ok(comm.frobenius_norm() / norm)
}

/// A positive operator `O` supplied through its square root, used as the
/// first Krylov block. For projectors the square root is the block itself.
#[derive(Clone, Debug)]
pub struct StartingBlock {
    pub mpo: Mpo,
    pub label: String,
    /// `trace(B† B)`.
    pub squared_norm: f64,
}

impl StartingBlock {
    pub fn new(mpo: Mpo, label: impl Into<String>) -> Result<Self, ModelError> {
        let squared_norm = mpo.inner_product(&mpo)?.re;
        if squared_norm <= 0.0 || !squared_norm.is_finite() {
            return Err(ModelError::ZeroBlock);
        }
        Ok(Self { mpo, label: label.into(), squared_norm })
    }

    pub fn identity(len: usize) -> Result<Self, ModelError> {
        Self::new(Mpo::identity(len)?, "identity")
    }

    pub fn is_identity(&self) -> bool {
        self.label == "identity"
    }

    /// Exact sum of two blocks (bond dimensions add).
    pub fn combine(&self, other: &Self, label: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(self.mpo.direct_sum(&other.mpo)?, label)
    }
}

fn projector_label(sites: &[(usize, u8)]) -> String {
    sites
        .iter()
        .map(|(i, s)| format!("P{s}@{i}"))
        .collect::<Vec<_>>()
        .join("*")
}

/// Product of single-site projectors `Π_s^i` (identity elsewhere).
pub fn projector_block(len: usize, sites: &[(usize, u8)]) -> Result<StartingBlock, ModelError> {
    if len == 0 {
        return Err(MpoError::Empty.into());
    }
    let mut ops = vec![DenseTensor::identity(2); len];
    let mut used = vec![false; len];
    for &(site, state) in sites {
        if site == 0 || site > len {
            return Err(ModelError::SiteOutOfRange { site, len });
        }
        if state > 1 {
            return Err(ModelError::BadState(state));
        }
        if used[site - 1] {
            return Err(ModelError::DuplicateSite(site));
        }
        used[site - 1] = true;
        ops[site - 1] = projector(state);
    }
    StartingBlock::new(Mpo::product(&ops)?, projector_label(sites))
}

/// `σz_i = Π0^i - Π1^i`, returned as `(Π0^i, Π1^i)`.
pub fn z_decomposition(len: usize, i: usize) -> Result<(StartingBlock, StartingBlock), ModelError> {
    Ok((projector_block(len, &[(i, 0)])?, projector_block(len, &[(i, 1)])?))
}

/// `σz_i σz_j = (Π0Π0 + Π1Π1) - (Π1Π0 + Π0Π1)`, each bracket a projector
/// with bond dimension 2.
pub fn zz_decomposition(len: usize, i: usize, j: usize) -> Result<(StartingBlock, StartingBlock), ModelError> {
    if i >= j {
        return Err(ModelError::SiteOrder(i, j));
    }
    let p00 = projector_block(len, &[(i, 0), (j, 0)])?;
    let p11 = projector_block(len, &[(i, 1), (j, 1)])?;
    let p10 = projector_block(len, &[(i, 1), (j, 0)])?;
    let p01 = projector_block(len, &[(i, 0), (j, 1)])?;
    let pos = p00.combine(&p11, format!("zz+@{i},{j}"))?;
    let neg = p10.combine(&p01, format!("zz-@{i},{j}"))?;
    Ok((pos, neg))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelFamily {
    Ising {
        #[serde(rename = "J")]
        j: f64,
        g: f64,
    },
    Lmg { h: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub sites: usize,
}

impl ModelSpec {
    pub fn ising(sites: usize, j: f64, g: f64) -> Self {
        Self { family: ModelFamily::Ising { j, g }, sites }
    }

    pub fn lmg(sites: usize, h: f64) -> Self {
        Self { family: ModelFamily::Lmg { h }, sites }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sites < 2 {
            return Err(ModelError::TooShort(self.sites));
        }
        match self.family {
            ModelFamily::Ising { j, g } => {
                if !j.is_finite() {
                    return Err(ModelError::NonFinite("J"));
                }
                if !g.is_finite() {
                    return Err(ModelError::NonFinite("g"));
                }
            }
            ModelFamily::Lmg { h } => {
                if !h.is_finite() {
                    return Err(ModelError::NonFinite("h"));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Mpo, ModelError> {
        match self.family {
            ModelFamily::Ising { j, g } => ising_mpo(self.sites, j, g),
            ModelFamily::Lmg { h } => lmg_mpo(self.sites, h),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            ModelFamily::Ising { .. } => "ising",
            ModelFamily::Lmg { .. } => "lmg",
        }
    }

    /// Couplings as a compact token, e.g. `h=0.2` or `J=1;g=1`.
    pub fn param_label(&self) -> String {
        match self.family {
            ModelFamily::Ising { j, g } => format!("J={j};g={g}"),
            ModelFamily::Lmg { h } => format!("h={h}"),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(L={},{})", self.family_name(), self.sites, self.param_label())
    }
}
