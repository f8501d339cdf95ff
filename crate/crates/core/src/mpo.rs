//! Matrix product operators with bounded bond dimension.
//!
//! A site tensor has indices `(left bond, physical out, physical in, right bond)`.
//! The outer bonds of the chain have extent one. Every operation returns a
//! new value; `sum` and `multiply` build the exact result first and only
//! compress when a bond exceeds the cap (or carries provable redundancy).

use std::io::{Read, Write};

use thiserror::Error;

use crate::tensor::{contract, thin_qr, truncated_svd, DenseTensor, TensorError, C64};

/// Default limit on the chain length accepted by [`Mpo::to_dense`].
pub const DENSE_SITE_LIMIT: usize = 14;

const MAGIC: &[u8; 8] = b"MPOQMPO\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MpoError {
    #[error("an MPO needs at least one site")]
    Empty,
    #[error("operators act on chains of different length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("site {site}: expected a rank-4 tensor, got shape {shape:?}")]
    SiteShape { site: usize, shape: Vec<usize> },
    #[error("bond between sites {site} and {next} does not match ({left} vs {right})", next = site + 1)]
    BondMismatch { site: usize, left: usize, right: usize },
    #[error("outer bonds must have extent 1")]
    BoundaryBond,
    #[error("physical dimensions differ across sites or operators")]
    PhysicalDim,
    #[error("{sites} sites exceeds the dense materialization limit of {limit}")]
    TooLarge { sites: usize, limit: usize },
    #[error("bond cap must be at least 1")]
    ZeroCap,
    #[error("unsupported MPO file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed MPO file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Discarded weight per internal bond after a compression.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompressionReport {
    pub discarded: Vec<f64>,
    pub max_bond: usize,
}

impl CompressionReport {
    fn untouched(mpo: &Mpo) -> Self {
        Self { discarded: vec![0.0; mpo.len() - 1], max_bond: mpo.max_bond() }
    }

    pub fn total_discarded(&self) -> f64 {
        self.discarded.iter().sum()
    }

    /// Combines two reports from consecutive operations on the same chain.
    pub fn merge(&self, other: &Self) -> Self {
        let n = self.discarded.len().max(other.discarded.len());
        let at = |r: &Self, i: usize| r.discarded.get(i).copied().unwrap_or(0.0);
        Self {
            discarded: (0..n).map(|i| at(self, i) + at(other, i)).collect(),
            max_bond: self.max_bond.max(other.max_bond),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    sites: Vec<DenseTensor>,
}

impl Mpo {
    pub fn new(sites: Vec<DenseTensor>) -> Result<Self, MpoError> {
        if sites.is_empty() {
            return Err(MpoError::Empty);
        }
        for (i, s) in sites.iter().enumerate() {
            let sh = s.shape();
            if sh.len() != 4 {
                return Err(MpoError::SiteShape { site: i, shape: sh.to_vec() });
            }
            if sh[1] != sh[2] || sh[1] != sites[0].shape()[1] {
                return Err(MpoError::PhysicalDim);
            }
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[3] != 1 {
            return Err(MpoError::BoundaryBond);
        }
        for i in 0..sites.len() - 1 {
            let (left, right) = (sites[i].shape()[3], sites[i + 1].shape()[0]);
            if left != right {
                return Err(MpoError::BondMismatch { site: i, left, right });
            }
        }
        Ok(Self { sites })
    }

    /// Product operator `ops[0] ⊗ ops[1] ⊗ ...`, bond dimension one.
    pub fn product(ops: &[DenseTensor]) -> Result<Self, MpoError> {
        let sites = ops
            .iter()
            .map(|op| {
                let sh = op.shape();
                if sh.len() != 2 || sh[0] != sh[1] {
                    return Err(MpoError::PhysicalDim);
                }
                Ok(op.clone().reshape(vec![1, sh[0], sh[1], 1])?)
            })
            .collect::<Result<Vec<_>, MpoError>>()?;
        Self::new(sites)
    }

    /// Identity on `len` qubits.
    pub fn identity(len: usize) -> Result<Self, MpoError> {
        Self::identity_with_dim(len, 2)
    }

    pub fn identity_with_dim(len: usize, dim: usize) -> Result<Self, MpoError> {
        if len == 0 {
            return Err(MpoError::Empty);
        }
        Self::product(&vec![DenseTensor::identity(dim); len])
    }

    /// The zero operator with all bonds of extent one.
    pub fn zero(len: usize, dim: usize) -> Result<Self, MpoError> {
        if len == 0 {
            return Err(MpoError::Empty);
        }
        Self::new((0..len).map(|_| DenseTensor::zeros(vec![1, dim, dim, 1])).collect())
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.sites[0].shape()[1]
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    /// Extents of the `len - 1` internal bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.len() - 1].iter().map(|s| s.shape()[3]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn check_compatible(&self, other: &Self) -> Result<(), MpoError> {
        if self.len() != other.len() {
            return Err(MpoError::LengthMismatch { left: self.len(), right: other.len() });
        }
        if self.phys_dim() != other.phys_dim() {
            return Err(MpoError::PhysicalDim);
        }
        Ok(())
    }

    /// Hilbert–Schmidt inner product `trace(self† other)`, by a left-to-right
    /// transfer contraction.
    pub fn inner_product(&self, other: &Self) -> Result<C64, MpoError> {
        self.check_compatible(other)?;
        let mut env = DenseTensor::scalar(C64::new(1.0, 0.0)).reshape(vec![1, 1])?;
        for (u, v) in self.sites.iter().zip(&other.sites) {
            let tmp = contract(&env, v, &[(1, 0)])?;
            env = contract(&u.conj(), &tmp, &[(0, 0), (1, 1), (2, 2)])?;
        }
        Ok(env.scalar_value())
    }

    /// `sqrt(<u, u>)`; the (round-off) imaginary part is dropped.
    pub fn frobenius_norm(&self) -> f64 {
        let ip = self.inner_product(self).expect("operator is compatible with itself");
        ip.re.max(0.0).sqrt()
    }

    pub fn trace(&self) -> C64 {
        let mut env = DenseTensor::scalar(C64::new(1.0, 0.0)).reshape(vec![1]).unwrap();
        for s in &self.sites {
            let d = s.shape()[1];
            let traced = DenseTensor::from_fn(vec![s.shape()[0], s.shape()[3]], |ix| {
                (0..d).map(|p| s.get(&[ix[0], p, p, ix[1]])).sum()
            });
            env = contract(&env, &traced, &[(0, 0)]).unwrap();
        }
        env.scalar_value()
    }

    /// `c * self`, applied to the first site only.
    pub fn scale(&self, c: C64) -> Self {
        let mut sites = self.sites.clone();
        sites[0] = sites[0].scale(c);
        Self { sites }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|s| s.permute(&[0, 2, 1, 3]).expect("rank-4 site").conj())
            .collect();
        Self { sites }
    }

    /// Exact sum; bond dimensions add.
    pub fn direct_sum(&self, other: &Self) -> Result<Self, MpoError> {
        self.check_compatible(other)?;
        let n = self.len();
        if n == 1 {
            return Ok(Self { sites: vec![self.sites[0].add(&other.sites[0])?] });
        }
        let d = self.phys_dim();
        let mut sites = Vec::with_capacity(n);
        for (i, (u, v)) in self.sites.iter().zip(&other.sites).enumerate() {
            let (ul, ur) = (u.shape()[0], u.shape()[3]);
            let (vl, vr) = (v.shape()[0], v.shape()[3]);
            let left = if i == 0 { 1 } else { ul + vl };
            let right = if i == n - 1 { 1 } else { ur + vr };
            let site = DenseTensor::from_fn(vec![left, d, d, right], |ix| {
                let (l, o, p, r) = (ix[0], ix[1], ix[2], ix[3]);
                let zero = C64::new(0.0, 0.0);
                if i == 0 {
                    if r < ur { u.get(&[0, o, p, r]) } else { v.get(&[0, o, p, r - ur]) }
                } else if i == n - 1 {
                    if l < ul { u.get(&[l, o, p, 0]) } else { v.get(&[l - ul, o, p, 0]) }
                } else if l < ul && r < ur {
                    u.get(&[l, o, p, r])
                } else if l >= ul && r >= ur {
                    v.get(&[l - ul, o, p, r - ur])
                } else {
                    zero
                }
            });
            sites.push(site);
        }
        Self::new(sites)
    }

    /// Exact operator product `self · other`; bond dimensions multiply.
    pub fn product_exact(&self, other: &Self) -> Result<Self, MpoError> {
        self.check_compatible(other)?;
        let d = self.phys_dim();
        let sites = self
            .sites
            .iter()
            .zip(&other.sites)
            .map(|(a, u)| {
                let (al, ar) = (a.shape()[0], a.shape()[3]);
                let (ul, ur) = (u.shape()[0], u.shape()[3]);
                // (a, o, r) x (b, i, s) after summing a's input with u's output.
                let t = contract(a, u, &[(2, 1)])?;
                let t = t.permute(&[0, 3, 1, 4, 2, 5])?;
                Ok(t.reshape(vec![al * ul, d, d, ar * ur])?)
            })
            .collect::<Result<Vec<_>, MpoError>>()?;
        Self::new(sites)
    }

    /// Largest bond dimension any operator on this chain can need at bond `i`.
    fn bond_capacity(&self, bond: usize) -> usize {
        let d2 = self.phys_dim() * self.phys_dim();
        let left = bond + 1;
        let right = self.len() - bond - 1;
        let e = left.min(right);
        d2.checked_pow(e as u32).unwrap_or(usize::MAX)
    }

    fn needs_compression(&self, d_max: usize) -> bool {
        self.bond_dims()
            .iter()
            .enumerate()
            .any(|(b, &dim)| dim > d_max.min(self.bond_capacity(b)))
    }

    /// `u + v`, compressed to bond dimension at most `d_max`.
    pub fn sum(&self, other: &Self, d_max: usize) -> Result<(Self, CompressionReport), MpoError> {
        self.direct_sum(other)?.compress(d_max)
    }

    /// `a · u`, compressed to bond dimension at most `d_max`.
    pub fn multiply(&self, other: &Self, d_max: usize) -> Result<(Self, CompressionReport), MpoError> {
        self.product_exact(other)?.compress(d_max)
    }

    /// Caps every bond at `d_max`.
    ///
    /// Operators that already fit (and carry no bond larger than the chain
    /// can support) are returned unchanged. Otherwise a QR sweep brings the
    /// chain into left-canonical form and a right-to-left SVD sweep truncates
    /// each bond, which gives the optimal Frobenius truncation per bond.
    pub fn compress(&self, d_max: usize) -> Result<(Self, CompressionReport), MpoError> {
        if d_max == 0 {
            return Err(MpoError::ZeroCap);
        }
        if !self.needs_compression(d_max) {
            return Ok((self.clone(), CompressionReport::untouched(self)));
        }
        let n = self.len();
        let d = self.phys_dim();
        let mut sites = self.sites.clone();

        for i in 0..n - 1 {
            let (l, r) = (sites[i].shape()[0], sites[i].shape()[3]);
            let m = sites[i].clone().reshape(vec![l * d * d, r])?;
            let (q, rmat) = thin_qr(&m)?;
            let k = q.shape()[1];
            sites[i] = q.reshape(vec![l, d, d, k])?;
            sites[i + 1] = contract(&rmat, &sites[i + 1], &[(1, 0)])?;
        }

        let mut discarded = vec![0.0; n - 1];
        for i in (1..n).rev() {
            let (l, r) = (sites[i].shape()[0], sites[i].shape()[3]);
            let m = sites[i].clone().reshape(vec![l, d * d * r])?;
            let svd = truncated_svd(&m, d_max)?;
            let k = svd.rank();
            discarded[i - 1] = svd.truncation_weight;
            sites[i] = svd.vt.reshape(vec![k, d, d, r])?;
            let us = DenseTensor::from_fn(vec![l, k], |ix| svd.u.get(ix) * svd.singular_values[ix[1]]);
            sites[i - 1] = contract(&sites[i - 1], &us, &[(3, 0)])?;
        }
        let out = Self::new(sites)?;
        let max_bond = out.max_bond();
        Ok((out, CompressionReport { discarded, max_bond }))
    }

    /// Full `d^L x d^L` matrix. Site 1 is the most significant index.
    pub fn to_dense(&self) -> Result<DenseTensor, MpoError> {
        self.to_dense_with_limit(DENSE_SITE_LIMIT)
    }

    pub fn to_dense_with_limit(&self, limit: usize) -> Result<DenseTensor, MpoError> {
        if self.len() > limit {
            return Err(MpoError::TooLarge { sites: self.len(), limit });
        }
        let d = self.phys_dim();
        let first = &self.sites[0];
        let mut acc = first.clone().reshape(vec![d, d, first.shape()[3]])?;
        let mut dim = d;
        for s in &self.sites[1..] {
            let t = contract(&acc, s, &[(2, 0)])?;
            // (O, I, o, i, r) -> (O, o, I, i, r)
            let t = t.permute(&[0, 2, 1, 3, 4])?;
            let r = s.shape()[3];
            dim *= d;
            acc = t.reshape(vec![dim, dim, r])?;
        }
        Ok(acc.reshape(vec![dim, dim])?)
    }

    /// Versioned little-endian serialization.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), MpoError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for s in &self.sites {
            for &e in s.shape() {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for z in s.data() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, MpoError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MpoError::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(MpoError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let n = read_u64(r)? as usize;
        if n == 0 || n > 1 << 20 {
            return Err(MpoError::Format(format!("implausible site count {n}")));
        }
        let mut sites = Vec::with_capacity(n);
        for _ in 0..n {
            let mut shape = Vec::with_capacity(4);
            for _ in 0..4 {
                shape.push(read_u64(r)? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .filter(|&len| len <= 1 << 32)
                .ok_or_else(|| MpoError::Format(format!("implausible site shape {shape:?}")))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let re = read_f64(r)?;
                let im = read_f64(r)?;
                data.push(C64::new(re, im));
            }
            sites.push(DenseTensor::new(shape, data)?);
        }
        Self::new(sites)
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
