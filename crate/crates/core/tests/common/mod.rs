#![allow(dead_code)]

use mpoquad::mpo::Mpo;
use mpoquad::tensor::{DenseTensor, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Large enough that no bond of an L ≤ 8 chain is ever truncated.
pub const UNTRUNCATED: usize = 1 << 16;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random complex MPO with bond dimension `bond` on every internal bond.
pub fn random_mpo(rng: &mut ChaCha8Rng, len: usize, bond: usize) -> Mpo {
    let sites = (0..len)
        .map(|i| {
            let l = if i == 0 { 1 } else { bond };
            let r = if i == len - 1 { 1 } else { bond };
            let data = (0..l * 4 * r).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            DenseTensor::new(vec![l, 2, 2, r], data).unwrap()
        })
        .collect();
    Mpo::new(sites).unwrap()
}

/// `(M + M†)/2` for a random `M`; bond dimension at most `2·bond`.
pub fn random_hermitian(rng: &mut ChaCha8Rng, len: usize, bond: usize) -> Mpo {
    let m = random_mpo(rng, len, bond);
    m.direct_sum(&m.adjoint()).unwrap().scale_real(0.5)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Relative error with an absolute floor for values that are nearly zero.
pub fn rel_err_floor(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

pub fn dense_power_traces(h: &Mpo, max_power: usize) -> Vec<f64> {
    let d = h.to_dense().unwrap();
    let mut acc = DenseTensor::identity(d.shape()[0]);
    let mut out = vec![acc.trace().unwrap().re];
    for _ in 0..max_power {
        acc = acc.matmul(&d).unwrap();
        out.push(acc.trace().unwrap().re);
    }
    out
}
