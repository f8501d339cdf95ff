mod common;

use common::{random_hermitian, random_mpo, rng, UNTRUNCATED};
use mpoquad::lanczos::{evaluate, run_lanczos, LanczosConfig, Reorthogonalization};
use mpoquad::models::StartingBlock;
use mpoquad::oracle::exact_spectrum;
use mpoquad::tensor::{symtridiag_eig, truncated_svd, DenseTensor, C64};
use mpoquad::thermal::{
    entropy_density, partition_traces, specific_heat, thermal_fidelity, trace_distance_thermal,
};
use proptest::prelude::*;
use rand::Rng;

fn dense_random(seed: u64, rows: usize, cols: usize) -> DenseTensor {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect();
    DenseTensor::new(vec![rows, cols], data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svd_reconstructs_and_preserves_norm(seed in any::<u64>(), rows in 1usize..=64, cols in 1usize..=64) {
        let m = dense_random(seed, rows, cols);
        let svd = truncated_svd(&m, rows.min(cols)).unwrap();
        let norm = m.frobenius_norm();
        let err = svd.reconstruct().sub(&m).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * norm, "reconstruction error {err}");
        let parseval: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        prop_assert!((parseval - norm * norm).abs() <= 1e-10 * norm * norm);
    }

    #[test]
    fn tridiagonal_eigenpairs_have_small_residual(seed in any::<u64>(), k in 1usize..=200) {
        let mut r = rng(seed);
        let alpha: Vec<f64> = (0..k).map(|_| r.gen_range(-3.0..3.0)).collect();
        let beta: Vec<f64> = (1..k).map(|_| r.gen_range(0.0..2.0)).collect();
        let eig = symtridiag_eig(&alpha, &beta).unwrap();
        let t_norm = alpha.iter().map(|a| a * a).sum::<f64>() + 2.0 * beta.iter().map(|b| b * b).sum::<f64>();
        let t_norm = t_norm.sqrt();
        for j in 0..k {
            let v = |i: usize| eig.vector_component(i, j);
            let lam = eig.eigenvalues[j];
            let res: f64 = (0..k)
                .map(|i| {
                    let mut tv = alpha[i] * v(i);
                    if i > 0 { tv += beta[i - 1] * v(i - 1); }
                    if i + 1 < k { tv += beta[i] * v(i + 1); }
                    (tv - lam * v(i)).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            prop_assert!(res <= 1e-10 * t_norm.max(1.0), "residual {res} at j={j}");
        }
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mpo_arithmetic_matches_dense(seed in any::<u64>(), len in 2usize..=5, bond in 1usize..=3) {
        let mut r = rng(seed);
        let u = random_mpo(&mut r, len, bond);
        let v = random_mpo(&mut r, len, bond);
        let (du, dv) = (u.to_dense().unwrap(), v.to_dense().unwrap());
        let (s, _) = u.sum(&v, UNTRUNCATED).unwrap();
        let want = du.add(&dv).unwrap();
        prop_assert!(s.to_dense().unwrap().sub(&want).unwrap().frobenius_norm() <= 1e-10 * want.frobenius_norm());
        let (p, _) = u.multiply(&v, UNTRUNCATED).unwrap();
        let want = du.matmul(&dv).unwrap();
        prop_assert!(p.to_dense().unwrap().sub(&want).unwrap().frobenius_norm() <= 1e-10 * want.frobenius_norm());
        prop_assert!(s.frobenius_norm() <= u.frobenius_norm() + v.frobenius_norm() + 1e-10);
    }

    #[test]
    fn inner_product_is_conjugate_symmetric(seed in any::<u64>(), len in 2usize..=6, bond in 1usize..=4) {
        let mut r = rng(seed);
        let u = random_mpo(&mut r, len, bond);
        let v = random_mpo(&mut r, len, bond);
        let uv = u.inner_product(&v).unwrap();
        let vu = v.inner_product(&u).unwrap();
        prop_assert!((uv - vu.conj()).norm() <= 1e-10 * uv.norm().max(1.0));
        let uu = u.inner_product(&u).unwrap();
        prop_assert!(uu.re >= 0.0 && uu.im.abs() <= 1e-10 * uu.re);
    }

    #[test]
    fn compression_error_shrinks_with_bond(seed in any::<u64>(), len in 4usize..=6) {
        let mut r = rng(seed);
        let u = random_mpo(&mut r, len, 8);
        let mut last = f64::INFINITY;
        for d in [1usize, 2, 4, 8] {
            let (c, _) = u.compress(d).unwrap();
            let (diff, _) = u.sum(&c.scale_real(-1.0), UNTRUNCATED).unwrap();
            let err = diff.frobenius_norm();
            prop_assert!(err <= last + 1e-10 * u.frobenius_norm(), "d={d}: {err} > {last}");
            last = err;
        }
    }

    #[test]
    fn gauss_rule_is_exact_to_degree_2k_minus_1(seed in any::<u64>(), len in 2usize..=4, k in 2usize..=5) {
        let mut r = rng(seed);
        let h = random_hermitian(&mut r, len, 2);
        let run = run_lanczos(&h, &StartingBlock::identity(len).unwrap(), &LanczosConfig::new(k, UNTRUNCATED)).unwrap();
        let spec = exact_spectrum(&h).unwrap();
        for m in 0..2 * run.k() {
            let got = evaluate(&run, &|x: f64| x.powi(m as i32)).unwrap();
            let want = spec.trace_fn(|x| x.powi(m as i32));
            let scale = spec.trace_fn(|x| x.abs().powi(m as i32));
            prop_assert!((got - want).abs() <= 1e-8 * scale, "m={m}: {got} vs {want}");
        }
        let (lo, hi) = (spec.eigenvalues[0], *spec.eigenvalues.last().unwrap());
        let eps = 1e-8 * lo.abs().max(hi.abs()).max(1.0);
        prop_assert!(run.quadrature.nodes.iter().all(|&x| x >= lo - eps && x <= hi + eps));
    }

    #[test]
    fn thermal_quantities_stay_in_bounds(seed in any::<u64>(), len in 2usize..=5, t in 0.05f64..5.0) {
        let mut r = rng(seed);
        let h = random_hermitian(&mut r, len, 2);
        let run = run_lanczos(&h, &StartingBlock::identity(len).unwrap(), &LanczosConfig::new(12, 16)).unwrap();
        let beta = 1.0 / t;
        let tr = partition_traces(&run, &[beta]).unwrap()[0];
        let s = tr.entropy_density(len);
        prop_assert!((-1e-8..=std::f64::consts::LN_2 + 1e-8).contains(&s), "s = {s}");
        prop_assert!((s - entropy_density(tr.log_z, tr.mean_energy, beta, len)).abs() < 1e-8);
        prop_assert!(specific_heat(&tr, len) >= -1e-8);
        let f = thermal_fidelity(&run, beta, beta * 1.1).unwrap();
        prop_assert!((0.0..=1.0 + 1e-8).contains(&f));
        let d = trace_distance_thermal(&run, beta, beta * 1.1).unwrap();
        prop_assert!((0.0..=2.0 + 1e-8).contains(&d));
        prop_assert_eq!(thermal_fidelity(&run, beta, beta).unwrap(), 1.0);
        prop_assert_eq!(trace_distance_thermal(&run, beta, beta).unwrap(), 0.0);
    }
}

#[test]
fn specific_heat_matches_second_log_z_derivative() {
    let mut r = rng(7);
    let len = 4;
    let h = random_hermitian(&mut r, len, 2);
    let run = run_lanczos(&h, &StartingBlock::identity(len).unwrap(), &LanczosConfig::new(40, UNTRUNCATED)).unwrap();
    let db = 1e-4;
    for beta in [0.3, 1.0, 2.5] {
        let tr = partition_traces(&run, &[beta - db, beta, beta + db]).unwrap();
        let second = (tr[2].log_z - 2.0 * tr[1].log_z + tr[0].log_z) / (db * db);
        let c_fd = beta * beta * second / len as f64;
        let c = specific_heat(&tr[1], len);
        assert!((c - c_fd).abs() <= 1e-4 * c.abs(), "beta={beta}: {c} vs {c_fd}");
    }
}

#[test]
fn entropy_grows_with_temperature() {
    let h = mpoquad::models::ising_mpo(6, 1.0, 1.0).unwrap();
    let run = run_lanczos(&h, &StartingBlock::identity(6).unwrap(), &LanczosConfig::new(64, UNTRUNCATED)).unwrap();
    let temps: Vec<f64> = (0..100).map(|k| 0.05 + 0.02 * k as f64).collect();
    let betas: Vec<f64> = temps.iter().map(|t| 1.0 / t).collect();
    let s: Vec<f64> = partition_traces(&run, &betas).unwrap().iter().map(|t| t.entropy_density(6)).collect();
    assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-8));
}

#[test]
fn full_reorthogonalization_keeps_basis_orthonormal() {
    let mut r = rng(11);
    let h = random_hermitian(&mut r, 4, 2);
    let cfg = LanczosConfig::new(12, UNTRUNCATED).with_reorthogonalization(Reorthogonalization::Full);
    let run = run_lanczos(&h, &StartingBlock::identity(4).unwrap(), &cfg).unwrap();
    let basis = run.basis.as_ref().unwrap();
    assert_eq!(basis.len(), run.k());
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let ip = a.inner_product(b).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - C64::new(want, 0.0)).norm() <= 1e-8, "<U{i}, U{j}> = {ip}");
        }
    }
}

#[test]
fn boltzmann_estimate_converges_monotonically() {
    let h = mpoquad::models::ising_mpo(6, 1.0, 1.0).unwrap();
    let z = exact_spectrum(&h).unwrap().trace_fn(|x| (-x).exp());
    let mut last = f64::INFINITY;
    for k in 1..=12 {
        let run = run_lanczos(&h, &StartingBlock::identity(6).unwrap(), &LanczosConfig::new(k, UNTRUNCATED)).unwrap();
        let err = (evaluate(&run, &|x: f64| (-x).exp()).unwrap() - z).abs();
        assert!(err <= last + 1e-10 * z, "k={k}: {err} > {last}");
        last = err;
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let h = mpoquad::models::lmg_mpo(6, 0.4).unwrap();
    let cfg = LanczosConfig::new(20, 8);
    let a = run_lanczos(&h, &StartingBlock::identity(6).unwrap(), &cfg).unwrap();
    let b = run_lanczos(&h, &StartingBlock::identity(6).unwrap(), &cfg).unwrap();
    assert_eq!(a.projection, b.projection);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.projection.alphas), bits(&b.projection.alphas));
}
