//! Acceptance suite: one PASS/FAIL line per criterion, with indented details.
//!
//! Runs as a plain binary (`harness = false`). A FAIL is reported, not
//! hidden, and the process still exits 0 so the rest of `cargo test` runs;
//! the final summary line counts passes.

use std::fs;
use std::time::Instant;

use mpoquad::cli::{compute_sweep, exact_tc, extrapolate_tc, find_peak, run_sweep, Extremum, RunConfig};
use mpoquad::lanczos::{evaluate, run_lanczos, run_lanczos_counted, LanczosConfig, LanczosRun, RunCounters};
use mpoquad::models::{pauli_z, ModelSpec, StartingBlock};
use mpoquad::mpo::Mpo;
use mpoquad::oracle::{exact_observables, exact_spectrum, exact_spectrum_with};
use mpoquad::tensor::{DenseTensor, C64};
use mpoquad::thermal::{
    correlation_zz, partition_traces, specific_heat, thermal_fidelity, thermal_sweep, trace_distance_thermal,
    Symmetry, ThermalSweepResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DELTA_T: f64 = 0.01;

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-12)
}

fn grid(min: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| min + k as f64 * step).collect()
}

/// Collects every thermal value computed by the suite for the bounds check.
#[derive(Default)]
struct Bounds {
    points: usize,
    violations: Vec<String>,
}

impl Bounds {
    fn sweep(&mut self, label: &str, r: &ThermalSweepResult) {
        for p in &r.points {
            self.points += 1;
            let ln2 = std::f64::consts::LN_2;
            let mut bad = |what: &str, v: f64| self.violations.push(format!("{label} T={}: {what} = {v:e}", p.temperature));
            if !(0.0..=ln2 + 1e-8).contains(&p.entropy_density) {
                bad("s", p.entropy_density);
            }
            if p.specific_heat < -1e-8 {
                bad("c", p.specific_heat);
            }
            if !(0.0..=1.0 + 1e-8).contains(&p.fidelity) {
                bad("F_T", p.fidelity);
            }
            if !(0.0..=2.0 + 1e-8).contains(&p.trace_distance) {
                bad("D_T", p.trace_distance);
            }
        }
    }

    fn run(&mut self, label: &str, run: &LanczosRun, temps: &[f64]) {
        for &t in temps {
            let b = 1.0 / t;
            let f = thermal_fidelity(run, b, b).unwrap();
            let d = trace_distance_thermal(run, b, b).unwrap();
            if f != 1.0 {
                self.violations.push(format!("{label} T={t}: F_T(β,β) = {f:e}"));
            }
            if d != 0.0 {
                self.violations.push(format!("{label} T={t}: D_T(β,β) = {d:e}"));
            }
        }
        let r = thermal_sweep(run, temps, DELTA_T).unwrap();
        self.sweep(label, &r);
    }
}

struct Suite {
    passed: usize,
    total: usize,
    bounds: Bounds,
}

impl Suite {
    fn report(&mut self, id: usize, title: &str, pass: bool, details: &[String], started: Instant) {
        self.total += 1;
        if pass {
            self.passed += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id}: {title} ({:.1}s)", started.elapsed().as_secs_f64());
        for d in details {
            println!("    {d}");
        }
    }
}

fn untruncated(len: usize) -> usize {
    1 << (2 * len.div_ceil(2))
}

fn oracle_equivalence(suite: &mut Suite) {
    let t0 = Instant::now();
    let temps = grid(0.1, 0.1, 10);
    let mut pass = true;
    let mut details = Vec::new();
    for spec in [ModelSpec::ising(8, 1.0, 1.0), ModelSpec::lmg(8, 0.2), ModelSpec::lmg(8, 1.2)] {
        let h = spec.build().unwrap();
        let run =
            run_lanczos(&h, &StartingBlock::identity(8).unwrap(), &LanczosConfig::new(50, untruncated(8))).unwrap();
        let got = thermal_sweep(&run, &temps, DELTA_T).unwrap();
        let want = exact_observables(&exact_spectrum(&h).unwrap(), &temps, DELTA_T, &[]).unwrap();
        let mut worst = [0.0f64; 5];
        for (a, b) in got.points.iter().zip(&want.points) {
            let errs = [
                rel(a.log_z, b.log_z),
                rel(a.entropy_density, b.entropy_density),
                rel(a.specific_heat, b.specific_heat),
                rel(a.fidelity, b.fidelity),
                rel(a.trace_distance, b.trace_distance),
            ];
            for (w, e) in worst.iter_mut().zip(errs) {
                *w = w.max(e);
            }
        }
        let ok = worst.iter().all(|&e| e <= 1e-6);
        pass &= ok;
        details.push(format!(
            "{spec} K={}: max rel. err logZ {:.1e}, s {:.1e}, c {:.1e}, F_T {:.1e}, D_T {:.1e}",
            run.k(),
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4]
        ));
        suite.bounds.run(&spec.to_string(), &run, &temps);
    }
    suite.report(1, "untruncated Lanczos reproduces the dense oracle to 1e-6 on T = 0.1..1", pass, &details, t0);
}

fn random_hermitian(rng: &mut ChaCha8Rng, len: usize, bond: usize) -> Mpo {
    let sites = (0..len)
        .map(|i| {
            let l = if i == 0 { 1 } else { bond };
            let r = if i == len - 1 { 1 } else { bond };
            let data = (0..l * 4 * r).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            DenseTensor::new(vec![l, 2, 2, r], data).unwrap()
        })
        .collect();
    let m = Mpo::new(sites).unwrap();
    m.direct_sum(&m.adjoint()).unwrap().scale_real(0.5)
}

fn gauss_exactness(suite: &mut Suite) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut degree_2k_misses = 0;
    let mut degree_2k_cases = 0;
    for _ in 0..20 {
        let len = rng.gen_range(2..=6);
        // H = (M + M†)/2 has bond dimension 2·bond ≤ 4.
        let bond = rng.gen_range(1..=2);
        let h = random_hermitian(&mut rng, len, bond);
        let spec = exact_spectrum(&h).unwrap();
        for k in 2..=6 {
            let run = run_lanczos(&h, &StartingBlock::identity(len).unwrap(), &LanczosConfig::new(k, 1 << 16)).unwrap();
            let moment = |m: usize| evaluate(&run, &|x: f64| x.powi(m as i32)).unwrap();
            for m in 0..2 * run.k() {
                let want = spec.trace_fn(|x| x.powi(m as i32));
                let scale = spec.trace_fn(|x| x.abs().powi(m as i32));
                worst = worst.max((moment(m) - want).abs() / scale);
                checks += 1;
            }
            if run.k() == k {
                let m = 2 * k;
                let want = spec.trace_fn(|x| x.powi(m as i32));
                let scale = spec.trace_fn(|x| x.abs().powi(m as i32));
                degree_2k_cases += 1;
                if (moment(m) - want).abs() / scale > 1e-8 {
                    degree_2k_misses += 1;
                }
            }
        }
    }
    let details = vec![
        format!("{checks} moment checks (m ≤ 2K-1), worst error {worst:.1e} relative to Σ|λ|^m"),
        format!("degree 2K inexact in {degree_2k_misses}/{degree_2k_cases} runs without breakdown"),
    ];
    suite.report(2, "Gauss rule exact for trace(H^m), m ≤ 2K-1, on 20 random Hermitian MPOs", worst <= 1e-8, &details, t0);
}

fn closed_forms(suite: &mut Suite) {
    let t0 = Instant::now();
    let sz = Mpo::product(&[pauli_z()]).unwrap();
    let run = run_lanczos(&sz, &StartingBlock::identity(1).unwrap(), &LanczosConfig::new(4, 4)).unwrap();
    let mut worst = 0.0f64;
    for beta in [0.25, 0.5, 1.0, 2.0, 5.0] {
        let tr = partition_traces(&run, &[beta]).unwrap()[0];
        worst = worst.max(rel(tr.log_z.exp(), 2.0 * f64::cosh(beta)));
        worst = worst.max(rel(tr.entropy_density(1), (2.0 * f64::cosh(beta)).ln() - beta * f64::tanh(beta)));
        worst = worst.max(rel(specific_heat(&tr, 1), (beta / f64::cosh(beta)).powi(2)));
    }
    let tr = partition_traces(&run, &[1.0]).unwrap()[0];
    let s1 = tr.entropy_density(1);
    let c1 = specific_heat(&tr, 1);
    let tc = exact_tc(0.2).unwrap();
    let tc_independent = 0.2 / (2.0 * (0.5 * 1.5f64.ln()));
    let pass = worst <= 1e-10
        && (s1 - 0.365334).abs() < 1e-6
        && (c1 - 0.419974).abs() < 1e-6
        && (tc - 0.49326).abs() <= 1e-5
        && (tc - tc_independent).abs() <= 1e-12;
    let details = vec![
        format!("Z = 2cosh β, s = ln(2cosh β) - β tanh β, c = β² sech² β at 5 temperatures: worst rel. err {worst:.1e}"),
        format!("s(β=1) = {s1:.7}, -tanh 1 + ln(2cosh 1) = {:.7}", (2.0 * f64::cosh(1.0)).ln() - f64::tanh(1.0)),
        format!("c(β=1) = {c1:.7}"),
        format!("exact_tc(0.2) = {tc:.7}, 0.2/ln 1.5 = {tc_independent:.7}"),
    ];
    suite.report(3, "single-site closed forms to 1e-10 and T_c(0.2) = 0.49326", pass, &details, t0);
}

fn correlator_benchmark(suite: &mut Suite) {
    let t0 = Instant::now();
    let len = 10;
    let h = ModelSpec::ising(len, 1.0, 1.0).build().unwrap();
    let cfg = LanczosConfig::new(60, 64);
    let counters = RunCounters::new();
    let z = run_lanczos_counted(&h, &StartingBlock::identity(len).unwrap(), &cfg, &counters).unwrap();
    let temps = [0.1, 1.0];
    let betas = [10.0, 1.0];
    let pairs: Vec<(usize, usize)> = (1..=5).map(|d| (5, 5 + d)).collect();
    let got = correlation_zz(&h, &z, &pairs, &betas, Symmetry::None, |b| run_lanczos_counted(&h, b, &cfg, &counters))
        .unwrap();
    let spec = exact_spectrum_with(&h, 12, true).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    let mut lanczos_rows = Vec::new();
    for (b, &t) in temps.iter().enumerate() {
        let row: Vec<f64> = got.values.iter().map(|v| v[b]).collect();
        let exact: Vec<f64> = pairs.iter().map(|&(i, j)| spec.connected_zz(betas[b], i, j).unwrap()).collect();
        let err = row.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        let ok = err <= 1e-4;
        pass &= ok;
        details.push(format!(
            "T={t}: max |ΔC| = {err:.1e} ({}) | Lanczos {} | oracle {}",
            if ok { "ok" } else { "exceeds 1e-4" },
            fmt_row(&row),
            fmt_row(&exact)
        ));
        lanczos_rows.push(row);
    }
    let decays = |r: &[f64]| r.iter().all(|&c| c > 0.0) && r.windows(2).all(|w| w[1] < w[0]);
    let decay_ok = lanczos_rows.iter().all(|r| decays(r));
    pass &= decay_ok;
    // Correlation length from the log-slope between ΔL = 1 and ΔL = 4.
    let xi = |r: &[f64]| if r[0] > 0.0 && r[3] > 0.0 { 3.0 / (r[0] / r[3]).ln() } else { f64::NAN };
    let (xi_cold, xi_hot) = (xi(&lanczos_rows[0]), xi(&lanczos_rows[1]));
    let longer = xi_cold > xi_hot;
    pass &= longer;
    details.push(format!("monotone positive decay in ΔL at both temperatures: {decay_ok}"));
    details.push(format!("correlation length ξ(T=0.1) = {xi_cold:.3} > ξ(T=1) = {xi_hot:.3}: {longer}"));
    details.push(format!(
        "runs: {} identity-start, {} projector-start",
        counters.identity_starts(),
        counters.projector_starts()
    ));
    suite.bounds.run("ising(L=10,D=64)", &z, &temps);
    suite.report(4, "C_zz(5, 5+ΔL) on Ising L=10, D=64, K=60 within 1e-4 of the oracle", pass, &details, t0);
}

fn fmt_row(r: &[f64]) -> String {
    r.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")
}

fn local_maxima(series: &[(f64, f64)]) -> usize {
    series.windows(3).filter(|w| w[1].1 > w[0].1 && w[1].1 > w[2].1).count()
}

fn phase_transition(suite: &mut Suite) {
    let t0 = Instant::now();
    let temps = grid(0.1, 0.01, 91);
    let cfg = LanczosConfig::new(70, 60);
    let mut details = Vec::new();
    let mut pass = true;
    let mut peaks = Vec::new();
    for len in [12usize, 16, 20] {
        let mut heights = Vec::new();
        for h in [0.2, 1.2] {
            let spec = ModelSpec::lmg(len, h);
            let run = run_lanczos(&spec.build().unwrap(), &StartingBlock::identity(len).unwrap(), &cfg).unwrap();
            let sweep = thermal_sweep(&run, &temps, DELTA_T).unwrap();
            suite.bounds.run(&spec.to_string(), &run, &temps);
            let series: Vec<(f64, f64)> = sweep.points.iter().map(|p| (p.temperature, p.specific_heat)).collect();
            let height = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            heights.push(height);
            if h == 0.2 {
                let maxima = local_maxima(&series);
                match find_peak(&series, Extremum::Maximum) {
                    Ok(p) => {
                        let ok = maxima == 1 && (0.3..=0.6).contains(&p.t_peak);
                        pass &= ok;
                        details.push(format!(
                            "{spec}: {maxima} interior maximum(s), T_peak = {:.4} ± {:.4}, c_max = {height:.4}",
                            p.t_peak, p.uncertainty
                        ));
                        peaks.push((len, p.t_peak));
                    }
                    Err(e) => {
                        pass = false;
                        details.push(format!("{spec}: {e}"));
                    }
                }
            } else {
                details.push(format!("{spec}: c_max = {height:.4}"));
            }
        }
        let ratio = heights[0] / heights[1];
        pass &= ratio > 1.5;
        details.push(format!(
            "L={len}: peak height ratio h=0.2 / h=1.2 = {ratio:.3} ({})",
            if ratio > 1.5 { "ok" } else { "needs > 1.5" }
        ));
    }
    let monotone = peaks.len() == 3 && peaks.windows(2).all(|w| w[1].1 > w[0].1);
    pass &= monotone;
    details.push(format!("T_peak increases with L: {monotone}"));
    if peaks.len() >= 2 {
        let e = extrapolate_tc(&peaks).unwrap();
        details.push(format!(
            "linear-in-1/L extrapolation of these peaks: T_c ≈ {:.4} ± {:.4} (mean-field {:.5}; desk-scale sizes, informational)",
            e.t_c,
            e.uncertainty.unwrap_or(f64::NAN),
            exact_tc(0.2).unwrap()
        ));
    }
    let synthetic: Vec<(usize, f64)> = [40usize, 60, 70, 80].iter().map(|&l| (l, 0.47 - 2.1 / l as f64)).collect();
    let fit = extrapolate_tc(&synthetic).unwrap();
    let parabola: Vec<(f64, f64)> = grid(0.1, 0.1, 10).into_iter().map(|t| (t, 1.0 - (t - 0.437) * (t - 0.437))).collect();
    let vertex = find_peak(&parabola, Extremum::Maximum).unwrap().t_peak;
    let synthetic_ok = (fit.t_c - 0.47).abs() <= 1e-10 && (vertex - 0.437).abs() <= 1e-10;
    pass &= synthetic_ok;
    details.push(format!(
        "synthetic T_c + a/L recovered: {:.12} (err {:.1e}); parabola vertex {:.12}",
        fit.t_c,
        (fit.t_c - 0.47).abs(),
        vertex
    ));
    suite.report(5, "LMG specific-heat peak drifts with L; h=0.2 sharper than h=1.2", pass, &details, t0);
}

fn efficiency(suite: &mut Suite) {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
[model]
family = "lmg"
sizes = [8]
h = [0.0]
[temperature]
min = 0.1
max = 1.0
step = 0.1
[lanczos]
k_max = 40
d_max = 32
[output]
observables = ["s", "c", "F_T", "D_T"]
correlators = [[2, 5], [4, 8]]
symmetry = "spin-flip"
path = "{}"
"#,
        dir.path().join("eff.csv").display()
    );
    let cfg = RunConfig::from_toml(&text).unwrap();
    let report = compute_sweep(&cfg).unwrap();
    let c = &report.counters;
    let temps = cfg.temperatures().unwrap();
    for s in &report.sweeps {
        suite.bounds.sweep(&s.spec.to_string(), &s.result);
    }
    let pass = temps.len() == 10 && c.identity_starts() == 1 && c.projector_starts() <= 2 * cfg.output.correlators.len();
    let details = vec![format!(
        "{} temperatures x 4 observables + 2 spin-flip correlators: {} identity-start run(s), {} projector-start runs",
        temps.len(),
        c.identity_starts(),
        c.projector_starts()
    )];
    suite.report(6, "one identity-start run per sweep, ≤ 2 projector runs per symmetric correlator", pass, &details, t0);
}

fn bounds(suite: &mut Suite) {
    let t0 = Instant::now();
    let b = std::mem::take(&mut suite.bounds);
    let mut details = vec![format!("{} thermal points checked, {} violations", b.points, b.violations.len())];
    details.extend(b.violations.iter().take(10).cloned());
    suite.report(7, "s ∈ [0, ln2], c ≥ 0, F_T ∈ [0, 1], D_T ∈ [0, 2]; F_T(β,β) = 1, D_T(β,β) = 0", b.violations.is_empty(), &details, t0);
}

fn determinism(suite: &mut Suite) {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("det.csv");
    let text = format!(
        r#"
[model]
family = "ising"
sizes = [8]
g = [1.0]
[temperature]
min = 0.1
max = 1.0
step = 0.1
[lanczos]
k_max = 30
d_max = 32
[output]
correlators = [[3, 6]]
path = "{}"
cache = "{}"
"#,
        out.display(),
        cache.display()
    );
    let cfg = RunConfig::from_toml(&text).unwrap();
    let mut uncached = cfg.clone();
    uncached.output.cache = None;
    run_sweep(&uncached).unwrap();
    let a = fs::read(&out).unwrap();
    run_sweep(&uncached).unwrap();
    let b = fs::read(&out).unwrap();
    let cold = run_sweep(&cfg).unwrap();
    let c = fs::read(&out).unwrap();
    let warm = run_sweep(&cfg).unwrap();
    let d = fs::read(&out).unwrap();
    let hits = warm.counters.cache_hits();
    let fresh = warm.counters.identity_starts() + warm.counters.projector_starts();
    let pass = a == b && b == c && c == d && fresh == 0 && hits == cold.counters.identity_starts() + cold.counters.projector_starts();
    let details = vec![
        format!("repeat sweeps identical: {}", a == b),
        format!("cold cached sweep identical: {}; warm sweep identical: {} ({hits} cache hits, {fresh} fresh runs)", b == c, c == d),
    ];
    suite.report(8, "byte-identical CSV across repeats and from cache", pass, &details, t0);
}

fn main() {
    let start = Instant::now();
    let mut suite = Suite { passed: 0, total: 0, bounds: Bounds::default() };
    oracle_equivalence(&mut suite);
    gauss_exactness(&mut suite);
    closed_forms(&mut suite);
    correlator_benchmark(&mut suite);
    phase_transition(&mut suite);
    efficiency(&mut suite);
    bounds(&mut suite);
    determinism(&mut suite);
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        suite.passed,
        suite.total,
        start.elapsed().as_secs_f64()
    );
}
