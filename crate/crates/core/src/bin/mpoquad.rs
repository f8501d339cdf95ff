use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpoquad::cli::{
    exact_tc, extrapolate_tc, find_peak, read_csv, run_sweep, write_atomically, write_csv, CliError, Extremum,
    ModelSection, ModelSweep, Observable, OutputSection, RunConfig,
};
use mpoquad::lanczos::{run_lanczos, LanczosRun};
use mpoquad::models::StartingBlock;
use mpoquad::oracle::{exact_observables, exact_spectrum_with, ORACLE_SITE_LIMIT};
use mpoquad::thermal::thermal_sweep;

#[derive(Parser)]
#[command(name = "mpoquad", version, about = "Thermal properties of spin chains by MPO Lanczos quadrature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Temperature sweep over every configured model; writes a CSV.
    Sweep(SweepArgs),
    /// Dense exact-diagonalization sweep, compared against untruncated Lanczos.
    Exact {
        #[command(flatten)]
        args: SweepArgs,
        /// Allow chains longer than the default oracle limit.
        #[arg(long, default_value_t = ORACLE_SITE_LIMIT)]
        max_sites: usize,
    },
    /// Peak positions per size and an extrapolated critical temperature.
    Tc {
        /// Sweep CSV files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Column to locate the extremum in.
        #[arg(long, default_value = "c")]
        observable: String,
    },
    /// Print the tridiagonal coefficients and quadrature rule of a cached run.
    InspectRun { path: PathBuf },
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `ising` or `lmg`.
    #[arg(long)]
    model: Option<String>,
    /// Chain lengths, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    h: Option<Vec<f64>>,
    #[arg(long = "J", allow_hyphen_values = true)]
    j: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    g: Option<Vec<f64>>,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    tstep: Option<f64>,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    /// Subset of s,c,F_T,D_T.
    #[arg(long, value_delimiter = ',')]
    outputs: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl SweepArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let family = self
                    .model
                    .clone()
                    .ok_or_else(|| CliError::Config("either --config or --model is required".into()))?;
                RunConfig {
                    model: ModelSection { family, sizes: Vec::new(), j: 1.0, g: Vec::new(), h: Vec::new() },
                    temperature: Default::default(),
                    lanczos: Default::default(),
                    output: OutputSection::default(),
                }
            }
        };
        if let Some(m) = &self.model {
            cfg.model.family = m.clone();
        }
        if let Some(l) = &self.sizes {
            cfg.model.sizes = l.clone();
        }
        if let Some(h) = &self.h {
            cfg.model.h = h.clone();
        }
        if let Some(j) = self.j {
            cfg.model.j = j;
        }
        if let Some(g) = &self.g {
            cfg.model.g = g.clone();
        }
        if let Some(t) = self.tmin {
            cfg.temperature.min = t;
        }
        if let Some(t) = self.tmax {
            cfg.temperature.max = t;
        }
        if let Some(t) = self.tstep {
            cfg.temperature.step = t;
        }
        if let Some(d) = self.dmax {
            cfg.lanczos.d_max = d;
        }
        if let Some(k) = self.kmax {
            cfg.lanczos.k_max = k;
        }
        if let Some(o) = &self.outputs {
            cfg.output.observables = o
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| Observable::parse(s))
                .collect::<Result<_, _>>()?;
        }
        if let Some(p) = &self.out {
            cfg.output.path = p.clone();
        }
        if let Some(c) = &self.cache {
            cfg.output.cache = Some(c.clone());
        }
        if let Some(w) = self.workers {
            cfg.output.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let report = run_sweep(&cfg)?;
    eprintln!(
        "wrote {} ({} models); Lanczos runs: {} identity-start, {} projector-start, {} cache hits",
        cfg.output.path.display(),
        report.sweeps.len(),
        report.counters.identity_starts(),
        report.counters.projector_starts(),
        report.counters.cache_hits()
    );
    Ok(())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn exact(args: &SweepArgs, max_sites: usize) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let temps = cfg.temperatures()?;
    let pairs: Vec<(usize, usize)> = cfg.output.correlators.iter().map(|&[i, j]| (i, j)).collect();
    let mut sweeps = Vec::new();
    for spec in cfg.models()? {
        let h = spec.build()?;
        let dense = exact_spectrum_with(&h, max_sites, !pairs.is_empty())?;
        let oracle = exact_observables(&dense, &temps, cfg.temperature.delta, &pairs)?;
        // Untruncated comparison run: bond cap at the exact bound, Krylov cap from the config.
        let full = mpoquad::LanczosConfig::new(cfg.lanczos.k_max, 1usize << (2 * spec.sites.div_ceil(2)));
        let run = run_lanczos(&h, &StartingBlock::identity(spec.sites)?, &full)?;
        let approx = thermal_sweep(&run, &temps, cfg.temperature.delta)?;
        let mut worst = [0.0f64; 5];
        for (a, o) in approx.points.iter().zip(&oracle.points) {
            let pairs = [
                (a.log_z, o.log_z),
                (a.entropy_density, o.entropy_density),
                (a.specific_heat, o.specific_heat),
                (a.fidelity, o.fidelity),
                (a.trace_distance, o.trace_distance),
            ];
            for (w, (x, y)) in worst.iter_mut().zip(pairs) {
                *w = w.max(rel_err(x, y));
            }
        }
        println!(
            "{spec}: K={} max rel. deviation logZ {:.2e}  s {:.2e}  c {:.2e}  F_T {:.2e}  D_T {:.2e}",
            run.k(),
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4]
        );
        sweeps.push(ModelSweep { spec, result: oracle });
    }
    write_atomically(&cfg.output.path, |w| write_csv(w, &sweeps, &cfg.output.observables))?;
    eprintln!("wrote {}", cfg.output.path.display());
    Ok(())
}

fn tc(files: &[PathBuf], observable: &str) -> Result<(), CliError> {
    let kind = if observable == "F_T" { Extremum::Minimum } else { Extremum::Maximum };
    let mut groups: BTreeMap<(String, String), BTreeMap<usize, Vec<(f64, f64)>>> = BTreeMap::new();
    for f in files {
        for row in read_csv(f)? {
            let v = *row.values.get(observable).ok_or_else(|| {
                CliError::Config(format!("{}: column `{observable}` missing or empty", f.display()))
            })?;
            groups.entry((row.model, row.param)).or_default().entry(row.sites).or_default().push((row.temperature, v));
        }
    }
    for ((model, param), sizes) in groups {
        let mut peaks = Vec::new();
        for (l, mut series) in sizes {
            series.sort_by(|a, b| a.0.total_cmp(&b.0));
            match find_peak(&series, kind) {
                Ok(p) => {
                    println!("{model} {param} L={l}: T_peak = {:.6} ± {:.6} (value {:.6})", p.t_peak, p.uncertainty, p.value);
                    peaks.push((l, p.t_peak));
                }
                Err(e) => println!("{model} {param} L={l}: {e}"),
            }
        }
        if peaks.len() >= 2 {
            let e = extrapolate_tc(&peaks)?;
            match e.uncertainty {
                Some(u) => println!("{model} {param}: T_c = {:.6} ± {:.6}", e.t_c, u),
                None => println!("{model} {param}: T_c = {:.6} (two sizes, no error estimate)", e.t_c),
            }
        }
        if model == "lmg" {
            if let Some(h) = param.strip_prefix("h=").and_then(|h| h.parse::<f64>().ok()) {
                if let Ok(t) = exact_tc(h) {
                    println!("{model} {param}: mean-field T_c = {t:.6}");
                }
            }
        }
    }
    Ok(())
}

fn inspect(path: &PathBuf) -> Result<(), CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
    let run = LanczosRun::read_from(&mut BufReader::new(f))?;
    let p = &run.projection;
    println!("operator: {}", run.operator_label);
    println!("start: {}", run.start_label);
    println!("sites: {}  K: {}  termination: {:?}  beta1: {:.17e}", run.sites, run.k(), p.termination, p.beta1);
    println!("i,alpha,beta");
    for (i, a) in p.alphas.iter().enumerate() {
        let b = if i == 0 { p.beta1 } else { p.betas[i - 1] };
        println!("{},{:.17e},{:.17e}", i + 1, a, b);
    }
    println!("j,node,weight");
    for (j, (x, w)) in run.quadrature.nodes.iter().zip(&run.quadrature.weights).enumerate() {
        println!("{},{:.17e},{:.17e}", j + 1, x, w);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Exact { args, max_sites } => exact(args, *max_sites),
        Command::Tc { files, observable } => tc(files, observable),
        Command::InspectRun { path } => inspect(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
