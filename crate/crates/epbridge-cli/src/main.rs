//! `epbridge` command-line front end.
//!
//! Every subcommand writes CSV files into `--out`. Input data files are
//! headered CSV with a `y` column (successes for `logistic`) and, for
//! `logistic`, a `trials` column; covariates are standardized on load.
//! `--config FILE` holds `key=value` lines named after long flags; values on
//! the command line win.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use epbridge::cdopt::{run_cd, CdConfig};
use epbridge::harness::{
    read_data_csv, reproduce_table_with, simulate, write_data_csv, DataFile, SimScenario, TableOptions,
};
use epbridge::logistic::{gen_logistic, proximal_newton_cd, run_pcg_logistic, LogisticData};
use epbridge::pcg::{ess_report, posterior_beta_moments, posterior_mean, run_pcg, select_by_t_test};
use epbridge::screening::{backward_screen, default_backward_grid, default_forward_grid, forward_screen_cv};
use epbridge::{Dataset, Error, PcgConfig, RngStream, RunConfig, Scale, Trace};

#[derive(Parser, Debug)]
#[command(name = "epbridge", version, about = "Sparse regression under exponential-power priors")]
struct Cli {
    /// Master seed; every stream is derived from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// File of `key=value` lines supplying flags not given on the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one replicate of a simulation scenario.
    Simulate(SimulateArgs),
    /// Run PCG chains and summarize the posterior.
    Pcg(PcgArgs),
    /// Fit the NSB penalty by coordinate descent at one `b`.
    Cd(CdArgs),
    /// Backward or forward screening path.
    Screen(ScreenArgs),
    /// Effective sample sizes of saved traces.
    Ess(EssArgs),
    /// Reproduce a benchmark table.
    Table(TableArgs),
    /// Logistic fits: Pólya–Gamma PCG and proximal-Newton CD.
    Logistic(LogisticArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    s0: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Replicate index within the scenario.
    #[arg(long, default_value_t = 0)]
    rep: u64,
    /// Emit binomial responses with this many trials per row instead.
    #[arg(long)]
    trials: Option<u32>,
}

#[derive(Args, Debug)]
struct McmcArgs {
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Post-burn-in sweeps per chain.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

impl McmcArgs {
    fn run(&self, seed: u64) -> RunConfig {
        RunConfig {
            iters: self.burn_in + self.iters,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.chains,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct PcgArgs {
    #[arg(long, default_value = "data.csv")]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    gamma: u32,
    #[command(flatten)]
    mcmc: McmcArgs,
    /// Also write `trace_chain<k>.csv`.
    #[arg(long)]
    traces: bool,
}

#[derive(Args, Debug)]
struct CdArgs {
    #[arg(long, default_value = "data.csv")]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    gamma: u32,
    /// Penalty hyper-parameter (default `log p / p`).
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    eps_outer: f64,
    #[arg(long, default_value_t = 500)]
    max_sweeps: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Direction {
    Backward,
    Forward,
}

#[derive(Args, Debug)]
struct ScreenArgs {
    #[arg(long, default_value = "data.csv")]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    gamma: u32,
    #[arg(long, value_enum, default_value_t = Direction::Backward)]
    direction: Direction,
    /// Cross-validation folds (forward only).
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Args, Debug)]
struct EssArgs {
    /// Trace CSV files, one per chain.
    #[arg(long, num_args = 1.., required = true)]
    trace: Vec<PathBuf>,
    /// `beta0.csv` from `simulate`, to split by true zeros.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[arg(long)]
    id: u32,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    /// Post-burn-in sweeps per chain.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// `p` of the ESS table.
    #[arg(long)]
    ess_p: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum LogisticMethod {
    Both,
    Pcg,
    Cd,
}

#[derive(Args, Debug)]
struct LogisticArgs {
    #[arg(long, default_value = "data.csv")]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    gamma: u32,
    #[arg(long, value_enum, default_value_t = LogisticMethod::Both)]
    method: LogisticMethod,
    /// CD hyper-parameter (default `log p / p`).
    #[arg(long)]
    b: Option<f64>,
    #[command(flatten)]
    mcmc: McmcArgs,
}

/// `--key value` pairs from a config file, skipping keys already on the
/// command line. `true`/`false` stand for presence/absence of a switch.
fn config_args(path: &Path, argv: &[String]) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse { line: i + 1, msg: format!("expected key=value, got {line:?}") }.into());
        };
        let flag = format!("--{}", k.trim().replace('_', "-"));
        if flag == "--config" || argv.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        match v.trim() {
            "true" => out.push(flag),
            "false" => {}
            v => {
                out.push(flag);
                out.push(v.to_owned());
            }
        }
    }
    Ok(out)
}

fn parse_args() -> anyhow::Result<Cli> {
    let argv: Vec<String> = std::env::args().collect();
    let config = argv.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config=")
            .map(PathBuf::from)
            .or_else(|| (a == "--config").then(|| argv.get(i + 1).map(PathBuf::from)).flatten())
    });
    let mut full = argv.clone();
    if let Some(path) = config {
        full.extend(config_args(&path, &argv)?);
    }
    Ok(Cli::try_parse_from(full)?)
}

fn load_linear(path: &Path) -> anyhow::Result<Dataset> {
    let f = read_data_csv(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Dataset::standardize(f.x, f.y)?)
}

fn counts(values: &[f64], what: &str) -> epbridge::Result<Vec<u32>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if *v >= 0.0 && v.fract() == 0.0 && *v <= f64::from(u32::MAX) {
                Ok(*v as u32)
            } else {
                Err(Error::Parse { line: i + 2, msg: format!("{what} must be a non-negative integer, got {v}") })
            }
        })
        .collect()
}

fn load_logistic(path: &Path) -> anyhow::Result<LogisticData> {
    let DataFile { x, y, trials, .. } = read_data_csv(path).with_context(|| format!("reading {}", path.display()))?;
    let Some(trials) = trials else {
        return Err(Error::Parse { line: 1, msg: "logistic data needs a `trials` column".into() })
            .with_context(|| format!("reading {}", path.display()));
    };
    let trials = counts(&trials, "trials").with_context(|| format!("reading {}", path.display()))?;
    let y = counts(&y, "y").with_context(|| format!("reading {}", path.display()))?;
    Ok(LogisticData::standardize(x, trials, y)?)
}

fn default_b(p: usize) -> f64 {
    (p as f64).ln().max(f64::MIN_POSITIVE) / p as f64
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs) -> anyhow::Result<()> {
    let sc = SimScenario::new(a.n, a.p, a.s0, a.sigma2, a.rho, cli.seed);
    let rep = simulate(&sc, a.rep)?;
    let data = cli.out.join("data.csv");
    match a.trials {
        None => write_data_csv(&data, &rep.data.x, &rep.data.y, None)?,
        Some(t) => {
            let mut rng = RngStream::new(cli.seed, 3 * a.rep + 2);
            let ld = gen_logistic(&rep.data, &rep.beta0, t, &mut rng)?;
            let y: Vec<f64> = ld.successes.iter().map(|v| f64::from(*v)).collect();
            let trials: Vec<f64> = ld.trials.iter().map(|v| f64::from(*v)).collect();
            write_data_csv(&data, &ld.x, &y, Some(&trials))?;
        }
    }
    write_rows(
        &cli.out.join("beta0.csv"),
        &["j", "beta0"],
        rep.beta0.iter().enumerate().map(|(j, b)| vec![(j + 1).to_string(), b.to_string()]),
    )?;
    println!("wrote {} and beta0.csv (n = {}, p = {})", data.display(), a.n, a.p);
    Ok(())
}

fn write_summary(path: &Path, traces: &[Trace], selected: &[bool]) -> anyhow::Result<()> {
    let (mean, sd) = posterior_beta_moments(traces);
    let ess = ess_report(traces, None)?;
    write_rows(
        path,
        &["j", "mean", "sd", "ess", "selected"],
        (0..mean.len()).map(|j| {
            vec![
                (j + 1).to_string(),
                format!("{:e}", mean[j]),
                format!("{:e}", sd[j]),
                format!("{:.1}", ess.per_coord[j]),
                u8::from(selected[j]).to_string(),
            ]
        }),
    )
}

fn pcg_cmd(cli: &Cli, a: &PcgArgs) -> anyhow::Result<()> {
    let data = load_linear(&a.data)?;
    let traces = run_pcg(&data, &PcgConfig::new(a.gamma), &a.mcmc.run(cli.seed))?;
    let selected = select_by_t_test(&traces, 0.95)?;
    write_summary(&cli.out.join("pcg_summary.csv"), &traces, &selected)?;
    if a.traces {
        for t in &traces {
            t.write_csv(&cli.out.join(format!("trace_chain{}.csv", t.chain_id)))?;
        }
    }
    let sigma2 = posterior_mean(&traces, "sigma2").unwrap_or(f64::NAN);
    println!("selected {} of {}; posterior mean sigma2 {sigma2:.4}", selected.iter().filter(|s| **s).count(), data.p);
    Ok(())
}

fn write_beta(path: &Path, beta: &[f64]) -> anyhow::Result<()> {
    write_rows(
        path,
        &["j", "beta_hat"],
        beta.iter().enumerate().map(|(j, b)| vec![(j + 1).to_string(), format!("{b:e}")]),
    )
}

fn cd_cmd(cli: &Cli, a: &CdArgs) -> anyhow::Result<()> {
    let data = load_linear(&a.data)?;
    let b = a.b.unwrap_or_else(|| default_b(data.p));
    let config = CdConfig { eps_outer: a.eps_outer, max_sweeps: a.max_sweeps, ..CdConfig::new(a.gamma, b) };
    let sol = run_cd(&data, &config, &vec![0.0; data.p])?;
    write_beta(&cli.out.join("cd_solution.csv"), &sol.beta_hat)?;
    let s2 = sol.sigma2_hat.map_or("NA".to_owned(), |v| format!("{v:.4}"));
    println!(
        "s_hat {}; sigma2_hat {s2}; loss {:.6}; sweeps {}; converged {}",
        sol.s_hat, sol.final_loss, sol.sweeps, sol.converged
    );
    Ok(())
}

fn screen_cmd(cli: &Cli, a: &ScreenArgs) -> anyhow::Result<()> {
    let data = load_linear(&a.data)?;
    let config = CdConfig::new(a.gamma, 1.0);
    let path = match a.direction {
        Direction::Backward => backward_screen(&data, a.gamma, &default_backward_grid(), &config)?,
        Direction::Forward => {
            forward_screen_cv(&data, a.gamma, a.folds, &default_forward_grid(data.p), &config, cli.seed)?
        }
    };
    path.write_csv(&cli.out.join("path.csv"))?;
    if let Some(cv) = &path.cv_error {
        write_rows(
            &cli.out.join("cv_error.csv"),
            &["grid_value", "cv_error"],
            path.grid.iter().zip(cv).map(|(g, e)| vec![format!("{g:e}"), format!("{e:e}")]),
        )?;
    }
    match path.chosen() {
        Some(s) => println!("chosen grid point {}: s_hat {}", path.chosen_index.unwrap_or(0) + 1, s.s_hat),
        None => println!("no grid point chosen"),
    }
    Ok(())
}

fn read_truth(path: &Path) -> anyhow::Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Parse { line: i + 2, msg: "expected `j,beta0`".into() })?;
        out.push(v);
    }
    Ok(out)
}

fn ess_cmd(cli: &Cli, a: &EssArgs) -> anyhow::Result<()> {
    let traces: Vec<Trace> = a
        .trace
        .iter()
        .map(|p| Trace::read_csv(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<_>>()?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    if let Some(t) = &truth {
        if t.len() != traces[0].p() {
            bail!(Error::Config(format!("truth has {} entries, traces have {} coefficients", t.len(), traces[0].p())));
        }
    }
    let rep = ess_report(&traces, truth.as_deref())?;
    let mut rows = Vec::new();
    for (label, s) in [("all", Some(rep.all)), ("zero", rep.zero), ("nonzero", rep.nonzero)] {
        if let Some(s) = s {
            for (stat, v) in [("max", s.max), ("min", s.min), ("median", s.median), ("mean", s.mean), ("sd", s.sd)] {
                rows.push(vec![label.to_owned(), stat.to_owned(), format!("{v:.3}")]);
            }
        }
    }
    write_rows(&cli.out.join("ess_summary.csv"), &["subset", "statistic", "ess"], rows)?;
    println!("median ESS {:.1}{}", rep.all.median, if rep.any_degenerate { " (some chains constant)" } else { "" });
    Ok(())
}

fn table_cmd(cli: &Cli, a: &TableArgs) -> anyhow::Result<()> {
    let scale = match a.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Full => Scale::Full,
    };
    let base = TableOptions::for_scale(scale);
    let opts = TableOptions {
        reps: a.reps.unwrap_or(base.reps),
        chains: a.chains.unwrap_or(base.chains),
        iters: a.iters.unwrap_or(base.iters),
        burn_in: a.burn_in.unwrap_or(base.burn_in),
        ess_p: a.ess_p.unwrap_or(base.ess_p),
    };
    let report = reproduce_table_with(a.id, &opts, cli.seed)?;
    let path = cli.out.join(format!("table{}.csv", a.id));
    report.write_csv(&path)?;
    println!("wrote {} ({} rows)", path.display(), report.rows.len());
    Ok(())
}

fn logistic_cmd(cli: &Cli, a: &LogisticArgs) -> anyhow::Result<()> {
    let data = load_logistic(&a.data)?;
    if a.method != LogisticMethod::Pcg {
        let b = a.b.unwrap_or_else(|| default_b(data.p));
        let sol = proximal_newton_cd(&data, &CdConfig::new(a.gamma, b), &vec![0.0; data.p])?;
        write_beta(&cli.out.join("logistic_cd.csv"), &sol.beta_hat)?;
        println!("CD: s_hat {}; loss {:.6}; converged {}", sol.s_hat, sol.final_loss, sol.converged);
    }
    if a.method != LogisticMethod::Cd {
        let traces = run_pcg_logistic(&data, &PcgConfig::new(a.gamma), &a.mcmc.run(cli.seed))?;
        let selected = select_by_t_test(&traces, 0.95)?;
        write_summary(&cli.out.join("logistic_pcg_summary.csv"), &traces, &selected)?;
        println!("PCG: selected {} of {}", selected.iter().filter(|s| **s).count(), data.p);
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(cli, a),
        Command::Pcg(a) => pcg_cmd(cli, a),
        Command::Cd(a) => cd_cmd(cli, a),
        Command::Screen(a) => screen_cmd(cli, a),
        Command::Ess(a) => ess_cmd(cli, a),
        Command::Table(a) => table_cmd(cli, a),
        Command::Logistic(a) => logistic_cmd(cli, a),
    }
}

/// 3 for numerical failures inside the algorithms, 2 for bad input.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(Error::Domain(_) | Error::Singular { .. } | Error::AtIteration { .. } | Error::DegenerateEb)
        )
    });
    if numeric {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(c) => c,
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<clap::Error>() {
                // help and version print and exit 0; usage errors exit 2
                ce.exit();
            }
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
