//! Simulation scenarios, accuracy metrics and the benchmark-table driver.

use std::fmt::Write as _;
use std::path::Path;

use faer::Mat;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::cdopt::CdConfig;
use crate::data::{mat_vec, Dataset};
use crate::distributions::RngStream;
use crate::pcg::{
    ess_report, posterior_beta_moments, posterior_mean, run_baseline_gibbs, run_pcg, select_by_t_test, Baseline,
    EssSummary, PcgConfig, RunConfig, Trace,
};
use crate::screening::{backward_screen, default_backward_grid, default_forward_grid, forward_screen_cv};
use crate::{Error, Result};

/// The ten nonzero coefficients of the benchmark designs.
pub const DEFAULT_BETA: [f64; 10] = [3.0, 1.5, 2.0, 1.0, 1.0, 0.5, -0.5, 2.0, -1.2, -1.0];

/// Fixed (0-based) signal positions of the ESS benchmark.
pub const ESS_LOCATIONS: [usize; 10] = [0, 1, 4, 9, 12, 18, 25, 30, 45, 50];

/// `DEFAULT_BETA` repeated cyclically to length `s0`.
pub fn default_beta_values(s0: usize) -> Vec<f64> {
    DEFAULT_BETA.iter().copied().cycle().take(s0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Fixed(Vec<usize>),
    /// First `s0` indices of a seeded permutation.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub sigma2_0: f64,
    pub rho: f64,
    pub beta_values: Vec<f64>,
    pub placement: Placement,
    pub seed: u64,
}

impl SimScenario {
    /// Default coefficients at random positions.
    pub fn new(n: usize, p: usize, s0: usize, sigma2_0: f64, rho: f64, seed: u64) -> Self {
        SimScenario {
            n,
            p,
            s0,
            sigma2_0,
            rho,
            beta_values: default_beta_values(s0),
            placement: Placement::Random,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(Error::Config(format!("need n >= 2 and p >= 1, got n = {}, p = {}", self.n, self.p)));
        }
        if self.s0 > self.p || self.beta_values.len() != self.s0 {
            return Err(Error::Config(format!(
                "s0 = {} must not exceed p = {} and match {} beta values",
                self.s0,
                self.p,
                self.beta_values.len()
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if !(self.sigma2_0 >= 0.0 && self.sigma2_0.is_finite()) {
            return Err(Error::Config(format!("sigma2_0 = {} must be finite and non-negative", self.sigma2_0)));
        }
        if let Placement::Fixed(loc) = &self.placement {
            let mut sorted = loc.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if loc.len() != self.s0 || sorted.len() != self.s0 || sorted.last().is_some_and(|&j| j >= self.p) {
                return Err(Error::Config("fixed locations must be s0 distinct indices below p".into()));
            }
        }
        Ok(())
    }

    /// The true coefficient vector.
    pub fn beta0(&self, rng: &mut RngStream) -> Vec<f64> {
        let loc: Vec<usize> = match &self.placement {
            Placement::Fixed(l) => l.clone(),
            Placement::Random => {
                let mut idx: Vec<usize> = (0..self.p).collect();
                idx.shuffle(rng);
                idx.truncate(self.s0);
                idx
            }
        };
        let mut beta = vec![0.0; self.p];
        for (j, v) in loc.into_iter().zip(&self.beta_values) {
            beta[j] = *v;
        }
        beta
    }
}

/// Rows from the AR(1) recursion `x_j = rho x_{j-1} + sqrt(1 - rho^2) xi_j`,
/// so `corr(x_i, x_j) = rho^|i-j|`; columns then centered and scaled to
/// squared norm `n`. The response is left at zero.
pub fn gen_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<Dataset> {
    gen_design_with(n, p, rho, &mut RngStream::new(seed, 0))
}

fn gen_design_with(n: usize, p: usize, rho: f64, rng: &mut RngStream) -> Result<Dataset> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("rho = {rho} outside [0, 1)")));
    }
    let c = (1.0 - rho * rho).sqrt();
    let mut x = Mat::<f64>::zeros(n, p);
    for i in 0..n {
        let mut prev = rng.normal();
        x[(i, 0)] = prev;
        for j in 1..p {
            prev = rho * prev + c * rng.normal();
            x[(i, j)] = prev;
        }
    }
    Dataset::standardize(x, vec![0.0; n])
}

/// `y = X beta0 + sigma0 eps`, centered.
pub fn gen_response(design: &Dataset, beta0: &[f64], sigma2_0: f64, rng: &mut RngStream) -> Result<Dataset> {
    if beta0.len() != design.p {
        return Err(Error::Config(format!("beta0 has {} entries, design has {} columns", beta0.len(), design.p)));
    }
    let sd = sigma2_0.sqrt();
    let mut y: Vec<f64> = mat_vec(&design.x, beta0).into_iter().map(|m| m + sd * rng.normal()).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    let mut d = Dataset::new(design.x.clone(), y)?;
    d.standardized = design.standardized;
    Ok(d)
}

/// One simulated data set with its truth.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: Dataset,
    pub beta0: Vec<f64>,
}

/// Replicate `rep` of a scenario. Design, placement and noise use separate
/// streams of the scenario seed, so every replicate is reproducible alone.
pub fn simulate(scenario: &SimScenario, rep: u64) -> Result<Replicate> {
    scenario.validate()?;
    let design = gen_design_with(scenario.n, scenario.p, scenario.rho, &mut RngStream::new(scenario.seed, 3 * rep))?;
    let beta0 = scenario.beta0(&mut RngStream::new(scenario.seed, 3 * rep + 1));
    let data = gen_response(&design, &beta0, scenario.sigma2_0, &mut RngStream::new(scenario.seed, 3 * rep + 2))?;
    Ok(Replicate { data, beta0 })
}

/// Accuracy of one fit. `fdr` and `fndr` are percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub l2: f64,
    pub l1: f64,
    pub fdr: f64,
    pub fndr: f64,
    pub hd: usize,
    pub s_hat: usize,
    pub sigma2_hat: Option<f64>,
}

/// Metrics with the support read off the nonzero entries of `beta_hat`.
pub fn compute_metrics(beta_hat: &[f64], sigma2_hat: Option<f64>, beta0: &[f64]) -> Result<Metrics> {
    let selected: Vec<bool> = beta_hat.iter().map(|b| *b != 0.0).collect();
    compute_metrics_with_support(beta_hat, &selected, sigma2_hat, beta0)
}

/// Metrics for an estimate whose selected set is given separately (MCMC
/// posterior means are dense). `L2` and `L1` are raw norms of the error.
pub fn compute_metrics_with_support(
    beta_hat: &[f64],
    selected: &[bool],
    sigma2_hat: Option<f64>,
    beta0: &[f64],
) -> Result<Metrics> {
    let p = beta0.len();
    if beta_hat.len() != p || selected.len() != p {
        return Err(Error::Config("estimate, support and truth lengths differ".into()));
    }
    let (mut sq, mut abs) = (0.0, 0.0);
    for (b, t) in beta_hat.iter().zip(beta0) {
        sq += (b - t) * (b - t);
        abs += (b - t).abs();
    }
    let s_hat = selected.iter().filter(|s| **s).count();
    let fp = selected.iter().zip(beta0).filter(|(s, t)| **s && **t == 0.0).count();
    let fn_ = selected.iter().zip(beta0).filter(|(s, t)| !**s && **t != 0.0).count();
    Ok(Metrics {
        l2: sq.sqrt(),
        l1: abs,
        fdr: 100.0 * fp as f64 / s_hat.max(1) as f64,
        fndr: 100.0 * fn_ as f64 / (p - s_hat).max(1) as f64,
        hd: fp + fn_,
        s_hat,
        sigma2_hat,
    })
}

/// Mean and sample standard deviation (`None` below two values).
pub fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd =
        (values.len() > 1).then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt());
    (mean, sd)
}

/// Per-criterion replication summary, in the order
/// `L2, L1, FDR, FNDR, HD, s_hat, sigma2_hat`.
pub fn summarize_metrics(reps: &[Metrics]) -> Vec<(&'static str, f64, Option<f64>, usize)> {
    let col = |f: &dyn Fn(&Metrics) -> Option<f64>| -> Vec<f64> { reps.iter().filter_map(f).collect() };
    let cols: [(&str, Vec<f64>); 7] = [
        ("L2", col(&|m| Some(m.l2))),
        ("L1", col(&|m| Some(m.l1))),
        ("FDR", col(&|m| Some(m.fdr))),
        ("FNDR", col(&|m| Some(m.fndr))),
        ("HD", col(&|m| Some(m.hd as f64))),
        ("s_hat", col(&|m| Some(m.s_hat as f64))),
        ("sigma2_hat", col(&|m| m.sigma2_hat)),
    ];
    cols.into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(name, v)| {
            let (m, s) = mean_sd(&v);
            (name, m, s, v.len())
        })
        .collect()
}

/// Fitting procedures compared in the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pcg { gamma: u32 },
    BayesLasso,
    Horseshoe,
    Nsb { gamma: u32 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Pcg { gamma } => format!("pcg_gamma{gamma}"),
            Method::BayesLasso => "bayes_lasso".into(),
            Method::Horseshoe => "horseshoe".into(),
            Method::Nsb { gamma } => format!("nsb_gamma{gamma}"),
        }
    }
}

/// MCMC budget and replication count of a table run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableOptions {
    pub reps: usize,
    pub chains: usize,
    /// Post-burn-in draws per chain.
    pub iters: usize,
    pub burn_in: usize,
    /// `p` of the ESS table.
    pub ess_p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl TableOptions {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => TableOptions { reps: 20, chains: 4, iters: 2000, burn_in: 2000, ess_p: 200 },
            Scale::Full => TableOptions { reps: 100, chains: 10, iters: 10_000, burn_in: 10_000, ess_p: 1000 },
        }
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig { iters: self.burn_in + self.iters, burn_in: self.burn_in, thin: 1, n_chains: self.chains, seed }
    }
}

/// Point estimate, selected set and noise variance of one fit.
#[derive(Debug, Clone)]
pub struct Fit {
    pub beta_hat: Vec<f64>,
    pub selected: Vec<bool>,
    pub sigma2_hat: Option<f64>,
}

/// Runs the sampler of a Bayesian method.
pub fn run_mcmc(data: &Dataset, method: Method, run: &RunConfig) -> Result<Vec<Trace>> {
    match method {
        Method::Pcg { gamma } => run_pcg(data, &PcgConfig::new(gamma), run),
        Method::BayesLasso => run_baseline_gibbs(data, Baseline::BayesLasso { fixed_lambda: None }, run),
        Method::Horseshoe => run_baseline_gibbs(data, Baseline::Horseshoe, run),
        Method::Nsb { .. } => Err(Error::Config("NSB is an optimizer, not a sampler".into())),
    }
}

/// NSB fit with `b` from backward screening when `2n >= p` and from
/// five-fold forward screening otherwise.
pub fn fit_nsb(data: &Dataset, gamma: u32, seed: u64) -> Result<Fit> {
    let config = CdConfig::new(gamma, 1.0);
    let path = if 2 * data.n >= data.p {
        backward_screen(data, gamma, &default_backward_grid(), &config)?
    } else {
        forward_screen_cv(data, gamma, 5, &default_forward_grid(data.p), &config, seed)?
    };
    let sol = path.chosen().ok_or_else(|| Error::Config("every grid point saturates the model".into()))?;
    Ok(Fit {
        selected: sol.beta_hat.iter().map(|b| *b != 0.0).collect(),
        beta_hat: sol.beta_hat.clone(),
        sigma2_hat: sol.sigma2_hat,
    })
}

/// Posterior means with two-sided t-test selection at the 95% level.
pub fn fit_method(data: &Dataset, method: Method, opts: &TableOptions, seed: u64) -> Result<Fit> {
    if let Method::Nsb { gamma } = method {
        return fit_nsb(data, gamma, seed);
    }
    let traces = run_mcmc(data, method, &opts.run_config(seed))?;
    let (beta_hat, _) = posterior_beta_moments(&traces);
    Ok(Fit { beta_hat, selected: select_by_t_test(&traces, 0.95)?, sigma2_hat: posterior_mean(&traces, "sigma2") })
}

/// One line of a report: `scenario, method, criterion, mean, sd, n_reps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub method: String,
    pub criterion: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableReport {
    pub rows: Vec<ReportRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"))
}

impl TableReport {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("scenario,method,criterion,mean,sd,n_reps\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.scenario,
                r.method,
                r.criterion,
                fmt_opt(r.mean),
                fmt_opt(r.sd),
                r.n_reps
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn find(&self, scenario: &str, method: &str, criterion: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.method == method && r.criterion == criterion)
    }
}

/// Competitors that are reported as absent.
const OMITTED: [&str; 2] = ["nssl", "mcplus"];

fn scenario_label(s: &SimScenario) -> String {
    format!("n{}_p{}_s{}_sigma2_{}_rho{}", s.n, s.p, s.s0, s.sigma2_0, s.rho)
}

/// Accuracy rows of one scenario. Replications that fail are left out of
/// the averages and counted under `failures`.
pub fn accuracy_rows(scenario: &SimScenario, methods: &[Method], opts: &TableOptions) -> Result<Vec<ReportRow>> {
    let label = scenario_label(scenario);
    let reps: Vec<Replicate> =
        (0..opts.reps as u64).into_par_iter().map(|r| simulate(scenario, r)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        let results: Vec<Result<Metrics>> = reps
            .par_iter()
            .enumerate()
            .map(|(r, rep)| {
                let seed = scenario.seed ^ ((mi as u64) << 32 | r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let fit = fit_method(&rep.data, *method, opts, seed)?;
                compute_metrics_with_support(&fit.beta_hat, &fit.selected, fit.sigma2_hat, &rep.beta0)
            })
            .collect();
        let ok: Vec<Metrics> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        for (criterion, mean, sd, k) in summarize_metrics(&ok) {
            rows.push(ReportRow {
                scenario: label.clone(),
                method: method.label(),
                criterion: criterion.into(),
                mean: Some(mean),
                sd,
                n_reps: k,
            });
        }
        rows.push(ReportRow {
            scenario: label.clone(),
            method: method.label(),
            criterion: "failures".into(),
            mean: Some((results.len() - ok.len()) as f64),
            sd: None,
            n_reps: results.len(),
        });
    }
    for name in OMITTED {
        rows.push(ReportRow {
            scenario: label.clone(),
            method: name.into(),
            criterion: "omitted".into(),
            mean: None,
            sd: None,
            n_reps: 0,
        });
    }
    Ok(rows)
}

/// ESS rows (`{all,zero,nonzero}_{max,min,median,mean,sd}`) of one data set.
pub fn ess_rows(scenario: &SimScenario, methods: &[Method], opts: &TableOptions) -> Result<Vec<ReportRow>> {
    let label = scenario_label(scenario);
    let rep = simulate(scenario, 0)?;
    let mut rows = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        let traces = run_mcmc(&rep.data, *method, &opts.run_config(scenario.seed.wrapping_add(mi as u64)))?;
        let report = ess_report(&traces, Some(&rep.beta0))?;
        let groups: [(&str, Option<EssSummary>); 3] =
            [("all", Some(report.all)), ("zero", report.zero), ("nonzero", report.nonzero)];
        for (g, summary) in groups {
            let Some(s) = summary else { continue };
            for (stat, v) in [("max", s.max), ("min", s.min), ("median", s.median), ("mean", s.mean), ("sd", s.sd)] {
                rows.push(ReportRow {
                    scenario: label.clone(),
                    method: method.label(),
                    criterion: format!("ess_{g}_{stat}"),
                    mean: Some(v),
                    sd: None,
                    n_reps: 1,
                });
            }
        }
    }
    Ok(rows)
}

const ACCURACY_METHODS: [Method; 5] = [
    Method::Pcg { gamma: 1 },
    Method::Horseshoe,
    Method::BayesLasso,
    Method::Nsb { gamma: 1 },
    Method::Nsb { gamma: 3 },
];

/// Scenarios of table `id`, before any options are applied.
pub fn table_scenarios(id: u32, opts: &TableOptions, seed: u64) -> Result<Vec<SimScenario>> {
    let sc = |n, p, s0, s2, rho| SimScenario::new(n, p, s0, s2, rho, seed);
    Ok(match id {
        1 => [0.5, 0.8]
            .into_iter()
            .map(|rho| SimScenario {
                placement: Placement::Fixed(ESS_LOCATIONS.to_vec()),
                ..sc(100, opts.ess_p, 10, 1.0, rho)
            })
            .collect(),
        2 => vec![sc(500, 25, 10, 3.0, 0.5), sc(500, 1000, 10, 1.0, 0.5), sc(500, 1000, 10, 3.0, 0.5)],
        3 => vec![sc(100, 1000, 10, 1.0, 0.5), sc(100, 1000, 10, 3.0, 0.5)],
        4 => vec![sc(100, 1000, 0, 1.0, 0.5), sc(100, 1000, 0, 3.0, 0.5)],
        5 => vec![sc(100, 1000, 20, 1.0, 0.5), sc(100, 1000, 20, 3.0, 0.5)],
        _ => return Err(Error::Config(format!("unknown table id {id}; expected 1 to 5"))),
    })
}

/// Reproduces table `id` at the given scale.
pub fn reproduce_table(id: u32, scale: Scale, seed: u64) -> Result<TableReport> {
    reproduce_table_with(id, &TableOptions::for_scale(scale), seed)
}

/// Reproduces table `id` with explicit budgets. The output is a pure
/// function of `(id, opts, seed)`.
pub fn reproduce_table_with(id: u32, opts: &TableOptions, seed: u64) -> Result<TableReport> {
    let scenarios = table_scenarios(id, opts, seed)?;
    let mut rows = Vec::new();
    for s in &scenarios {
        if id == 1 {
            let methods = [Method::BayesLasso, Method::Pcg { gamma: 0 }, Method::Horseshoe, Method::Pcg { gamma: 1 }];
            rows.extend(ess_rows(s, &methods, opts)?);
        } else {
            rows.extend(accuracy_rows(s, &ACCURACY_METHODS, opts)?);
        }
    }
    Ok(TableReport { rows })
}

/// A data file: headered CSV with a `y` column, an optional `trials`
/// column and every other column a covariate.
#[derive(Debug, Clone)]
pub struct DataFile {
    pub names: Vec<String>,
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub trials: Option<Vec<f64>>,
}

pub fn read_data_csv(path: &Path) -> Result<DataFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Parse { line: 1, msg: "no column named `y`".into() })?;
    let t_col = header.iter().position(|h| h == "trials");
    let x_cols: Vec<usize> = (0..header.len()).filter(|&c| c != y_col && Some(c) != t_col).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("column `{}`: cannot parse {field:?}", header[c]) })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("column `{}`: non-finite value", header[c]) });
            }
            cols[c].push(v);
        }
    }
    let n = cols[y_col].len();
    if n == 0 {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    let x = Mat::from_fn(n, x_cols.len(), |i, j| cols[x_cols[j]][i]);
    Ok(DataFile {
        names: x_cols.iter().map(|&c| header[c].clone()).collect(),
        x,
        y: std::mem::take(&mut cols[y_col]),
        trials: t_col.map(|c| std::mem::take(&mut cols[c])),
    })
}

pub fn write_data_csv(path: &Path, x: &Mat<f64>, y: &[f64], trials: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if trials.is_some() {
        header.push("trials".into());
    }
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = (0..x.ncols()).map(|j| format!("{:e}", x[(i, j)])).collect();
        rec.push(format!("{:e}", y[i]));
        if let Some(t) = trials {
            rec.push(format!("{}", t[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
