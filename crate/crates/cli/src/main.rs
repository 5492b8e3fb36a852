//! `ordcopula`: batch frontend for fitting, selecting, comparing and
//! simulating joint copula Markov models for couples' ordinal panels.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ordcopula::copula::{density_grid, tau_inverse, CopulaSpec, CopulaTemplate};
use ordcopula::estimation::{fit_stagewise, FitOptions, ModelFamilies};
use ordcopula::io::{density_grid_to_csv, load_csv, read_fit_report, write_csv, write_report, Report, RunConfig, ScanReport};
use ordcopula::selection::{scan_coupling, scan_serial, vuong_test};
use ordcopula::simulate::{simulate_panel, CovariateDesign, SimDesign};
use ordcopula::{Error, Gender, JointModelParams, LinkFunction, MarginalParams, OrdinalPanel, Result, SerialModel};

#[derive(Parser, Debug)]
#[command(name = "ordcopula", version, about = "Joint copula Markov models for bivariate ordinal panels")]
struct Cli {
    /// Key-value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Staged maximum-likelihood fit of one joint model.
    Fit(FitArgs),
    /// Rank serial and coupling copula candidates by maximized log-likelihood.
    Scan(ScanArgs),
    /// Vuong's test of model 2 against model 1 on the same data.
    Vuong(VuongArgs),
    /// Simulate a panel from a joint model.
    Simulate(SimulateArgs),
    /// Convert between a copula parameter and Kendall's tau.
    Tau(TauArgs),
    /// Tabulate a copula density with standard normal margins.
    Contour(ContourArgs),
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Panel CSV file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output prefix; `<out>.json` and `<out>.txt` are written.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k_m: Option<usize>,
    #[arg(long)]
    k_f: Option<usize>,
    /// probit or logit.
    #[arg(long)]
    link: Option<String>,
    /// Use F(alpha - x'beta) instead of F(alpha + x'beta).
    #[arg(long)]
    negate_mu: bool,
    #[arg(long)]
    gradient_tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    serial_m: Option<String>,
    #[arg(long)]
    serial_f: Option<String>,
    #[arg(long)]
    coupling: Option<String>,
    /// Skip the standard-error computation.
    #[arg(long)]
    no_se: bool,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated candidates for both roles, e.g. `bvn,frank,t4`; a
    /// bare `t` means t1..t10.
    #[arg(long)]
    candidates: Option<String>,
    #[arg(long)]
    serial_candidates: Option<String>,
    #[arg(long)]
    coupling_candidates: Option<String>,
}

#[derive(Args, Debug)]
struct VuongArgs {
    #[command(flatten)]
    data: DataArgs,
    /// A fit report JSON, or families `serial_m,serial_f,coupling` (a single
    /// family is used for all three).
    #[arg(long)]
    model1: String,
    #[arg(long)]
    model2: String,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Number of couples.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Waves per couple.
    #[arg(long, default_value_t = 7)]
    t: usize,
    /// Simulate from the parameters of a fit report instead of the flags below.
    #[arg(long)]
    from_report: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k_m: usize,
    #[arg(long, default_value_t = 5)]
    k_f: usize,
    #[arg(long, default_value = "probit")]
    link: String,
    #[arg(long, default_value = "gumbel")]
    serial_m: String,
    #[arg(long, default_value = "gumbel")]
    serial_f: String,
    #[arg(long, default_value = "bvn")]
    coupling: String,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    tau_m: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    tau_f: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    tau_coupling: f64,
    /// Comma-separated cutpoints; defaults to link quantiles at k/K.
    #[arg(long, allow_hyphen_values = true)]
    cutpoints_m: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    cutpoints_f: Option<String>,
    /// Comma-separated coefficients on standard normal covariates.
    #[arg(long, allow_hyphen_values = true)]
    beta_m: Option<String>,
    /// Defaults to the male coefficients.
    #[arg(long, allow_hyphen_values = true)]
    beta_f: Option<String>,
}

#[derive(Args, Debug)]
struct TauArgs {
    /// Family: bvn, frank, gumbel, sgumbel or tN.
    #[arg(long)]
    family: String,
    /// Print Kendall's tau of this parameter.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "tau", required_unless_present = "tau")]
    theta: Option<f64>,
    /// Print the parameter with this Kendall's tau.
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
}

#[derive(Args, Debug)]
struct ContourArgs {
    #[arg(long)]
    family: String,
    #[arg(long, allow_negative_numbers = true, conflicts_with = "tau", required_unless_present = "tau")]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Cells per axis over [-4, 4].
    #[arg(long, default_value_t = 100)]
    grid: usize,
    /// Output CSV: density matrix with z2 centres across and z1 centres down.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.set("threads", &t.to_string())?;
    }
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Input(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(cfg, a),
        Command::Scan(a) => cmd_scan(cfg, a),
        Command::Vuong(a) => cmd_vuong(cfg, a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Tau(a) => cmd_tau(a),
        Command::Contour(a) => cmd_contour(a),
    }
}

fn apply_data_args(cfg: &mut RunConfig, a: &DataArgs) -> Result<()> {
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    set("data", a.data.as_ref().map(|p| p.display().to_string()))?;
    set("out", a.out.as_ref().map(|p| p.display().to_string()))?;
    set("k_m", a.k_m.map(|v| v.to_string()))?;
    set("k_f", a.k_f.map(|v| v.to_string()))?;
    set("link", a.link.clone())?;
    set("gradient_tolerance", a.gradient_tolerance.map(|v| v.to_string()))?;
    set("max_iterations", a.max_iterations.map(|v| v.to_string()))?;
    if a.negate_mu {
        cfg.set("negate_mu", "true")?;
    }
    cfg.validate()
}

fn load_panel(cfg: &RunConfig) -> Result<OrdinalPanel> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Input("no data file given (use --data or `data =` in the config)".into()))?;
    let panel = load_csv(path, &cfg.load_options())?;
    let dist = panel
        .wave_count_distribution()
        .iter()
        .map(|(t, n)| format!("T={t}: {n}"))
        .collect::<Vec<_>>()
        .join(", ");
    eprintln!("loaded {} couples, {} couple-waves ({dist})", panel.n_couples(), panel.n_observations());
    Ok(panel)
}

fn emit<R: Report>(report: &R, out: Option<&Path>) -> Result<()> {
    print!("{}", report.render_text()?);
    if let Some(prefix) = out {
        let (json, text) = write_report(report, prefix)?;
        eprintln!("wrote {} and {}", json.display(), text.display());
    }
    Ok(())
}

fn cmd_fit(mut cfg: RunConfig, a: FitArgs) -> Result<u8> {
    apply_data_args(&mut cfg, &a.data)?;
    for (key, v) in [("serial_m", &a.serial_m), ("serial_f", &a.serial_f), ("coupling", &a.coupling)] {
        if let Some(v) = v {
            cfg.set(key, v)?;
        }
    }
    if a.no_se {
        cfg.standard_errors = false;
    }
    let families = ModelFamilies::new(
        cfg.serial[0].unwrap_or(CopulaTemplate::bvn()),
        cfg.serial[1].unwrap_or(CopulaTemplate::bvn()),
        cfg.coupling.unwrap_or(CopulaTemplate::bvn()),
    );
    let panel = load_panel(&cfg)?;
    let report = fit_stagewise(&panel, &families, &cfg.fit_options())?;
    emit(&report, cfg.out.as_deref())?;
    if report.converged {
        Ok(0)
    } else {
        eprintln!("error: optimizer did not converge in every stage");
        Ok(2)
    }
}

fn cmd_scan(mut cfg: RunConfig, a: ScanArgs) -> Result<u8> {
    apply_data_args(&mut cfg, &a.data)?;
    for (key, v) in [
        ("candidates", &a.candidates),
        ("serial_candidates", &a.serial_candidates),
        ("coupling_candidates", &a.coupling_candidates),
    ] {
        if let Some(v) = v {
            cfg.set(key, v)?;
        }
    }
    let panel = load_panel(&cfg)?;
    let mut opts = cfg.fit_options();
    opts.standard_errors = false;
    let serial = [
        scan_serial(&panel, Gender::Male, &cfg.serial_candidates, &opts)?,
        scan_serial(&panel, Gender::Female, &cfg.serial_candidates, &opts)?,
    ];
    let coupling = scan_coupling(&panel, [serial[0].best(), serial[1].best()], &cfg.coupling_candidates, &opts)?;
    let report = ScanReport { serial: serial.to_vec(), coupling };
    emit(&report, cfg.out.as_deref())?;
    Ok(0)
}

/// A fitted model from a report file, or a fresh fit of the named families.
fn resolve_model(spec: &str, panel: &OrdinalPanel, opts: &FitOptions) -> Result<JointModelParams> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        return Ok(read_fit_report(path)?.params);
    }
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let fam: Vec<CopulaTemplate> = parts.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let families = match fam.as_slice() {
        [c] => ModelFamilies::new(*c, *c, *c),
        [m, f, c] => ModelFamilies::new(*m, *f, *c),
        _ => return Err(Error::Input(format!("model `{spec}` must name one family or three (serial_m,serial_f,coupling)"))),
    };
    let report = fit_stagewise(panel, &families, &FitOptions { standard_errors: false, ..opts.clone() })?;
    if !report.converged {
        eprintln!("warning: fit of {spec} did not converge in every stage");
    }
    Ok(report.params)
}

fn cmd_vuong(mut cfg: RunConfig, a: VuongArgs) -> Result<u8> {
    apply_data_args(&mut cfg, &a.data)?;
    let panel = load_panel(&cfg)?;
    let opts = cfg.fit_options();
    let m1 = resolve_model(&a.model1, &panel, &opts)?;
    let m2 = resolve_model(&a.model2, &panel, &opts)?;
    let v = vuong_test(&panel, &m1, &m2)?;
    emit(&v, cfg.out.as_deref())?;
    Ok(0)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Error::Input(format!("invalid number `{x}` in {what}"))))
        .collect()
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    let jm = match &a.from_report {
        Some(p) => read_fit_report(p)?.params,
        None => {
            let link: LinkFunction = a.link.parse()?;
            let beta_m = a.beta_m.as_deref().map_or(Ok(vec![]), |s| parse_list(s, "beta-m"))?;
            let beta_f = match &a.beta_f {
                Some(s) => parse_list(s, "beta-f")?,
                None => beta_m.clone(),
            };
            let margin = |k: usize, cuts: &Option<String>, beta: Vec<f64>, what: &str| -> Result<MarginalParams> {
                let cuts = match cuts {
                    Some(s) => parse_list(s, what)?,
                    None => (1..k).map(|j| link.quantile(j as f64 / k as f64)).collect(),
                };
                MarginalParams::new(link, cuts, beta)
            };
            let copula = |fam: &str, tau: f64| -> Result<CopulaSpec> {
                let t: CopulaTemplate = fam.parse()?;
                tau_inverse(t.family, tau, t.nu)
            };
            JointModelParams::new(
                SerialModel::new(margin(a.k_m, &a.cutpoints_m, beta_m, "cutpoints-m")?, copula(&a.serial_m, a.tau_m)?),
                SerialModel::new(margin(a.k_f, &a.cutpoints_f, beta_f, "cutpoints-f")?, copula(&a.serial_f, a.tau_f)?),
                copula(&a.coupling, a.tau_coupling)?,
            )
        }
    };
    let p = jm.male.margin.beta.len();
    if jm.female.margin.beta.len() != p {
        return Err(Error::Input("male and female coefficient vectors must have the same length".into()));
    }
    let covariates = if p == 0 { CovariateDesign::None } else { CovariateDesign::StandardNormal { p } };
    let panel = simulate_panel(&jm, &SimDesign::new(a.n, a.t, a.seed).with_covariates(covariates))?;
    write_csv(&panel, &a.out)?;
    eprintln!("wrote {} couples x {} waves to {}", a.n, a.t, a.out.display());
    Ok(0)
}

fn spec_from(family: &str, theta: Option<f64>, tau: Option<f64>) -> Result<CopulaSpec> {
    let t: CopulaTemplate = family.parse()?;
    match (theta, tau) {
        (Some(th), _) => t.with_theta(th),
        (None, Some(tau)) => t.at_tau(tau),
        (None, None) => Err(Error::Input("give --theta or --tau".into())),
    }
}

fn cmd_tau(a: TauArgs) -> Result<u8> {
    let spec = spec_from(&a.family, a.theta, a.tau)?;
    if a.theta.is_some() {
        println!("{}", spec.kendall_tau());
    } else {
        println!("{}", spec.theta);
    }
    Ok(0)
}

fn cmd_contour(a: ContourArgs) -> Result<u8> {
    let spec = spec_from(&a.family, a.theta, a.tau)?;
    let grid = density_grid(&spec, a.grid)?;
    std::fs::write(&a.out, density_grid_to_csv(&grid)).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    println!("family {} theta {} tau {:.6}", spec.template(), spec.theta, spec.kendall_tau());
    println!("lower-left quadrant mass {:.6}", grid.quadrant_mass(false));
    println!("upper-right quadrant mass {:.6}", grid.quadrant_mass(true));
    println!("lower-left tail mass (z1, z2 < -2) {:.6}", grid.tail_mass(2.0, false));
    println!("upper-right tail mass (z1, z2 > 2) {:.6}", grid.tail_mass(2.0, true));
    println!("total mass on grid {:.6}", grid.total_mass());
    Ok(0)
}
