use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdlr::io::{
    csv_preamble, read_dataset, read_spec, write_csv, write_dataset, write_json, Command, DatasetPaths, Envelope,
    PolicyName, RunConfig, SscpDump,
};
use hdlr::sim::{self, ExperimentResult, ExperimentSpec, Settings};
use hdlr::{
    build_sscp, estimate_edge_params, run_test, select_lambda, AlternativePrior, EdgeParams, Error, LambdaPolicy,
    LpFitReport, SpectrumView,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hdlr", version, about = "Ridge-regularized largest-root test for high-dimensional linear hypotheses")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Test H0: B C = 0 on CSV data.
    Test(DataArgs),
    /// Estimate the centering and scaling parameters at a fixed lambda.
    Estimate(DataArgs),
    /// Choose lambda by maximizing the estimated signal-to-noise ratio.
    SelectLambda(DataArgs),
    /// Run a simulation experiment from a JSON spec.
    Simulate(SimArgs),
}

#[derive(Args)]
struct Tuning {
    /// Significance levels, comma separated.
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = [0.05, 0.01])]
    alphas: Vec<f64>,
    /// Size of the mass grid of the fitted measure.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Number of evaluation points of the empirical transform.
    #[arg(long = "I")]
    grid_i: Option<usize>,
    #[arg(long)]
    ode_steps: Option<usize>,
    /// Number of lambda candidates for data-driven selection.
    #[arg(long)]
    lambda_grid: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Tuning {
    fn settings(&self, base: Settings) -> Settings {
        Settings {
            k: self.k.unwrap_or(base.k),
            grid_i: self.grid_i.unwrap_or(base.grid_i),
            ode_steps: self.ode_steps.unwrap_or(base.ode_steps),
            lambda_grid: self.lambda_grid.unwrap_or(base.lambda_grid),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fixed,
    #[value(name = "data-driven-I")]
    DataDrivenI,
    #[value(name = "data-driven-Sigma")]
    DataDrivenSigma,
}

impl From<PolicyArg> for PolicyName {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Fixed => PolicyName::Fixed,
            PolicyArg::DataDrivenI => PolicyName::DataDrivenI,
            PolicyArg::DataDrivenSigma => PolicyName::DataDrivenSigma,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding Y.csv, X.csv and C.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Responses, p x nT.
    #[arg(long, required_unless_present = "data")]
    y: Option<PathBuf>,
    /// Design, m x nT.
    #[arg(long, required_unless_present = "data")]
    x: Option<PathBuf>,
    /// Hypothesis, m x n1.
    #[arg(long, required_unless_present = "data")]
    c: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    lambda_policy: Option<PolicyArg>,
    /// Also write W1, W2 and the spectrum of W2 as JSON.
    #[arg(long)]
    dump_sscp: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Size,
    Power,
    Estimation,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment type; defaults to `power` when the spec has a zeta grid, `size` otherwise.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Also write the data set of replicate 0 at the first signal level.
    #[arg(long)]
    emit_data: bool,
    #[command(flatten)]
    tuning: Tuning,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let res = match cli.command {
        Cmd::Test(a) => cmd_data(Command::Test, a),
        Cmd::Estimate(a) => cmd_data(Command::Estimate, a),
        Cmd::SelectLambda(a) => cmd_data(Command::SelectLambda, a),
        Cmd::Simulate(a) => cmd_simulate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("HDLR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parse(format!("HDLR_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Io(e.to_string()))
}

fn dataset_paths(a: &DataArgs) -> DatasetPaths {
    let base = a.data.as_deref().map(DatasetPaths::in_dir);
    let pick = |explicit: &Option<PathBuf>, f: fn(&DatasetPaths) -> &PathBuf| {
        explicit
            .clone()
            .or_else(|| base.as_ref().map(|b| f(b).clone()))
            .expect("clap requires either --data or the three paths")
    };
    DatasetPaths {
        y: pick(&a.y, |b| &b.y),
        x: pick(&a.x, |b| &b.x),
        c: pick(&a.c, |b| &b.c),
    }
}

fn resolve_policy(command: Command, a: &DataArgs) -> Result<PolicyName, Error> {
    let policy = match (a.lambda_policy, a.lambda) {
        (Some(p), _) => p.into(),
        (None, Some(_)) => PolicyName::Fixed,
        (None, None) if command == Command::SelectLambda => PolicyName::DataDrivenI,
        (None, None) => return Err(Error::InvalidSpec("give --lambda or --lambda-policy".into())),
    };
    match (command, policy, a.lambda) {
        (Command::SelectLambda, PolicyName::Fixed, _) => Err(Error::InvalidSpec(
            "select-lambda needs a data-driven --lambda-policy".into(),
        )),
        (Command::Estimate, p, _) if p != PolicyName::Fixed => {
            Err(Error::InvalidSpec("estimate needs a fixed --lambda".into()))
        }
        (_, PolicyName::Fixed, None) => Err(Error::InvalidSpec("--lambda-policy fixed needs --lambda".into())),
        (_, p, Some(_)) if p != PolicyName::Fixed => {
            Err(Error::InvalidSpec("--lambda conflicts with a data-driven policy".into()))
        }
        _ => Ok(policy),
    }
}

fn prior(policy: PolicyName, p: usize) -> AlternativePrior {
    match policy {
        PolicyName::DataDrivenSigma => AlternativePrior::sigma(),
        _ => AlternativePrior::identity(p),
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    fit: LpFitReport,
    edge: EdgeParams,
}

fn cmd_data(command: Command, a: DataArgs) -> Result<(), Error> {
    let policy = resolve_policy(command, &a)?;
    let config = RunConfig {
        command,
        dataset: Some(dataset_paths(&a)),
        spec: None,
        lambda_policy: Some(policy),
        lambda: a.lambda,
        alphas: a.tuning.alphas.clone(),
        settings: a.tuning.settings(Settings::default()),
        seed: None,
        out: a.tuning.out.clone(),
    };
    config.validate()?;
    let model = read_dataset(config.dataset.as_ref().expect("set above"))?;
    let sscp = build_sscp(&model)?;
    if let Some(path) = &a.dump_sscp {
        write_json(path, &Envelope::new(config.clone(), SscpDump::from(&sscp)))?;
    }
    let opts = config.settings.pipeline_options(&config.alphas);
    let out_dir = config.out.clone();
    match command {
        Command::Test => {
            let lambda_policy = match policy {
                PolicyName::Fixed => LambdaPolicy::Fixed(config.lambda.expect("checked")),
                p => LambdaPolicy::DataDriven(prior(p, sscp.p())),
            };
            let out = run_test(&sscp, &lambda_policy, &opts)?;
            print_report(&out.report);
            if let Some(dir) = out_dir {
                write_json(&dir.join("report.json"), &Envelope::new(config, out))?;
            }
        }
        Command::Estimate => {
            let view = SpectrumView::from_sscp(&sscp)?;
            let lambda = config.lambda.expect("checked");
            let (fit, edge) = estimate_edge_params(&view, lambda, &opts.select.estimate)?;
            println!("lambda     {}", edge.lambda);
            println!("rho        {}", edge.rho);
            println!("beta       {}", edge.beta);
            println!("theta1     {}", edge.theta1);
            println!("theta2     {}", edge.theta2);
            println!("fit_loss   {}", fit.loss_theta);
            println!("fit_atoms  {}", fit.n_active);
            if let Some(dir) = out_dir {
                write_json(&dir.join("estimate.json"), &Envelope::new(config, EstimateOutput { fit, edge }))?;
            }
        }
        Command::SelectLambda => {
            let view = SpectrumView::from_sscp(&sscp)?;
            let sel = select_lambda(&view, &sscp, &prior(policy, sscp.p()), &opts.select)?;
            println!("lambda_opt {}", sel.lambda_opt);
            for (l, e) in &sel.dropped {
                eprintln!("warning: lambda {l} dropped: {e}");
            }
            if let Some(dir) = out_dir {
                let mut csv = String::from("lambda,xi,theta2,ratio\n");
                for i in 0..sel.grid.len() {
                    csv.push_str(&format!("{},{},{},{}\n", sel.grid[i], sel.xi[i], sel.theta2[i], sel.ratio[i]));
                }
                write_csv(&dir.join("selection.csv"), &csv_preamble(&config), &csv)?;
                write_json(&dir.join("selection.json"), &Envelope::new(config, sel))?;
            }
        }
        Command::Simulate => unreachable!("handled by cmd_simulate"),
    }
    Ok(())
}

fn print_report(r: &hdlr::TestReport) {
    println!("lambda     {}", r.lambda);
    println!("ell_max    {}", r.ell_max);
    println!("theta1     {}", r.theta1);
    println!("theta2     {}", r.theta2);
    println!("statistic  {}", r.statistic);
    println!("p_value    {}", r.p_value);
    for d in &r.reject_at {
        println!(
            "alpha {:<5} critical {:.4}  {}",
            d.alpha,
            d.critical_value,
            if d.reject { "reject" } else { "do not reject" }
        );
    }
}

#[derive(Serialize)]
struct SimProvenance<'a> {
    run: &'a RunConfig,
    spec: &'a ExperimentSpec,
}

fn cmd_simulate(a: SimArgs) -> Result<(), Error> {
    let mut spec = read_spec(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.tuning.k.is_some() || a.tuning.grid_i.is_some() || a.tuning.ode_steps.is_some() || a.tuning.lambda_grid.is_some()
    {
        spec.settings = a.tuning.settings(spec.settings);
    }
    spec.validate()?;
    let out = a.tuning.out.clone().unwrap_or_else(|| PathBuf::from("hdlr-out"));
    let config = RunConfig {
        command: Command::Simulate,
        dataset: None,
        spec: Some(a.spec.clone()),
        lambda_policy: None,
        lambda: None,
        alphas: spec.alphas.clone(),
        settings: spec.settings,
        seed: Some(spec.seed),
        out: Some(out.clone()),
    };
    let kind = a
        .kind
        .unwrap_or(if spec.zetas.is_empty() { KindArg::Size } else { KindArg::Power });
    let res = match kind {
        KindArg::Size => sim::run_null_size(&spec)?,
        KindArg::Power => sim::run_power_curve(&spec)?,
        KindArg::Estimation => sim::run_estimation_table(&spec)?,
    };
    let preamble = csv_preamble(&SimProvenance { run: &config, spec: &spec });
    write_csv(&out.join("rates.csv"), &preamble, &sim::rates_csv(&res))?;
    write_csv(&out.join("replicates.csv"), &preamble, &sim::replicates_csv(&res))?;
    if !res.estimation.is_empty() {
        write_csv(&out.join("estimation.csv"), &preamble, &sim::estimation_csv(&res))?;
    }
    if a.emit_data {
        emit_data(&spec, &out.join("data"), &preamble)?;
    }
    print_rates(&res);
    if !res.failed.is_empty() {
        eprintln!("{} replicate(s) failed: {:?}", res.failed.len(), res.failed);
    }
    write_json(&out.join("result.json"), &Envelope::new(config, res))?;
    Ok(())
}

/// Writes the data of replicate 0, which the harness draws from stream 1.
fn emit_data(spec: &ExperimentSpec, dir: &Path, preamble: &str) -> Result<(), Error> {
    let zeta = spec.zetas.first().copied().unwrap_or(spec.signal_zeta);
    let cov = sim::spec_covariance(spec)?;
    let model = sim::draw_dataset(spec, &cov, zeta, 1)?;
    let preamble = format!("{preamble}# replicate=0 zeta={zeta}\n");
    write_dataset(&DatasetPaths::in_dir(dir), &model, &preamble)
}

fn print_rates(res: &ExperimentResult) {
    println!("{:<18} {:>8} {:>6} {:>6} {:>8} {:>8} {:>8}", "lambda", "zeta", "alpha", "n", "rate", "oracle", "adjusted");
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    for r in &res.rates {
        println!(
            "{:<18} {:>8} {:>6} {:>6} {:>8.4} {:>8} {:>8}",
            r.label,
            r.zeta,
            r.alpha,
            r.n,
            r.rate,
            opt(r.rate_oracle),
            opt(r.rate_adjusted)
        );
    }
    for e in &res.estimation {
        println!(
            "{:<18} theta1 err {:.4} ({:.4})  theta2 err {:.4} ({:.4})  n={}",
            e.label, e.theta1_err_mean, e.theta1_err_sd, e.theta2_err_mean, e.theta2_err_sd, e.n
        );
    }
}
