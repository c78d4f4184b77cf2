use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spde_fk::error::Error;
use spde_fk::experiments::fixtures::run_fixtures;
use spde_fk::experiments::{
    run_exit_probability, run_localization, run_validation, write_exitprob, write_localization, write_validation,
    ExitOptions, Format, LadderOptions, LocalizationOptions, ValidationOptions,
};
use spde_fk::noise::{NoisePlan, StreamId};
use spde_fk::scenario::ScenarioConfig;

const USAGE_EXIT: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "spde-fk", version, about = "Monte Carlo characteristics solver for stochastic Dirichlet problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare representation estimates with the finite-difference solution.
    Validate(ValidateArgs),
    /// Localization error of Dirichlet truncations on a radius ladder.
    Localize(LadderArgs),
    /// Exit probability of the flow on a radius ladder.
    Exitprob(LadderArgs),
    /// Check the discrete-exact identities on random paths.
    Proptest(ProptestArgs),
    /// Write the increments of one w path (and one auxiliary replicate).
    DumpPaths(DumpArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; overrides the scenario and the environment.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value = "reports")]
    out_dir: PathBuf,
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of w paths.
    #[arg(long, default_value_t = 3)]
    paths: usize,
    /// Query points per axis.
    #[arg(long, default_value_t = 33)]
    lattice: usize,
    /// Largest accepted relative L2 error per path.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct LadderArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = [1.5, 2.0, 2.5, 3.0])]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.25)]
    nu: f64,
    /// Integrability exponents of the data norm.
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0])]
    p: Vec<f64>,
    /// Number of w paths (localize).
    #[arg(long, default_value_t = 8)]
    paths: usize,
    /// Enables the d = 2 localization run.
    #[arg(long)]
    allow_2d: bool,
}

#[derive(Args, Debug)]
struct ProptestArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    /// Index of the w path.
    #[arg(long, default_value_t = 0)]
    path: u64,
}

fn load(common: &Common) -> spde_fk::error::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_file(&common.scenario)?;
    cfg.apply_env_overrides()?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = common.samples {
        cfg.samples = samples;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn format(common: &Common) -> Format {
    common.format.parse().unwrap_or_default()
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn ladder(args: &LadderArgs) -> LadderOptions {
    LadderOptions {
        radii: args.radii.clone(),
        epsilon: args.epsilon,
        nu: args.nu,
    }
}

/// Ok(true) when the experiment's own check passed.
fn run(cli: Cli) -> spde_fk::error::Result<bool> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = load(&args.common)?;
            let opts = ValidationOptions {
                paths: args.paths,
                samples: cfg.samples,
                lattice: args.lattice,
                node: None,
            };
            let report = run_validation(&cfg, &opts)?;
            write_validation(&report, &args.common.out_dir, format(&args.common))?;
            let ok = report.passed(args.tolerance);
            println!(
                "validate {}: paths={} samples={} t={} max_rel_l2={:.4e} max_sup={:.4e} {}",
                cfg.id,
                report.paths.len(),
                cfg.samples,
                report.t,
                report.max_relative_l2(),
                report.max_sup(),
                verdict(ok)
            );
            Ok(ok)
        }
        Command::Localize(args) => {
            let cfg = load(&args.common)?;
            let opts = LocalizationOptions {
                ladder: ladder(&args),
                paths: args.paths,
                p_values: args.p.clone(),
                allow_2d: args.allow_2d,
            };
            let report = run_localization(&cfg, &opts)?;
            write_localization(&report, &args.common.out_dir, format(&args.common))?;
            let ok = report.passed();
            let means: Vec<String> = report.mean.iter().map(|e| format!("{e:.3e}")).collect();
            println!(
                "localize {}: e(R)=[{}] slope={:.4e} box_change={:.2e} {}",
                cfg.id,
                means.join(","),
                report.fit.map_or(f64::NAN, |f| f.slope),
                report.max_box_change(),
                verdict(ok)
            );
            Ok(ok)
        }
        Command::Exitprob(args) => {
            let cfg = load(&args.common)?;
            let opts = ExitOptions {
                ladder: ladder(&args),
                samples: cfg.samples,
                ..ExitOptions::default()
            };
            let report = run_exit_probability(&cfg, &opts)?;
            write_exitprob(&report, &args.common.out_dir, format(&args.common))?;
            let ok = report.passed();
            let ps: Vec<String> = report.probability.iter().map(|p| format!("{p:.4e}")).collect();
            println!(
                "exitprob {}: samples={} P(H_R)=[{}] rule_of_three={:.2e} {}",
                cfg.id,
                report.samples,
                ps.join(","),
                report.rule_of_three,
                verdict(ok)
            );
            Ok(ok)
        }
        Command::Proptest(args) => {
            let mut cfg = load(&args.common)?;
            let cases = args.common.samples.unwrap_or(8);
            cfg.samples = cases;
            let results = run_fixtures(&cfg, cases)?;
            fs::create_dir_all(&args.common.out_dir)?;
            let mut text = String::from("fixture,cases,max_deviation,tolerance,passed\n");
            let mut ok = true;
            for r in &results {
                ok &= r.passed();
                text.push_str(&format!(
                    "{},{},{:.16e},{:.16e},{}\n",
                    r.name,
                    r.cases,
                    r.max_deviation,
                    r.tolerance,
                    r.passed()
                ));
                println!(
                    "proptest {} {}: cases={} max_deviation={:.3e} {}",
                    cfg.id,
                    r.name,
                    r.cases,
                    r.max_deviation,
                    verdict(r.passed())
                );
            }
            fs::write(args.common.out_dir.join(format!("proptest_{}.csv", cfg.id)), text)?;
            Ok(ok)
        }
        Command::DumpPaths(args) => {
            let cfg = load(&args.common)?;
            let grid = cfg.grid();
            let plan = NoisePlan::new(cfg.seed);
            let w = plan.sample_w(&grid, cfg.modes, StreamId::W(args.path));
            let aux = plan.sample_aux(
                &grid,
                cfg.dim(),
                StreamId::Aux {
                    path: args.path,
                    replicate: 0,
                    attempt: 0,
                },
            );
            let joint = w.with_aux(&aux)?;
            fs::create_dir_all(&args.common.out_dir)?;
            let file = dump_file(&args.common.out_dir, &cfg.id, args.path);
            let mut text = String::new();
            let dw: Vec<String> = (0..cfg.modes).map(|k| format!("dw{k}")).collect();
            let dwh: Vec<String> = (0..cfg.dim()).map(|r| format!("dw_hat{r}")).collect();
            text.push_str(&format!("# w_checksum={}\n", w.checksum()));
            let header: Vec<String> = ["step".to_string(), "t".to_string()].into_iter().chain(dw).chain(dwh).collect();
            text.push_str(&header.join(","));
            text.push('\n');
            for i in 0..grid.n_steps() {
                let mut row = vec![i.to_string(), format!("{:.16e}", grid.node(i))];
                row.extend(joint.dw(i).iter().map(|v| format!("{v:.16e}")));
                row.extend(joint.dw_hat(i).iter().map(|v| format!("{v:.16e}")));
                text.push_str(&row.join(","));
                text.push('\n');
            }
            fs::write(&file, text)?;
            let bin = file.with_extension("bin");
            joint.dump(std::io::BufWriter::new(fs::File::create(&bin)?))?;
            println!(
                "dump-paths {}: path={} steps={} checksum={} files={},{}",
                cfg.id,
                args.path,
                grid.n_steps(),
                w.checksum(),
                file.display(),
                bin.display()
            );
            Ok(true)
        }
    }
}

fn dump_file(dir: &Path, id: &str, path: u64) -> PathBuf {
    dir.join(format!("paths_{id}_{path}.csv"))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() || matches!(e, Error::Io(_)) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
