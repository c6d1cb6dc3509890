use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oqec_core::channel;
use oqec_core::fidelity;
use oqec_core::format::{self, ChannelData};
use oqec_core::harness::{self, SuiteConfig, Tolerances};
use oqec_core::linalg;
use oqec_core::rng::Stream;
use oqec_core::space::{self, DensityOperator, SpaceDecomposition};

#[derive(Parser)]
#[command(name = "oqec", version, about = "Fidelity of subsystem-encoded information and its verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subsystem fidelity F^A of two states, with its terms and angle.
    Fa {
        state1: PathBuf,
        state2: PathBuf,
        /// Apply this channel to both states first.
        #[arg(long)]
        channel: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uhlmann fidelity of two states and its angle.
    Fidelity {
        state1: PathBuf,
        state2: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random state or channel file.
    Gen {
        #[command(subcommand)]
        what: GenKind,
    },
    /// Run a verification suite; exits 0 iff it records no failures.
    Verify {
        /// One of theorem3, theorem4, identities, properties, swap, three_form, global_fuchs.
        suite: String,
        #[command(flatten)]
        run: RunArgs,
        /// Write the per-trial CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep preparation leak and channel leak strength.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated preparation leak weights.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        epsilons: Vec<f64>,
        /// Comma-separated channel leak strengths.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        leaks: Vec<f64>,
        /// Write the per-trial CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the per-cell aggregate CSV here.
        #[arg(long)]
        cells_csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DimArgs {
    #[arg(long, num_args = 3, value_names = ["DA", "DB", "DK"], default_values_t = [2, 2, 2])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    dims: DimArgs,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Kraus operators on H^B per channel.
    #[arg(long, default_value_t = 3)]
    kraus: usize,
    /// Channel leak strength in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    leak: f64,
    /// Random measurements or oracle samples per trial.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Override a tolerance, e.g. --tol slack=1e-8.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenKind {
    State {
        #[command(flatten)]
        dims: DimArgs,
        /// (ρ^A⊗σ^B) ⊕ 0.
        #[arg(long, conflicts_with = "imperfect")]
        perfect: bool,
        /// Imperfect preparation with weight --epsilon in K.
        #[arg(long)]
        imperfect: bool,
        #[arg(long, requires = "imperfect")]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Channel {
        #[command(flatten)]
        dims: DimArgs,
        #[arg(long, value_enum, default_value_t = ChannelKind::Structured)]
        kind: ChannelKind,
        #[arg(long, default_value_t = 3)]
        kraus: usize,
        #[arg(long, default_value_t = 1.0)]
        leak: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelKind {
    Structured,
    InitializationFree,
    Product,
    Computation,
    Raw,
}

type CliResult<T> = Result<T, String>;

fn decomposition(args: &DimArgs) -> CliResult<SpaceDecomposition> {
    match args.dims[..] {
        [a, b, k] => SpaceDecomposition::new(a, b, k).map_err(|e| format!("dims: {e}")),
        _ => Err("dims: expected three values DA DB DK".into()),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_state(path: &Path) -> CliResult<DensityOperator> {
    format::state_from_json(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_channel(path: &Path) -> CliResult<ChannelData> {
    format::channel_from_json(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn same_dims(a: &DensityOperator, b: &DensityOperator) -> CliResult<()> {
    if a.decomposition() != b.decomposition() {
        return Err(format!(
            "dims mismatch: {:?} vs {:?}",
            a.decomposition().dims(),
            b.decomposition().dims()
        ));
    }
    Ok(())
}

fn check_leak(name: &str, t: f64) -> CliResult<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(format!("{name}: must lie in [0, 1], got {t}"));
    }
    Ok(())
}

fn suite_config(run: &RunArgs) -> CliResult<SuiteConfig> {
    let dims = decomposition(&run.dims)?;
    if run.kraus == 0 {
        return Err("kraus: need at least one Kraus operator".into());
    }
    check_leak("leak", run.leak)?;
    let mut tolerances = Tolerances::default();
    for spec in &run.tol {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| format!("tol: expected NAME=VALUE, got {spec:?}"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("tol: {name}: not a number: {value:?}"))?;
        tolerances.set(name.trim(), value).map_err(|e| e.to_string())?;
    }
    Ok(SuiteConfig {
        dims,
        trials: run.trials,
        seed: run.dims.seed,
        n_kraus: run.kraus,
        leak_strength: run.leak,
        samples: run.samples,
        tolerances,
    })
}

fn cmd_fa(state1: &Path, state2: &Path, ch: Option<&Path>, out: Option<&Path>) -> CliResult<ExitCode> {
    let (mut t, mut u) = (load_state(state1)?, load_state(state2)?);
    same_dims(&t, &u)?;
    if let Some(path) = ch {
        let data = load_channel(path)?;
        if data.decomposition() != t.decomposition() {
            return Err(format!(
                "dims mismatch: channel {:?} vs states {:?}",
                data.decomposition().dims(),
                t.decomposition().dims()
            ));
        }
        let k = data.kraus_channel();
        t = k.apply(&t).map_err(|e| e.to_string())?;
        u = k.apply(&u).map_err(|e| e.to_string())?;
    }
    let rec = format::fa_record(&t, &u).map_err(|e| e.to_string())?;
    emit(out, &(serde_json::to_string(&rec).expect("record serializes") + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_fidelity(state1: &Path, state2: &Path, out: Option<&Path>) -> CliResult<ExitCode> {
    let (t, u) = (load_state(state1)?, load_state(state2)?);
    same_dims(&t, &u)?;
    let f = fidelity::uhlmann_fidelity(&t, &u).map_err(|e| e.to_string())?;
    let angle = fidelity::angle(&t, &u).map_err(|e| e.to_string())?;
    let rec = serde_json::json!({
        "F": format::round_sig(f, 12),
        "angle": format::round_sig(angle, 12),
    });
    emit(out, &(rec.to_string() + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(what: &GenKind) -> CliResult<ExitCode> {
    match what {
        GenKind::State {
            dims,
            perfect,
            imperfect,
            epsilon,
            out,
        } => {
            let d = decomposition(dims)?;
            let mut rng = Stream::new(dims.seed);
            let rho = if *perfect {
                space::random_perfect_state(d, &mut rng)
            } else if *imperfect {
                if d.dk() == 0 {
                    return Err("dims: an imperfect state needs DK >= 1".into());
                }
                let eps = match epsilon {
                    Some(e) => {
                        check_leak("epsilon", *e)?;
                        *e
                    }
                    None => rng.uniform(),
                };
                let rho_a = linalg::random_density(d.da(), d.da(), &mut rng).map_err(|e| e.to_string())?;
                space::random_imperfect_with(d, &rho_a, eps, &mut rng)
            } else {
                space::random_state(d, &mut rng)
            };
            emit(out.as_deref(), &format::state_to_json(&rho))?;
        }
        GenKind::Channel {
            dims,
            kind,
            kraus,
            leak,
            out,
        } => {
            let d = decomposition(dims)?;
            check_leak("leak", *leak)?;
            if *kraus == 0 {
                return Err("kraus: need at least one Kraus operator".into());
            }
            let mut rng = Stream::new(dims.seed);
            let text = match kind {
                ChannelKind::Structured => {
                    format::structured_to_json(&channel::random_structured(d, *kraus, *leak, &mut rng).map_err(|e| e.to_string())?)
                }
                ChannelKind::InitializationFree => format::structured_to_json(
                    &channel::random_initialization_free(d, *kraus, &mut rng).map_err(|e| e.to_string())?,
                ),
                ChannelKind::Product => {
                    let ea = linalg::random_kraus_set(d.da(), *kraus, &mut rng);
                    let eb = linalg::random_kraus_set(d.db(), *kraus, &mut rng);
                    let ek = linalg::random_kraus_set(d.dk(), *kraus, &mut rng);
                    format::product_to_json(d, &ea, &eb, &ek)
                }
                ChannelKind::Computation => {
                    let fa = linalg::random_kraus_set(d.da(), rng.int_in(1, 3), &mut rng);
                    format::computation_to_json(
                        &channel::random_computation(d, fa, *kraus, *leak, &mut rng).map_err(|e| e.to_string())?,
                    )
                }
                ChannelKind::Raw => {
                    let k = linalg::random_kraus_set(d.ds(), *kraus, &mut rng);
                    format::raw_to_json(&channel::KrausChannel::new(d, k).map_err(|e| e.to_string())?)
                }
            };
            emit(out.as_deref(), &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_for(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_verify(suite: &str, run: &RunArgs, csv: Option<&Path>) -> CliResult<ExitCode> {
    if !harness::SUITES.contains(&suite) {
        return Err(format!("suite: unknown suite {suite:?}; expected one of {:?}", harness::SUITES));
    }
    let cfg = suite_config(run)?;
    let result = harness::run_suite(suite, &cfg).map_err(|e| e.to_string())?;
    let s = &result.summary;
    emit(run.out.as_deref(), &(s.to_json() + "\n"))?;
    if let Some(path) = csv {
        emit(Some(path), &harness::reports_csv(&result.reports))?;
    }
    eprintln!(
        "{}: {} trials, {} failures, {:.2}s",
        s.suite,
        s.trials,
        s.failures,
        s.wall_time.as_secs_f64()
    );
    Ok(exit_for(s.failures))
}

fn cmd_sweep(
    run: &RunArgs,
    epsilons: &[f64],
    leaks: &[f64],
    csv: Option<&Path>,
    cells_csv: Option<&Path>,
) -> CliResult<ExitCode> {
    let cfg = suite_config(run)?;
    let result = harness::sweep_init_error(&cfg, epsilons, leaks).map_err(|e| e.to_string())?;
    emit(run.out.as_deref(), &(result.summary.to_json() + "\n"))?;
    if let Some(path) = csv {
        emit(Some(path), &harness::sweep_csv(&result.rows))?;
    }
    if let Some(path) = cells_csv {
        emit(Some(path), &harness::sweep_cells_csv(&result.cells))?;
    }
    eprintln!(
        "sweep: {} cells, {} failures, {:.2}s",
        result.cells.len(),
        result.summary.failures,
        result.summary.wall_time.as_secs_f64()
    );
    Ok(exit_for(result.summary.failures))
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match &cli.command {
        Command::Fa {
            state1,
            state2,
            channel,
            out,
        } => cmd_fa(state1, state2, channel.as_deref(), out.as_deref()),
        Command::Fidelity { state1, state2, out } => cmd_fidelity(state1, state2, out.as_deref()),
        Command::Gen { what } => cmd_gen(what),
        Command::Verify { suite, run, csv } => cmd_verify(suite, run, csv.as_deref()),
        Command::Sweep {
            run,
            epsilons,
            leaks,
            csv,
            cells_csv,
        } => cmd_sweep(run, epsilons, leaks, csv.as_deref(), cells_csv.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
