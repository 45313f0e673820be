use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand};

use layerlr::harness::{self, ExperimentConfig, Variant};
use layerlr::landscape::{self, Landscape, DEFAULT_ESCAPE_RADIUS, DEFAULT_MAX_ITER};
use layerlr::nn::{self, Architecture};
use layerlr::optim::make_optimizer;
use layerlr::{rng, Error, Result, Tensor};

/// Layer-specific adaptive learning rates: training runs, seed tables,
/// saddle benchmarks and gradient checks.
#[derive(Parser)]
#[command(name = "layerlr", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one seed and print per-checkpoint records as CSV.
    Train {
        /// Config file (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write records here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config overrides, `--key=value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run every configured variant over every seed and write the summary CSV
    /// to the configured `output`.
    Table {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Saddle-escape iteration counts as CSV.
    Bench {
        #[arg(long, default_value = "quadratic-saddle")]
        landscape: String,
        /// Offsets from the saddle.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
        starts: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1")]
        lrs: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "sgd,ours-sgd")]
        optimizers: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_ESCAPE_RADIUS)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backprop gradients with central finite differences.
    Gradcheck {
        /// `lenet`, `cifar-quick` or `mlp:<widths>[/activation]`.
        #[arg(long, default_value = "mlp:4,8,3/tanh")]
        arch: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        #[arg(long, default_value_t = nn::DEFAULT_EPS)]
        eps: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Check only every n-th parameter.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Denominator floor of the relative error.
        #[arg(long, default_value_t = nn::RELATIVE_ERROR_FLOOR)]
        floor: f64,
    },
    /// Download a dataset with curl (not used by the library itself).
    FetchData {
        /// `mnist` or `cifar10`.
        dataset: String,
        /// Target directory; defaults to `$LAYERLR_DATA_DIR/<dataset>` or `data/<dataset>`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p, overrides),
        None => {
            let mut map = std::collections::BTreeMap::new();
            map.extend(harness::parse_overrides(overrides)?);
            ExperimentConfig::from_pairs(map)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout()),
    })
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train {
            config,
            seed,
            out,
            overrides,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let outcome = harness::run_experiment(&cfg, seed)?;
            harness::write_records_csv(&outcome, output(out.as_deref())?)?;
            match outcome.abort {
                Some(d) => Err(d.to_error()),
                None => Ok(()),
            }
        }
        Cmd::Table { config, overrides } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let (table, _) = harness::repeat_runs(&cfg, &cfg.seeds)?;
            harness::emit_csv(&table, &cfg.output)?;
            harness::write_summary_csv(&table, std::io::stdout())?;
            for a in &table.aborted {
                eprintln!(
                    "aborted: variant {} seed {} at iteration {}: {}",
                    a.variant, a.diagnostic.seed, a.diagnostic.iteration, a.diagnostic.message
                );
            }
            match table.aborted.first() {
                Some(a) => Err(a.diagnostic.to_error()),
                None => Ok(()),
            }
        }
        Cmd::Bench {
            landscape: name,
            starts,
            lrs,
            optimizers,
            radius,
            max_iter,
            out,
        } => {
            let land: Landscape = name.parse()?;
            let variants: Vec<Variant> = optimizers.iter().map(|s| s.parse()).collect::<Result<_>>()?;
            let mut w = output(out.as_deref())?;
            let io = |e: std::io::Error| Error::io("<bench output>", e);
            writeln!(w, "landscape,optimizer,start,lr,escape_iterations").map_err(io)?;
            for &y0 in &starts {
                for &lr in &lrs {
                    for v in &variants {
                        let mut opt = make_optimizer(v.kind, Default::default(), v.layerwise)?;
                        let outcome =
                            landscape::run_escape_trial(&mut opt, &land, &land.start_point(y0), lr, radius, max_iter)?;
                        writeln!(
                            w,
                            "{land},{v},{},{},{}",
                            harness::format_sig6(y0),
                            harness::format_sig6(lr),
                            outcome.iterations()
                        )
                        .map_err(io)?;
                    }
                }
            }
            Ok(())
        }
        Cmd::Gradcheck {
            arch,
            seed,
            batch,
            eps,
            tolerance,
            stride,
            floor,
        } => {
            let arch: Architecture = arch.parse()?;
            let net = arch.build(seed)?;
            let mut shape = vec![batch];
            shape.extend(arch.input_shape());
            let len: usize = shape.iter().product();
            let mut r = rng::derived(seed, rng::PURPOSE_SYNTH, 1);
            let inputs = Tensor::new(shape, (0..len).map(|_| rng::symmetric(&mut r, 1.0)).collect())?;
            let labels: Vec<usize> = (0..batch).map(|i| i % net.output_width()).collect();
            let targets = nn::one_hot(&labels, net.output_width());
            let report = nn::check_gradients_with(&net, &inputs, &targets, eps, stride.max(1), floor)?;
            println!(
                "{arch}: {} parameters checked, {} skipped near kinks, max relative error {:.3e}",
                report.checked, report.skipped_kinks, report.max_rel_error
            );
            if report.max_rel_error < tolerance {
                Ok(())
            } else {
                Err(Error::Numeric {
                    iteration: None,
                    message: format!(
                        "max relative error {:.3e} exceeds {tolerance:e}; worst (layer, tensor, index, analytic, numeric) = {:?}",
                        report.max_rel_error, report.worst
                    ),
                })
            }
        }
        Cmd::FetchData { dataset, dir } => {
            let dir = dir.unwrap_or_else(|| match std::env::var_os(harness::DATA_DIR_ENV) {
                Some(root) => PathBuf::from(root).join(&dataset),
                None => PathBuf::from("data").join(&dataset),
            });
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            match dataset.as_str() {
                "mnist" => {
                    for name in [
                        "train-images-idx3-ubyte",
                        "train-labels-idx1-ubyte",
                        "t10k-images-idx3-ubyte",
                        "t10k-labels-idx1-ubyte",
                    ] {
                        let gz = dir.join(format!("{name}.gz"));
                        let url = format!("https://ossci-datasets.s3.amazonaws.com/mnist/{name}.gz");
                        shell(Command::new("curl").arg("-fsSL").arg("-o").arg(&gz).arg(&url))?;
                        shell(Command::new("gunzip").arg("-f").arg(&gz))?;
                    }
                }
                "cifar10" => {
                    let tgz = dir.join("cifar-10-binary.tar.gz");
                    shell(
                        Command::new("curl")
                            .arg("-fsSL")
                            .arg("-o")
                            .arg(&tgz)
                            .arg("https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"),
                    )?;
                    shell(
                        Command::new("tar")
                            .arg("-xzf")
                            .arg(&tgz)
                            .arg("-C")
                            .arg(&dir)
                            .arg("--strip-components=1"),
                    )?;
                }
                other => return Err(Error::Usage(format!("unknown dataset `{other}`"))),
            }
            println!("{dataset} ready in {}", dir.display());
            Ok(())
        }
    }
}

fn shell(cmd: &mut Command) -> Result<()> {
    let status = cmd
        .status()
        .map_err(|e| Error::io(cmd.get_program(), e))?;
    if status.success() {
        Ok(())
    } else {
        Err(Error::Io {
            path: PathBuf::from(cmd.get_program()),
            source: std::io::Error::other(format!("{:?} exited with {status}", cmd)),
        })
    }
}
