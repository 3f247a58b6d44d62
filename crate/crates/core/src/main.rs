use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use upart_core::bench::{
    cmd_bench, performance_profile, read_records, write_records, BenchConfig, BenchPlan, Instance,
};
use upart_core::fm::Variant;
use upart_core::io::{read_metis, write_metis, write_partition, Symmetry};
use upart_core::pipeline::{partition, PartitionConfig, Preset};
use upart_core::testkit::{Family, GeneratorSpec, HubClusterSpec};
use upart_core::{Error, Runtime};

#[derive(Parser)]
#[command(
    name = "upart",
    version,
    about = "Multilevel graph partitioner with unconstrained refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a METIS graph file.
    Partition {
        graph: PathBuf,
        #[arg(short, long)]
        k: usize,
        #[arg(short, long, default_value_t = 0.03)]
        epsilon: f64,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "unconstrained")]
        preset: String,
        #[arg(long, default_value = "penalized")]
        variant: String,
        /// Output file; defaults to `<graph>.part.<k>`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Add missing reverse edges instead of rejecting the file.
        #[arg(long)]
        symmetrize: bool,
    },
    /// Run every config on every graph, k and seed and write a CSV.
    Bench {
        #[arg(long, num_args = 1.., required = true)]
        graphs: Vec<PathBuf>,
        #[arg(short, long, value_delimiter = ',', default_value = "2")]
        k: Vec<usize>,
        /// Config ids such as `unconstrained`, `constrained` or
        /// `unconstrained:constant-penalty`.
        #[arg(long, value_delimiter = ',', default_value = "unconstrained,constrained")]
        configs: Vec<String>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(short, long, default_value_t = 0.03)]
        epsilon: f64,
        #[arg(short, long, default_value_t = 1)]
        workers: usize,
        /// Seconds per run.
        #[arg(long, default_value_t = 3600.0)]
        time_limit: f64,
        #[arg(short, long, default_value = "results.csv")]
        output: PathBuf,
        /// Where partition files go; defaults to a directory next to the CSV.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Performance profile of a bench CSV.
    Profile {
        records: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
    },
    /// Write a synthetic graph in METIS format.
    Generate {
        #[arg(value_enum)]
        family: FamilyArg,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(short, long, default_value_t = 4000)]
        m: usize,
        #[arg(long, default_value_t = 2.5)]
        exponent: f64,
        #[arg(long, default_value_t = 8.0)]
        avg_degree: f64,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 32)]
        cols: usize,
        #[arg(long, default_value_t = 20)]
        hubs: usize,
        #[arg(long, default_value_t = 50)]
        leaves: usize,
        #[arg(long, default_value_t = 0.9)]
        density: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    HubCluster,
    PowerLaw,
    Grid,
    Random,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) => 1,
        Error::InvalidArgument(_) | Error::TooLarge(_) => 2,
        _ => 3,
    }
}

fn load(path: &Path, symmetrize: bool) -> upart_core::Result<upart_core::Graph> {
    let symmetry = if symmetrize {
        Symmetry::Symmetrize
    } else {
        Symmetry::Strict
    };
    read_metis(path, symmetry)
}

fn ms(d: Duration) -> String {
    format!("{:.1}", d.as_secs_f64() * 1e3)
}

fn run(cli: Cli) -> upart_core::Result<()> {
    match cli.command {
        Command::Partition {
            graph,
            k,
            epsilon,
            seed,
            workers,
            preset,
            variant,
            output,
            symmetrize,
        } => {
            let preset: Preset = preset.parse()?;
            let variant: Variant = variant.parse()?;
            let g = load(&graph, symmetrize)?;
            let config = PartitionConfig::with_preset(k, epsilon, preset)
                .variant(variant)
                .seed(seed);
            let result = partition(&g, &config, &Runtime::new(workers))?;
            let output = output.unwrap_or_else(|| PathBuf::from(format!("{}.part.{k}", graph.display())));
            write_partition(&result.blocks, &output)?;
            let t = &result.timings;
            println!(
                "cut={} imbalance={:.4} balanced={} levels={} coarsen_ms={} initial_ms={} lp_ms={} fm_ms={} rebalance_ms={} total_ms={} output={}",
                result.cut,
                result.imbalance,
                result.balanced,
                result.levels,
                ms(t.coarsen),
                ms(t.initial),
                ms(t.lp),
                ms(t.fm),
                ms(t.rebalance),
                ms(t.total),
                output.display()
            );
            Ok(())
        }
        Command::Bench {
            graphs,
            k,
            configs,
            seeds,
            epsilon,
            workers,
            time_limit,
            output,
            work_dir,
        } => {
            let configs = configs
                .iter()
                .map(|id| BenchConfig::parse(id, workers))
                .collect::<upart_core::Result<Vec<_>>>()?;
            let instances = graphs
                .iter()
                .map(|p| {
                    Ok(Instance {
                        name: p
                            .file_stem()
                            .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into()),
                        graph: load(p, false)?,
                    })
                })
                .collect::<upart_core::Result<Vec<_>>>()?;
            if !(time_limit >= 0.0 && time_limit.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad time limit {time_limit}")));
            }
            let work_dir = work_dir.unwrap_or_else(|| output.with_extension("parts"));
            let plan = BenchPlan {
                instances,
                ks: k,
                configs,
                seeds: (0..seeds).collect(),
                epsilon,
                time_limit: Duration::from_secs_f64(time_limit),
                work_dir,
            };
            let records = cmd_bench(&plan)?;
            let file = File::create(&output).map_err(|e| Error::io(&output, e))?;
            write_records(&records, BufWriter::new(file))?;
            println!("{} records written to {}", records.len(), output.display());
            Ok(())
        }
        Command::Profile { records, thetas } => {
            let file = File::open(&records).map_err(|e| Error::io(&records, e))?;
            let records = read_records(BufReader::new(file))?;
            let profile = performance_profile(&records, thetas.as_deref())?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            let io_err = |e| Error::io("<stdout>", e);
            writeln!(out, "config,theta,fraction").map_err(io_err)?;
            for curve in &profile.curves {
                for (theta, fraction) in &curve.points {
                    writeln!(out, "{},{theta},{fraction}", curve.config).map_err(io_err)?;
                }
            }
            Ok(())
        }
        Command::Generate {
            family,
            output,
            seed,
            n,
            m,
            exponent,
            avg_degree,
            rows,
            cols,
            hubs,
            leaves,
            density,
        } => {
            let family = match family {
                FamilyArg::HubCluster => Family::HubCluster(HubClusterSpec {
                    density,
                    ..HubClusterSpec::new(hubs, leaves)
                }),
                FamilyArg::PowerLaw => Family::PowerLaw {
                    n,
                    exponent,
                    avg_degree,
                },
                FamilyArg::Grid => Family::Grid { rows, cols },
                FamilyArg::Random => Family::Random { n, m, connected: false },
            };
            let g = GeneratorSpec::new(family, seed).generate()?;
            write_metis(&g, &output)?;
            println!(
                "n={} m={} irregularity={:.3} output={}",
                g.n(),
                g.m(),
                g.degree_irregularity(),
                output.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
