//! Command-line pipeline for robust multiple rotation averaging: synthetic
//! data generation, spanning-tree initialization, training and inference of
//! the attention message-passing solver, classical baselines, metrics, and
//! runtime benchmarks. Steps compose through files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rotavg_core::baselines::{irls_average, weiszfeld_l1, RobustCost};
use rotavg_core::error::Error;
use rotavg_core::eval;
use rotavg_core::graph::{read_estimates, spt_initialize, write_estimates, ViewGraph};
use rotavg_core::mpnn::{self, ModelArch};
use rotavg_core::synth::{generate, DatasetSpec, SynthConfig};
use rotavg_core::train::{
    load_graph_dir, train, write_training_log, Checkpoint, LossAggregation, LrSchedule,
    TrainConfig,
};
use rotavg_core::Result;

#[derive(Parser, Debug)]
#[command(
    name = "rotavg",
    version,
    about = "Robust multiple rotation averaging on camera view-graphs"
)]
struct Cli {
    /// Seed for all randomness in this invocation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for embarrassingly parallel work (dataset generation).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Verbose logging (equivalent to ROTAVG_LOG=debug).
    #[arg(long, global = true, default_value_t = false)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic view-graphs with ground truth and outlier labels.
    Gen(GenArgs),
    /// Initialize node rotations with the shortest-path-tree method.
    Init(InitArgs),
    /// Train the attention message-passing solver.
    Train(TrainArgs),
    /// Run trained-model inference on a graph.
    Infer(InferArgs),
    /// Run a classical baseline solver.
    Baseline(BaselineArgs),
    /// Evaluate an estimate file against ground truth.
    Eval(EvalArgs),
    /// Measure solver runtimes across graph sizes.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Output directory for graph and metadata files.
    #[arg(long)]
    out: PathBuf,
    /// Number of graphs.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Node count (lower bound when --nodes-max is given).
    #[arg(long, default_value_t = 100)]
    nodes: usize,
    /// Upper bound for per-graph node-count jitter.
    #[arg(long)]
    nodes_max: Option<usize>,
    /// Lattice radius: node i connects to j when |i - j| <= radius.
    #[arg(long, default_value_t = 3)]
    radius: usize,
    /// Probability of a chord between each non-lattice node pair.
    #[arg(long, default_value_t = 0.01)]
    chord_prob: f64,
    /// Inlier noise std-dev in degrees.
    #[arg(long, default_value_t = 5.0)]
    sigma_deg: f64,
    /// Fraction of edges replaced by uniform random rotations.
    #[arg(long, default_value_t = 0.0)]
    outlier_frac: f64,
}

#[derive(Args, Debug)]
struct InitArgs {
    /// Input view-graph file.
    #[arg(long)]
    graph: PathBuf,
    /// Output estimate file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory of training graphs (*.txt, with ground truth).
    #[arg(long)]
    data: PathBuf,
    /// Directory of held-out validation graphs.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output checkpoint path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Output training-log CSV path.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Message-passing rounds unrolled during training and used at inference.
    #[arg(long, default_value_t = 4)]
    rounds: usize,
    /// Weight of the absolute term in the loss.
    #[arg(long, default_value_t = 0.25)]
    abs_weight: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = LrScheduleArg::Cosine)]
    lr_schedule: LrScheduleArg,
    /// How per-round losses combine into the per-graph loss.
    #[arg(long, value_enum, default_value_t = LossAggArg::Mean)]
    loss_agg: LossAggArg,
    /// Randomize the global frame of each training step.
    #[arg(long, default_value_t = false)]
    gauge_augment: bool,
    /// Hidden widths of the message net, comma separated.
    #[arg(long, default_value = "64,64", value_parser = parse_dims)]
    message_hidden: Vec<usize>,
    /// Message vector dimensionality.
    #[arg(long, default_value_t = 32)]
    message_dim: usize,
    /// Hidden widths of the attention net, comma separated.
    #[arg(long, default_value = "32", value_parser = parse_dims)]
    attention_hidden: Vec<usize>,
    /// Hidden widths of the readout net, comma separated.
    #[arg(long, default_value = "64", value_parser = parse_dims)]
    readout_hidden: Vec<usize>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Trained checkpoint (JSON).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output estimate file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum)]
    solver: BaselineSolver,
    /// Output estimate file.
    #[arg(long)]
    out: PathBuf,
    /// Sweep budget (per cost stage for irls).
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Convergence tolerance on the largest node update, radians.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Graph file with ground-truth rotations.
    #[arg(long)]
    graph: PathBuf,
    /// Estimate file to score.
    #[arg(long)]
    est: PathBuf,
    /// Output metrics CSV.
    #[arg(long)]
    out: PathBuf,
    /// Graph label written into the CSV.
    #[arg(long, default_value = "graph")]
    label: String,
    /// Solver name written into the CSV.
    #[arg(long, default_value = "unknown")]
    solver: String,
    /// Solve seconds to record (measured by the producing command).
    #[arg(long, default_value_t = 0.0)]
    seconds: f64,
    /// Also write a per-node degree-vs-error CSV here.
    #[arg(long)]
    degree_error: Option<PathBuf>,
    /// Stage label for the degree-vs-error rows.
    #[arg(long, default_value = "solved")]
    stage: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Output runtime CSV.
    #[arg(long)]
    out: PathBuf,
    /// Graph sizes, comma separated.
    #[arg(long, default_value = "100,400,1000", value_parser = parse_dims)]
    sizes: Vec<usize>,
    /// Solvers to time, comma separated (spt, attention, weiszfeld, irls).
    #[arg(long, default_value = "spt,attention,weiszfeld,irls")]
    solvers: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Checkpoint for the attention solver (untrained default model if omitted).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    radius: usize,
    /// Expected extra chords per node (per-pair probability is factor/n).
    #[arg(long, default_value_t = 2.0)]
    chord_factor: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_deg: f64,
    #[arg(long, default_value_t = 0.15)]
    outlier_frac: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineSolver {
    Weiszfeld,
    Irls,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LrScheduleArg {
    Cosine,
    Constant,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossAggArg {
    Mean,
    Sum,
    Final,
}

fn parse_dims(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .filter(|t| !t.is_empty())
        .map(|t| t.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn load_graph(path: &PathBuf) -> Result<ViewGraph> {
    let file = std::fs::File::open(path)?;
    ViewGraph::parse(std::io::BufReader::new(file))
}

fn write_est_file(path: &PathBuf, values: &[rotavg_core::UnitQuaternion]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_estimates(&mut w, values)?;
    use std::io::Write;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    log::info!("resolved config: {cli:?}");
    match cli.command {
        Command::Gen(args) => {
            let spec = DatasetSpec {
                template: SynthConfig {
                    node_count: args.nodes,
                    base_connectivity: args.radius,
                    long_edge_prob: args.chord_prob,
                    noise_sigma_deg: args.sigma_deg,
                    outlier_fraction: args.outlier_frac,
                    seed: cli.seed,
                },
                count: args.count,
                node_count_min: args.nodes,
                node_count_max: args.nodes_max.unwrap_or(args.nodes),
            };
            let paths = rotavg_core::synth::generate_dataset(&spec, &args.out, cli.threads)?;
            log::info!("wrote {} graphs to {}", paths.len(), args.out.display());
        }
        Command::Init(args) => {
            let graph = load_graph(&args.graph)?;
            let init = spt_initialize(&graph)?;
            write_est_file(&args.out, &init)?;
        }
        Command::Train(args) => {
            let train_graphs = load_graph_dir(&args.data)?;
            let val_graphs = match &args.val {
                Some(dir) => load_graph_dir(dir)?,
                None => Vec::new(),
            };
            let arch = ModelArch {
                message_hidden: args.message_hidden.clone(),
                message_dim: args.message_dim,
                attention_hidden: args.attention_hidden.clone(),
                readout_hidden: args.readout_hidden.clone(),
            };
            let cfg = TrainConfig {
                epochs: args.epochs,
                rounds: args.rounds,
                absolute_weight: args.abs_weight,
                learning_rate: args.lr,
                lr_schedule: match args.lr_schedule {
                    LrScheduleArg::Cosine => LrSchedule::Cosine,
                    LrScheduleArg::Constant => LrSchedule::Constant,
                },
                loss_aggregation: match args.loss_agg {
                    LossAggArg::Mean => LossAggregation::Mean,
                    LossAggArg::Sum => LossAggregation::Sum,
                    LossAggArg::Final => LossAggregation::Final,
                },
                gauge_augmentation: args.gauge_augment,
                seed: cli.seed,
            };
            let out = train(&train_graphs, &val_graphs, &arch, &cfg)?;
            out.checkpoint.save(&args.out)?;
            if let Some(log_path) = &args.log {
                let mut w = std::io::BufWriter::new(std::fs::File::create(log_path)?);
                write_training_log(&mut w, &out.log)?;
            }
            log::info!(
                "checkpoint saved to {} (best epoch {:?})",
                args.out.display(),
                out.best_epoch
            );
        }
        Command::Infer(args) => {
            let graph = load_graph(&args.graph)?;
            let ckpt = Checkpoint::load(&args.checkpoint)?;
            let start = std::time::Instant::now();
            let values = mpnn::infer(&graph, &ckpt.model)?;
            log::info!("inference took {:.6} s", start.elapsed().as_secs_f64());
            write_est_file(&args.out, &values)?;
        }
        Command::Baseline(args) => {
            let graph = load_graph(&args.graph)?;
            let init = spt_initialize(&graph)?;
            let start = std::time::Instant::now();
            let outcome = match args.solver {
                BaselineSolver::Weiszfeld => {
                    weiszfeld_l1(&graph, &init, args.max_iters, args.tol)?
                }
                BaselineSolver::Irls => irls_average(
                    &graph,
                    &init,
                    &[RobustCost::L1, RobustCost::LHalf],
                    args.max_iters,
                    args.tol,
                )?,
            };
            log::info!(
                "solver took {:.6} s (converged: {})",
                start.elapsed().as_secs_f64(),
                outcome.converged
            );
            if !outcome.converged {
                log::warn!("solver hit the sweep budget before reaching tolerance");
            }
            write_est_file(&args.out, &outcome.values)?;
        }
        Command::Eval(args) => {
            let graph = load_graph(&args.graph)?;
            let truth = graph
                .ground_truth
                .clone()
                .ok_or(Error::MissingGroundTruth)?;
            let file = std::fs::File::open(&args.est)?;
            let est = read_estimates(std::io::BufReader::new(file), graph.node_count())?;
            let report = eval::metrics(&est, &truth, graph.edges().len(), args.seconds)?;
            let mut csv = String::new();
            csv.push_str(eval::METRICS_CSV_HEADER);
            csv.push('\n');
            csv.push_str(&report.csv_row(&args.label, &args.solver));
            csv.push('\n');
            std::fs::write(&args.out, csv)?;
            if let Some(path) = &args.degree_error {
                let rows = eval::degree_error_table(&graph, &est, &args.stage)?;
                let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                eval::write_degree_error_csv(&mut w, &rows)?;
            }
            println!(
                "{}: mean {:.3} median {:.3} rms {:.3} %>30 {:.3}",
                args.solver, report.mean_deg, report.median_deg, report.rms_deg, report.pct_gt30
            );
        }
        Command::Bench(args) => {
            let model = match &args.checkpoint {
                Some(path) => Checkpoint::load(path)?.model,
                None => mpnn::MraModel::new(&ModelArch::default(), 4, 0.25, cli.seed),
            };
            let solvers: Vec<&str> = args.solvers.split(',').map(|s| s.trim()).collect();
            let mut rows = Vec::new();
            for &size in &args.sizes {
                let cfg = SynthConfig {
                    node_count: size,
                    base_connectivity: args.radius,
                    long_edge_prob: (args.chord_factor / size as f64).min(1.0),
                    noise_sigma_deg: args.sigma_deg,
                    outlier_fraction: args.outlier_frac,
                    seed: cli.seed.wrapping_add(size as u64),
                };
                let graph = generate(&cfg)?.graph;
                let init = spt_initialize(&graph)?;
                for &solver in &solvers {
                    let median_seconds = match solver {
                        "spt" => eval::time_median(args.repeats, || spt_initialize(&graph)).0,
                        "attention" => {
                            eval::time_median(args.repeats, || -> Result<_> {
                                let state = rotavg_core::mpnn::IterationState::from_rotations(
                                    &graph,
                                    init.clone(),
                                )?;
                                let nbr = rotavg_core::graph::relative_neighborhood_sizes(&graph);
                                let mut cur = state;
                                for _ in 0..model.rounds {
                                    cur = rotavg_core::mpnn::forward_iteration(
                                        &graph, &cur, &model, &nbr,
                                    )?;
                                }
                                Ok(cur)
                            })
                            .0
                        }
                        "weiszfeld" => {
                            eval::time_median(args.repeats, || {
                                weiszfeld_l1(&graph, &init, 100, 1e-4)
                            })
                            .0
                        }
                        "irls" => {
                            eval::time_median(args.repeats, || {
                                irls_average(
                                    &graph,
                                    &init,
                                    &[RobustCost::L1, RobustCost::LHalf],
                                    100,
                                    1e-4,
                                )
                            })
                            .0
                        }
                        other => {
                            return Err(Error::InvalidConfig(format!("unknown solver '{other}'")))
                        }
                    };
                    rows.push(eval::BenchRow {
                        n_nodes: graph.node_count(),
                        n_edges: graph.edges().len(),
                        solver: solver.to_string(),
                        median_seconds,
                        repeats: args.repeats,
                    });
                }
            }
            let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
            eval::write_bench_csv(&mut w, &rows)?;
            for r in &rows {
                println!(
                    "{} nodes, {}: {:.6} s (median of {})",
                    r.n_nodes, r.solver, r.median_seconds, r.repeats
                );
            }
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFiniteLoss { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("ROTAVG_LOG", if cli.verbose { "debug" } else { "warn" }),
    );
    builder.format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
