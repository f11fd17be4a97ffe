//! Command-line driver.
//!
//! Exit codes: 0 success, 2 no feasible assignment, 3 bad input, 1 anything
//! else.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mrfnas::arch::{Backbone, TemplateSpec};
use mrfnas::diverse::{diverse_mbest, DiverseConfig};
use mrfnas::exact::clique_size;
use mrfnas::format::{
    load_template, read_factor_graph, read_profiles, render_factor_graph, render_profiles,
    render_samples, write_factor_graph,
};
use mrfnas::learn::{learn_factors, sample_chains, LearnConfig, LsbsConfig, Optimizer};
use mrfnas::oracle::oracle_from_spec;
use mrfnas::resource::{fit_latency, flops_pairwise, generate_profiles, mac_tables, ResourceGraph, ResourceUnit};
use mrfnas::search::{binary_search_gamma, synthetic_benchmark, SearchConfig};
use mrfnas::solver::{Solver, SolverKind};
use mrfnas::{Error, FactorGraph, Parallelism};

#[derive(Parser)]
#[command(name = "mrfnas", version, about = "MRF-based architecture search tools")]
struct Cli {
    /// Random seed; every subcommand accepts it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MAP assignment of a factor graph.
    SolveMap {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "mplp")]
        algo: SolverKind,
    },
    /// Diverse M-best assignments.
    Diverse {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long = "L", default_value_t = 10.0)]
        l: f64,
        #[arg(long, default_value = "mplp")]
        algo: SolverKind,
    },
    /// Resource-constrained search over a performance and a resource graph.
    Search {
        #[arg(long)]
        perf: PathBuf,
        #[arg(long)]
        res: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        target: f64,
        /// Unit of the resource graph and the target.
        #[arg(long, default_value = "ms")]
        unit: ResourceUnit,
        /// Unit the target is given in, when it differs from the model's.
        #[arg(long)]
        target_unit: Option<ResourceUnit>,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long = "L", default_value_t = 10.0)]
        l: f64,
        #[arg(long, default_value = "mplp")]
        algo: SolverKind,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        gamma_lo: f64,
    },
    /// Fit a pairwise latency model to profiling samples.
    FitLatency {
        #[arg(long)]
        template: String,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Synthetic profiling samples from a random hidden latency model.
    Profile {
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Also write the hidden model.
        #[arg(long)]
        hidden: Option<PathBuf>,
    },
    /// Gibbs samples from a factor graph.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        /// Samples per chain, one sweep apart.
        #[arg(long)]
        sweeps: usize,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Learn performance factors from an objective oracle.
    Learn {
        /// Template file or inline spec such as `unet:depth=2,base=8`.
        #[arg(long, conflicts_with = "skeleton")]
        template: Option<String>,
        /// Factor-graph file whose structure is used instead of a template.
        #[arg(long)]
        skeleton: Option<PathBuf>,
        #[arg(long)]
        oracle: String,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 10_000)]
        n_long: usize,
        #[arg(long, default_value_t = 10)]
        n_short: usize,
        #[arg(long, default_value_t = 1)]
        n_mc: usize,
        #[arg(long, default_value_t = 3e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        #[arg(long)]
        sgd: bool,
        /// Loss history output (CSV).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Search-space statistics of a backbone.
    Space {
        #[arg(long, default_value = "unet")]
        backbone: Backbone,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 64)]
        base: usize,
        #[arg(long)]
        emit_skeleton: Option<PathBuf>,
    },
    /// MAC count of one architecture.
    Flops {
        #[arg(long)]
        template: String,
        /// Comma-separated label indices.
        #[arg(long)]
        assignment: String,
        /// Also write the pairwise MAC model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Random enumerable search instance with brute-force ground truth.
    Benchmark {
        #[arg(long, default_value_t = 6)]
        vars: usize,
        #[arg(long, default_value_t = 3)]
        labels: usize,
        #[arg(long, default_value_t = 0.4)]
        edge_prob: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long)]
        dir: PathBuf,
    },
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<FactorGraph> {
    read_factor_graph(path).with_context(|| format!("reading {}", path.display()))
}

fn names(graph: &FactorGraph, template_names: Option<Vec<String>>) -> Vec<String> {
    template_names.unwrap_or_else(|| (0..graph.num_vars()).map(|v| format!("x{v}")).collect())
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.out;
    match cli.command {
        Command::SolveMap { graph, algo } => {
            let g = load_graph(&graph)?;
            let sol = Solver::new(algo).solve(&g)?;
            let x = &sol.best.assignment;
            let label_names: Vec<&str> = x.iter().enumerate().map(|(v, &l)| g.label_set(v).name(l)).collect();
            let text = format!(
                "# mrfnas-map 1\nalgo: {algo}\nassignment: {x}\nlabels: {}\nscore: {}\nupper_bound: {}\n",
                label_names.join(" "),
                sol.best.score,
                sol.upper_bound
            );
            emit(out, &text)
        }
        Command::Diverse { graph, m, l, algo } => {
            let g = load_graph(&graph)?;
            let set = diverse_mbest(
                &g,
                &DiverseConfig {
                    m,
                    divisor: l,
                    solver: Solver::new(algo),
                },
            )?;
            let mut order: Vec<usize> = (0..set.solutions.len()).collect();
            order.sort_by(|&a, &b| set.solutions[b].score.total_cmp(&set.solutions[a].score).then(a.cmp(&b)));
            let mut text = format!("# mrfnas-diverse 1\n# m={m} L={l} algo={algo}\nrank\tround\tscore\tpenalized\tduplicate_of\tassignment\n");
            for (rank, &i) in order.iter().enumerate() {
                let s = &set.solutions[i];
                let dup = s.duplicate_of.map_or("-".to_string(), |d| (d + 1).to_string());
                let _ = writeln!(
                    text,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    rank + 1,
                    i + 1,
                    s.score,
                    s.penalized_score,
                    dup,
                    s.assignment
                );
            }
            emit(out, &text)
        }
        Command::Search {
            perf,
            res,
            target,
            unit,
            target_unit,
            iters,
            m,
            l,
            algo,
            gamma_lo,
        } => {
            let p = load_graph(&perf)?;
            let r = ResourceGraph::new(load_graph(&res)?, unit);
            let cfg = SearchConfig {
                n_iter: iters,
                m,
                divisor: l,
                solver: Solver::new(algo),
                gamma_lo,
                ..SearchConfig::new(target, target_unit.unwrap_or(unit))
            };
            let report = binary_search_gamma(&p, &r, &cfg)?;
            emit(out, &(report.to_json()? + "\n"))
        }
        Command::FitLatency { template, samples } => {
            let t = load_template(&template)?;
            let (samples, header, unit) =
                read_profiles(&samples).with_context(|| format!("reading {}", samples.display()))?;
            if unit != ResourceUnit::Ms {
                bail!(Error::UnitMismatch {
                    model: ResourceUnit::Ms.to_string(),
                    target: unit.to_string()
                });
            }
            if header.len() != t.num_nodes() {
                bail!(Error::ShapeMismatch(format!(
                    "samples have {} columns, template has {} nodes",
                    header.len(),
                    t.num_nodes()
                )));
            }
            let fit = fit_latency(&t.to_factor_graph_skeleton(), &samples)?;
            eprintln!(
                "samples {}  parameters {}  rank {}{}  residual rms {:e}",
                samples.len(),
                fit.parameters,
                fit.rank,
                if fit.rank_deficient { " (deficient)" } else { "" },
                fit.residual_rms
            );
            let mut text = format!(
                "# latency fit: residual_rms={:e} rank={} parameters={} rank_deficient={}\n",
                fit.residual_rms, fit.rank, fit.parameters, fit.rank_deficient
            );
            text.push_str(&render_factor_graph(&fit.model.graph)?);
            emit(out, &text)
        }
        Command::Profile {
            template,
            count,
            noise,
            hidden,
        } => {
            let t = load_template(&template)?;
            let skeleton = t.to_factor_graph_skeleton();
            let oracle = mrfnas::oracle::random_pairwise(&skeleton, cli.seed, 1.0, 1.0)?;
            // positive latencies in milliseconds
            let model = ResourceGraph::new(oracle.ground_truth().negated(), ResourceUnit::Ms);
            if let Some(h) = hidden {
                write_factor_graph(&h, &model.graph)?;
            }
            let samples = generate_profiles(&model, noise, count, cli.seed.wrapping_add(1))?;
            let names: Vec<String> = t.nodes().iter().map(|n| n.name.clone()).collect();
            emit(out, &render_profiles(&samples, &names, ResourceUnit::Ms)?)
        }
        Command::Sample {
            graph,
            sweeps,
            burn_in,
            chains,
        } => {
            let g = load_graph(&graph)?;
            if chains == 0 {
                bail!(Error::InvalidConfig("need at least one chain".into()));
            }
            let seeds: Vec<u64> = (0..chains as u64).map(|c| cli.seed.wrapping_add(c)).collect();
            let all: Vec<_> = sample_chains(&g, &seeds, burn_in, sweeps, Parallelism::default())
                .into_iter()
                .flatten()
                .collect();
            emit(out, &render_samples(&all, &names(&g, None))?)
        }
        Command::Learn {
            template,
            skeleton,
            oracle,
            epochs,
            iters,
            n_long,
            n_short,
            n_mc,
            lr,
            warmup,
            sgd,
            history,
        } => {
            let sk = match (template, skeleton) {
                (Some(t), _) => load_template(&t)?.to_factor_graph_skeleton(),
                (None, Some(p)) => load_graph(&p)?.zeroed(),
                (None, None) => bail!(Error::InvalidConfig("give --template or --skeleton".into())),
            };
            let o = oracle_from_spec(&oracle, &sk)?;
            let cfg = LearnConfig {
                epochs,
                iters_per_epoch: iters,
                lsbs: LsbsConfig {
                    n_long,
                    n_short,
                    n_mc,
                    tau: 1.0,
                },
                step_size: lr,
                optimizer: if sgd { Optimizer::Sgd } else { Optimizer::Adam },
                warmup_epochs: warmup,
                seed: cli.seed,
                ..LearnConfig::default()
            };
            let outcome = learn_factors(&sk, &o, &cfg)?;
            if let Some(h) = history {
                let mut text = String::from("# mrfnas-loss-history 1\niteration,loss\n");
                for (i, l) in outcome.loss_history.iter().enumerate() {
                    let _ = writeln!(text, "{i},{l}");
                }
                fs::write(&h, text).with_context(|| format!("writing {}", h.display()))?;
            }
            eprintln!(
                "{} updates, {} sweeps, oracle {}",
                outcome.updates,
                outcome.sweeps,
                mrfnas::oracle::ObjectiveOracle::describe(&o)
            );
            emit(out, &render_factor_graph(&outcome.graph)?)
        }
        Command::Space {
            backbone,
            depth,
            base,
            emit_skeleton,
        } => {
            let t = TemplateSpec {
                base_width: base,
                ..TemplateSpec::new(backbone, depth)
            }
            .build()?;
            let sk = t.to_factor_graph_skeleton();
            if let Some(p) = emit_skeleton {
                write_factor_graph(&p, &sk)?;
            }
            let text = format!(
                "# mrfnas-space 1\nbackbone: {backbone}\ndepth: {depth}\nnodes: {}\nnormal: {}\ndown: {}\nup: {}\nedges: {}\nclique_size: {}\nspace_size: {}\n",
                t.num_nodes(),
                t.count_ops(mrfnas::arch::OpType::Normal),
                t.count_ops(mrfnas::arch::OpType::Down),
                t.count_ops(mrfnas::arch::OpType::Up),
                t.edges().len(),
                clique_size(&sk),
                t.space_size()
            );
            emit(out, &text)
        }
        Command::Flops {
            template,
            assignment,
            model,
        } => {
            let t = load_template(&template)?;
            let x = mrfnas::format::parse_assignment(&assignment)?;
            let cfg = t.decode(&x)?;
            let pairwise = mac_tables(&t)?.total(&x);
            if let Some(p) = model {
                write_factor_graph(&p, &flops_pairwise(&t)?.graph)?;
            }
            let text = format!("# mrfnas-flops 1\n{cfg}\npairwise_total: {pairwise}\ndirect_total: {}\n", cfg.total_macs);
            emit(out, &text)
        }
        Command::Benchmark {
            vars,
            labels,
            edge_prob,
            noise,
            dir,
        } => {
            let inst = synthetic_benchmark(cli.seed, vars, labels, edge_prob, noise)?;
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write_factor_graph(&dir.join("perf.fg"), &inst.perf)?;
            write_factor_graph(&dir.join("res.fg"), &inst.res.graph)?;
            let gt = serde_json::json!({
                "format": "mrfnas-ground-truth 1",
                "seed": cli.seed,
                "unit": inst.res.unit,
                "targets": inst.ground_truth,
            });
            let text = serde_json::to_string_pretty(&gt)? + "\n";
            fs::write(dir.join("ground_truth.json"), &text)?;
            emit(out, &text)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Infeasible { .. }) => 2,
        Some(
            Error::Parse { .. }
            | Error::Io(_)
            | Error::InvalidConfig(_)
            | Error::InvalidAssignment(_)
            | Error::ShapeMismatch(_)
            | Error::StructureMismatch(_)
            | Error::UnitMismatch { .. }
            | Error::EmptyLabelSet { .. }
            | Error::VariableOutOfRange { .. }
            | Error::DuplicateEdge(..)
            | Error::SelfLoop(_)
            | Error::NonFinite(_)
            | Error::Empty(_)
            | Error::SpaceTooLarge { .. },
        ) => 3,
        Some(_) => 1,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
