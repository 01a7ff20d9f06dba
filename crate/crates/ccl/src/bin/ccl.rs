//! Command-line front end: synthetic data generation, training (full method,
//! two-stage baseline, ablation grids), standalone evaluation and clustering,
//! and the finite-difference gradient-check suite.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

use ccl::clustering::{bcubed_f, dbscan, nmi, DbscanParams};
use ccl::config::{RunManifest, TrainConfig};
use ccl::data::{self, FeatureRecord};
use ccl::encoder::{finite_diff_check, Activation, Encoder, EncoderGrads};
use ccl::evaluator::{evaluate, EvalItem};
use ccl::fourier::AMPLITUDE_EPS;
use ccl::linalg::Vector;
use ccl::losses::{
    ccl_loss, cross_entropy, fourier_ce, triplet_loss, ClassifierHead, ContrastiveBatch,
    ContrastivePair,
};
use ccl::schedule::PolicyKind;
use ccl::trainer::{self, write_jsonl};
use ccl::{Error, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ccl", version, about = "Cluster-wise contrastive domain adaptation trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file (dotted keys); defaults apply otherwise
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trailing `--key value` or `--key=value` overrides for any config key
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-domain dataset as feature CSVs
    Generate {
        /// Output directory (source.csv, target.csv, target_truth.csv)
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the full method and write metrics, model, and manifest
    Train {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the two-stage baseline (hard switch, no contrastive/Fourier terms)
    Baseline {
        #[arg(long, default_value = "run-baseline")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run an ablation grid and write a CSV summary
    Ablate {
        /// Which grid: queue | policy | loss_weights
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        /// Number of paired seeds per cell
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a saved model on query/gallery feature CSVs (labels required)
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_rank: usize,
    },
    /// Cluster a feature CSV with DBSCAN and report stats
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        min_pts: usize,
        /// Optional CSV of per-row cluster assignments
        #[arg(long)]
        assignments: Option<PathBuf>,
    },
    /// Finite-difference gradient checks over every loss path
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Failure threshold on the max relative error
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } | Error::LabelOutOfRange { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    let mut it = args.overrides.iter();
    while let Some(tok) = it.next() {
        let Some(stripped) = tok.strip_prefix("--") else {
            return Err(Error::Config(format!(
                "expected '--key value' override, got '{tok}'"
            )));
        };
        let (key, value) = match stripped.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| {
                    Error::Config(format!("missing value for override '--{stripped}'"))
                })?;
                (stripped.to_string(), v.clone())
            }
        };
        cfg.apply_kv(&key, &value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Generate { out, cfg } => cmd_generate(&out, &cfg),
        Command::Train { out, cfg } => cmd_train(&out, &cfg, false),
        Command::Baseline { out, cfg } => cmd_train(&out, &cfg, true),
        Command::Ablate {
            grid,
            out,
            seeds,
            cfg,
        } => cmd_ablate(&grid, &out, seeds, &cfg),
        Command::Eval {
            model,
            query,
            gallery,
            max_rank,
        } => cmd_eval(&model, &query, &gallery, max_rank),
        Command::Cluster {
            input,
            eps,
            min_pts,
            assignments,
        } => cmd_cluster(&input, eps, min_pts, assignments.as_deref()),
        Command::Gradcheck { seeds, tolerance } => cmd_gradcheck(seeds, tolerance),
    }
}

fn cmd_generate(out: &Path, args: &ConfigArgs) -> Result<ExitCode> {
    let cfg = resolve_config(args)?;
    std::fs::create_dir_all(out)?;
    let (source, target, hidden) = data::generate(&cfg.data)?;
    let dim = cfg.data.input_dim;

    let src_records: Vec<FeatureRecord> = source
        .iter()
        .map(|s| FeatureRecord {
            instance_id: s.instance_id,
            camera_id: s.camera_id,
            label: Some(s.label),
            feature: s.input.clone(),
        })
        .collect();
    let tgt_records: Vec<FeatureRecord> = target
        .iter()
        .map(|t| FeatureRecord {
            instance_id: t.instance_id,
            camera_id: t.camera_id,
            label: None,
            feature: t.input.clone(),
        })
        .collect();
    let truth_records: Vec<FeatureRecord> = target
        .iter()
        .zip(hidden.for_evaluation())
        .map(|(t, &l)| FeatureRecord {
            instance_id: t.instance_id,
            camera_id: t.camera_id,
            label: Some(l),
            feature: t.input.clone(),
        })
        .collect();
    data::write_features(&out.join("source.csv"), dim, &src_records)?;
    data::write_features(&out.join("target.csv"), dim, &tgt_records)?;
    data::write_features(&out.join("target_truth.csv"), dim, &truth_records)?;
    RunManifest {
        config: cfg,
        command: command_line(),
        inputs: vec![],
        outputs: vec![
            "source.csv".into(),
            "target.csv".into(),
            "target_truth.csv".into(),
        ],
    }
    .write(&out.join("manifest.cfg"))?;
    println!(
        "wrote {} source and {} target samples to {}",
        src_records.len(),
        tgt_records.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(out: &Path, args: &ConfigArgs, baseline: bool) -> Result<ExitCode> {
    let cfg = resolve_config(args)?;
    std::fs::create_dir_all(out)?;
    let (source, target, hidden) = data::generate(&cfg.data)?;
    let outcome = if baseline {
        trainer::run_baseline(&source, &target, &hidden, &cfg)?
    } else {
        trainer::train(&source, &target, &hidden, &cfg)?
    };
    write_jsonl(&out.join("metrics.jsonl"), &outcome.records)?;
    ccl::model_io::save(
        &out.join("model.bin"),
        &outcome.encoder,
        &outcome.momentum_encoder,
    )?;
    let manifest_cfg = if baseline { cfg.as_baseline() } else { cfg };
    RunManifest {
        config: manifest_cfg,
        command: command_line(),
        inputs: vec![],
        outputs: vec!["metrics.jsonl".into(), "model.bin".into()],
    }
    .write(&out.join("manifest.cfg"))?;
    let last = outcome.records.last().expect("at least one epoch");
    println!(
        "done: {} epochs, final mAP {:.4}, rank-1 {:.4}",
        last.epoch, last.map, last.rank1
    );
    Ok(ExitCode::SUCCESS)
}

struct Cell {
    name: String,
    cfg: TrainConfig,
}

fn ablation_cells(grid: &str, base: &TrainConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let mut push = |name: String, edit: &dyn Fn(&mut TrainConfig)| {
        let mut cfg = base.clone();
        edit(&mut cfg);
        cells.push(Cell { name, cfg });
    };
    match grid {
        "queue" => {
            for cap in [512usize, 1024, 2048] {
                push(format!("queue_{cap}"), &move |c: &mut TrainConfig| {
                    c.queue_capacity = cap;
                });
            }
        }
        "policy" => {
            for k in [2u32, 3, 4] {
                push(format!("{k}_step"), &move |c: &mut TrainConfig| {
                    c.schedule.kind = PolicyKind::KStep(k);
                });
            }
            push("linear".into(), &|c| {
                c.schedule.kind = PolicyKind::Linear;
            });
            for (ls, lt) in [(0.8, 0.2), (0.5, 0.5), (0.2, 0.8)] {
                push(
                    format!("static_{ls}_{lt}"),
                    &move |c: &mut TrainConfig| {
                        c.schedule.kind = PolicyKind::Static {
                            lambda_s: ls,
                            lambda_t: lt,
                        };
                    },
                );
            }
        }
        "loss_weights" => {
            for delta in [0.01, 0.1, 1.0] {
                for gamma in [0.0, 0.5, 0.7, 1.0] {
                    push(
                        format!("delta_{delta}_gamma_{gamma}"),
                        &move |c: &mut TrainConfig| {
                            c.delta = delta;
                            c.gamma = gamma;
                        },
                    );
                }
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown ablation grid '{other}': expected queue|policy|loss_weights"
            )))
        }
    }
    Ok(cells)
}

fn cmd_ablate(grid: &str, out: &Path, seeds: u64, args: &ConfigArgs) -> Result<ExitCode> {
    let base = resolve_config(args)?;
    let cells = ablation_cells(grid, &base)?;
    std::fs::create_dir_all(out)?;
    let mut csv = String::from("cell,seeds,mean_map,mean_rank1\n");
    for cell in &cells {
        let mut map_sum = 0.0;
        let mut r1_sum = 0.0;
        for s in 0..seeds {
            let mut cfg = cell.cfg.clone();
            cfg.seed = base.seed + s;
            cfg.data.seed = base.data.seed + s;
            let (source, target, hidden) = data::generate(&cfg.data)?;
            let outcome = trainer::train(&source, &target, &hidden, &cfg)?;
            let last = outcome.records.last().expect("at least one epoch");
            map_sum += last.map;
            r1_sum += last.rank1;
        }
        let n = seeds as f64;
        csv.push_str(&format!(
            "{},{seeds},{:.6},{:.6}\n",
            cell.name,
            map_sum / n,
            r1_sum / n
        ));
        println!("{}: mean mAP {:.4}", cell.name, map_sum / n);
    }
    let table = out.join(format!("{grid}.csv"));
    std::fs::write(&table, csv)?;
    RunManifest {
        config: base,
        command: command_line(),
        inputs: vec![],
        outputs: vec![table.display().to_string()],
    }
    .write(&out.join("manifest.cfg"))?;
    Ok(ExitCode::SUCCESS)
}

fn eval_items(path: &Path, enc: &Encoder<f64>) -> Result<Vec<EvalItem<f64>>> {
    let (_, records) = data::load_features(path)?;
    records
        .into_iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| {
                Error::Config(format!(
                    "{}: row {} has label NA; evaluation needs ground-truth labels",
                    path.display(),
                    r.instance_id
                ))
            })?;
            Ok(EvalItem {
                feature: enc.encode(&r.feature)?,
                label,
                camera_id: r.camera_id,
                instance_id: r.instance_id,
            })
        })
        .collect()
}

fn cmd_eval(model: &Path, query: &Path, gallery: &Path, max_rank: usize) -> Result<ExitCode> {
    // inference uses the momentum encoder
    let (_, momentum) = ccl::model_io::load(model)?;
    let queries = eval_items(query, &momentum)?;
    let gallery = eval_items(gallery, &momentum)?;
    let r = evaluate(&queries, &gallery, max_rank)?;
    println!(
        "{}",
        serde_json::json!({
            "map": r.map,
            "cmc": r.cmc,
            "skipped_queries": r.skipped_queries,
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_cluster(
    input: &Path,
    eps: f64,
    min_pts: usize,
    assignments: Option<&Path>,
) -> Result<ExitCode> {
    let (_, records) = data::load_features(input)?;
    let feats: Vec<Vector<f64>> = records.iter().map(|r| r.feature.clone()).collect();
    let labeling = dbscan(&feats, &DbscanParams::new(eps, min_pts)?)?;
    let truth: Option<Vec<usize>> = records.iter().map(|r| r.label).collect();
    let (nmi_v, bcubed_v) = match &truth {
        Some(t) => {
            let pred = labeling.labels_outliers_as_singletons();
            (Some(nmi(&pred, t)?), Some(bcubed_f(&pred, t)?))
        }
        None => (None, None),
    };
    println!(
        "{}",
        serde_json::json!({
            "num_clusters": labeling.num_clusters,
            "outlier_fraction": labeling.outlier_fraction(),
            "nmi": nmi_v,
            "bcubed_f": bcubed_v,
        })
    );
    if let Some(path) = assignments {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "instance_id,cluster")?;
        for (r, a) in records.iter().zip(&labeling.assignment) {
            match a {
                Some(c) => writeln!(w, "{},{c}", r.instance_id)?,
                None => writeln!(w, "{},outlier", r.instance_id)?,
            }
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn rand_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vector<f64> {
    Vector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// One gradient-check case: build a loss over an encoder's outputs, compare
/// the accumulated analytic parameter gradient against finite differences.
fn check_case(name: &str, seed: u64, tolerance: f64) -> Result<(String, f64)> {
    let dim_in = 5;
    let dim_out = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let enc = Encoder::<f64>::random(&[dim_in, 6, dim_out], Activation::Tanh, true, seed);
    let n = 6usize;
    let inputs: Vec<Vector<f64>> = (0..n).map(|_| rand_vec(&mut rng, dim_in)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut head = ClassifierHead::<f64>::zeros(2, dim_out);
    for v in &mut head.weights.data {
        *v = rng.gen_range(-1.0..1.0);
    }
    let negatives: Vec<Vector<f64>> = (0..4)
        .map(|_| rand_vec(&mut rng, dim_out).normalized().unwrap())
        .collect();

    // loss over encoded features, generic in the per-batch loss function
    let loss_of = |e: &Encoder<f64>| -> Result<f64> {
        let feats: Vec<Vector<f64>> = inputs.iter().map(|x| e.encode(x)).collect::<Result<_>>()?;
        match name {
            "cross_entropy" => {
                let mut total = 0.0;
                for (f, &l) in feats.iter().zip(&labels) {
                    total += cross_entropy(&head, f, l)?.value;
                }
                Ok(total / n as f64)
            }
            "triplet" => Ok(triplet_loss(&feats, &labels, 0.3)?.value),
            "ccl_bounded" | "ccl_verbatim" => {
                let pairs: Vec<ContrastivePair<f64>> = (0..n / 2)
                    .map(|i| ContrastivePair {
                        anchor: feats[2 * i].clone(),
                        pseudo_label: i,
                        positive: feats[2 * i + 1].clone(),
                        negatives: negatives.clone(),
                    })
                    .collect();
                Ok(ccl_loss(
                    &ContrastiveBatch { pairs },
                    0.07,
                    name == "ccl_bounded",
                )?
                .value)
            }
            "fourier_ce" => {
                let mut total = 0.0;
                for (f, &l) in feats.iter().zip(&labels) {
                    total += fourier_ce(&head, f, l, AMPLITUDE_EPS)?.value;
                }
                Ok(total / n as f64)
            }
            _ => unreachable!(),
        }
    };

    // analytic parameter gradient via per-sample backprop
    let feats: Vec<Vector<f64>> = inputs
        .iter()
        .map(|x| enc.encode(x))
        .collect::<Result<_>>()?;
    let mut grads = EncoderGrads::zeros_like(&enc);
    let mut add_for = |i: usize, g: &Vector<f64>| -> Result<()> {
        let (eg, _) = enc.backprop(&inputs[i], g)?;
        grads.axpy(1.0, &eg);
        Ok(())
    };
    match name {
        "cross_entropy" => {
            for i in 0..n {
                let ce = cross_entropy(&head, &feats[i], labels[i])?;
                add_for(i, &ce.grad_feature.scale(1.0 / n as f64))?;
            }
        }
        "triplet" => {
            let t = triplet_loss(&feats, &labels, 0.3)?;
            for i in 0..n {
                add_for(i, &t.grad_features[i])?;
            }
        }
        "ccl_bounded" | "ccl_verbatim" => {
            let pairs: Vec<ContrastivePair<f64>> = (0..n / 2)
                .map(|i| ContrastivePair {
                    anchor: feats[2 * i].clone(),
                    pseudo_label: i,
                    positive: feats[2 * i + 1].clone(),
                    negatives: negatives.clone(),
                })
                .collect();
            let out = ccl_loss(&ContrastiveBatch { pairs }, 0.07, name == "ccl_bounded")?;
            for i in 0..n / 2 {
                add_for(2 * i, &out.grad_anchors[i])?;
                add_for(2 * i + 1, &out.grad_positives[i])?;
            }
        }
        "fourier_ce" => {
            for i in 0..n {
                let fe = fourier_ce(&head, &feats[i], labels[i], AMPLITUDE_EPS)?;
                add_for(i, &fe.grad_feature.scale(1.0 / n as f64))?;
            }
        }
        _ => unreachable!(),
    }

    let report = finite_diff_check(loss_of, &grads.flatten(), &enc, 1e-5)?;
    let status = if report.max_rel_error < tolerance {
        "pass"
    } else {
        "FAIL"
    };
    Ok((
        format!(
            "{status} {name:<14} seed {seed:<3} max rel err {:.3e}",
            report.max_rel_error
        ),
        report.max_rel_error,
    ))
}

fn cmd_gradcheck(seeds: u64, tolerance: f64) -> Result<ExitCode> {
    let cases = [
        "cross_entropy",
        "triplet",
        "ccl_bounded",
        "ccl_verbatim",
        "fourier_ce",
    ];
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        for name in cases {
            let (line, err) = check_case(name, seed, tolerance)?;
            println!("{line}");
            worst = worst.max(err);
        }
    }
    println!("worst relative error: {worst:.3e} (tolerance {tolerance:.1e})");
    if worst < tolerance {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradient check failed");
        Ok(ExitCode::from(1))
    }
}
