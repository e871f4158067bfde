use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maplur::commands::{self, EvalOptions, ProbeKind, ProbeOutput};
use maplur::config::ExperimentConfig;
use maplur::error::{Error, Result, EXIT_OK};
use maplur::models::ModelKind;
use maplur::provider::{fetch_area, HttpProvider, LocalProvider, TileProvider, UreqTransport};
use maplur::synth::Split;
use maplur_core::evalstat::SignificanceReport;
use maplur_core::geo::TileIndex;

#[derive(Parser)]
#[command(name = "maplur", version, about = "Land-use regression from map tiles")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON) or a run record written by an earlier command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory (default `<out>/dataset`).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city and dataset.
    Synth {
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Write the land-use feature table.
    Features,
    /// Train the CNN on the training split.
    Train,
    /// Score a model over repeated seeded runs.
    Eval {
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        runs: Option<usize>,
        /// Score the saved CNN instead of retraining.
        #[arg(long)]
        checkpoint: bool,
    },
    /// Pairwise significance tests between run samples.
    Compare {
        /// Run-sample JSON files written by `eval`.
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        reference: Option<String>,
        /// Bonferroni hypothesis count.
        #[arg(long)]
        hypotheses: Option<usize>,
    },
    /// Data-size or area-size sweep.
    Sweep {
        #[arg(value_enum)]
        kind: SweepArg,
        /// Comma-separated model names.
        #[arg(long, value_delimiter = ',', default_value = "cnn")]
        models: Vec<String>,
    },
    /// Interpretability probes against the saved CNN.
    Probe {
        #[arg(value_enum)]
        kind: ProbeArg,
        /// Sample ids for saliency maps.
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// Number of test samples mapped when no ids are given.
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Predict a lattice of windows and render a pollution map.
    Map {
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Download or copy a range of slippy-map tiles.
    FetchTiles {
        /// URL template with {z}, {x} and {y}.
        #[arg(long, conflicts_with = "local", required_unless_present = "local")]
        url: Option<String>,
        /// Local `z/x/y.png` tree.
        #[arg(long)]
        local: Option<PathBuf>,
        #[arg(long)]
        zoom: u8,
        /// Tile column range `min:max`.
        #[arg(long)]
        x: String,
        /// Tile row range `min:max`.
        #[arg(long)]
        y: String,
        #[arg(long, default_value = "maplur/0.1")]
        user_agent: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Data,
    Area,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeArg {
    Saliency,
    Entity,
    Area,
    Distance,
}

fn load_config(c: &Common, extra: &[String]) -> Result<ExperimentConfig> {
    let mut set = Vec::new();
    let json = |v: &dyn std::fmt::Display| v.to_string();
    if let Some(o) = &c.out {
        set.push(format!("output_dir={}", serde_json::Value::String(o.display().to_string())));
    }
    if let Some(d) = &c.dataset {
        set.push(format!("dataset={}", serde_json::Value::String(d.display().to_string())));
    }
    if let Some(s) = c.seed {
        set.push(format!("seed={}", json(&s)));
    }
    if let Some(j) = c.jobs {
        set.push(format!("jobs={}", json(&j)));
    }
    set.extend(c.set.iter().cloned());
    set.extend(extra.iter().cloned());
    ExperimentConfig::load(c.config.as_deref(), &set)
}

fn range(s: &str) -> Result<(u32, u32)> {
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|_| Error::Config(format!("bad tile range `{s}`")));
    match s.split_once(':') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|v| (v, v)),
    }
}

fn print_report(name: &str, r: &SignificanceReport) {
    println!("{name}: {} hypotheses, threshold {:.5}", r.n_hypotheses, r.threshold);
    for n in &r.normality {
        println!("  normality {:<14} {}", n.model, if n.normal { "normal" } else { "not normal" });
    }
    for p in &r.pairs {
        println!(
            "  {:<14} vs {:<14} {:?} stat {:>9.4} p {:.3e} diff {:>8.4}{}",
            p.a,
            p.b,
            p.test,
            p.statistic,
            p.p,
            p.mean_difference,
            if p.significant { "  significant" } else { "" }
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Synth { n_train, n_test } => {
            let mut extra = Vec::new();
            if let Some(n) = n_train {
                extra.push(format!("synth.n_train={n}"));
            }
            if let Some(n) = n_test {
                extra.push(format!("synth.n_test={n}"));
            }
            let cfg = load_config(c, &extra)?;
            let out = commands::synth(&cfg)?;
            println!("dataset written to {}", out.dir.display());
            println!("{:<6} {:>6} {:>8} {:>8} {:>8} {:>8}", "set", "count", "mean", "sd", "min", "max");
            for r in &out.summary {
                println!(
                    "{:<6} {:>6} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                    r.set, r.count, r.mean, r.std_dev, r.min, r.max
                );
            }
        }
        Command::Features => {
            let path = commands::features(&load_config(c, &[])?)?;
            println!("features written to {}", path.display());
        }
        Command::Train => {
            let cfg = load_config(c, &[])?;
            let out = commands::train(&cfg, |e| {
                eprintln!("epoch {:>4}  loss {:>10.4}  val R² {:>7.4}", e.epoch, e.train_loss, e.val_score)
            })?;
            println!(
                "best epoch {} (val R² {:.4}), test R² {:.4}, RMSE {:.4}",
                out.file.best_epoch, out.file.best_val_score, out.test.r2, out.test.rmse
            );
        }
        Command::Eval { model, split, runs, checkpoint } => {
            let cfg = load_config(c, &[])?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let opts = EvalOptions { model: model.parse()?, split, runs, use_checkpoint: checkpoint };
            let s = commands::eval(&cfg, &opts)?;
            use maplur_core::evalstat::Metric;
            println!(
                "{}: {}/{} runs, R² {:.4} ± {:.4}, RMSE {:.4} ± {:.4}",
                s.model,
                s.completed(),
                s.runs.len(),
                s.mean(Metric::R2).unwrap_or(f64::NAN),
                s.std_dev(Metric::R2).unwrap_or(f64::NAN),
                s.mean(Metric::Rmse).unwrap_or(f64::NAN),
                s.std_dev(Metric::Rmse).unwrap_or(f64::NAN),
            );
        }
        Command::Compare { samples, reference, hypotheses } => {
            let cfg = load_config(c, &[])?;
            let samples = commands::read_samples(&samples)?;
            let out = commands::compare(&cfg, &samples, reference.as_deref(), hypotheses)?;
            print_report("R²", &out.r2);
            print_report("RMSE", &out.rmse);
        }
        Command::Sweep { kind, models } => {
            let cfg = load_config(c, &[])?;
            let kinds = models.iter().map(|m| m.parse()).collect::<Result<Vec<ModelKind>>>()?;
            let table = match kind {
                SweepArg::Data => commands::sweep_data(&cfg, &kinds)?,
                SweepArg::Area => commands::sweep_area(&cfg, &kinds)?,
            };
            for r in &table.rows {
                println!(
                    "{:>8} {:<14} n {:>5}  R² {:>7.4}  RMSE {:>7.4}  ({}/{} runs)",
                    r.setting,
                    r.model,
                    r.n_train,
                    r.mean_r2,
                    r.mean_rmse,
                    r.sample.completed(),
                    r.sample.runs.len()
                );
            }
            for (setting, model, why) in &table.skipped {
                eprintln!("skipped {model} at {setting}: {why}");
            }
        }
        Command::Probe { kind, ids, count } => {
            let cfg = load_config(c, &[])?;
            let kind = match kind {
                ProbeArg::Saliency => ProbeKind::Saliency,
                ProbeArg::Entity => ProbeKind::Entity,
                ProbeArg::Area => ProbeKind::Area,
                ProbeArg::Distance => ProbeKind::Distance,
            };
            match commands::probe(&cfg, kind, &ids, count)? {
                ProbeOutput::Saliency(rows) => {
                    for r in rows {
                        println!(
                            "{}  road {:.4}  background {:.4}{}",
                            r.id,
                            r.road_mean.unwrap_or(f64::NAN),
                            r.background_mean.unwrap_or(f64::NAN),
                            if r.degenerate { "  degenerate" } else { "" }
                        );
                    }
                }
                ProbeOutput::Entity(t) => {
                    for (oi, o) in t.overlays.iter().enumerate() {
                        let name = o.map_or("none", |c| c.name());
                        for (ei, e) in t.entities.iter().enumerate() {
                            if let Some(v) = t.cells[oi][ei] {
                                println!("{name:<10} {:<14} {v:>8.3}", e.name());
                            }
                        }
                    }
                }
                ProbeOutput::Curves(curves) => {
                    for cv in [&curves.horizontal, &curves.vertical] {
                        println!(
                            "{:?}: pearson {:.4} spearman {:.4}",
                            cv.axis,
                            cv.pearson.unwrap_or(f64::NAN),
                            cv.spearman.unwrap_or(f64::NAN)
                        );
                        for (a, e) in cv.abscissa.iter().zip(&cv.estimates) {
                            println!("  {a:>6} {e:>9.3}");
                        }
                    }
                }
            }
        }
        Command::Map { cells } => {
            let extra: Vec<String> = cells.map(|n| format!("map.cells={n}")).into_iter().collect();
            let out = commands::map(&load_config(c, &extra)?)?;
            println!("map written to {} and {}", out.png.display(), out.csv.display());
        }
        Command::FetchTiles { url, local, zoom, x, y, user_agent } => {
            let cfg = load_config(c, &[])?;
            let provider: Box<dyn TileProvider> = match (url, local) {
                (Some(u), _) => Box::new(HttpProvider::new(&u, Box::new(UreqTransport::new(&user_agent)))?),
                (None, Some(root)) => Box::new(LocalProvider { root }),
                (None, None) => return Err(Error::Config("give --url or --local".into())),
            };
            let ((x0, x1), (y0, y1)) = (range(&x)?, range(&y)?);
            let out = cfg.output_dir.join("tiles");
            let got = fetch_area(
                provider.as_ref(),
                TileIndex::new(zoom, x0, y0)?,
                TileIndex::new(zoom, x1, y1)?,
                &out,
                cfg.jobs,
            )?;
            println!("{} tiles written to {}", got.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
