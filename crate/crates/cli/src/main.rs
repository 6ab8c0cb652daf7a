use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use nftforest::cart::{build_tree, export_dot, TreeConfig};
use nftforest::corpus::{
    load_corpus, normalize_with_diagnostics, read_dataset, read_labels, split_dataset, write_feature_csv, write_labels,
};
use nftforest::forest::{load_model, oob_score, save_model, train_forest, FeatureMode, ForestConfig, ForestModel};
use nftforest::pruning::{prune_sequence, select_by_validation, tree_error};
use nftforest::report::{evaluate, metrics, scan};
use nftforest::rules::{builtin_rules, load_rules, RuleSet};
use nftforest::tuning::{export_surface, grid_search, preset, GridSpec};
use nftforest::{build_dataset, synth, Family};

#[derive(Parser)]
#[command(name = "nftforest", version, about = "NFT smart-contract vulnerability features and random-forest classifier")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of cross-validation folds.
    #[arg(long, global = true, default_value_t = 5)]
    folds: usize,
    /// Rule file to use instead of the built-in rules.
    #[arg(long, global = true, value_name = "FILE")]
    rules: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerSplit,
    PerTree,
}

#[derive(Subcommand)]
enum Command {
    /// Load and normalize a directory of .sol files and list them.
    Ingest { dir: PathBuf },
    /// Extract one family's features for labelled contracts into a CSV.
    Extract {
        dir: PathBuf,
        #[arg(long)]
        family: Family,
        #[arg(long, value_name = "CSV")]
        labels: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Train a random forest on a feature CSV.
    Train {
        data: PathBuf,
        /// Use the tuned configuration of this family.
        #[arg(long, value_name = "FAMILY", conflicts_with = "config")]
        preset: Option<Family>,
        /// JSON file with a full forest configuration.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long)]
        max_features: Option<usize>,
        #[arg(long)]
        n_trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        no_bootstrap: bool,
        #[arg(long)]
        prune_trees: bool,
        #[arg(long, value_enum)]
        feature_mode: Option<Mode>,
        /// Hold out this stratified fraction and report accuracy on it.
        #[arg(long, value_name = "FRACTION")]
        holdout: Option<f64>,
        #[arg(long, value_name = "FILE", default_value = "model.json")]
        out: PathBuf,
    },
    /// Grow one tree, print its pruning sequence and keep the
    /// cross-validated choice.
    Prune {
        data: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long, default_value_t = 2)]
        min_samples_split: usize,
        #[arg(long, default_value_t = 1)]
        min_samples_leaf: usize,
        /// Write the selected tree as a single-tree model.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Grid search with cross-validation; writes the score surface.
    Tune {
        data: PathBuf,
        /// Axes as `max_features=2,3;n_trees=25,50;max_depth=3,4`; omitted
        /// axes use the defaults.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_name = "CSV", default_value = "surface.csv")]
        out: PathBuf,
        /// Also write the best cell as a forest configuration.
        #[arg(long, value_name = "FILE")]
        best_config: Option<PathBuf>,
    },
    /// Scan contracts with one model file or a directory of model files.
    Predict { model: PathBuf, dir: PathBuf },
    /// Print one tree of a model in Graphviz format.
    ExportDot {
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        tree: usize,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a labelled synthetic corpus for one family.
    GenCorpus {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        /// Fraction of contracts that carry the vulnerability.
        #[arg(long, default_value_t = 0.5)]
        planted: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(nftforest::Error),
}

impl From<nftforest::Error> for Failure {
    fn from(e: nftforest::Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn ruleset(cli: &Cli) -> CliResult<RuleSet> {
    Ok(match &cli.rules {
        Some(path) => load_rules(path)?,
        None => builtin_rules(),
    })
}

fn emit(cli: &Cli, text: String, value: serde_json::Value) {
    match cli.format {
        Format::Text => print!("{text}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&value).expect("json")),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::Data(nftforest::Error::io(path, e)))
}

fn run(cli: Cli) -> CliResult {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Ingest { dir } => {
            let sources = load_corpus(dir)?;
            let mut text = String::new();
            let mut rows = Vec::new();
            for s in &sources {
                let (_, diagnostics) = normalize_with_diagnostics(&s.raw_text);
                let lines = s.raw_text.lines().count();
                text.push_str(&format!("{}\t{} lines\t{} warnings\n", s.id, lines, diagnostics.len()));
                rows.push(json!({
                    "id": s.id,
                    "lines": lines,
                    "diagnostics": diagnostics.iter().map(|d| json!({"line": d.line, "message": d.message})).collect::<Vec<_>>(),
                }));
            }
            text.push_str(&format!("{} contracts\n", sources.len()));
            emit(&cli, text, json!({ "contracts": rows }));
        }

        Command::Extract { dir, family, labels, out } => {
            let rules = ruleset(&cli)?;
            let sources = load_corpus(dir)?;
            let table = read_labels(labels, *family)?;
            let dataset = build_dataset(&sources, &table, *family, &rules)?;
            write_feature_csv(&dataset, out)?;
            let [n0, n1] = dataset.class_sizes();
            emit(
                &cli,
                format!("{} samples ({n1} positive, {n0} negative) -> {}\n", dataset.len(), out.display()),
                json!({"samples": dataset.len(), "positive": n1, "negative": n0, "out": out}),
            );
        }

        Command::Train {
            data,
            preset: preset_family,
            config,
            max_features,
            n_trees,
            max_depth,
            no_bootstrap,
            prune_trees,
            feature_mode,
            holdout,
            out,
        } => {
            let dataset = read_dataset(data)?;
            let family = dataset.family();
            let mut forest_config = match (preset_family, config) {
                (Some(p), _) => {
                    if *p != family {
                        return Err(Failure::Usage(format!("preset {p} does not match the dataset family {family}")));
                    }
                    let mut c = preset(*p).forest_config(seed);
                    c.seed = seed;
                    c
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(path).map_err(|e| nftforest::Error::io(path, e))?;
                    let mut c: ForestConfig = serde_json::from_str(&text)
                        .map_err(|e| nftforest::Error::Json { path: path.clone(), source: e })?;
                    if let Some(s) = cli.seed {
                        c.seed = s;
                    }
                    c
                }
                (None, None) => match (max_features, n_trees, max_depth) {
                    (Some(f), Some(t), Some(d)) => ForestConfig::new(*f, *t, *d).with_seed(seed),
                    _ => {
                        return Err(Failure::Usage(
                            "give --preset, --config, or all of --max-features, --n-trees and --max-depth".into(),
                        ))
                    }
                },
            };
            if preset_family.is_some() || config.is_some() {
                if let Some(f) = max_features {
                    forest_config.max_features = *f;
                }
                if let Some(t) = n_trees {
                    forest_config.n_trees = *t;
                }
                if let Some(d) = max_depth {
                    forest_config.max_depth = *d;
                }
            }
            if *no_bootstrap {
                forest_config.bootstrap = false;
            }
            if *prune_trees {
                forest_config.prune_trees = true;
            }
            if let Some(mode) = feature_mode {
                forest_config.feature_mode = match mode {
                    Mode::PerSplit => FeatureMode::PerSplit,
                    Mode::PerTree => FeatureMode::PerTree,
                };
            }

            let (train, test) = match holdout {
                Some(fraction) => {
                    let (train, test) = split_dataset(&dataset, *fraction, seed)?;
                    (train, Some(test))
                }
                None => (dataset, None),
            };
            let model = train_forest(&train, &forest_config)?;
            save_model(&model, out)?;

            let c = &forest_config;
            let mut text = format!(
                "family       {family}\ntrees        {} (max_features {}, max_depth {})\ntraining     {} samples\n",
                c.n_trees,
                c.max_features,
                c.max_depth,
                train.len()
            );
            let mut value = json!({
                "family": family,
                "config": forest_config,
                "training_samples": train.len(),
                "model": out,
            });
            if c.bootstrap {
                let oob = oob_score(&model, &train)?;
                text.push_str(&format!("oob          {oob:.4}\n"));
                value["oob_accuracy"] = json!(oob);
            }
            if let Some(test) = test {
                let confusion = evaluate(&model, &test)?;
                let m = metrics(&confusion);
                text.push_str(&format!(
                    "holdout      {} samples: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}\n",
                    test.len(),
                    m.accuracy,
                    m.precision,
                    m.recall,
                    m.f1
                ));
                value["holdout"] = json!({"samples": test.len(), "confusion": confusion, "metrics": m});
            }
            text.push_str(&format!("model        {}\n", out.display()));
            emit(&cli, text, value);
        }

        Command::Prune {
            data,
            max_depth,
            min_samples_split,
            min_samples_leaf,
            out,
        } => {
            let dataset = read_dataset(data)?.sorted_by_id();
            let config = TreeConfig {
                max_depth: max_depth.unwrap_or(usize::MAX),
                min_samples_split: *min_samples_split,
                min_samples_leaf: *min_samples_leaf,
                allowed_features: None,
            };
            let tree = build_tree(&dataset, &config)?;
            let sequence = prune_sequence(&tree, &dataset);
            let chosen = select_by_validation(&sequence, cli.folds, &dataset, seed, &config)?;
            let mut text = String::from("index  alpha         leaves  train_error  cv_accuracy\n");
            let mut rows = Vec::new();
            for (k, entry) in sequence.entries.iter().enumerate() {
                let err = tree_error(&entry.tree, &dataset);
                let cv = chosen.cv_accuracy[k];
                let mark = if k == chosen.index { "  *" } else { "" };
                text.push_str(&format!(
                    "{k:<6} {:<13.6} {:<7} {err:<12.4} {cv:.4}{mark}\n",
                    entry.alpha,
                    entry.tree.n_leaves()
                ));
                rows.push(json!({"index": k, "alpha": entry.alpha, "leaves": entry.tree.n_leaves(), "train_error": err, "cv_accuracy": cv}));
            }
            text.push_str(&format!("selected {} (alpha {})\n", chosen.index, chosen.alpha));
            let mut value = json!({"sequence": rows, "selected": chosen.index});
            if let Some(path) = out {
                let model = ForestModel::from_tree(dataset.family(), chosen.tree.clone(), dataset.len(), &config, seed)?;
                save_model(&model, path)?;
                text.push_str(&format!("model    {}\n", path.display()));
                value["model"] = json!(path);
            }
            emit(&cli, text, value);
        }

        Command::Tune {
            data,
            grid,
            out,
            best_config,
        } => {
            let dataset = read_dataset(data)?;
            let mut spec = GridSpec::default_for(dataset.family()).with_seed(seed).with_folds(cli.folds);
            if let Some(g) = grid {
                apply_grid(&mut spec, g)?;
            }
            let result = grid_search(&dataset, &spec)?;
            export_surface(&result, out)?;
            let b = &result.best;
            if let Some(path) = best_config {
                let config = spec.cell_config(b.max_features, b.n_trees, b.max_depth);
                write_file(path, &(serde_json::to_string_pretty(&config).expect("json") + "\n"))?;
            }
            emit(
                &cli,
                format!(
                    "{} cells -> {}\nbest max_features {} n_trees {} max_depth {} mean_cv_accuracy {:.4}\n",
                    result.cells.len(),
                    out.display(),
                    b.max_features,
                    b.n_trees,
                    b.max_depth,
                    b.mean_accuracy
                ),
                json!({"cells": result.cells.len(), "surface": out, "best": b}),
            );
        }

        Command::Predict { model, dir } => {
            let rules = ruleset(&cli)?;
            let models = load_models(model)?;
            let sources = load_corpus(dir)?;
            let report = scan(&sources, &models, &rules)?;
            match cli.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => print!("{}", report.to_json()),
            }
        }

        Command::ExportDot { model, tree, out } => {
            let m = load_model(model)?;
            let Some(t) = m.trees().get(*tree) else {
                return Err(Failure::Usage(format!(
                    "tree {tree} does not exist; the model has {} trees",
                    m.trees().len()
                )));
            };
            let dot = export_dot(t, m.family());
            match out {
                Some(path) => write_file(path, &dot)?,
                None => print!("{dot}"),
            }
        }

        Command::GenCorpus { family, n, planted, out } => {
            let contracts = synth::generate(*family, *n, *planted, seed)?;
            synth::write_contracts(&contracts, out)?;
            let labels = out.join("labels.csv");
            write_labels(&synth::label_table(*family, &contracts), &labels)?;
            let positives = contracts.iter().filter(|c| c.planted).count();
            emit(
                &cli,
                format!("{} contracts ({positives} planted) -> {}\n", contracts.len(), out.display()),
                json!({"contracts": contracts.len(), "planted": positives, "labels": labels}),
            );
        }
    }
    Ok(())
}

fn load_models(path: &Path) -> CliResult<Vec<ForestModel>> {
    if !path.is_dir() {
        return Ok(vec![load_model(path)?]);
    }
    let entries = fs::read_dir(path).map_err(|e| nftforest::Error::io(path, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(format!("{} contains no .json model files", path.display())));
    }
    files.iter().map(|f| load_model(f).map_err(Failure::from)).collect()
}

fn apply_grid(spec: &mut GridSpec, text: &str) -> CliResult {
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("grid axis `{part}` is not `name=v1,v2,...`")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::Usage(format!("grid axis `{part}` has a non-integer value")))?;
        match key.trim() {
            "max_features" => spec.max_features_values = values,
            "n_trees" => spec.n_trees_values = values,
            "max_depth" => spec.max_depth_values = values,
            other => return Err(Failure::Usage(format!("unknown grid axis `{other}`"))),
        }
    }
    Ok(())
}
