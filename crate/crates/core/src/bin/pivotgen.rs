use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use pivotgen::corpus::{load_parallel, load_unlabeled, read_token_lines, write_token_lines, InputFormat, ParallelSample};
use pivotgen::experiment::{run_experiment, ExperimentData, ExperimentSpec};
use pivotgen::keyfact::{annotate_dataset, coverage_stats, AnnotationMode, StopWords};
use pivotgen::metrics::evaluate;
use pivotgen::pipeline::Pipeline;
use pivotgen::pseudo::{build_pseudo_corpus, load_pseudo, write_pseudo, ContentTagSet, LexiconTagger, PosBackend, PreTaggedBackend};
use pivotgen::realizer::Variant;
use pivotgen::synth::{generate, SynthSpec};
use pivotgen::tagger::{evaluate_prf, Averaging};
use pivotgen::training::{key_fact_pairs, train_realizer, train_tagger, RealizerData, Stage, TrainPlan};
use pivotgen::{Error, Result};

#[derive(Parser)]
#[command(name = "pivotgen", version, about = "Table-to-text generation through a key-fact pivot")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Infobox,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => InputFormat::Jsonl,
            Format::Infobox => InputFormat::Infobox,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic biography corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        unlabeled_fraction: Option<f64>,
    },
    /// Label key facts by table/text overlap.
    Annotate {
        #[arg(long, alias = "input")]
        parallel: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Label in one pass instead of collecting text words first.
        #[arg(long)]
        single_pass: bool,
    },
    /// Build pseudo pairs from unlabeled text.
    Pseudo {
        #[arg(long, alias = "input")]
        unlabeled: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Tags from an external tagger (`token<TAB>tag`, blank line between
        /// sentences) instead of the bundled lexicon.
        #[arg(long, alias = "pretagged")]
        tagged: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        max_len: usize,
    },
    TrainTagger {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    TrainRealizer {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        pseudo: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Predict key facts and realize them for every table.
    Generate {
        #[arg(long)]
        tagger: PathBuf,
        #[arg(long)]
        realizer: PathBuf,
        #[arg(long, alias = "input")]
        tables: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score hypotheses against references, one tokenized line each.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref", alias = "reference")]
        reference: PathBuf,
    },
    /// Sweep parallel sizes, systems and variants.
    Experiment {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn plan(cli: &Cli, stage: Stage) -> Result<TrainPlan> {
    let mut plan = match &cli.config {
        Some(p) => TrainPlan::load(p)?,
        None => TrainPlan::for_stage(stage),
    };
    if plan.stage != stage {
        return Err(Error::Config(format!("configuration is a {:?} plan", plan.stage)));
    }
    if let Some(s) = cli.seed {
        plan.seed = s;
        plan.tagger.seed = s;
        plan.realizer.seed = s;
    }
    Ok(plan)
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set it in the plan's [data] section)")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn jsonl(path: &Path) -> Result<Vec<ParallelSample>> {
    load_parallel(path, InputFormat::Jsonl)
}

fn run(cli: Cli) -> Result<()> {
    let stops = StopWords::english();
    let mode = AnnotationMode::default();
    match &cli.command {
        Command::Synth {
            out,
            samples,
            unlabeled_fraction,
        } => {
            let mut spec: SynthSpec = config(&cli.config)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            if let Some(n) = samples {
                spec.samples = *n;
            }
            if let Some(f) = unlabeled_fraction {
                spec.unlabeled_fraction = *f;
            }
            let corpus = generate(&spec)?;
            corpus.write(out)?;
            println!("{}", json!({"parallel": corpus.parallel.len(), "unlabeled": corpus.unlabeled.len()}));
        }
        Command::Annotate {
            parallel,
            format,
            out,
            stopwords,
            single_pass,
        } => {
            let stops = match stopwords {
                Some(p) => StopWords::from_file(p)?,
                None => stops,
            };
            let mode = if *single_pass { AnnotationMode::SinglePass } else { mode };
            let samples = load_parallel(parallel, (*format).into())?;
            let annotated = annotate_dataset(&samples, &stops, mode);
            let mut lines = String::new();
            for a in &annotated {
                let line = json!({"id": a.id, "labels": a.labels.0, "key_facts": a.key_facts()});
                lines.push_str(&line.to_string());
                lines.push('\n');
            }
            write(out, lines)?;
            println!("{}", serde_json::to_string(&coverage_stats(&annotated, &stops))?);
        }
        Command::Pseudo {
            unlabeled,
            out,
            tagged,
            max_len,
        } => {
            let texts = load_unlabeled(unlabeled)?;
            let backend: Box<dyn PosBackend> = match tagged {
                Some(p) => Box::new(PreTaggedBackend::from_file(p)?),
                None => Box::new(LexiconTagger::english()),
            };
            let corpus = build_pseudo_corpus(&texts, backend.as_ref(), &ContentTagSet::default(), *max_len)?;
            write_pseudo(out, &corpus.pairs)?;
            println!(
                "{}",
                json!({"pairs": corpus.pairs.len(), "dropped_empty": corpus.dropped_empty, "dropped_long": corpus.dropped_long})
            );
        }
        Command::TrainTagger { train, valid, out } => {
            let plan = plan(&cli, Stage::Tagger)?;
            let train = annotate_dataset(&jsonl(&required(train.clone(), &plan.data.parallel, "train")?)?, &stops, mode);
            let valid = match valid.clone().or_else(|| plan.data.valid.clone()) {
                Some(p) => annotate_dataset(&jsonl(&p)?, &stops, mode),
                None => Vec::new(),
            };
            let out = required(out.clone(), &plan.data.checkpoint_dir, "out")?;
            let trained = train_tagger(&plan, &train, &valid)?;
            create_dir(&out)?;
            trained.model.save(out.join("tagger.ckpt"))?;
            trained.write_log(out.join("tagger_log.tsv"))?;
            let scored = if valid.is_empty() { &train } else { &valid };
            let tables: Vec<_> = scored.iter().map(|s| s.table.clone()).collect();
            let pred: Vec<Vec<u8>> = trained.model.predict_all(&tables, 64).into_iter().map(|p| p.labels).collect();
            let gold: Vec<&[u8]> = scored.iter().map(|s| &s.labels[..]).collect();
            let prf = evaluate_prf(&pred, &gold, Averaging::Micro)?;
            println!("{:.2}\t{:.2}\t{:.2}", 100.0 * prf.f1, 100.0 * prf.precision, 100.0 * prf.recall);
            log::info!("plan {}", plan.hash());
        }
        Command::TrainRealizer {
            train,
            valid,
            pseudo,
            out,
            variant,
        } => {
            let mut plan = plan(&cli, Stage::Realizer)?;
            if let Some(v) = variant {
                plan.realizer.variant = *v;
            }
            let order = plan.data.key_fact_order;
            let mut data = RealizerData::default();
            if let Some(p) = train.clone().or_else(|| plan.data.parallel.clone()) {
                data.parallel = key_fact_pairs(&annotate_dataset(&jsonl(&p)?, &stops, mode), order)?;
            }
            if let Some(p) = valid.clone().or_else(|| plan.data.valid.clone()) {
                data.valid = key_fact_pairs(&annotate_dataset(&jsonl(&p)?, &stops, mode), order)?;
            }
            if let Some(p) = pseudo.clone().or_else(|| plan.data.pseudo.clone()) {
                data.pseudo = load_pseudo(p)?;
            }
            if let Some(p) = &plan.data.pseudo_valid {
                data.pseudo_valid = load_pseudo(p)?;
            }
            let out = required(out.clone(), &plan.data.checkpoint_dir, "out")?;
            let trained = train_realizer(&plan, &data)?;
            create_dir(&out)?;
            trained.model.save(out.join("realizer.ckpt"))?;
            trained.write_log(out.join("realizer_log.tsv"))?;
            println!("{:.2}", 100.0 * trained.best_score);
            log::info!("plan {}", plan.hash());
        }
        Command::Generate {
            tagger,
            realizer,
            tables,
            out,
        } => {
            let pipeline = Pipeline::load(tagger, realizer)?;
            let samples = jsonl(tables)?;
            let tables: Vec<_> = samples.iter().map(|s| s.table.clone()).collect();
            let generation = pipeline.generate(&tables)?;
            write_token_lines(out, &generation.texts)?;
            println!("{}", json!({"generated": generation.texts.len(), "fallbacks": generation.fallbacks()}));
        }
        Command::Evaluate { hyp, reference } => {
            let report = evaluate(&read_token_lines(hyp)?, &read_token_lines(reference)?)?;
            println!("{}", report.tsv());
        }
        Command::Experiment {
            pool,
            valid,
            test,
            unlabeled,
            out,
        } => {
            let mut spec: ExperimentSpec = config(&cli.config)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let data = ExperimentData {
                pool: jsonl(pool)?,
                unlabeled: match unlabeled {
                    Some(p) => load_unlabeled(p)?,
                    None => Vec::new(),
                },
                valid: jsonl(valid)?,
                test: jsonl(test)?,
            };
            let results = run_experiment(&spec, &data, &stops, &LexiconTagger::english())?;
            write(out, results.tsv())?;
            print!("{}", results.tsv());
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({"kind": kind, "message": message}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string().trim().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
