use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kbqa_transfer::augment::{augment_training_set, AugmentConfig, FieldSet, HttpTranslator, IdentityTranslator, PhraseTableTranslator, Translator, TrigramCosine};
use kbqa_transfer::corpus::{build_kb_from, generate_synthetic, load_dataset, load_visual_features, presets, split_dataset, Dataset, KnowledgeBase, Split, VisualStore};
use kbqa_transfer::det::{tag_dataset, Gazetteer, TagStrategy, TypeLabels};
use kbqa_transfer::harness::{
    corpus_stats, emit_report_csv, emit_report_table, knowledge_contexts, rank_all, run_experiment_in, CorpusStats,
    ExperimentConfig, KnowledgeMode, Report, RetrievalMetrics, TableLayout, TranslatorSpec, ENGLISH_STOPWORDS,
};
use kbqa_transfer::reasoning::{encode_dataset, predict_encoded, train_reasoning, FusionLayout, ReasonerParams, ReasoningHyper, VisionMode};
use kbqa_transfer::retrieval::{train_retrieval, KbIndex, RetrievalHyper, RetrievalRanking, ScorerParams};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "kbqa", version, about = "Knowledge retrieval and answer prediction with domain transfer")]
struct Cli {
    /// Candidate answers per sample in every dataset read.
    #[arg(long, global = true, default_value_t = 4)]
    n_answers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RetrievalArgs {
    #[arg(long, default_value_t = RetrievalHyper::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = RetrievalHyper::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = RetrievalHyper::default().negatives)]
    negatives: usize,
    #[arg(long, default_value_t = RetrievalHyper::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RetrievalArgs {
    fn hyper(&self) -> RetrievalHyper {
        RetrievalHyper {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negatives: self.negatives,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(clap::Args)]
struct KnowledgeArgs {
    /// Knowledge base JSON from `build-kb`.
    #[arg(long)]
    kb: PathBuf,
    #[arg(long, default_value = "retrieved")]
    knowledge: String,
    /// Retrieval scorer; required with retrieved knowledge.
    #[arg(long)]
    scorer: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Visual feature file.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value = "none")]
    vision: String,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset from a built-in preset.
    Generate {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        alias_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the preset's gazetteer as TSV.
        #[arg(long)]
        gazetteer_out: Option<PathBuf>,
    },
    /// Validate a JSONL dataset; optionally write train/val/test splits.
    Ingest {
        input: PathBuf,
        /// Train,val,test fractions.
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Tag domain entities with their type.
    Tag {
        input: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long, default_value = "appositive")]
        strategy: TagStrategy,
        #[arg(long)]
        case_sensitive: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Back-translate a training set and keep non-duplicate paraphrases.
    Augment {
        input: PathBuf,
        #[arg(long, default_value = "mock:builtin")]
        translator: String,
        #[arg(long, default_value_t = AugmentConfig::default().alpha)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_value = "de")]
        pivots: Vec<String>,
        #[arg(long, default_value = "question,answers")]
        fields: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a knowledge base from the knowledge of one or more datasets.
    BuildKb {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "kb")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a retrieval scorer from scratch.
    TrainRetrieval {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[command(flatten)]
        hyper: RetrievalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finetune a pre-trained scorer on target-domain data.
    Transfer {
        #[arg(long)]
        pretrained: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[command(flatten)]
        hyper: RetrievalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank knowledge for every sample; writes rankings as JSONL.
    Rank {
        input: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// R@1/5/10 and MR of a rankings file.
    EvalRetrieval {
        #[arg(long)]
        rankings: PathBuf,
    },
    /// Train the answer predictor.
    TrainReasoning {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        knowledge: KnowledgeArgs,
        #[arg(long, default_value_t = ReasoningHyper::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = ReasoningHyper::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = ReasoningHyper::default().batch_size)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy of a trained answer predictor.
    EvalReasoning {
        input: PathBuf,
        #[arg(long)]
        reasoner: PathBuf,
        #[command(flatten)]
        knowledge: KnowledgeArgs,
    },
    /// Question types, vocabulary and field lengths.
    Stats {
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run a full experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report JSON path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep intermediate artifacts here.
        #[arg(long)]
        workdir: Option<PathBuf>,
    },
    /// Render report JSON files as a table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "retrieval")]
        layout: TableLayout,
        #[arg(long)]
        csv: bool,
    },
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write(path: &Path, content: &str) -> CliResult {
    fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_kb(path: &Path) -> CliResult<KnowledgeBase> {
    Ok(KnowledgeBase::from_json(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn load_scorer(path: &Path) -> CliResult<ScorerParams> {
    Ok(ScorerParams::from_json(&read(path)?)?)
}

fn as_train(mut d: Dataset) -> Dataset {
    d.split = Split::Train;
    d
}

fn make_translator(spec: &str) -> CliResult<Box<dyn Translator>> {
    Ok(match spec.parse::<TranslatorSpec>()? {
        TranslatorSpec::Identity => Box::new(IdentityTranslator),
        TranslatorSpec::BuiltinMock => Box::new(PhraseTableTranslator::synthetic_default()),
        TranslatorSpec::PhraseTable(p) => Box::new(PhraseTableTranslator::load(&p)?),
        TranslatorSpec::Http(url) => Box::new(HttpTranslator::from_env_or(&url)),
    })
}

fn print_stats(s: &CorpusStats, top: usize) {
    println!("samples: {}", s.n_samples);
    println!(
        "average length: question {:.2}, answer {:.2}, knowledge {:.2}, subtitles {:.2}",
        s.average_length.question, s.average_length.answer, s.average_length.knowledge, s.average_length.subtitles
    );
    println!("question types:");
    for (t, c) in CorpusStats::top(&s.question_types, top) {
        println!("  {t:<12} {c}");
    }
    for (field, vocab) in [
        ("questions", &s.vocabulary.questions),
        ("answers", &s.vocabulary.answers),
        ("knowledge", &s.vocabulary.knowledge),
    ] {
        let words: Vec<String> = CorpusStats::top(vocab, top).iter().map(|(w, c)| format!("{w} ({c})")).collect();
        println!("top {field}: {}", words.join(", "));
    }
}

struct ReasoningInputs {
    contexts: Vec<kbqa_transfer::reasoning::KnowledgeContext>,
    k: usize,
    store: Option<VisualStore>,
    vision: VisionMode,
}

fn reasoning_inputs(args: &KnowledgeArgs, data: &Dataset) -> CliResult<ReasoningInputs> {
    let mode: KnowledgeMode = match args.knowledge.as_str() {
        "retrieved" => KnowledgeMode::Retrieved,
        "gt" => KnowledgeMode::Gt,
        "none" => KnowledgeMode::None,
        other => return Err(format!("unknown knowledge mode {other:?} (retrieved|gt|none)").into()),
    };
    let vision: VisionMode = args.vision.parse()?;
    let index = KbIndex::new(load_kb(&args.kb)?, &TypeLabels::default());
    let theta = match (&args.scorer, mode) {
        (Some(p), _) => load_scorer(p)?,
        (None, KnowledgeMode::Retrieved) => return Err("--scorer is required with retrieved knowledge".into()),
        (None, _) => ScorerParams::zeros(),
    };
    let (contexts, k) = knowledge_contexts(mode, args.k, &theta, data, &index, None)?;
    let store = match (&args.features, vision.any()) {
        (Some(p), true) => Some(load_visual_features(p)?),
        (None, true) => return Err("--features is required with a vision mode".into()),
        _ => None,
    };
    Ok(ReasoningInputs { contexts, k, store, vision })
}

fn layout_of(store: Option<&VisualStore>) -> FusionLayout {
    store.map_or(FusionLayout::new(0, 0), |s| FusionLayout::new(s.d_img, s.d_face))
}

fn run(cli: Cli) -> CliResult {
    let n = cli.n_answers;
    match cli.command {
        Command::Generate { preset, n: count, seed, alias_rate, out, gazetteer_out } => {
            let mut g = presets::by_name(&preset, count).ok_or_else(|| format!("unknown preset {preset:?} (source|target|separable)"))?;
            g.n_answers = n;
            if let Some(a) = alias_rate {
                g.alias_rate = a;
            }
            let d = generate_synthetic(&g, seed)?;
            d.write_jsonl(&out)?;
            if let Some(p) = gazetteer_out {
                let tsv: String = g.gazetteer_entries().iter().map(|(s, l)| format!("{s}\t{l}\n")).collect();
                write(&p, &tsv)?;
            }
            println!("wrote {} samples to {}", d.len(), out.display());
        }
        Command::Ingest { input, split, seed, out_dir } => {
            let d = load_dataset(&input, n)?;
            println!("{}: {} valid samples", input.display(), d.len());
            if let Some(f) = split {
                if f.len() != 3 {
                    return Err("--split takes three fractions: train,val,test".into());
                }
                let s = split_dataset(&d, (f[0], f[1], f[2]), seed)?;
                let dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
                fs::create_dir_all(&dir)?;
                for (label, part) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
                    let p = dir.join(format!("{label}.jsonl"));
                    part.write_jsonl(&p)?;
                    println!("  {} samples -> {}", part.len(), p.display());
                }
            }
        }
        Command::Tag { input, gazetteer, strategy, case_sensitive, out } => {
            let g = Gazetteer::load(&gazetteer, &TypeLabels::default(), case_sensitive)?;
            let d = tag_dataset(&load_dataset(&input, n)?, &g, strategy);
            d.write_jsonl(&out)?;
            println!("tagged {} samples ({strategy}) -> {}", d.len(), out.display());
        }
        Command::Augment { input, translator, alpha, pivots, fields, out } => {
            let cfg = AugmentConfig {
                alpha,
                fields: FieldSet::parse(&fields)?,
                pivot_languages: pivots,
            };
            let tr = make_translator(&translator)?;
            let aug = augment_training_set(&as_train(load_dataset(&input, n)?), tr.as_ref(), &cfg, &TrigramCosine)?;
            aug.dataset.write_jsonl(&out)?;
            for p in &aug.passes {
                println!("pivot {}: {} candidates, {} removed, {} kept", p.pivot, p.candidates, p.removed, p.kept);
            }
            println!("{} samples -> {}", aug.dataset.len(), out.display());
        }
        Command::BuildKb { inputs, name, out } => {
            let sets = inputs.iter().map(|p| load_dataset(p, n)).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&Dataset> = sets.iter().collect();
            let kb = build_kb_from(&name, &refs)?.kb;
            write(&out, &kb.to_json())?;
            println!("{} knowledge entries -> {}", kb.len(), out.display());
        }
        Command::TrainRetrieval { train, kb, hyper, out } => {
            train_scorer(ScorerParams::zeros(), &train, &kb, &hyper, &out, n)?;
        }
        Command::Transfer { pretrained, train, kb, hyper, out } => {
            train_scorer(load_scorer(&pretrained)?, &train, &kb, &hyper, &out, n)?;
        }
        Command::Rank { input, scorer, kb, top, out } => {
            let index = KbIndex::new(load_kb(&kb)?, &TypeLabels::default());
            let rankings = rank_all(&load_scorer(&scorer)?, &load_dataset(&input, n)?, &index, top)?;
            let mut w = BufWriter::new(fs::File::create(&out)?);
            for r in &rankings {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            println!("{} rankings -> {}", rankings.len(), out.display());
        }
        Command::EvalRetrieval { rankings } => {
            let rs = read(&rankings)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str::<RetrievalRanking>)
                .collect::<Result<Vec<_>, _>>()?;
            let m = RetrievalMetrics::compute(&rs)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::TrainReasoning { train, knowledge, epochs, learning_rate, batch_size, seed, out } => {
            let data = as_train(load_dataset(&train, n)?);
            let inputs = reasoning_inputs(&knowledge, &data)?;
            let layout = layout_of(inputs.store.as_ref());
            let enc = encode_dataset(&data, &inputs.contexts, inputs.k, inputs.store.as_ref(), inputs.vision, &layout)?;
            let hyper = ReasoningHyper { epochs, learning_rate, batch_size, seed };
            let res = train_reasoning(&ReasonerParams::zeros(layout), &enc, &hyper)?;
            write(&out, &res.params.to_json())?;
            println!(
                "loss {:.4} -> {:.4}; reasoner -> {}",
                res.loss_trace[0],
                res.loss_trace.last().unwrap(),
                out.display()
            );
        }
        Command::EvalReasoning { input, reasoner, knowledge } => {
            let data = load_dataset(&input, n)?;
            let params = ReasonerParams::from_json(&read(&reasoner)?)?;
            let inputs = reasoning_inputs(&knowledge, &data)?;
            let enc = encode_dataset(&data, &inputs.contexts, inputs.k, inputs.store.as_ref(), inputs.vision, &params.layout)?;
            let preds: Vec<_> = enc.iter().map(|e| predict_encoded(e, &params)).collect();
            let acc = kbqa_transfer::harness::accuracy(&preds)?;
            println!("{{\"accuracy\": {acc}, \"n\": {}}}", preds.len());
        }
        Command::Stats { input, top, json } => {
            let s = corpus_stats(&load_dataset(&input, n)?, ENGLISH_STOPWORDS);
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print_stats(&s, top);
            }
        }
        Command::Run { config, out, workdir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment_in(&cfg, workdir.as_deref())?;
            match out {
                Some(p) => {
                    write(&p, &report.to_json())?;
                    print!("{}", emit_report_table(std::slice::from_ref(&report), report.layout())?);
                }
                None => println!("{}", report.to_json()),
            }
        }
        Command::Report { reports, layout, csv } => {
            let rs = reports
                .iter()
                .map(|p| Ok(Report::from_json(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?))
                .collect::<CliResult<Vec<_>>>()?;
            let text = if csv { emit_report_csv(&rs, layout)? } else { emit_report_table(&rs, layout)? };
            print!("{text}");
        }
    }
    Ok(())
}

fn train_scorer(init: ScorerParams, train: &Path, kb: &Path, args: &RetrievalArgs, out: &Path, n: usize) -> CliResult {
    let data = as_train(load_dataset(train, n)?);
    let index = KbIndex::new(load_kb(kb)?, &TypeLabels::default());
    let res = train_retrieval(&init, &data, &index, &args.hyper())?;
    write(out, &res.params.to_json())?;
    println!(
        "loss {:.4} -> {:.4}; scorer -> {}",
        res.loss_trace[0],
        res.loss_trace.last().unwrap(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
