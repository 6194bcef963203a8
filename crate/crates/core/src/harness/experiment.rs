use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ConfigError, DatasetSpec, ExperimentConfig, KnowledgeMode, LearningMode, TranslatorSpec};
use super::metrics::RetrievalMetrics;
use super::report::{DatasetSizes, LossTraces, Report};
use crate::augment::{
    augment_training_set, HttpTranslator, IdentityTranslator, PhraseTableTranslator, Translator, TrigramCosine,
};
use crate::corpus::{
    build_kb, build_kb_from, generate_synthetic, load_dataset, load_visual_features, presets, split_dataset, Dataset,
    GeneratorConfig, SplitDatasets, VisualStore,
};
use crate::det::{tag_dataset, Gazetteer, TypeLabels};
use crate::reasoning::{
    encode_dataset, predict_encoded, train_reasoning, FusionLayout, KnowledgeContext, ReasonerParams,
};
use crate::retrieval::{rank, train_retrieval, transfer_finetune, KbIndex, QueryText, RetrievalRanking, ScorerParams};

/// A failed pipeline stage. Artifacts written before the failure stay in the
/// working directory.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {message}")]
pub struct ExperimentError {
    pub stage: &'static str,
    pub message: String,
}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        ExperimentError {
            stage: "config",
            message: e.to_string(),
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError {
        stage,
        message: e.to_string(),
    }
}

struct Domain {
    full: Dataset,
    splits: SplitDatasets,
    generator: Option<GeneratorConfig>,
}

fn ingest(cfg: &ExperimentConfig, spec: &DatasetSpec, role: &str) -> Result<(Dataset, Option<GeneratorConfig>), ExperimentError> {
        match (&spec.synthetic, &spec.path) {
        (Some(preset), _) => {
            let n = spec.n_samples.unwrap_or(0);
            let mut g = presets::by_name(preset, n).ok_or_else(|| stage("ingest")(format!("unknown preset {preset}")))?;
            g.n_answers = spec.n_answers;
            if let Some(a) = spec.alias_rate {
                g.alias_rate = a;
            }
            let d = generate_synthetic(&g, cfg.stage_seed(&format!("data-{role}"))).map_err(stage("ingest"))?;
            Ok((d, Some(g)))
        }
        (None, Some(p)) => Ok((load_dataset(&cfg.resolve(p), spec.n_answers).map_err(stage("ingest"))?, None)),
        (None, None) => Err(stage("ingest")("dataset has neither path nor synthetic preset")),
    }
}

fn gazetteer(cfg: &ExperimentConfig, domains: &[&Domain]) -> Result<Gazetteer, ExperimentError> {
        if let Some(p) = &cfg.gazetteer {
        return Gazetteer::load(&cfg.resolve(p), &TypeLabels::default(), cfg.case_sensitive).map_err(stage("ingest"));
    }
    let mut pairs: Vec<(String, String)> = Vec::new();
    for d in domains {
        if let Some(g) = &d.generator {
            pairs.extend(g.gazetteer_entries());
        }
    }
    Gazetteer::from_pairs(pairs.iter().map(|(s, l)| (s.as_str(), l.as_str())), cfg.case_sensitive).map_err(stage("ingest"))
}

fn translator(spec: &TranslatorSpec, cfg: &ExperimentConfig) -> Result<Box<dyn Translator>, ExperimentError> {
    Ok(match spec {
        TranslatorSpec::Identity => Box::new(IdentityTranslator),
        TranslatorSpec::BuiltinMock => Box::new(PhraseTableTranslator::synthetic_default()),
        TranslatorSpec::PhraseTable(p) => Box::new(PhraseTableTranslator::load(&cfg.resolve(p)).map_err(stage("augment"))?),
        TranslatorSpec::Http(url) => Box::new(HttpTranslator::from_env_or(url)),
    })
}

struct Workdir(Option<PathBuf>);

impl Workdir {
    fn write(&self, name: &str, content: &str) -> Result<(), ExperimentError> {
        if let Some(dir) = &self.0 {
            std::fs::create_dir_all(dir).map_err(stage("workdir"))?;
            std::fs::write(dir.join(name), content).map_err(stage("workdir"))?;
        }
        Ok(())
    }

    fn dataset(&self, name: &str, d: &Dataset) -> Result<(), ExperimentError> {
        if self.0.is_some() {
            let mut buf = Vec::new();
            d.to_jsonl(&mut buf).map_err(stage("workdir"))?;
            self.write(name, &String::from_utf8_lossy(&buf))?;
        }
        Ok(())
    }
}

/// Rank every sample against the index, keeping the top `keep` entries.
pub fn rank_all(
    theta: &ScorerParams,
    dataset: &Dataset,
    index: &KbIndex,
    keep: usize,
) -> Result<Vec<RetrievalRanking>, ExperimentError> {
    dataset
        .samples
        .par_iter()
        .map(|s| {
            let gt = index.kb().lookup(&s.knowledge);
            let mut r = rank(theta, &s.sample_id, &QueryText::from_sample(s), index, gt).map_err(stage("rank"))?;
            r.truncate(keep);
            Ok(r)
        })
        .collect()
}

/// Knowledge for every sample of `dataset` under `mode`, and the K the
/// reasoner expects. Retrieved mode ranks with `theta` unless rankings
/// (truncated to at least `k`) are supplied.
pub fn knowledge_contexts(
    mode: KnowledgeMode,
    k: usize,
    theta: &ScorerParams,
    dataset: &Dataset,
    index: &KbIndex,
    precomputed: Option<&[RetrievalRanking]>,
) -> Result<(Vec<KnowledgeContext>, usize), ExperimentError> {
    match mode {
        KnowledgeMode::Gt => Ok((dataset.samples.iter().map(KnowledgeContext::ground_truth).collect(), 1)),
        KnowledgeMode::None => Ok((vec![KnowledgeContext::none(); dataset.len()], 0)),
        KnowledgeMode::Retrieved => {
            let owned;
            let rankings = match precomputed {
                Some(r) => r,
                None => {
                    owned = rank_all(theta, dataset, index, k)?;
                    &owned
                }
            };
            let ctx = rankings
                .iter()
                .map(|r| KnowledgeContext::from_ranking(r, index.kb(), k))
                .collect::<Result<Vec<_>, _>>()
                .map_err(stage("knowledge"))?;
            Ok((ctx, k))
        }
    }
}

/// Run the configured pipeline: ingest, DET, split, DA, (pre-train,)
/// train or finetune retrieval, rank, train reasoning, evaluate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, ExperimentError> {
    run_experiment_in(cfg, None)
}

/// As [`run_experiment`], writing intermediate artifacts to `workdir`.
pub fn run_experiment_in(cfg: &ExperimentConfig, workdir: Option<&Path>) -> Result<Report, ExperimentError> {
    let started = Instant::now();
    cfg.validate()?;
    let work = Workdir(workdir.map(Path::to_path_buf));
    work.write("config.toml", &cfg.to_toml())?;
    let labels = TypeLabels::default();

    let needs_source = cfg.learning != LearningMode::Direct;
    let mut target = {
        let (full, generator) = ingest(cfg, &cfg.target, "target")?;
        Domain {
            splits: empty_splits(&full),
            full,
            generator,
        }
    };
    let mut source = match (&cfg.source, needs_source) {
        (Some(spec), true) => {
            let (full, generator) = ingest(cfg, spec, "source")?;
            Some(Domain {
                splits: empty_splits(&full),
                full,
                generator,
            })
        }
        _ => None,
    };

    if let Some(strategy) = cfg.det.strategy() {
        let mut ds: Vec<&Domain> = vec![&target];
        ds.extend(source.as_ref());
        let g = gazetteer(cfg, &ds)?;
        target.full = tag_dataset(&target.full, &g, strategy);
        if let Some(s) = source.as_mut() {
            s.full = tag_dataset(&s.full, &g, strategy);
        }
    }

        let [a, b, c] = cfg.target.splits;
    target.splits = split_dataset(&target.full, (a, b, c), cfg.stage_seed("split-target")).map_err(stage("split"))?;
    if let (Some(s), Some(spec)) = (source.as_mut(), &cfg.source) {
        let [a, b, c] = spec.splits;
        s.splits = split_dataset(&s.full, (a, b, c), cfg.stage_seed("split-source")).map_err(stage("split"))?;
    }
    work.dataset("target-train.jsonl", &target.splits.train)?;
    work.dataset("target-test.jsonl", &target.splits.test)?;

    let mut target_train = target.splits.train.clone();
    let mut augmentation = Vec::new();
    if cfg.da {
        let spec = cfg.augment.translator_spec()?;
        let tr = translator(&spec, cfg)?;
        let aug = augment_training_set(&target_train, tr.as_ref(), &cfg.augment.to_config()?, &TrigramCosine)
            .map_err(stage("augment"))?;
        target_train = aug.dataset;
        augmentation = aug.passes;
        work.dataset("target-train-da.jsonl", &target_train)?;
    }

        let target_index = KbIndex::new(build_kb(&target.full).map_err(stage("build-kb"))?.kb, &labels);
    work.write("target-kb.json", &target_index.kb().to_json())?;

    let mut hyper = cfg.retrieval;
    let mut loss = LossTraces::default();
    let mut seen = 0;
    let theta = match cfg.learning {
        LearningMode::Direct => {
            hyper.seed = cfg.stage_seed("train-retrieval");
            let out = train_retrieval(&ScorerParams::zeros(), &target_train, &target_index, &hyper)
                .map_err(stage("train-retrieval"))?;
            seen += target_train.len() * hyper.epochs;
            loss.retrieval = out.loss_trace;
            out.params
        }
        LearningMode::DirectBoth => {
            let s = source.as_ref().expect("validated");
            let both = Dataset::concat(
                format!("{}+{}", s.splits.train.name, target_train.name),
                crate::corpus::Split::Train,
                &[&s.splits.train, &target_train],
            )
            .map_err(stage("train-retrieval"))?;
            let index = KbIndex::new(build_kb_from("both", &[&s.full, &target.full]).map_err(stage("build-kb"))?.kb, &labels);
            hyper.seed = cfg.stage_seed("train-retrieval");
            let out = train_retrieval(&ScorerParams::zeros(), &both, &index, &hyper).map_err(stage("train-retrieval"))?;
            seen += both.len() * hyper.epochs;
            loss.retrieval = out.loss_trace;
            out.params
        }
        LearningMode::Transfer => {
            let s = source.as_ref().expect("validated");
            let source_index = KbIndex::new(build_kb(&s.full).map_err(stage("build-kb"))?.kb, &labels);
            let mut pre_hyper = hyper;
            pre_hyper.seed = cfg.stage_seed("pretrain");
            let pre = train_retrieval(&ScorerParams::zeros(), &s.splits.train, &source_index, &pre_hyper)
                .map_err(stage("pretrain"))?;
            work.write("scorer-pretrained.json", &pre.params.to_json())?;
            seen += s.splits.train.len() * hyper.epochs;
            hyper.seed = cfg.stage_seed("train-retrieval");
            let out = transfer_finetune(&pre.params, &target_train, &target_index, &hyper)
                .map_err(stage("train-retrieval"))?;
            seen += target_train.len() * hyper.epochs;
            loss.pretrain = Some(pre.loss_trace);
            loss.retrieval = out.loss_trace;
            out.params
        }
    };
    work.write("scorer.json", &theta.to_json())?;

    let keep = cfg.k.max(1);
    let test_rankings = rank_all(&theta, &target.splits.test, &target_index, keep)?;
    let retrieval = RetrievalMetrics::compute(&test_rankings).map_err(stage("evaluate"))?;

    let mut accuracy = None;
    if let Some(rh) = cfg.reasoning {
        let store = match &cfg.target.features {
            Some(p) if cfg.vision.any() => Some(load_visual_features(&cfg.resolve(p)).map_err(stage("ingest"))?),
            _ => None,
        };
        let layout = store
            .as_ref()
            .map_or(FusionLayout::new(0, 0), |s: &VisualStore| FusionLayout::new(s.d_img, s.d_face));
                let (train_ctx, k) = knowledge_contexts(cfg.knowledge, cfg.k, &theta, &target_train, &target_index, None)?;
        let train_enc =
            encode_dataset(&target_train, &train_ctx, k, store.as_ref(), cfg.vision, &layout).map_err(stage("ingest"))?;
        let mut rh = rh;
        rh.seed = cfg.stage_seed("train-reasoning");
        let out = train_reasoning(&ReasonerParams::zeros(layout), &train_enc, &rh).map_err(stage("ingest"))?;
        work.write("reasoner.json", &out.params.to_json())?;
        loss.reasoning = Some(out.loss_trace);

        let (test_ctx, k) = knowledge_contexts(cfg.knowledge, cfg.k, &theta, &target.splits.test, &target_index, Some(&test_rankings))?;
        let test_enc = encode_dataset(&target.splits.test, &test_ctx, k, store.as_ref(), cfg.vision, &layout)
            .map_err(stage("evaluate"))?;
        let preds: Vec<_> = test_enc.iter().map(|e| predict_encoded(e, &out.params)).collect();
        accuracy = Some(super::metrics::accuracy(&preds).map_err(stage("evaluate"))?);
    }

    let report = Report {
        name: cfg.name.clone(),
        fingerprint: cfg.fingerprint(),
        source: source.as_ref().and(cfg.source.as_ref()).map(DatasetSpec::label),
        target: cfg.target.label(),
        learning: cfg.learning,
        learning_label: cfg.learning_label(),
        det: cfg.det,
        da: cfg.da,
        vision: cfg.vision,
        knowledge: cfg.knowledge,
        retrieval,
        accuracy,
        loss,
        sizes: DatasetSizes {
            source_train: source.as_ref().map(|s| s.splits.train.len()),
            target_train: target.splits.train.len(),
            target_train_augmented: target_train.len(),
            target_test: target.splits.test.len(),
            kb_entries: target_index.len(),
            retrieval_samples_seen: seen,
        },
        augmentation,
        config: cfg.clone(),
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    work.write("report.json", &report.to_json())?;
    Ok(report)
}

fn empty_splits(d: &Dataset) -> SplitDatasets {
    use crate::corpus::Split;
    let empty = |split| Dataset::new(d.name.clone(), split, Vec::new());
    SplitDatasets {
        train: empty(Split::Train),
        val: empty(Split::Val),
        test: empty(Split::Test),
    }
}
