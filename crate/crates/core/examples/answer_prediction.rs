//! Train the answer predictor with ground-truth, retrieved and no knowledge,
//! using the bundled visual features.
//!
//!     cargo run --example answer_prediction

use std::path::Path;

use kbqa_transfer::corpus::{build_kb, load_dataset, load_visual_features, split_dataset};
use kbqa_transfer::det::TypeLabels;
use kbqa_transfer::harness::{accuracy, knowledge_contexts, KnowledgeMode};
use kbqa_transfer::reasoning::{
    encode_dataset, predict_encoded, train_reasoning, FusionLayout, ReasonerParams, ReasoningHyper, VisionMode,
};
use kbqa_transfer::retrieval::{train_retrieval, KbIndex, RetrievalHyper, ScorerParams};

fn main() -> kbqa_transfer::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let d = load_dataset(&data.join("sample.jsonl"), 4)?;
    let store = load_visual_features(&data.join("features.jsonl"))?;
    let split = split_dataset(&d, (0.6, 0.1, 0.3), 0)?;
    let index = KbIndex::new(build_kb(&d)?.kb, &TypeLabels::default());
    let hyper = RetrievalHyper { epochs: 5, negatives: 15, ..RetrievalHyper::default() };
    let theta = train_retrieval(&ScorerParams::zeros(), &split.train, &index, &hyper)?.params;

    let layout = FusionLayout::new(store.d_img, store.d_face);
    for mode in [KnowledgeMode::Gt, KnowledgeMode::Retrieved, KnowledgeMode::None] {
        let (train_k, k) = knowledge_contexts(mode, 3, &theta, &split.train, &index, None)?;
        let (test_k, _) = knowledge_contexts(mode, 3, &theta, &split.test, &index, None)?;
        let train = encode_dataset(&split.train, &train_k, k, Some(&store), VisionMode::All, &layout)?;
        let test = encode_dataset(&split.test, &test_k, k, Some(&store), VisionMode::All, &layout)?;
        let out = train_reasoning(&ReasonerParams::zeros(layout), &train, &ReasoningHyper::default())?;
        let preds: Vec<_> = test.iter().map(|s| predict_encoded(s, &out.params)).collect();
        println!(
            "{mode:<9} loss {:.3} -> {:.3}  test accuracy {:.3}",
            out.loss_trace[0],
            out.loss_trace.last().copied().unwrap_or(f64::NAN),
            accuracy(&preds)?
        );
    }
    Ok(())
}
