//! Build a knowledge base from a dataset and rank it for one query with a
//! hand-set scorer.
//!
//!     cargo run --example build_knowledge_base

use std::path::Path;

use kbqa_transfer::corpus::{build_kb, load_dataset};
use kbqa_transfer::det::TypeLabels;
use kbqa_transfer::retrieval::{rank, KbIndex, QueryText, ScorerParams, FEATURE_NAMES};

fn main() -> kbqa_transfer::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/sample.jsonl");
    let d = load_dataset(&path, 4)?;
    let built = build_kb(&d)?;
    println!("{} samples, {} distinct knowledge texts", d.len(), built.kb.len());

    let index = KbIndex::new(built.kb, &TypeLabels::default());
    // Lexical cosine and token overlap only.
    let theta = ScorerParams::new(vec![2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])?;
    let s = &d.samples[0];
    let q = QueryText::from_sample(s);
    let r = rank(&theta, &s.sample_id, &q, &index, built.assignments[0])?;
    println!("query: {}\nground truth rank: {:?}", q.rendered(), r.gt_rank);
    for e in r.top(3) {
        let f = index.features(&index.extractor().prepare_query(&q), e.kb_id);
        let named: Vec<String> = FEATURE_NAMES.iter().zip(f.as_slice()).map(|(n, v)| format!("{n}={v:.2}")).collect();
        println!("{:>7.3}  {}\n         {}", e.score, index.kb().get(e.kb_id).unwrap_or(""), named.join(" "));
    }
    Ok(())
}
