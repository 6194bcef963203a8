//! Back-translation augmentation with a phrase-table translator, sweeping
//! the similarity threshold.
//!
//!     cargo run --example back_translate

use std::path::Path;

use kbqa_transfer::augment::{
    augment_training_set, back_translate, similarity, AugmentConfig, PhraseTableTranslator, TrigramCosine,
};
use kbqa_transfer::corpus::{load_dataset, Split};

fn main() -> kbqa_transfer::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let translator = PhraseTableTranslator::load(&data.join("phrase_table.tsv")).expect("phrase table");

    let q = "Why was BFS upset with HBT?";
    let para = back_translate(q, &translator, "de").expect("mock translator never fails");
    println!("{q}\n{para}\nsimilarity {:.3}\n", similarity(q, &para));

    let mut train = load_dataset(&data.join("sample.jsonl"), 4)?;
    train.split = Split::Train;
    for alpha in [0.5, 0.8, 0.9, 0.95, 0.99] {
        let cfg = AugmentConfig { alpha, ..AugmentConfig::default() };
        let out = augment_training_set(&train, &translator, &cfg, &TrigramCosine)?;
        let p = &out.passes[0];
        println!("alpha {alpha:<5} kept {:>3} of {:>3} candidates -> {} samples", p.kept, p.candidates, out.dataset.len());
    }
    Ok(())
}
