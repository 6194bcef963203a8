//! Tag domain entities in a question with each of the three renderings, then
//! tag the bundled sample file.
//!
//!     cargo run --example tag_entities

use std::path::Path;

use kbqa_transfer::corpus::load_dataset;
use kbqa_transfer::det::{tag_dataset, tag_with, Gazetteer, TagStrategy, TypeLabels};

fn main() -> kbqa_transfer::Result<()> {
    let g = Gazetteer::from_pairs([("Chandler", "person"), ("Central Perk", "facility")], false)
        .expect("valid gazetteer");
    let q = "Why was Chandler acting weird at Central Perk?";
    for s in [TagStrategy::Appositive, TagStrategy::MaskOut, TagStrategy::Hyphen] {
        let t = tag_with(q, &g, s);
        println!("{s:<10} {}", t.rendered);
    }

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let gaz = Gazetteer::load(&data.join("gazetteer.tsv"), &TypeLabels::default(), false)?;
    let d = load_dataset(&data.join("sample.jsonl"), 4)?;
    let tagged = tag_dataset(&d, &gaz, TagStrategy::Appositive);
    println!("\n{} gazetteer entries", gaz.len());
    for (before, after) in d.samples.iter().zip(&tagged.samples).take(3) {
        println!("- {}\n+ {}", before.question, after.question);
        println!("- {}\n+ {}", before.knowledge, after.knowledge);
    }
    Ok(())
}
