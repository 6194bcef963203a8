//! Question types, frequent words and field lengths of a synthetic corpus.
//!
//!     cargo run --example corpus_stats [source|target|separable]

use kbqa_transfer::corpus::{generate_synthetic, presets};
use kbqa_transfer::harness::{corpus_stats, CorpusStats, ENGLISH_STOPWORDS};

fn main() -> kbqa_transfer::Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "target".into());
    let Some(config) = presets::by_name(&preset, 1000) else {
        eprintln!("unknown preset {preset:?}");
        std::process::exit(2);
    };
    let d = generate_synthetic(&config, 0)?;
    let s = corpus_stats(&d, ENGLISH_STOPWORDS);
    println!("{preset}: {} samples", s.n_samples);
    for (t, n) in CorpusStats::top(&s.question_types, 6) {
        println!("  {t:<8} {:>5.1}%", 100.0 * n as f64 / s.n_samples as f64);
    }
    println!("knowledge: {:?}", CorpusStats::top(&s.vocabulary.knowledge, 8));
    println!(
        "mean tokens: question {:.1}, answer {:.1}, knowledge {:.1}",
        s.average_length.question, s.average_length.answer, s.average_length.knowledge
    );
    Ok(())
}
