//! Pre-train a retrieval scorer on the source domain, finetune it on the
//! target domain and compare against training on the target alone.
//!
//!     cargo run --release --example train_retrieval

use kbqa_transfer::corpus::{build_kb, generate_synthetic, presets, split_dataset};
use kbqa_transfer::det::TypeLabels;
use kbqa_transfer::harness::{rank_all, RetrievalMetrics};
use kbqa_transfer::retrieval::{train_retrieval, transfer_finetune, KbIndex, RetrievalHyper, ScorerParams};

fn main() -> kbqa_transfer::Result<()> {
    let source = generate_synthetic(&presets::source(600), 1)?;
    let target = generate_synthetic(&presets::target(400), 2)?;
    let src = split_dataset(&source, (0.8, 0.1, 0.1), 3)?;
    let tgt = split_dataset(&target, (0.6, 0.1, 0.3), 4)?;
    let labels = TypeLabels::default();
    let src_index = KbIndex::new(build_kb(&source)?.kb, &labels);
    let tgt_index = KbIndex::new(build_kb(&target)?.kb, &labels);
    let hyper = RetrievalHyper { epochs: 5, seed: 9, ..RetrievalHyper::default() };

    let pre = train_retrieval(&ScorerParams::zeros(), &src.train, &src_index, &hyper)?;
    let ft = transfer_finetune(&pre.params, &tgt.train, &tgt_index, &hyper)?;
    let direct = train_retrieval(&ScorerParams::zeros(), &tgt.train, &tgt_index, &hyper)?;

    println!("pretrain loss {:?}", pre.loss_trace.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>());
    for (name, theta) in [("transfer", &ft.params), ("direct", &direct.params)] {
        let m = RetrievalMetrics::compute(&rank_all(theta, &tgt.test, &tgt_index, 10)?)?;
        println!(
            "{name:<9} R@1 {:.3} R@5 {:.3} R@10 {:.3} MR {}  trained on {:?}",
            m.recall(1).unwrap_or(0.0),
            m.recall(5).unwrap_or(0.0),
            m.recall(10).unwrap_or(0.0),
            m.mr,
            theta.metadata.trained_on
        );
    }
    Ok(())
}
