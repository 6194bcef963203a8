//! Run the transfer experiment with and without entity tagging over a few
//! seeds and print the retrieval table.
//!
//!     cargo run --release --example det_transfer_experiment [n_seeds]

use std::path::Path;

use kbqa_transfer::harness::{emit_report_table, run_experiment, DetMode, ExperimentConfig, TableLayout};

fn main() -> kbqa_transfer::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/transfer_det.toml");
    let base = ExperimentConfig::load(&path)?;

    let mut reports = Vec::new();
    let mut mr = [0.0; 2];
    for seed in 0..seeds {
        for (i, det) in [DetMode::Off, DetMode::Appositive].into_iter().enumerate() {
            let cfg = ExperimentConfig { seed, det, da: false, ..base.clone() };
            let r = run_experiment(&cfg)?;
            mr[i] += r.retrieval.mr as f64 / seeds as f64;
            reports.push(r);
        }
    }
    print!("{}", emit_report_table(&reports, TableLayout::Retrieval)?);
    println!("mean MR: without tagging {:.1}, with tagging {:.1}", mr[0], mr[1]);
    Ok(())
}
