//! Trains on explicit synthetic posts and reports implicit-style test
//! metrics and factor probes.
//!
//! `cargo run --release -p cadet-core --example synthetic_transfer -- [seed] [disabled]`

use std::time::Instant;

use cadet_core::data::{generate_synthetic, SyntheticSpec};
use cadet_core::eval::{infer_records, probe_auc, transfer_run};
use cadet_core::{Config, LossName, Style};

fn main() -> cadet_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut config = Config::toy();
    if let Some(list) = args.get(2) {
        config.train.disabled = LossName::parse_list(list)?;
    }
    let synth = generate_synthetic(&SyntheticSpec::default(), 2000)?;
    let start = Instant::now();
    let run = transfer_run(&config, &synth.corpus, Style::Explicit, seed)?;
    println!(
        "seed {seed} disabled {:?}: test macro-F1 {:.4} (best epoch {}, {} epochs) in {:.1}s",
        config.train.disabled,
        run.metrics.macro_f1,
        run.outcome.best_epoch,
        run.outcome.epochs_run,
        start.elapsed().as_secs_f64()
    );
    for h in &run.outcome.history {
        println!("  epoch {} loss {:.3} val {:.3} {:?}", h.epoch, h.mean_total, h.val_macro_f1, h.mean_components);
    }
    let inf = infer_records(&run.outcome.model, run.split.test.records())?;
    let y: Vec<u8> = run.split.test.records().iter().map(|r| r.y).collect();
    for (name, f) in [("m", &inf.m), ("s", &inf.s), ("u", &inf.u), ("t", &inf.t)] {
        println!("  probe {name}: {:.3}", probe_auc(f, &y, 0)?);
    }
    Ok(())
}
