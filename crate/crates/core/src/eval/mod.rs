//! Metrics, cross-style transfer and ablation harnesses, latent export,
//! factor readout and linear probes.

mod ablation;
mod export;
mod metrics;
mod predict;
mod probe;
mod transfer;

pub use ablation::{run_ablation, run_ablation_grid, AblationReport, AblationRow};
pub use export::{export_latents, Factor, LatentTable};
pub use metrics::{compute_metrics, mean_std, Metrics, MetricsSummary};
pub use predict::{evaluate, infer_records, predict_with_factors, FactorReadout, Inference};
pub use probe::{auc, probe_auc, LogisticProbe};
pub use transfer::{run_transfer, transfer_run, RunResult, TransferReport, TransferRun};
