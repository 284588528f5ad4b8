//! Evaluation metrics: panoptic quality, mean IoU, mask AP at IoU 0.5,
//! retrieval recall, caption match rates and cumulative IoU, plus the
//! dataset-level evaluation driver.

mod ap;
mod caption;
mod evaluate;
mod panoptic;
mod referring;
mod report;
mod retrieval;
mod semantic;

pub use ap::{mask_ap, ApGroundTruth, ApPrediction};
pub use caption::caption_metrics;
pub use evaluate::{evaluate, gt_panoptic, gt_semantic, majority_baseline_miou, EvalTask};
pub use panoptic::{panoptic_counts, panoptic_quality, PanopticAnnotation, PqCounts};
pub use referring::{cumulative_iou, CiouAccumulator};
pub use report::{MetricReport, METRIC_FIELDS};
pub use retrieval::recall_at_k;
pub use semantic::{mean_iou, IouAccumulator};
