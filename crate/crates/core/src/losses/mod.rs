//! Training objectives: image-text contrastive, mask classification,
//! caption, binary cross-entropy and dice mask losses, bipartite matching,
//! and their weighted combination.

mod classification;
mod contrastive;
mod mask;
mod matching;
mod total;

pub use classification::{
    caption_loss, caption_targets, classification_targets, cross_entropy, mask_classification_loss,
};
pub use contrastive::{contrastive_loss, contrastive_loss_from_affinity, l2_normalize};
pub use mask::{bce_mask_loss, dice_loss, dice_loss_with_eps, DICE_EPS};
pub use matching::{hungarian_match, matching_cost, Assignment, CostMatrix, CostWeights};
pub use total::{
    total_loss, ClassTable, GtSegment, ItpBatch, LossInputs, LossOutput, LossReport, MaskBatch,
    TargetSummary, VqaBatch,
};
