use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Every metric field an evaluation report may contain.
pub const METRIC_FIELDS: [&str; 13] = [
    "pq",
    "sq",
    "rq",
    "miou",
    "map50",
    "ir_at_1",
    "ir_at_5",
    "tr_at_1",
    "tr_at_5",
    "caption_exact",
    "caption_token_acc",
    "ciou",
    "vqa_acc",
];

/// Named scalar metrics in `[0, 1]`, each present only when its task was
/// evaluated, plus the number of evaluated items per task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map50: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ir_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ir_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tr_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tr_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caption_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caption_token_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ciou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vqa_acc: Option<f64>,
    pub counts: BTreeMap<String, usize>,
}

impl MetricReport {
    /// Present metrics by field name.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let all = [
            self.pq,
            self.sq,
            self.rq,
            self.miou,
            self.map50,
            self.ir_at_1,
            self.ir_at_5,
            self.tr_at_1,
            self.tr_at_5,
            self.caption_exact,
            self.caption_token_acc,
            self.ciou,
            self.vqa_acc,
        ];
        METRIC_FIELDS
            .iter()
            .zip(all)
            .filter_map(|(&n, v)| v.map(|v| (n, v)))
            .collect()
    }
}
