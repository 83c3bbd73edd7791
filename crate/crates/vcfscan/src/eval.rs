//! Prediction over a feature table and the evaluation report.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};
use vcfscan_core::geom::percentile;
use vcfscan_core::metrics::{compute_metrics, Confusion, Metrics};
use vcfscan_core::rules::{predict, RuleModel};

use crate::dataset::{Exclusion, FeatureTable};
use crate::io::features_csv::row_fields;

#[derive(Debug, Clone, Serialize)]
pub struct VertebraRow {
    pub scan_id: String,
    pub vertebra_label: u32,
    pub genant_grade: u8,
    pub fractured: bool,
    pub reference_label: Option<u32>,
    /// SHA-256 of the vertebra's feature CSV row.
    pub features_sha256: String,
    pub score: f64,
    pub predicted: bool,
    /// One-based indices of the rules that fired.
    pub fired_rules: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counts {
    pub annotated: usize,
    pub included: usize,
    pub excluded: usize,
    pub excluded_by_reason: BTreeMap<String, usize>,
}

/// Distribution of one feature over included vertebrae.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub q25: Option<f64>,
    pub median: Option<f64>,
    pub q75: Option<f64>,
    pub max: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mut v = values.to_vec();
        let mean = (n > 0).then(|| v.iter().sum::<f64>() / n as f64);
        let std = mean.map(|m| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64).sqrt());
        Summary {
            n,
            mean,
            std,
            min: percentile(&mut v, 0.0),
            q25: percentile(&mut v, 25.0),
            median: percentile(&mut v, 50.0),
            q75: percentile(&mut v, 75.0),
            max: percentile(&mut v, 100.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Distribution {
    pub fractured: Summary,
    pub intact: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub grade_threshold: u8,
    pub model: RuleModel,
    pub counts: Counts,
    pub metrics: Metrics,
    /// Keyed by feature name; covers the model's features.
    pub feature_distributions: BTreeMap<String, Distribution>,
    pub vertebrae: Vec<VertebraRow>,
    pub exclusions: Vec<Exclusion>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Predicts every included vertebra. A vertebra missing a model feature is
/// moved to the exclusions with reason `missing_feature`.
pub fn evaluate(table: &FeatureTable, model: &RuleModel, grade_threshold: u8) -> crate::Result<EvaluationReport> {
    model.validate()?;
    let mut rows = Vec::new();
    let mut exclusions = table.excluded.clone();
    let mut dist_values: BTreeMap<String, (Vec<f64>, Vec<f64>)> =
        model.features().into_iter().map(|f| (f, (Vec::new(), Vec::new()))).collect();
    for v in &table.included {
        let r = &v.record;
        let p = match predict(model, &v.features) {
            Ok(p) => p,
            Err(e) => {
                exclusions.push(Exclusion {
                    scan_id: r.scan_id.clone(),
                    vertebra_label: r.vertebra_label,
                    reason: e.code().into(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let fractured = r.genant_grade.is_positive(grade_threshold);
        for (name, (pos, neg)) in dist_values.iter_mut() {
            if let Some(x) = v.features.get(name) {
                if fractured { pos } else { neg }.push(x);
            }
        }
        rows.push(VertebraRow {
            scan_id: r.scan_id.clone(),
            vertebra_label: r.vertebra_label,
            genant_grade: r.genant_grade.value(),
            fractured,
            reference_label: v.features.reference_label,
            features_sha256: sha256_hex(row_fields(&r.scan_id, &v.features).join(",").as_bytes()),
            score: p.score,
            predicted: p.positive,
            fired_rules: p.fired.iter().map(|f| f.index + 1).collect(),
        });
    }
    if rows.is_empty() {
        return Err(vcfscan_core::Error::EmptyEvaluation.into());
    }
    let confusion = Confusion::from_pairs(rows.iter().map(|r| (r.fractured, r.predicted)));
    let mut excluded_by_reason = BTreeMap::new();
    for e in &exclusions {
        *excluded_by_reason.entry(e.reason.clone()).or_insert(0) += 1;
    }
    Ok(EvaluationReport {
        grade_threshold,
        model: model.clone(),
        counts: Counts {
            annotated: table.annotated,
            included: rows.len(),
            excluded: exclusions.len(),
            excluded_by_reason,
        },
        metrics: compute_metrics(confusion),
        feature_distributions: dist_values
            .into_iter()
            .map(|(k, (pos, neg))| (k, Distribution { fractured: Summary::of(&pos), intact: Summary::of(&neg) }))
            .collect(),
        vertebrae: rows,
        exclusions,
    })
}

/// Fixed-width metrics table for the terminal.
pub fn metrics_table(report: &EvaluationReport) -> String {
    let m = &report.metrics;
    let c = &m.confusion;
    format!(
        "{:<10} {:>8}\n{:<10} {:>8.4}\n{:<10} {:>8.4}\n{:<10} {:>8.4}\n{:<10} {:>8.4}\n\
         confusion  TP {} FP {} FN {} TN {}\nvertebrae  {} included, {} excluded of {} annotated\n",
        "metric",
        "value",
        "F1",
        m.f1,
        "accuracy",
        m.accuracy,
        "precision",
        m.precision,
        "recall",
        m.recall,
        c.tp,
        c.fp,
        c.fn_,
        c.tn,
        report.counts.included,
        report.counts.excluded,
        report.counts.annotated
    )
}
