//! One row per vertebra: `scan_id,vertebra_label,reference_label`, then the
//! raw section means and standard deviations, the 21 pair ratios and the 7
//! reference ratios. Missing values are written as `NA`. The column list
//! is documented in `schema/features.schema.json`.

use std::collections::BTreeMap;
use std::path::Path;

use vcfscan_core::features::{feature_names, FeatureVector};
use vcfscan_core::rules::FeatureSource;

use crate::error::{Error, Result};

pub const KEY_COLUMNS: [&str; 3] = ["scan_id", "vertebra_label", "reference_label"];
pub const NA: &str = "NA";

pub fn header() -> Vec<String> {
    KEY_COLUMNS.iter().map(|s| s.to_string()).chain(feature_names(true)).collect()
}

fn number(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// Text fields of one row, in [`header`] order.
pub fn row_fields(scan_id: &str, fv: &FeatureVector) -> Vec<String> {
    let mut out = vec![
        scan_id.to_string(),
        fv.label.to_string(),
        fv.reference_label.map_or_else(|| NA.to_string(), |l| l.to_string()),
    ];
    out.extend(fv.values(true).into_iter().map(number));
    out
}

pub fn encode(rows: &[(String, FeatureVector)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Validation(e.to_string());
    w.write_record(header()).map_err(err)?;
    for (scan, fv) in rows {
        w.write_record(row_fields(scan, fv)).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Validation(e.to_string()))
}

pub fn write(rows: &[(String, FeatureVector)], path: &Path) -> Result<()> {
    std::fs::write(path, encode(rows)?).map_err(Error::io(path))
}

/// A parsed row; features keep their column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub scan_id: String,
    pub vertebra_label: u32,
    pub values: BTreeMap<String, Option<f64>>,
}

impl FeatureSource for FeatureRow {
    fn feature(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied().flatten()
    }
}

/// Reads any CSV with `scan_id` and `vertebra_label` columns; every other
/// column except `reference_label` is taken as a numeric feature.
pub fn read(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers: Vec<String> =
        rdr.headers().map_err(|e| Error::format(path, e.to_string()))?.iter().map(String::from).collect();
    let pos = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::format(path, format!("missing column {name}")))
    };
    let (scan_col, label_col) = (pos("scan_id")?, pos("vertebra_label")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let label =
            rec[label_col].parse().map_err(|_| Error::format(path, format!("line {line}: bad vertebra_label")))?;
        let mut values = BTreeMap::new();
        for (i, h) in headers.iter().enumerate() {
            if i == scan_col || i == label_col || h == "reference_label" {
                continue;
            }
            let text = &rec[i];
            let v = if text == NA || text.is_empty() {
                None
            } else {
                Some(
                    text.parse::<f64>()
                        .map_err(|_| Error::format(path, format!("line {line}: bad value {text:?} in {h}")))?,
                )
            };
            values.insert(h.clone(), v);
        }
        out.push(FeatureRow { scan_id: rec[scan_col].to_string(), vertebra_label: label, values });
    }
    Ok(out)
}
