//! A dataset directory holds `annotations.csv` and one label volume per
//! scan named `<scan_id>.nii.gz`, `<scan_id>.nii` or `<scan_id>.lvol`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vcfscan_core::features::{build_feature_vectors, FeatureVector, SectionStats};
use vcfscan_core::pipeline::{process_vertebra, PipelineConfig};
use vcfscan_core::volume::{LabelVolume, VertebraRecord};

use crate::error::{Error, Result};
use crate::io::{annotations, load_label_volume};

pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const VOLUME_EXTENSIONS: [&str; 3] = ["nii.gz", "nii", "lvol"];

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: Vec<VertebraRecord>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Dataset> {
        let records = annotations::read(&root.join(ANNOTATIONS_FILE))?;
        Ok(Dataset { root: root.to_path_buf(), records })
    }

    pub fn volume_path(&self, scan_id: &str) -> Option<PathBuf> {
        VOLUME_EXTENSIONS.iter().map(|ext| self.root.join(format!("{scan_id}.{ext}"))).find(|p| p.is_file())
    }

    /// Keeps the scans listed under `name` in a `scan_id,split` CSV.
    pub fn restrict_to_split(&mut self, split_csv: &Path, name: &str) -> Result<()> {
        let mut rdr = csv::Reader::from_path(split_csv).map_err(|e| Error::format(split_csv, e.to_string()))?;
        let headers = rdr.headers().map_err(|e| Error::format(split_csv, e.to_string()))?.clone();
        let col = |n: &str| {
            headers.iter().position(|h| h == n).ok_or_else(|| Error::format(split_csv, format!("missing column {n}")))
        };
        let (scan_col, split_col) = (col("scan_id")?, col("split")?);
        let mut keep = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::format(split_csv, e.to_string()))?;
            if &rec[split_col] == name {
                keep.insert(rec[scan_col].to_string());
            }
        }
        self.records.retain(|r| keep.contains(&r.scan_id));
        Ok(())
    }

    /// Records grouped by scan, scans in lexicographic order and vertebrae
    /// by label.
    pub fn scans(&self) -> Vec<(String, Vec<VertebraRecord>)> {
        let mut by_scan: BTreeMap<String, Vec<VertebraRecord>> = BTreeMap::new();
        for r in &self.records {
            by_scan.entry(r.scan_id.clone()).or_default().push(r.clone());
        }
        by_scan
            .into_iter()
            .map(|(id, mut v)| {
                v.sort_by_key(|r| r.vertebra_label);
                (id, v)
            })
            .collect()
    }
}

/// Why a vertebra did not reach prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub scan_id: String,
    pub vertebra_label: u32,
    /// `foreign_material`, `single_vertebra`, `volume_error`,
    /// `duplicate_annotation`, `no_reference`, `missing_feature` or a
    /// geometry error code such as `empty_mask` or `feature_failure`.
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct IncludedVertebra {
    pub record: VertebraRecord,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Default)]
pub struct ScanResult {
    pub included: Vec<IncludedVertebra>,
    pub excluded: Vec<Exclusion>,
}

fn exclude(r: &VertebraRecord, reason: &str, detail: impl Into<String>) -> Exclusion {
    Exclusion {
        scan_id: r.scan_id.clone(),
        vertebra_label: r.vertebra_label,
        reason: reason.into(),
        detail: detail.into(),
    }
}

/// Applies the exclusions, runs the geometry chain on the remaining
/// vertebrae and builds feature vectors with a reference chosen among them.
/// Never fails: every problem becomes an [`Exclusion`].
pub fn process_scan(records: &[VertebraRecord], volume: Result<LabelVolume>, cfg: &PipelineConfig) -> ScanResult {
    let mut out = ScanResult::default();
    let mut seen = BTreeSet::new();
    let mut candidates = Vec::new();
    for r in records {
        if !seen.insert(r.vertebra_label) {
            out.excluded.push(exclude(r, "duplicate_annotation", "label annotated twice in this scan"));
        } else if r.exclusion_flags.foreign_material {
            out.excluded.push(exclude(r, "foreign_material", "flagged in annotations"));
        } else if records.len() < 2 || r.exclusion_flags.single_vertebra_scan {
            out.excluded.push(exclude(r, "single_vertebra", "scan has a single annotated vertebra"));
        } else {
            candidates.push(r);
        }
    }
    if candidates.is_empty() {
        return out;
    }
    let volume = match volume {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            out.excluded.extend(candidates.iter().map(|r| exclude(r, "volume_error", msg.clone())));
            return out;
        }
    };
    let mut ok: Vec<(&VertebraRecord, SectionStats)> = Vec::new();
    for r in candidates {
        match process_vertebra(&volume, r.vertebra_label, cfg) {
            Ok(g) => ok.push((r, g.stats)),
            Err(e) => out.excluded.push(exclude(r, e.code(), e.to_string())),
        }
    }
    if ok.len() < 2 {
        let e = vcfscan_core::Error::ScanExcluded { valid_vertebrae: ok.len() };
        out.excluded.extend(ok.iter().map(|(r, _)| exclude(r, e.code(), e.to_string())));
        return out;
    }
    let stats: Vec<(u32, SectionStats)> = ok.iter().map(|(r, s)| (r.vertebra_label, *s)).collect();
    match build_feature_vectors(&stats, cfg.reference) {
        Ok(fvs) => {
            for ((r, _), fv) in ok.into_iter().zip(fvs) {
                out.included.push(IncludedVertebra { record: r.clone(), features: fv });
            }
        }
        Err(e) => out.excluded.extend(ok.iter().map(|(r, _)| exclude(r, e.code(), e.to_string()))),
    }
    out
}

/// Feature extraction over a whole dataset, in scan order.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub annotated: usize,
    pub included: Vec<IncludedVertebra>,
    pub excluded: Vec<Exclusion>,
}

impl FeatureTable {
    pub fn csv_rows(&self) -> Vec<(String, FeatureVector)> {
        self.included.iter().map(|v| (v.record.scan_id.clone(), v.features.clone())).collect()
    }
}

/// `threads == 0` lets rayon pick. Output order never depends on it.
pub fn extract_features(ds: &Dataset, cfg: &PipelineConfig, max_voxels: u64, threads: usize) -> Result<FeatureTable> {
    let scans = ds.scans();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let results: Vec<ScanResult> = pool.install(|| {
        scans
            .par_iter()
            .map(|(id, records)| {
                let volume = ds
                    .volume_path(id)
                    .ok_or_else(|| Error::format(ds.root.join(id), "no volume file for scan"))
                    .and_then(|p| load_label_volume(&p, max_voxels));
                if let Err(e) = &volume {
                    log::warn!("scan {id}: {e}");
                }
                process_scan(records, volume, cfg)
            })
            .collect()
    });
    let mut table = FeatureTable { annotated: ds.records.len(), ..FeatureTable::default() };
    for r in results {
        table.included.extend(r.included);
        table.excluded.extend(r.excluded);
    }
    Ok(table)
}
