//! Phantom benchmark: scans of three stacked bodies, the first of which is
//! deformed in every other scan.

use std::path::Path;

use serde::Serialize;
use vcfscan_core::phantom::{generate_phantom, Deformation, PhantomSpec};
use vcfscan_core::volume::{ExclusionFlags, GenantGrade, VertebraRecord};

use crate::error::{Error, Result};
use crate::io::{annotations, write_label_volume};

pub const DEFAULT_SCANS: usize = 40;
pub const BODIES_PER_SCAN: usize = 3;
pub const FIRST_LABEL: u32 = 20;

pub const DEFORMATIONS: [Deformation; 8] = [
    Deformation::Wedge(0.85),
    Deformation::Wedge(0.8),
    Deformation::Wedge(0.75),
    Deformation::Wedge(0.7),
    Deformation::Crush(0.75),
    Deformation::Crush(0.7),
    Deformation::Biconcave(0.7),
    Deformation::Biconcave(0.6),
];

/// Every benchmark deformation is a fracture; a height loss of 40% or more
/// is graded severe.
pub fn grade_for(d: Deformation) -> u8 {
    match 1.0 - d.fraction() {
        loss if loss <= 0.0 => 0,
        loss if loss < 0.4 => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteScan {
    pub scan_id: String,
    pub seed: u64,
    pub spec: PhantomSpec,
}

/// Odd scans are undeformed; even scans cycle through [`DEFORMATIONS`].
pub fn suite(n_scans: usize, seed: u64) -> Vec<SuiteScan> {
    (0..n_scans)
        .map(|i| {
            let deformation = if i % 2 == 0 { DEFORMATIONS[(i / 2) % DEFORMATIONS.len()] } else { Deformation::None };
            SuiteScan {
                scan_id: format!("phantom_{i:03}"),
                seed: seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                spec: PhantomSpec {
                    deformation,
                    label: FIRST_LABEL,
                    count_in_scan: BODIES_PER_SCAN,
                    ..PhantomSpec::default()
                },
            }
        })
        .collect()
}

pub fn annotations_for(scans: &[SuiteScan]) -> Vec<VertebraRecord> {
    let mut out = Vec::new();
    for s in scans {
        for k in 0..s.spec.count_in_scan as u32 {
            let grade = if k == 0 { grade_for(s.spec.deformation) } else { 0 };
            out.push(VertebraRecord {
                scan_id: s.scan_id.clone(),
                vertebra_label: s.spec.label + k,
                genant_grade: GenantGrade::new(grade).expect("grade in range"),
                exclusion_flags: ExclusionFlags::default(),
            });
        }
    }
    out
}

/// Writes `<scan_id>.<extension>` volumes, `annotations.csv` and a
/// `suite.json` manifest into `dir`.
pub fn write_suite(dir: &Path, n_scans: usize, seed: u64, extension: &str) -> Result<Vec<SuiteScan>> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let scans = suite(n_scans, seed);
    for s in &scans {
        let scan = generate_phantom(&s.spec, s.seed)?;
        write_label_volume(&scan.volume, &dir.join(format!("{}.{extension}", s.scan_id)))?;
    }
    annotations::write(&annotations_for(&scans), &dir.join(crate::dataset::ANNOTATIONS_FILE))?;
    crate::io::formats::write_json(&scans, &dir.join("suite.json"))?;
    Ok(scans)
}
