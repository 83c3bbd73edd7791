use std::collections::BTreeMap;
use std::path::Path;

use vcfscan::bench;
use vcfscan::dataset::{extract_features, Dataset};
use vcfscan::eval::evaluate;
use vcfscan::io::{annotations, features_csv, formats, write_label_volume};
use vcfscan_core::features::feature_names;
use vcfscan_core::phantom::{generate_phantom, Deformation, PhantomSpec};
use vcfscan_core::pipeline::PipelineConfig;
use vcfscan_core::rules::published_model;
use vcfscan_core::volume::{ExclusionFlags, GenantGrade, VertebraRecord};

const BUDGET: u64 = 1 << 28;

fn record(scan: &str, label: u32, grade: u8, flags: ExclusionFlags) -> VertebraRecord {
    VertebraRecord {
        scan_id: scan.into(),
        vertebra_label: label,
        genant_grade: GenantGrade::new(grade).unwrap(),
        exclusion_flags: flags,
    }
}

fn three_body_volume(dir: &Path, name: &str, deformation: Deformation) {
    let spec = PhantomSpec { deformation, count_in_scan: 3, ..PhantomSpec::default() };
    write_label_volume(&generate_phantom(&spec, 1).unwrap().volume, &dir.join(name)).unwrap();
}

#[test]
fn every_annotated_vertebra_is_included_or_excluded_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    three_body_volume(d, "a.lvol", Deformation::Wedge(0.7));
    three_body_volume(d, "b.nii", Deformation::None);
    three_body_volume(d, "d.nii.gz", Deformation::None);
    let foreign = ExclusionFlags { foreign_material: true, ..ExclusionFlags::default() };
    let single = ExclusionFlags { single_vertebra_scan: true, ..ExclusionFlags::default() };
    let records = vec![
        record("a", 20, 3, ExclusionFlags::default()),
        record("a", 21, 0, foreign),
        record("a", 22, 0, ExclusionFlags::default()),
        record("a", 40, 0, ExclusionFlags::default()), // not in the volume
        record("b", 21, 0, ExclusionFlags::default()),
        record("c", 20, 0, ExclusionFlags::default()), // no volume file
        record("c", 21, 0, ExclusionFlags::default()),
        record("d", 20, 0, single),
        record("d", 21, 0, single),
        record("d", 22, 0, single),
    ];
    annotations::write(&records, &d.join("annotations.csv")).unwrap();

    let ds = Dataset::open(d).unwrap();
    let table = extract_features(&ds, &PipelineConfig::default(), BUDGET, 2).unwrap();
    assert_eq!(table.annotated, records.len());
    assert_eq!(table.included.len() + table.excluded.len(), table.annotated);

    let reasons: BTreeMap<(String, u32), String> =
        table.excluded.iter().map(|e| ((e.scan_id.clone(), e.vertebra_label), e.reason.clone())).collect();
    let reason = |s: &str, l: u32| reasons.get(&(s.to_string(), l)).map(String::as_str);
    assert_eq!(reason("a", 21), Some("foreign_material"));
    assert_eq!(reason("a", 40), Some("empty_mask"));
    assert_eq!(reason("b", 21), Some("single_vertebra"));
    assert_eq!(reason("c", 20), Some("volume_error"));
    assert_eq!(reason("d", 22), Some("single_vertebra"));
    let included: Vec<(String, u32)> =
        table.included.iter().map(|v| (v.record.scan_id.clone(), v.record.vertebra_label)).collect();
    assert_eq!(included, vec![("a".to_string(), 20), ("a".to_string(), 22)]);

    // The foreign-material body never serves as reference.
    for v in &table.included {
        assert_ne!(v.features.reference_label, Some(21));
    }

    let report = evaluate(&table, &published_model(), 2).unwrap();
    assert_eq!(report.counts.included + report.counts.excluded, report.counts.annotated);
    assert_eq!(report.counts.excluded_by_reason["single_vertebra"], 4);
}

#[test]
fn duplicate_annotations_are_excluded() {
    let dir = tempfile::tempdir().unwrap();
    three_body_volume(dir.path(), "a.lvol", Deformation::None);
    let records = vec![
        record("a", 20, 0, ExclusionFlags::default()),
        record("a", 20, 0, ExclusionFlags::default()),
        record("a", 21, 0, ExclusionFlags::default()),
    ];
    annotations::write(&records, &dir.path().join("annotations.csv")).unwrap();
    let table = extract_features(&Dataset::open(dir.path()).unwrap(), &PipelineConfig::default(), BUDGET, 1).unwrap();
    assert_eq!(table.included.len(), 2);
    assert_eq!(table.excluded.len(), 1);
    assert_eq!(table.excluded[0].reason, "duplicate_annotation");
}

#[test]
fn benchmark_suite_is_separated_by_the_published_rules() {
    let dir = tempfile::tempdir().unwrap();
    bench::write_suite(dir.path(), 16, 3, "lvol").unwrap();
    let table = extract_features(&Dataset::open(dir.path()).unwrap(), &PipelineConfig::default(), BUDGET, 0).unwrap();
    let report = evaluate(&table, &published_model(), 2).unwrap();
    let c = report.metrics.confusion;
    assert_eq!(report.counts.excluded, 0);
    assert_eq!(c.tp + c.fn_, 8);
    assert_eq!(report.metrics.recall, 1.0, "{c:?}");
    assert_eq!(c.tn as f64 / (c.tn + c.fp) as f64, 1.0, "{c:?}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    bench::write_suite(dir.path(), 6, 11, "nii.gz").unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    let cfg = PipelineConfig::default();
    let one = extract_features(&ds, &cfg, BUDGET, 1).unwrap();
    let four = extract_features(&ds, &cfg, BUDGET, 4).unwrap();
    assert_eq!(features_csv::encode(&one.csv_rows()).unwrap(), features_csv::encode(&four.csv_rows()).unwrap());
    let r1 = formats::to_json(&evaluate(&one, &published_model(), 2).unwrap());
    let r4 = formats::to_json(&evaluate(&four, &published_model(), 2).unwrap());
    assert_eq!(r1, r4);
}

#[test]
fn feature_csv_round_trips_through_the_reader() {
    let dir = tempfile::tempdir().unwrap();
    bench::write_suite(dir.path(), 2, 4, "lvol").unwrap();
    let table = extract_features(&Dataset::open(dir.path()).unwrap(), &PipelineConfig::default(), BUDGET, 1).unwrap();
    let p = dir.path().join("features.csv");
    features_csv::write(&table.csv_rows(), &p).unwrap();
    let rows = features_csv::read(&p).unwrap();
    assert_eq!(rows.len(), table.included.len());
    for (row, v) in rows.iter().zip(&table.included) {
        assert_eq!(row.vertebra_label, v.record.vertebra_label);
        for name in feature_names(true) {
            let (a, b) = (row.values[&name], v.features.get(&name));
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{name}"),
                (None, None) => {}
                _ => panic!("{name}: {a:?} vs {b:?}"),
            }
        }
    }
}

#[test]
fn split_restricts_the_scans() {
    let dir = tempfile::tempdir().unwrap();
    bench::write_suite(dir.path(), 4, 4, "lvol").unwrap();
    let split = dir.path().join("split.csv");
    std::fs::write(&split, "scan_id,split\nphantom_000,train\nphantom_001,test\nphantom_003,train\n").unwrap();
    let mut ds = Dataset::open(dir.path()).unwrap();
    ds.restrict_to_split(&split, "train").unwrap();
    let scans: Vec<String> = ds.scans().into_iter().map(|(id, _)| id).collect();
    assert_eq!(scans, ["phantom_000", "phantom_003"]);
}
