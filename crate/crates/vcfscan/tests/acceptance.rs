//! One PASS/FAIL line per acceptance criterion. Criterion 7 needs a VerSe19
//! dataset directory in `VERSE19_DIR` (annotations.csv plus one label volume
//! per scan) and optionally a `scan_id,split` CSV in `VERSE19_SPLIT`; its
//! deviations are reported but never fail the run.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use vcfscan::bench;
use vcfscan::dataset::{extract_features, Dataset};
use vcfscan::eval::evaluate;
use vcfscan::io::{features_csv, formats};
use vcfscan_core::features::{build_feature_vectors, ReferenceStrategy, Section, RATIO_A0_P, REF_RATIO_C};
use vcfscan_core::geom::{Mat3, Vec3};
use vcfscan_core::meshing::{marching_cubes, to_point_cloud, MeshOptions};
use vcfscan_core::orientation::{cluster_normals, KMeansOptions};
use vcfscan_core::phantom::{generate_phantom, Deformation, PhantomSpec};
use vcfscan_core::pipeline::{process_vertebra, PipelineConfig};
use vcfscan_core::rulefit::synthetic::planted_dataset;
use vcfscan_core::rulefit::{train, TrainConfig};
use vcfscan_core::rules::{evaluate_rule, published_model, predict};
use vcfscan_core::volume::{BinaryMask, GridGeometry, LabelVolume};

const BUDGET: u64 = 1 << 28;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn canonical_inputs(a0p: f64, refc: f64) -> BTreeMap<String, f64> {
    BTreeMap::from([(RATIO_A0_P.to_string(), a0p), (REF_RATIO_C.to_string(), refc)])
}

fn fixed_model() -> Outcome {
    let m = published_model();
    let cases =
        [((0.84, 0.95), 1.49471001, true), ((0.95, 0.78), 0.36870275, true), ((0.95, 0.95), -4.10884354, false)];
    for ((a, r), score, positive) in cases {
        let p = predict(&m, &canonical_inputs(a, r)).map_err(|e| e.to_string())?;
        check!(p.score == score && p.positive == positive, "({a}, {r}) gave {} / {}", p.score, p.positive);
    }
    Ok("scores 1.49471001 / 0.36870275 / -4.10884354 exact".into())
}

fn unit_grid(dims: [usize; 3]) -> GridGeometry {
    GridGeometry::new(dims, [1.0; 3], Mat3::IDENTITY, Vec3::ZERO).unwrap()
}

fn geometry() -> Outcome {
    let cube = BinaryMask::from_fn(unit_grid([14, 14, 14]), |i, j, k| [i, j, k].iter().all(|&c| (2..12).contains(&c)))
        .map_err(|e| e.to_string())?;
    let mesh = marching_cubes(&cube, &MeshOptions::default()).map_err(|e| e.to_string())?.mesh;
    let (chi, vol) = (mesh.euler_characteristic(), mesh.signed_volume());
    check!(mesh.is_closed_manifold(), "cube mesh is not a closed manifold");
    check!(chi == 2, "Euler characteristic {chi}");
    check!((vol / 1000.0 - 1.0).abs() <= 0.05, "enclosed volume {vol}");

    let h = 17usize;
    let g = unit_grid([40, 34, h + 8]);
    let voxels = (0..g.len())
        .map(|idx| {
            let [i, j, k] = g.coords(idx);
            ((5..35).contains(&i) && (5..29).contains(&j) && (4..4 + h).contains(&k)) as u32
        })
        .collect();
    let boxv = LabelVolume::new(g, voxels).map_err(|e| e.to_string())?;
    let map = process_vertebra(&boxv, 1, &PipelineConfig::default()).map_err(|e| e.to_string())?.heightmap;
    let worst =
        map.heights.iter().zip(&map.valid).filter(|(_, &v)| v).map(|(x, _)| (x - h as f64).abs()).fold(0.0, f64::max);
    check!(map.valid_count() > 0 && worst <= 1.0, "box height off by {worst}");

    let clusters = cluster_normals(&to_point_cloud(&mesh), 7, &KMeansOptions::default()).map_err(|e| e.to_string())?;
    let axes = [Vec3::X, -Vec3::X, Vec3::Y, -Vec3::Y, Vec3::Z, -Vec3::Z];
    let mut hit = [false; 6];
    let mut max_angle: f64 = 0.0;
    for c in &clusters.centroids {
        let (k, angle) = axes.iter().map(|a| c.angle_deg(*a)).enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        hit[k] = true;
        max_angle = max_angle.max(angle);
    }
    check!(hit.iter().all(|&b| b) && max_angle < 5.0, "centroids cover {hit:?}, worst {max_angle:.2}°");
    Ok(format!("chi 2, volume {vol:.1}/1000, box error {worst:.3}, centroid error {max_angle:.2}°"))
}

/// Features of the deformed body of a two-body phantom.
fn phantom_features(d: Deformation) -> Result<(vcfscan_core::features::FeatureVector, PhantomSpec), String> {
    let spec = PhantomSpec { deformation: d, count_in_scan: 2, ..PhantomSpec::default() };
    let scan = generate_phantom(&spec, 0).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let mut stats = Vec::new();
    for label in [spec.label, spec.label + 1] {
        stats.push((label, process_vertebra(&scan.volume, label, &cfg).map_err(|e| e.to_string())?.stats));
    }
    let fvs = build_feature_vectors(&stats, ReferenceStrategy::default()).map_err(|e| e.to_string())?;
    Ok((fvs.into_iter().next().unwrap(), spec))
}

fn sensitivity() -> Outcome {
    let model = published_model();
    let mut labels = Vec::new();
    let mut worst: f64 = 0.0;
    for f in [1.0, 0.95, 0.9, 0.85, 0.8, 0.7] {
        let (fv, spec) = phantom_features(Deformation::Wedge(f))?;
        let measured = fv.get(RATIO_A0_P).ok_or("missing ratio")?;
        let field = generate_phantom(&spec, 0).map_err(|e| e.to_string())?.primary().field;
        let expected = support::analytic_ratio(&field, Section::P, Section::A0);
        worst = worst.max((measured - expected).abs());
        check!((measured - expected).abs() <= 0.03, "f={f}: measured {measured:.4} vs analytic {expected:.4}");
        labels.push((f, predict(&model, &fv).map_err(|e| e.to_string())?.positive));
    }
    let first_positive = labels.iter().position(|&(_, p)| p).ok_or("no positive prediction")?;
    check!(labels[first_positive..].iter().all(|&(_, p)| p), "predictions not monotone: {labels:?}");
    let flip = labels[first_positive].0;
    check!((0.85..0.95).contains(&flip), "flip at fraction {flip}: {labels:?}");
    Ok(format!("max ratio error {worst:.4}, first positive at fraction {flip}"))
}

fn reference_ratio() -> Outcome {
    let (fv, _) = phantom_features(Deformation::Crush(0.75))?;
    let refc = fv.get(REF_RATIO_C).ok_or("missing ref_C")?;
    let a0p = fv.get(RATIO_A0_P).ok_or("missing ratio")?;
    check!((refc - 0.75).abs() <= 0.03, "ref_C {refc:.4}");
    let p = predict(&published_model(), &fv).map_err(|e| e.to_string())?;
    let rule2 = p.fired.iter().any(|f| f.index == 1);
    check!(a0p > 0.91 && rule2, "ratio {a0p:.4}, fired {:?}", p.fired.iter().map(|f| f.index + 1).collect::<Vec<_>>());
    Ok(format!("ref_C {refc:.4}, ratio {a0p:.4}, rule 2 fired"))
}

fn recovery() -> Outcome {
    let mut summary = Vec::new();
    for seed in 0..5u64 {
        let planted = planted_dataset(2000, 0.05, seed).map_err(|e| e.to_string())?;
        let train_rows: Vec<usize> = (0..1500).collect();
        let data = planted.noisy.subset(&train_rows);
        let cfg = TrainConfig {
            boosting: vcfscan_core::rulefit::boosting::BoostingConfig { seed, ..Default::default() },
            cv_seed: seed,
            ..TrainConfig::default()
        };
        let report = train(&data, &cfg).map_err(|e| e.to_string())?;
        let model = &report.model;
        check!(model.rules.len() == 3, "seed {seed}: {} rules", model.rules.len());
        let mut seen = [false; 2];
        for c in model.rules.iter().flat_map(|r| &r.conditions) {
            let (k, target) = match c.feature.as_str() {
                RATIO_A0_P => (0, 0.91),
                REF_RATIO_C => (1, 0.81),
                other => return Err(format!("seed {seed}: noise feature {other} selected")),
            };
            check!((c.threshold - target).abs() <= 0.02, "seed {seed}: {}", c.text());
            seen[k] = true;
        }
        check!(seen == [true, true], "seed {seed}: a planted feature is missing");
        let signs: Vec<bool> = model.coefficients.iter().map(|&b| b > 0.0).collect();
        check!(signs == [true, true, false], "seed {seed}: coefficients {:?}", model.coefficients);

        // Independent KKT check on the fitted rule columns.
        let cols: Vec<Vec<f64>> = model
            .rules
            .iter()
            .map(|r| (0..data.n_rows()).map(|i| evaluate_rule(r, &data.row(i)).unwrap() as u8 as f64).collect())
            .collect();
        let y: Vec<f64> = data.labels().iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let n = y.len() as f64;
        let resid: Vec<f64> = (0..y.len())
            .map(|i| {
                y[i] - report.fit.intercept
                    - cols.iter().zip(&report.fit.coefficients).map(|(c, b)| c[i] * b).sum::<f64>()
            })
            .collect();
        let lambda = report.fit.lambda;
        let mut kkt: f64 = if report.intercept_absorbed { 0.0 } else { (resid.iter().sum::<f64>() / n).abs() };
        for (c, &b) in cols.iter().zip(&report.fit.coefficients) {
            let g = c.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
            kkt = kkt.max(if b == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * b.signum()).abs() });
        }
        check!(kkt <= 1e-6, "seed {seed}: KKT violation {kkt:e}");

        let correct = (1500..2000)
            .filter(|&i| {
                predict(model, &planted.clean.row(i)).map(|p| p.positive == planted.clean.labels()[i]).unwrap_or(false)
            })
            .count();
        let acc = correct as f64 / 500.0;
        check!(acc >= 0.95, "seed {seed}: test accuracy {acc:.3}");
        summary.push(format!("{acc:.3}"));
    }
    Ok(format!("5 seeds, test accuracy {}", summary.join(" ")))
}

fn benchmark_outputs(seed: u64) -> Result<(Vec<u8>, Vec<u8>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    bench::write_suite(dir.path(), bench::DEFAULT_SCANS, seed, "nii.gz").map_err(|e| e.to_string())?;
    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    let ds = Dataset::open(dir.path()).map_err(|e| e.to_string())?;
    let table = extract_features(&ds, &cfg, BUDGET, 0).map_err(|e| e.to_string())?;
    let csv = features_csv::encode(&table.csv_rows()).map_err(|e| e.to_string())?;
    let report = evaluate(&table, &published_model(), 2).map_err(|e| e.to_string())?;
    Ok((csv, formats::to_json(&report)))
}

fn determinism() -> Outcome {
    let (csv1, json1) = benchmark_outputs(42)?;
    let (csv2, json2) = benchmark_outputs(42)?;
    check!(csv1 == csv2, "feature CSVs differ");
    check!(json1 == json2, "report JSONs differ");
    Ok(format!("{} CSV bytes, {} JSON bytes identical", csv1.len(), json1.len()))
}

/// Published VerSe19 test metrics of the three-rule model.
const VERSE_TARGET: [(&str, f64); 4] = [("F1", 0.81), ("accuracy", 0.96), ("precision", 0.74), ("recall", 0.91)];

fn verse() -> Option<Outcome> {
    let root = PathBuf::from(std::env::var_os("VERSE19_DIR")?);
    Some((|| {
        let mut ds = Dataset::open(&root).map_err(|e| e.to_string())?;
        if let Some(split) = std::env::var_os("VERSE19_SPLIT") {
            ds.restrict_to_split(&PathBuf::from(split), "test").map_err(|e| e.to_string())?;
        }
        let table = extract_features(&ds, &PipelineConfig::default(), BUDGET, 0).map_err(|e| e.to_string())?;
        let report = evaluate(&table, &published_model(), 2).map_err(|e| e.to_string())?;
        let m = &report.metrics;
        let got = [m.f1, m.accuracy, m.precision, m.recall];
        let text: Vec<String> =
            VERSE_TARGET.iter().zip(got).map(|((n, t), g)| format!("{n} {g:.3} (published {t:.2})")).collect();
        let within = VERSE_TARGET.iter().zip(got).all(|((_, t), g)| (g - t).abs() <= 0.05);
        if !within {
            eprintln!("VerSe19 metrics deviate beyond 0.05: {}", text.join(", "));
            eprintln!("counts: {:?}", report.counts);
            for (name, d) in &report.feature_distributions {
                eprintln!(
                    "  {name}: fractured n={} median={:?} q25={:?} q75={:?} | intact n={} median={:?} q25={:?} q75={:?}",
                    d.fractured.n, d.fractured.median, d.fractured.q25, d.fractured.q75, d.intact.n, d.intact.median,
                    d.intact.q25, d.intact.q75
                );
            }
            return Err(format!("metrics outside ±0.05 of the published values: {}", text.join(", ")));
        }
        Ok(text.join(", "))
    })())
}

fn run(n: usize, limit: Duration, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default())
    });
    let t = start.elapsed();
    let out = match out {
        Ok(msg) if t > limit => Err(format!("{msg}; took {t:.2?}, limit {limit:?}")),
        other => other,
    };
    match &out {
        Ok(msg) => println!("criterion {n}: PASS  {msg} [{t:.2?}]"),
        Err(msg) => println!("criterion {n}: FAIL  {msg} [{t:.2?}]"),
    }
    out.is_ok()
}

fn main() {
    let s = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, s(1), fixed_model);
    ok &= run(2, s(10), geometry);
    ok &= run(3, s(120), sensitivity);
    ok &= run(4, s(30), reference_ratio);
    ok &= run(5, s(120), recovery);
    ok &= run(6, s(120), determinism);
    let start = Instant::now();
    match verse() {
        None => println!("criterion 7: SKIP  VERSE19_DIR not set"),
        Some(Ok(msg)) => println!("criterion 7: PASS  {msg} [{:.2?}]", start.elapsed()),
        // Deviations and data problems are reported; the criterion never blocks.
        Some(Err(msg)) => println!("criterion 7: FAIL  {msg} (non-blocking) [{:.2?}]", start.elapsed()),
    }
    if !ok {
        std::process::exit(1);
    }
}
