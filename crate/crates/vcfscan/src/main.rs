use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vcfscan::bench;
use vcfscan::config::Config;
use vcfscan::dataset::{extract_features, Dataset};
use vcfscan::error::{Error, Result};
use vcfscan::eval::{evaluate, metrics_table};
use vcfscan::io::{annotations, features_csv, formats, load_label_volume, write_label_volume};
use vcfscan_core::features::feature_names;
use vcfscan_core::phantom::{generate_phantom, Deformation, PhantomSpec};
use vcfscan_core::pipeline::{process_scan, process_vertebra};
use vcfscan_core::rulefit::{train, Dataset as TrainData};
use vcfscan_core::rules::{published_model, predict, render_explanation, RuleModel};

#[derive(Parser)]
#[command(name = "vcfscan", version, about = "Vertebral compression fracture detection from label volumes")]
struct Cli {
    /// Seed for clustering, boosting and cross-validation folds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// JSON file with `pipeline`, `train`, `max_voxels` and `grade_threshold` keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the phantom benchmark suite, or a single phantom volume with --deformation.
    Phantom(PhantomArgs),
    /// Height maps (PGM) and optional mesh, pose and CSV dumps per vertebra.
    Extract(ExtractArgs),
    /// Feature CSV for a dataset directory or a single volume.
    Features(FeaturesArgs),
    /// Fit a rule model from a feature CSV and annotations.
    Train(TrainArgs),
    /// Classify one vertebra and explain the decision.
    Predict(PredictArgs),
    /// Evaluate a model on a dataset directory.
    Eval(EvalArgs),
    /// Render one vertebra's height map as PGM.
    Render(RenderArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory (suite) or volume file (single phantom).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = bench::DEFAULT_SCANS)]
    scans: usize,
    /// Volume extension for the suite: nii.gz, nii or lvol.
    #[arg(long, default_value = "nii.gz")]
    format: String,
    /// `none`, `wedge:F`, `crush:F` or `biconcave:F`.
    #[arg(long)]
    deformation: Option<String>,
    #[arg(long, default_value_t = 3)]
    count: usize,
    #[arg(long, default_value_t = bench::FIRST_LABEL)]
    label: u32,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
}

#[derive(Args)]
struct DatasetArgs {
    /// Directory with annotations.csv and one volume per scan.
    #[arg(long)]
    dataset: PathBuf,
    /// `scan_id,split` CSV restricting the scans.
    #[arg(long, requires = "split_name")]
    split: Option<PathBuf>,
    #[arg(long, requires = "split")]
    split_name: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    volume: PathBuf,
    /// Labels to process; all labels when omitted.
    #[arg(long)]
    label: Vec<u32>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    dump_mesh: bool,
    #[arg(long)]
    dump_pose: bool,
    #[arg(long)]
    heightmap_csv: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long, conflicts_with = "volume")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    split_name: Option<String>,
    #[arg(long, required_unless_present = "dataset")]
    volume: Option<PathBuf>,
    /// Scan id written for --volume input; defaults to the file stem.
    #[arg(long)]
    scan_id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels_from: PathBuf,
    #[arg(long)]
    grade_threshold: Option<u8>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    label: u32,
    /// Rule model JSON; the published three-rule model when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    features_out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    label: u32,
    #[arg(long)]
    out: PathBuf,
}

fn parse_deformation(s: &str) -> Result<Deformation> {
    if s == "none" {
        return Ok(Deformation::None);
    }
    let (kind, f) = s.split_once(':').ok_or_else(|| Error::Validation(format!("bad deformation {s:?}")))?;
    let f: f64 = f.parse().map_err(|_| Error::Validation(format!("bad deformation fraction {f:?}")))?;
    match kind {
        "wedge" => Ok(Deformation::Wedge(f)),
        "crush" => Ok(Deformation::Crush(f)),
        "biconcave" => Ok(Deformation::Biconcave(f)),
        _ => Err(Error::Validation(format!("unknown deformation {kind:?}"))),
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.pipeline.seed = seed;
        cfg.train.boosting.seed = seed;
        cfg.train.cv_seed = seed;
    }
    if let Some(g) = cli.grid_size {
        cfg.pipeline.grid_size = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: Option<&Path>) -> Result<RuleModel> {
    path.map_or_else(|| Ok(published_model()), formats::read_model)
}

fn open_dataset(d: &DatasetArgs) -> Result<Dataset> {
    let mut ds = Dataset::open(&d.dataset)?;
    if let (Some(split), Some(name)) = (&d.split, &d.split_name) {
        ds.restrict_to_split(split, name)?;
    }
    Ok(ds)
}

fn write_bytes(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(Error::io(path))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Phantom(a) => {
            if let Some(d) = &a.deformation {
                let spec = PhantomSpec {
                    deformation: parse_deformation(d)?,
                    count_in_scan: a.count,
                    label: a.label,
                    spacing: [a.spacing; 3],
                    jitter: a.jitter,
                    ..PhantomSpec::default()
                };
                let scan = generate_phantom(&spec, cfg.pipeline.seed)?;
                write_label_volume(&scan.volume, &a.out)?;
            } else {
                if !["nii.gz", "nii", "lvol"].contains(&a.format.as_str()) {
                    return Err(Error::Validation(format!("unknown volume format {:?}", a.format)));
                }
                let scans = bench::write_suite(&a.out, a.scans, cfg.pipeline.seed, &a.format)?;
                println!("wrote {} scans to {}", scans.len(), a.out.display());
            }
        }
        Command::Extract(a) => {
            let vol = load_label_volume(&a.volume, cfg.max_voxels)?;
            std::fs::create_dir_all(&a.out_dir).map_err(Error::io(&a.out_dir))?;
            let labels = if a.label.is_empty() { vol.labels() } else { a.label.clone() };
            let stem = file_stem(&a.volume);
            for label in labels {
                let g = match process_vertebra(&vol, label, &cfg.pipeline) {
                    Ok(g) => g,
                    Err(e) => {
                        eprintln!("label {label}: {e} [{}]", e.code());
                        continue;
                    }
                };
                let base = a.out_dir.join(format!("{stem}_{label}"));
                write_bytes(&base.with_extension("pgm"), formats::encode_pgm(&g.heightmap))?;
                if a.dump_mesh {
                    write_bytes(&base.with_extension("ply"), formats::encode_ply(&g.mesh))?;
                }
                if a.dump_pose {
                    write_bytes(&with_suffix(&base, "_pose.json"), formats::encode_pose(label, &g.pose))?;
                }
                if a.heightmap_csv {
                    write_bytes(&with_suffix(&base, "_heightmap.csv"), formats::encode_heightmap_csv(&g.heightmap))?;
                }
                println!("label {label}: {} valid cells", g.heightmap.valid_count());
            }
        }
        Command::Features(a) => {
            let rows = if let Some(dir) = &a.dataset {
                let ds = open_dataset(&DatasetArgs {
                    dataset: dir.clone(),
                    split: a.split.clone(),
                    split_name: a.split_name.clone(),
                })?;
                let table = extract_features(&ds, &cfg.pipeline, cfg.max_voxels, cli.threads)?;
                for e in &table.excluded {
                    eprintln!("excluded {} {}: {} ({})", e.scan_id, e.vertebra_label, e.reason, e.detail);
                }
                table.csv_rows()
            } else {
                let path = a.volume.as_ref().expect("required by clap");
                let vol = load_label_volume(path, cfg.max_voxels)?;
                let scan = process_scan(&vol, &vol.labels(), &cfg.pipeline);
                for (label, r) in &scan.vertebrae {
                    if let Err(e) = r {
                        eprintln!("label {label}: {e} [{}]", e.code());
                    }
                }
                let id = a.scan_id.clone().unwrap_or_else(|| file_stem(path));
                scan.features?.into_iter().map(|fv| (id.clone(), fv)).collect()
            };
            features_csv::write(&rows, &a.out)?;
        }
        Command::Train(a) => {
            let threshold = a.grade_threshold.unwrap_or(cfg.grade_threshold);
            let data = training_set(&a.features, &a.labels_from, threshold)?;
            let report = train(&data, &cfg.train)?;
            formats::write_json(&report.model, &a.out)?;
            if let Some(r) = &a.report {
                formats::write_json(&report, r)?;
            }
            for (rule, c) in report.model.rules.iter().zip(&report.model.coefficients) {
                println!("{c:+.8}  {}", rule.human_text());
            }
            println!("intercept {:+.8}  lambda {}", report.model.intercept, report.lasso_lambda);
        }
        Command::Predict(a) => {
            let model = load_model(a.model.as_deref())?;
            let vol = load_label_volume(&a.volume, cfg.max_voxels)?;
            let scan = process_scan(&vol, &vol.labels(), &cfg.pipeline);
            if let Some((_, Err(e))) = scan.vertebrae.iter().find(|(l, _)| *l == a.label) {
                return Err(e.clone().into());
            }
            let fvs = scan.features?;
            let fv =
                fvs.iter().find(|f| f.label == a.label).ok_or(vcfscan_core::Error::EmptyMask { label: a.label })?;
            let p = predict(&model, fv)?;
            print!("{}", render_explanation(&p));
        }
        Command::Eval(a) => {
            let model = load_model(a.model.as_deref())?;
            let ds = open_dataset(&a.data)?;
            let table = extract_features(&ds, &cfg.pipeline, cfg.max_voxels, cli.threads)?;
            if let Some(p) = &a.features_out {
                features_csv::write(&table.csv_rows(), p)?;
            }
            let report = evaluate(&table, &model, cfg.grade_threshold)?;
            formats::write_json(&report, &a.out)?;
            print!("{}", metrics_table(&report));
        }
        Command::Render(a) => {
            let vol = load_label_volume(&a.volume, cfg.max_voxels)?;
            let g = process_vertebra(&vol, a.label, &cfg.pipeline)?;
            write_bytes(&a.out, formats::encode_pgm(&g.heightmap))?;
        }
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("volume");
    name.trim_end_matches(".gz").trim_end_matches(".nii").trim_end_matches(".lvol").to_string()
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Joins feature rows with annotation grades. Rows without an annotation or
/// flagged for foreign material are skipped, as are rows missing any ratio.
fn training_set(features: &Path, labels: &Path, grade_threshold: u8) -> Result<TrainData> {
    let grades: BTreeMap<(String, u32), _> = annotations::read(labels)?
        .into_iter()
        .filter(|r| !r.exclusion_flags.foreign_material)
        .map(|r| ((r.scan_id.clone(), r.vertebra_label), r.genant_grade))
        .collect();
    let names = feature_names(false);
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut skipped = 0;
    for row in features_csv::read(features)? {
        let complete = names.iter().all(|n| row.values.get(n).copied().flatten().is_some());
        match grades.get(&(row.scan_id.clone(), row.vertebra_label)) {
            Some(g) if complete => {
                ys.push(g.is_positive(grade_threshold));
                rows.push(row);
            }
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} feature rows skipped (unannotated, excluded or incomplete)");
    }
    Ok(TrainData::from_rows(&names, &rows, ys)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
