use std::path::PathBuf;

use occbench::geometry::BoundingBox;
use occbench::metrics::write_records_jsonl;
use occbench::occlusion::{calibrate_distributions, ObjectLibrary, ObjectSource, OccluderKind, Split};
use occbench::seed::{derive_rng, derive_seed};
use occbench::sweep::{
    degree_grid, make_reference_predictor, matrix_from_curves, run_sweep, write_curves_csv, write_matrix_csv,
    EvalDataset, Predictor, RunMetadata, SweepConfig, MATRIX_DEGREES,
};
use serde::Serialize;

use crate::config::{existing, output_dir, required, PredictorEntry, RunConfig, DEFAULT_COVERAGE, DEFAULT_CROP_SIZE};
use crate::error::{CliError, CliResult};
use crate::output::{with_file, write_json, write_jsonl};
use crate::{CalibrateArgs, SweepArgs};

fn load_library(path: Option<PathBuf>) -> CliResult<Option<ObjectLibrary>> {
    path.map(|p| Ok(ObjectLibrary::load(existing(p, "object library")?)?)).transpose()
}

/// Requested kinds, or every kind the available occluder sources support.
fn resolve_kinds(requested: Option<Vec<OccluderKind>>, library: Option<&ObjectLibrary>) -> Vec<OccluderKind> {
    requested.unwrap_or_else(|| {
        let kinds: Vec<_> = OccluderKind::ALL.into_iter().filter(|k| library.is_some() || !k.needs_library()).collect();
        if library.is_none() {
            eprintln!("note: no --library given, skipping objects and mixture");
        }
        kinds
    })
}

#[derive(Serialize)]
struct Settings<'a> {
    manifest: &'a PathBuf,
    library: Option<&'a PathBuf>,
    crop_size: u32,
    coverage: f64,
    sweep: &'a SweepConfig,
    predictors: &'a [PredictorEntry],
}

/// `sweep` and `matrix`: run every predictor over the configured grid and
/// write records, curves and (for `matrix`) the train x test matrix.
pub fn sweep(a: SweepArgs, matrix: bool) -> CliResult<()> {
    let command = if matrix { "matrix" } else { "sweep" };
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let manifest_path = existing(required(a.manifest, cfg.manifest, "manifest")?, "manifest")?;
    let seed = required(a.common.seed, cfg.seed, "seed")?;
    let library_path = a.library.or(cfg.library);
    let library = load_library(library_path.clone())?;
    let kinds = resolve_kinds(a.kinds.or(cfg.kinds), library.as_ref());
    let degrees = match (matrix, a.degrees.or(cfg.degrees)) {
        (true, Some(_)) => {
            return Err(CliError::Validation("matrix always averages degrees 0.1 to 0.5; drop --degrees".into()))
        }
        (true, None) => MATRIX_DEGREES.to_vec(),
        (false, Some(d)) => d,
        (false, None) => {
            if !(a.degree_step > 0.0) {
                return Err(CliError::Validation(format!("--degree-step must be positive, got {}", a.degree_step)));
            }
            degree_grid(a.degree_step, occbench::occlusion::MAX_DEGREE)
        }
    };
    let entries = if a.predictors.is_empty() { cfg.predictors } else { a.predictors };
    if entries.is_empty() {
        return Err(CliError::Validation("at least one --predictor is required (flag or config)".into()));
    }
    let crop_size = a.crop_size.or(cfg.crop_size).unwrap_or(DEFAULT_CROP_SIZE);
    let coverage = a.coverage.or(cfg.coverage).unwrap_or(DEFAULT_COVERAGE);
    let config = SweepConfig {
        seed,
        kinds,
        degrees,
        include_root: !a.exclude_root && cfg.include_root.unwrap_or(true),
        object_split: cfg.object_split.unwrap_or(Split::Test),
        occluders: cfg.occluders.unwrap_or_default(),
    };
    config.validate()?;
    let out = output_dir(a.common.out, cfg.output_dir, command)?;

    let predictors: Vec<Box<dyn Predictor>> = entries
        .iter()
        .map(|e| {
            let label = e.label();
            let pseed = derive_seed(seed, &format!("predictor/{label}"), &[]);
            make_reference_predictor(&e.spec, Some(label), pseed, crop_size, coverage)
        })
        .collect::<Result<_, _>>()?;
    let refs: Vec<&dyn Predictor> = predictors.iter().map(|p| p.as_ref()).collect();
    let dataset = EvalDataset::load(&manifest_path, crop_size, coverage)?;
    let result = run_sweep(&refs, &dataset, &config, library.as_ref())?;

    with_file(&out.join("records.jsonl"), |w| write_records_jsonl(w, &result.records))?;
    with_file(&out.join("curves.csv"), |w| write_curves_csv(w, &result.curves, true))?;
    write_json(&out.join("curves.json"), &result.curves)?;
    write_jsonl(&out.join("failures.jsonl"), &result.failures)?;
    if matrix {
        let m = matrix_from_curves(&result.curves)?;
        with_file(&out.join("matrix.csv"), |w| write_matrix_csv(w, &m))?;
        write_json(&out.join("matrix.json"), &m)?;
        for (label, row) in m.rows.iter().zip(&m.cells) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
            println!("{label:<24} {}", cells.join("  "));
        }
    }
    let settings = Settings {
        manifest: &manifest_path,
        library: library_path.as_ref(),
        crop_size,
        coverage,
        sweep: &config,
        predictors: &entries,
    };
    let mut meta = RunMetadata::new(command, seed, &settings, config.include_root);
    for e in &entries {
        let label = e.label();
        let n = result.failures.iter().filter(|f| f.predictor == label).count();
        meta.excluded_frames.insert(label, n);
    }
    write_json(&out.join("metadata.json"), &meta)?;
    println!(
        "{command}: {} predictors x {} kinds x {} degrees over {} frames, {} records, {} excluded -> {}",
        entries.len(),
        config.kinds.len(),
        config.degrees.len(),
        dataset.len(),
        result.records.len(),
        result.failures.len(),
        out.display()
    );
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let seed = required(a.common.seed, cfg.seed, "seed")?;
    let library = load_library(a.library.or(cfg.library))?;
    let kinds = resolve_kinds(a.kinds.or(cfg.kinds), library.as_ref());
    let degrees = a.degrees.or(cfg.degrees).unwrap_or_else(|| degree_grid(0.1, 0.7)[1..].to_vec());
    let samples = a.samples.or(cfg.samples_per_cell).unwrap_or(200);
    let c = a.canvas as f64;
    let bbox = match a.bbox.as_deref() {
        Some(&[x, y, w, h]) => BoundingBox::new(x, y, w, h),
        Some(_) => unreachable!("clap takes exactly four values"),
        None => BoundingBox::new(0.285 * c, 0.1 * c, 0.43 * c, 0.8 * c),
    }
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let out = output_dir(a.common.out, cfg.output_dir, "calibrate")?;

    let objects = library.as_ref().map(|l| ObjectSource { library: l, split: cfg.object_split.unwrap_or(Split::Test) });
    let mut rng = derive_rng(seed, "calibrate", &[]);
    let report = calibrate_distributions(&kinds, &degrees, &bbox, (a.canvas, a.canvas), samples, objects, &mut rng)?;

    write_json(&out.join("calibration.json"), &report)?;
    let path = out.join("calibration.csv");
    with_file(&path, |w| -> CliResult<()> {
        let mut csv = csv::Writer::from_writer(w);
        for cell in &report.cells {
            csv.serialize(cell).map_err(|e| CliError::io(&path, e))?;
        }
        csv.flush().map_err(|e| CliError::io(&path, e))
    })?;
    let settings = serde_json::json!({
        "kinds": kinds, "degrees": degrees, "samples": samples, "canvas": a.canvas, "bbox": bbox.to_array(),
    });
    write_json(&out.join("metadata.json"), &RunMetadata::new("calibrate", seed, &settings, true))?;
    for cell in &report.cells {
        println!(
            "{:<18} {:.2}  mean {:>9.1} px  std {:>7.1}  max |error| {:.4}  deviation {:+.2}%",
            cell.kind.to_string(),
            cell.degree,
            cell.mean_count,
            cell.std_count,
            cell.max_abs_error,
            100.0 * cell.relative_deviation
        );
    }
    if report.passed() {
        println!("all kinds within 10% of the cross-kind mean");
    } else {
        for f in &report.flags {
            eprintln!("flagged: {} at {} deviates {:+.2}%", f.kind, f.degree, 100.0 * f.relative_deviation);
        }
    }
    Ok(())
}
