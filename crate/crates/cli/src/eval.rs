use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use occbench::datamodel::{load_manifest, Pose3D};
use occbench::geometry::make_crop_transform;
use occbench::heatmap::{decode_pose, load_heatmap};
use occbench::metrics::{aggregate, per_joint_errors, write_aggregate_csv, write_records_jsonl, ErrorRecord, GroupKey};
use occbench::occlusion::OccluderKind;
use occbench::sweep::RunMetadata;
use serde::Deserialize;

use crate::config::{existing, output_dir, required, RunConfig, DEFAULT_COVERAGE};
use crate::error::{CliError, CliResult};
use crate::output::{with_file, write_json};
use crate::EvalArgs;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseLine {
    frame_id: u64,
    joints_mm: Pose3D,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthLine {
    frame_id: u64,
    root_depth_mm: f64,
}

/// Reads a JSONL file into a map keyed by `frame_id`, rejecting duplicates.
fn read_keyed<T: for<'de> Deserialize<'de>>(path: &Path, id: impl Fn(&T) -> u64) -> CliResult<BTreeMap<u64, T>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(&line)
            .map_err(|e| CliError::Validation(format!("{} line {}: {e}", path.display(), n + 1)))?;
        let key = id(&row);
        if out.insert(key, row).is_some() {
            return Err(CliError::Validation(format!("{}: duplicate frame_id {key}", path.display())));
        }
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let manifest_path = existing(required(a.manifest, cfg.manifest, "manifest")?, "manifest")?;
    let manifest = load_manifest(&manifest_path)?;
    let root = manifest.skeleton.root_index;
    let include_root = !a.exclude_root && cfg.include_root.unwrap_or(true);
    let coverage = a.coverage.or(cfg.coverage).unwrap_or(DEFAULT_COVERAGE);

    let depths = match a.root_depth_source.as_str() {
        "gt" => None,
        path => Some(read_keyed(&existing(path.into(), "root depth file")?, |d: &DepthLine| d.frame_id)?),
    };
    let mut poses = match &a.poses {
        Some(p) => Some(read_keyed(&existing(p.clone(), "pose file")?, |l: &PoseLine| l.frame_id)?),
        None => None,
    };
    let heatmap_dir = a.heatmaps.map(|d| existing(d, "heatmap directory")).transpose()?;
    let out = output_dir(a.common.out, cfg.output_dir, "eval")?;

    let mut records = Vec::with_capacity(manifest.len());
    for f in &manifest.frames {
        let missing = |what: &str| CliError::Validation(format!("frame_id {} has no {what}", f.frame_id));
        let pred = match (&mut poses, &heatmap_dir) {
            (Some(map), _) => map.remove(&f.frame_id).ok_or_else(|| missing("predicted pose"))?.joints_mm,
            (None, Some(dir)) => {
                let path = dir.join(format!("{:06}.vhm", f.frame_id));
                if !path.exists() {
                    return Err(missing("heatmap file"));
                }
                let hm = load_heatmap(&path)?;
                let root_depth = match &depths {
                    Some(d) => d.get(&f.frame_id).ok_or_else(|| missing("root depth"))?.root_depth_mm,
                    None => f.root_depth(root),
                };
                let t = make_crop_transform(&f.camera, &f.bbox, hm.crop_size(), coverage)
                    .map_err(|e| CliError::Validation(format!("frame_id {}: {e}", f.frame_id)))?;
                decode_pose(&hm, &t, &f.camera, root_depth, root)
                    .map_err(|e| CliError::Runtime(format!("frame_id {}: {e}", f.frame_id)))?
            }
            (None, None) => unreachable!("clap requires --poses or --heatmaps"),
        };
        let errors = per_joint_errors(&pred, &f.pose_gt, root)
            .map_err(|e| CliError::Validation(format!("frame_id {}: {e}", f.frame_id)))?;
        records.push(ErrorRecord::new(
            f.frame_id,
            f.action.clone(),
            &a.label,
            OccluderKind::None,
            0.0,
            errors,
            root,
            include_root,
        ));
    }
    if let Some(extra) = poses.as_ref().and_then(|m| m.keys().next()) {
        return Err(CliError::Validation(format!("prediction for frame_id {extra} is not in the manifest")));
    }

    with_file(&out.join("records.jsonl"), |w| write_records_jsonl(w, &records))?;
    let per_action = aggregate(&records, &[GroupKey::Action])?;
    with_file(&out.join("per_action.csv"), |w| write_aggregate_csv(w, &per_action))?;
    let overall = aggregate(&records, &[])?;
    let settings = serde_json::json!({
        "manifest": manifest_path, "label": a.label, "root_depth_source": a.root_depth_source,
        "coverage": coverage, "source": if a.poses.is_some() { "poses" } else { "heatmaps" },
    });
    write_json(&out.join("metadata.json"), &RunMetadata::new("eval", 0, &settings, include_root))?;
    for row in per_action.iter().chain(&overall) {
        println!("{:<24} {:>9.3} mm  (std {:.3}, n={})", row.group, row.mean_mm, row.std_mm, row.count);
    }
    Ok(())
}
