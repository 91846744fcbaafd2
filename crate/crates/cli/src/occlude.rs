use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::Point2;
use occbench::augment::{geometric_augment, photometric_augment};
use occbench::datamodel::{load_manifest, resolve_image_path, save_manifest, SequenceManifest};
use occbench::geometry::{project, BoundingBox};
use occbench::occlusion::{
    apply_policy, composite, measure_degree, AugmentationPolicy, ObjectLibrary, ObjectSource, OccluderKind,
    OcclusionGenerator, OcclusionSpec, Split, MAX_DEGREE,
};
use occbench::seed::derive_rng;
use occbench::sweep::{occlusion_seed, EvalDataset, RunMetadata};
use serde::Serialize;

use crate::config::{existing, output_dir, required, RunConfig, DEFAULT_COVERAGE, DEFAULT_CROP_SIZE};
use crate::error::{CliError, CliResult};
use crate::output::{image_name, write_json, write_jsonl};
use crate::{AugmentArgs, OccludeArgs};

#[derive(Serialize)]
struct Measurement {
    frame_id: u64,
    image_path: String,
    kind: OccluderKind,
    target_degree: f64,
    seed: u64,
    occluded_fraction: f64,
    occluded_pixel_count: u64,
    bbox_pixel_count: u64,
}

fn load_library(path: Option<PathBuf>, kind: OccluderKind) -> CliResult<Option<ObjectLibrary>> {
    match path {
        Some(p) => Ok(Some(ObjectLibrary::load(existing(p, "object library")?)?)),
        None if kind.needs_library() => Err(CliError::Validation(format!("kind {kind} requires --library"))),
        None => Ok(None),
    }
}

fn save_png(img: &RgbImage, path: &Path) -> CliResult<()> {
    img.save(path).map_err(|e| CliError::io(path, e))
}

fn load_images(manifest_path: &Path, manifest: &SequenceManifest) -> CliResult<Vec<RgbImage>> {
    manifest
        .frames
        .iter()
        .map(|f| {
            let p = resolve_image_path(manifest_path, &f.image_path);
            image::open(&p).map(|i| i.to_rgb8()).map_err(|e| CliError::io(&p, e))
        })
        .collect()
}

/// Occludes every frame with its own seeded occluder set. Frames are
/// occluded in place (same size, updated manifest) unless `--crop-size` asks
/// for virtual-camera crops. Degree 0 copies the input files unchanged.
pub fn occlude(a: OccludeArgs) -> CliResult<()> {
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let manifest_path = existing(required(a.manifest, cfg.manifest, "manifest")?, "manifest")?;
    let kind = required(a.kind, cfg.kind, "kind")?;
    let degree = required(a.degree, cfg.degree, "degree")?;
    let seed = required(a.common.seed, cfg.seed, "seed")?;
    if !(0.0..=MAX_DEGREE).contains(&degree) {
        return Err(CliError::Validation(format!("--degree must lie in [0, {MAX_DEGREE}], got {degree}")));
    }
    OcclusionSpec::new(kind, degree, 0)?;
    let library = load_library(a.library.or(cfg.library), kind)?;
    let out = output_dir(a.common.out, cfg.output_dir, "occlude")?;
    std::fs::create_dir_all(out.join("images")).map_err(|e| CliError::io(&out, e))?;

    let manifest = load_manifest(&manifest_path)?;
    let generator = OcclusionGenerator::new(cfg.occluders.clone().unwrap_or_default());
    let objects = library.as_ref().map(|l| ObjectSource { library: l, split: a.split });

    let crop = a.crop_size.map(|size| EvalDataset::load(&manifest_path, size, cfg.coverage.unwrap_or(DEFAULT_COVERAGE)));
    let crop = crop.transpose()?;
    let full = if crop.is_none() { Some(load_images(&manifest_path, &manifest)?) } else { None };

    let mut rows = Vec::with_capacity(manifest.len());
    let mut occluded_manifest = manifest.clone();
    for (i, frame) in manifest.frames.iter().enumerate() {
        let (image, bbox) = match (&crop, &full) {
            (Some(ds), _) => (&ds.frames[i].crop, ds.frames[i].bbox_crop),
            (None, Some(images)) => {
                let (w, h) = images[i].dimensions();
                let bbox = frame.bbox.clipped(w, h).ok_or_else(|| {
                    CliError::Validation(format!("frame {}: bbox lies outside the image", frame.frame_id))
                })?;
                (&images[i], bbox)
            }
            (None, None) => unreachable!("one image source is always loaded"),
        };
        let cell_seed = occlusion_seed(seed, frame.frame_id, kind, degree);
        let spec = OcclusionSpec::new(kind, degree, cell_seed)?;
        let masks = generator.generate(&spec, &bbox, image.dimensions(), objects, &mut spec.rng())?;
        let name = image_name(frame.frame_id);
        let dest = out.join(&name);
        if masks.is_empty() && crop.is_none() {
            let src = resolve_image_path(&manifest_path, &frame.image_path);
            std::fs::copy(&src, &dest).map_err(|e| CliError::io(&src, e))?;
        } else {
            save_png(&composite(image, &masks, library.as_ref())?, &dest)?;
        }
        let m = measure_degree(&masks, &bbox);
        rows.push(Measurement {
            frame_id: frame.frame_id,
            image_path: name.clone(),
            kind,
            target_degree: degree,
            seed: cell_seed,
            occluded_fraction: m.occluded_fraction,
            occluded_pixel_count: m.occluded_pixel_count,
            bbox_pixel_count: m.bbox_pixel_count,
        });
        occluded_manifest.frames[i].image_path = PathBuf::from(name);
    }
    write_jsonl(&out.join("measurements.jsonl"), &rows)?;
    if crop.is_none() {
        save_manifest(&occluded_manifest, out.join("manifest.json"))?;
    }
    let settings = serde_json::json!({
        "manifest": manifest_path, "kind": kind, "degree": degree, "split": a.split,
        "crop_size": a.crop_size, "occluders": generator.config,
    });
    write_json(&out.join("metadata.json"), &RunMetadata::new("occlude", seed, &settings, true))?;
    let mean = rows.iter().map(|r| r.occluded_fraction).sum::<f64>() / rows.len().max(1) as f64;
    println!("occluded {} frames with {kind} at {degree}: mean measured degree {mean:.4}", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct AugmentedLabel {
    frame_id: u64,
    image_path: String,
    joints_2d: Vec<[f64; 2]>,
    flipped: bool,
    occluded: bool,
    occluded_fraction: Option<f64>,
}

/// Writes augmented training crops and their 2D joint labels. Order per
/// frame: geometric, then occlusion of the augmented person box, then
/// photometric, so occluders share the photometric distortion.
pub fn augment(a: AugmentArgs) -> CliResult<()> {
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let manifest_path = existing(required(a.manifest, cfg.manifest, "manifest")?, "manifest")?;
    let seed = required(a.common.seed, cfg.seed, "seed")?;
    let kind = a.kind.or(cfg.kind).unwrap_or(OccluderKind::None);
    let degree = a.degree.or(cfg.degree).unwrap_or(0.0);
    let probability = a.probability.or(cfg.occlusion_probability).unwrap_or(0.5);
    let params = cfg.augment.clone().unwrap_or_default();
    params.validate()?;
    let policy = (kind != OccluderKind::None)
        .then(|| AugmentationPolicy::new(OcclusionSpec::new(kind, degree, 0)?, probability))
        .transpose()?;
    let library = load_library(a.library.or(cfg.library), kind)?;
    let out = output_dir(a.common.out, cfg.output_dir, "augment")?;
    std::fs::create_dir_all(out.join("images")).map_err(|e| CliError::io(&out, e))?;

    let crop_size = a.crop_size.or(cfg.crop_size).unwrap_or(DEFAULT_CROP_SIZE);
    let ds = EvalDataset::load(&manifest_path, crop_size, cfg.coverage.unwrap_or(DEFAULT_COVERAGE))?;
    let objects = library.as_ref().map(|l| ObjectSource { library: l, split: Split::Train });
    let mut labels = Vec::with_capacity(ds.len());
    for f in &ds.frames {
        let mut rng = derive_rng(seed, "augment", &[f.record.frame_id]);
        let joints: Vec<Point2<f64>> = f
            .record
            .pose_gt
            .joints()
            .iter()
            .map(|p| f.transform.warp_point(&project(&f.record.camera, p)?))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Runtime(format!("frame {}: {e}", f.record.frame_id)))?;
        let (img, joints, g) = geometric_augment(&f.crop, &joints, &ds.skeleton, &params, &mut rng)?;
        let (img, occluded, fraction) = match &policy {
            Some(p) => {
                let bbox = BoundingBox::enclosing(&joints, crop_size as f64 / 32.0).and_then(|b| b.clipped(crop_size, crop_size));
                match bbox {
                    Some(b) => {
                        let o = apply_policy(p, &img, &b, objects, &mut rng)?;
                        (o.image, o.applied, o.degree.map(|d| d.occluded_fraction))
                    }
                    None => (img, false, None),
                }
            }
            None => (img, false, None),
        };
        let (img, _) = photometric_augment(&img, &params, &mut rng)?;
        let name = image_name(f.record.frame_id);
        save_png(&img, &out.join(&name))?;
        labels.push(AugmentedLabel {
            frame_id: f.record.frame_id,
            image_path: name,
            joints_2d: joints.iter().map(|p| [p.x, p.y]).collect(),
            flipped: g.flip,
            occluded,
            occluded_fraction: fraction,
        });
    }
    write_jsonl(&out.join("labels.jsonl"), &labels)?;
    let settings = serde_json::json!({
        "manifest": manifest_path, "kind": kind, "degree": degree, "probability": probability,
        "crop_size": crop_size, "augment": params,
    });
    write_json(&out.join("metadata.json"), &RunMetadata::new("augment", seed, &settings, true))?;
    let applied = labels.iter().filter(|l| l.occluded).count();
    println!("wrote {} augmented crops ({applied} occluded) to {}", labels.len(), out.display());
    Ok(())
}
