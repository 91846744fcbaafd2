//! Cross-kind comparison of occluded-pixel-count distributions.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, measure_degree, ObjectSource, OccluderKind, OcclusionError, OcclusionSpec};
use crate::geometry::BoundingBox;
use crate::seed::{degree_key, derive_rng};

/// Relative deviation from the cross-kind mean above which a kind is flagged.
pub const DEVIATION_LIMIT: f64 = 0.10;
pub const MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCell {
    pub kind: OccluderKind,
    pub degree: f64,
    pub samples: usize,
    pub mean_count: f64,
    pub std_count: f64,
    pub mean_fraction: f64,
    /// Largest |measured − target| over the samples.
    pub max_abs_error: f64,
    /// `(mean_count − cross-kind mean) / cross-kind mean`; zero when that mean is zero.
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFlag {
    pub kind: OccluderKind,
    pub degree: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bbox_pixel_count: u64,
    pub cells: Vec<CalibrationCell>,
    pub flags: Vec<CalibrationFlag>,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn cell(&self, kind: OccluderKind, degree: f64) -> Option<&CalibrationCell> {
        self.cells.iter().find(|c| c.kind == kind && degree_key(c.degree) == degree_key(degree))
    }
}

/// Generates `samples_per_cell` occluder sets for every (kind, degree) and
/// summarizes the occluded pixel counts. Samples run in parallel on streams
/// derived from one draw of `rng`, so the report depends only on that draw.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_distributions<R: RngCore>(
    kinds: &[OccluderKind],
    degrees: &[f64],
    bbox: &BoundingBox,
    canvas: (u32, u32),
    samples_per_cell: usize,
    objects: Option<ObjectSource<'_>>,
    rng: &mut R,
) -> Result<CalibrationReport, OcclusionError> {
    if samples_per_cell < MIN_SAMPLES {
        return Err(OcclusionError::InvalidSpec(format!(
            "samples_per_cell must be at least {MIN_SAMPLES}, got {samples_per_cell}"
        )));
    }
    let base: u64 = rng.random();
    let mut cells = Vec::new();
    let mut flags = Vec::new();
    let mut bbox_pixel_count = 0;
    for &degree in degrees {
        let mut row = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let measured = (0..samples_per_cell)
                .into_par_iter()
                .map(|i| {
                    let mut r = derive_rng(base, kind.name(), &[degree_key(degree), i as u64]);
                    let spec = OcclusionSpec::new(kind, degree, r.random())?;
                    let set = generate(&spec, bbox, canvas, objects, &mut r)?;
                    Ok(measure_degree(&set, bbox))
                })
                .collect::<Result<Vec<_>, OcclusionError>>()?;
            bbox_pixel_count = measured[0].bbox_pixel_count;
            let n = measured.len() as f64;
            let counts: Vec<f64> = measured.iter().map(|m| m.occluded_pixel_count as f64).collect();
            let mean = counts.iter().sum::<f64>() / n;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
            row.push(CalibrationCell {
                kind,
                degree,
                samples: measured.len(),
                mean_count: mean,
                std_count: var.sqrt(),
                mean_fraction: measured.iter().map(|m| m.occluded_fraction).sum::<f64>() / n,
                max_abs_error: measured.iter().map(|m| (m.occluded_fraction - degree).abs()).fold(0.0, f64::max),
                relative_deviation: 0.0,
            });
        }
        let cross = row.iter().map(|c| c.mean_count).sum::<f64>() / row.len().max(1) as f64;
        for c in &mut row {
            c.relative_deviation = if cross > 0.0 { (c.mean_count - cross) / cross } else { 0.0 };
            if c.relative_deviation.abs() > DEVIATION_LIMIT {
                flags.push(CalibrationFlag { kind: c.kind, degree, relative_deviation: c.relative_deviation });
            }
        }
        cells.extend(row);
    }
    Ok(CalibrationReport { bbox_pixel_count, cells, flags })
}
