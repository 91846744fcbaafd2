use super::{DataError, Pose3D, SequenceManifest};

/// Keeps a frame when some joint has moved at least `threshold_mm`
/// (Euclidean) away from its position in the last kept frame. Frame 0 is
/// always kept.
pub fn adaptive_subsample_poses(poses: &[Pose3D], threshold_mm: f64) -> Result<Vec<usize>, DataError> {
    if poses.is_empty() {
        return Err(DataError::EmptyManifest);
    }
    if !(threshold_mm > 0.0) {
        return Err(DataError::InvalidParameter(format!("threshold must be positive, got {threshold_mm}")));
    }
    let threshold_sq = threshold_mm * threshold_mm;
    let mut kept = vec![0];
    let mut last = &poses[0];
    for (i, pose) in poses.iter().enumerate().skip(1) {
        let moved = pose
            .joints()
            .iter()
            .zip(last.joints())
            .any(|(a, b)| (a - b).norm_squared() >= threshold_sq);
        if moved {
            kept.push(i);
            last = pose;
        }
    }
    Ok(kept)
}

pub fn adaptive_subsample(manifest: &SequenceManifest, threshold_mm: f64) -> Result<Vec<usize>, DataError> {
    let poses: Vec<Pose3D> = manifest.frames.iter().map(|f| f.pose_gt.clone()).collect();
    adaptive_subsample_poses(&poses, threshold_mm)
}

/// Indices `0, stride, 2·stride, …` below `len`.
pub fn stride_subsample(len: usize, stride: usize) -> Result<Vec<usize>, DataError> {
    if stride == 0 {
        return Err(DataError::InvalidParameter("stride must be at least 1".into()));
    }
    Ok((0..len).step_by(stride).collect())
}
