//! Mean per-joint position error after root alignment, and grouped
//! aggregation of per-frame errors.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::Pose3D;
use crate::occlusion::OccluderKind;
use crate::seed::degree_key;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("joint count mismatch: prediction has {pred}, ground truth has {gt}")]
    JointCount { pred: usize, gt: usize },
    #[error("root index {root} out of range for {joints} joints")]
    RootIndex { root: usize, joints: usize },
    #[error("no records to aggregate")]
    EmptyGroups,
    #[error("record line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Subtracts the root joint from every joint.
pub fn root_align(pose: &Pose3D, root_index: usize) -> Result<Pose3D, MetricsError> {
    let n = pose.num_joints();
    if root_index >= n {
        return Err(MetricsError::RootIndex { root: root_index, joints: n });
    }
    let root = *pose.joint(root_index);
    let mut joints: Vec<_> = pose.joints().iter().map(|j| j - root).collect();
    // exact zero even when the subtraction above would give -0.0
    joints[root_index] = nalgebra::Vector3::zeros();
    Ok(Pose3D::new(joints).expect("aligned pose stays finite"))
}

/// Euclidean error of every joint after root-aligning both poses.
pub fn per_joint_errors(pred: &Pose3D, gt: &Pose3D, root_index: usize) -> Result<Vec<f64>, MetricsError> {
    if pred.num_joints() != gt.num_joints() {
        return Err(MetricsError::JointCount { pred: pred.num_joints(), gt: gt.num_joints() });
    }
    let (p, g) = (root_align(pred, root_index)?, root_align(gt, root_index)?);
    Ok(p.joints().iter().zip(g.joints()).map(|(a, b)| (a - b).norm()).collect())
}

/// MPJPE in millimetres. With `include_root`, the root's zero error counts
/// towards the mean.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D, root_index: usize, include_root: bool) -> Result<f64, MetricsError> {
    let errors = per_joint_errors(pred, gt, root_index)?;
    Ok(mean_of(&errors, root_index, include_root))
}

fn mean_of(errors: &[f64], root_index: usize, include_root: bool) -> f64 {
    let n = errors.len() - usize::from(!include_root);
    if n == 0 {
        return 0.0;
    }
    let sum = errors.iter().enumerate().filter(|&(j, _)| include_root || j != root_index).map(|(_, e)| e);
    neumaier(sum) / n as f64
}

/// Compensated summation; order effects stay far below 1e-9 relative.
pub fn neumaier<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub frame_id: u64,
    pub action: String,
    /// Label of the predictor that produced the pose.
    #[serde(default)]
    pub predictor: String,
    pub kind: OccluderKind,
    pub degree: f64,
    pub mpjpe_mm: f64,
    pub per_joint_mm: Vec<f64>,
}

impl ErrorRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: u64,
        action: impl Into<String>,
        predictor: impl Into<String>,
        kind: OccluderKind,
        degree: f64,
        per_joint_mm: Vec<f64>,
        root_index: usize,
        include_root: bool,
    ) -> Self {
        let mpjpe_mm = mean_of(&per_joint_mm, root_index, include_root);
        Self { frame_id, action: action.into(), predictor: predictor.into(), kind, degree, mpjpe_mm, per_joint_mm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Predictor,
    Action,
    Kind,
    Degree,
}

impl std::str::FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "predictor" => Ok(GroupKey::Predictor),
            "action" => Ok(GroupKey::Action),
            "kind" => Ok(GroupKey::Kind),
            "degree" => Ok(GroupKey::Degree),
            other => Err(format!("unknown group key {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupValue {
    Text(String),
    Kind(OccluderKind),
    /// Thousandths.
    Degree(u64),
}

impl fmt::Display for GroupValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupValue::Text(s) => f.write_str(s),
            GroupValue::Kind(k) => write!(f, "{k}"),
            GroupValue::Degree(d) => write!(f, "{:.3}", *d as f64 / 1000.0),
        }
    }
}

fn key_of(r: &ErrorRecord, group_by: &[GroupKey]) -> Vec<GroupValue> {
    group_by
        .iter()
        .map(|k| match k {
            GroupKey::Predictor => GroupValue::Text(r.predictor.clone()),
            GroupKey::Action => GroupValue::Text(r.action.clone()),
            GroupKey::Kind => GroupValue::Kind(r.kind),
            GroupKey::Degree => GroupValue::Degree(degree_key(r.degree)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Key values joined with `/`; `all` when ungrouped.
    pub group: String,
    pub mean_mm: f64,
    /// Population standard deviation.
    pub std_mm: f64,
    pub count: usize,
}

/// Mean and population standard deviation of `mpjpe_mm` per group, ordered
/// by group key (kinds in declaration order, degrees numerically).
pub fn aggregate(records: &[ErrorRecord], group_by: &[GroupKey]) -> Result<Vec<AggregateRow>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyGroups);
    }
    let mut groups: BTreeMap<Vec<GroupValue>, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(key_of(r, group_by)).or_default().push(r.mpjpe_mm);
    }
    Ok(groups
        .into_iter()
        .map(|(key, values)| {
            let (mean, std) = mean_std(&values);
            let group = if key.is_empty() {
                "all".to_string()
            } else {
                key.iter().map(ToString::to_string).collect::<Vec<_>>().join("/")
            };
            AggregateRow { group, mean_mm: mean, std_mm: std, count: values.len() }
        })
        .collect())
}

/// Mean and population standard deviation, both compensated.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = neumaier(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (neumaier(&sq) / n).sqrt())
}

pub fn write_records_jsonl<W: Write>(mut w: W, records: &[ErrorRecord]) -> Result<(), MetricsError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| MetricsError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(r: R) -> Result<Vec<ErrorRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| MetricsError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// CSV with header `group,mean_mm,std_mm,count`.
pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<(), MetricsError> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose3D {
        Pose3D::new(
            (0..17)
                .map(|_| Vector3::new(rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0), rng.random_range(3000.0..5000.0)))
                .collect(),
        )
        .unwrap()
    }

    fn record(action: &str, kind: OccluderKind, degree: f64, v: f64) -> ErrorRecord {
        ErrorRecord { frame_id: 0, action: action.into(), predictor: "p".into(), kind, degree, mpjpe_mm: v, per_joint_mm: vec![v] }
    }

    #[test]
    fn alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = random_pose(&mut rng);
        let a = root_align(&p, 0).unwrap();
        assert_eq!(*a.joint(0), Vector3::zeros());
        assert_eq!(root_align(&a, 0).unwrap(), a);
        assert!(root_align(&p, 17).is_err());
    }

    #[test]
    fn mpjpe_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = random_pose(&mut rng);
        assert_eq!(mpjpe(&gt, &gt, 0, true).unwrap(), 0.0);
        let moved = gt.translated(&Vector3::new(100.0, -40.0, 7.0));
        assert!(mpjpe(&moved, &gt, 0, true).unwrap() < 1e-9);
        let off = gt.map(|j, v| if j == 5 { v + Vector3::new(0.0, 17.0, 0.0) } else { *v }).unwrap();
        assert!((mpjpe(&off, &gt, 0, true).unwrap() - 1.0).abs() < 1e-12);
        assert!((mpjpe(&off, &gt, 0, false).unwrap() - 17.0 / 16.0).abs() < 1e-12);
        let short = Pose3D::new(vec![Vector3::zeros(); 16]).unwrap();
        assert!(matches!(mpjpe(&short, &gt, 0, true), Err(MetricsError::JointCount { .. })));
    }

    #[test]
    fn not_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_pose(&mut rng);
        let root = *gt.joint(0);
        let rotated = gt.map(|_, v| { let d = v - root; root + Vector3::new(-d.x, -d.y, d.z) }).unwrap();
        assert!(mpjpe(&rotated, &gt, 0, true).unwrap() > 1.0);
    }

    #[test]
    fn aggregate_examples() {
        let rows = aggregate(&[record("walk", OccluderKind::Bars, 0.1, 12.5)], &[]).unwrap();
        assert_eq!((rows[0].mean_mm, rows[0].std_mm, rows[0].count), (12.5, 0.0, 1));
        let recs: Vec<_> = [10.0, 20.0, 30.0].iter().map(|&v| record("a", OccluderKind::Bars, 0.1, v)).collect();
        let rows = aggregate(&recs, &[GroupKey::Action]).unwrap();
        assert_eq!(rows[0].mean_mm, 20.0);
        assert!((rows[0].std_mm - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(matches!(aggregate(&[], &[]), Err(MetricsError::EmptyGroups)));
    }

    #[test]
    fn grouping_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let actions = ["walk", "sit", "eat"];
        let recs: Vec<_> = (0..500)
            .map(|i| record(actions[i % 3], OccluderKind::ALL[i % 6], (i % 8) as f64 / 10.0, rng.random_range(0.0..200.0)))
            .collect();
        let rows = aggregate(&recs, &[GroupKey::Action]).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(names, ["eat", "sit", "walk"]);
        for row in &rows {
            let vals: Vec<f64> = recs.iter().filter(|r| r.action == row.group).map(|r| r.mpjpe_mm).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((row.mean_mm - mean).abs() < 1e-9 && (row.std_mm - var.sqrt()).abs() < 1e-9);
            assert_eq!(row.count, vals.len());
        }
        let rows = aggregate(&recs, &[GroupKey::Kind, GroupKey::Degree]).unwrap();
        assert_eq!(rows[0].group, "circles/0.000");
        assert_eq!(rows.len(), 24);
    }

    #[test]
    fn jsonl_and_csv() {
        let recs = vec![record("walk", OccluderKind::Circles, 0.3, 41.25), record("sit", OccluderKind::None, 0.0, 1.0 / 3.0)];
        let mut buf = Vec::new();
        write_records_jsonl(&mut buf, &recs).unwrap();
        assert_eq!(read_records_jsonl(&buf[..]).unwrap(), recs);
        let mut csv = Vec::new();
        write_aggregate_csv(&mut csv, &aggregate(&recs, &[GroupKey::Kind]).unwrap()).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("group,mean_mm,std_mm,count\n"));
        assert!(text.contains("circles,41.25,0.0,1"));
    }

    proptest! {
        #[test]
        fn invariants(seed in any::<u64>(), t in prop::array::uniform3(-1e3f64..1e3), root in 0usize..17) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, g) = (random_pose(&mut rng), random_pose(&mut rng));
            let t = Vector3::from(t);
            let base = mpjpe(&p, &g, root, true).unwrap();
            prop_assert!((mpjpe(&p.translated(&t), &g, root, true).unwrap() - base).abs() < 1e-9);
            prop_assert!((mpjpe(&p, &g.translated(&t), root, true).unwrap() - base).abs() < 1e-9);
            prop_assert!((mpjpe(&g, &p, root, true).unwrap() - base).abs() < 1e-12);
            let excl = mpjpe(&p, &g, root, false).unwrap();
            prop_assert!((base - excl * 16.0 / 17.0).abs() < 1e-9);
        }
    }
}
