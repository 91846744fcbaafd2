use super::*;
use crate::datamodel::{generate_synthetic_dataset, SynthConfig};
use crate::heatmap::{encode_gaussian, HeatmapShape};
use crate::occlusion::{generate, measure_degree, Split};

fn dataset(frames: usize, seed: u64) -> EvalDataset {
    let cfg = SynthConfig { num_frames: frames, image_size: 128, seed, ..SynthConfig::default() };
    let d = generate_synthetic_dataset(&cfg).unwrap();
    EvalDataset::prepare(&d.manifest, &d.images, 64, 0.8).unwrap()
}

fn config(kinds: &[OccluderKind], degrees: &[f64]) -> SweepConfig {
    SweepConfig { seed: 9, kinds: kinds.to_vec(), degrees: degrees.to_vec(), ..SweepConfig::default() }
}

fn mock(label: &str, sensitivity_mm: f64) -> OcclusionMock {
    OcclusionMock { label: label.into(), base_mm: 20.0, sensitivity_mm, radius_px: 4.0 }
}

const SHAPES: [OccluderKind; 4] =
    [OccluderKind::Circles, OccluderKind::SingleRectangle, OccluderKind::Rectangles, OccluderKind::Bars];

#[test]
fn oracle_is_zero_everywhere() {
    let ds = dataset(6, 0);
    let lib = ObjectLibrary::synthetic(4, 4, 24, 0);
    let r = run_degree_sweep(&Oracle { label: "oracle".into() }, &ds, &SweepConfig { seed: 1, ..SweepConfig::default() }, Some(&lib)).unwrap();
    assert_eq!(r.curves.len(), 6);
    assert!(r.failures.is_empty());
    for c in &r.curves {
        assert_eq!(c.points.len(), 8);
        assert!(c.points.iter().all(|p| p.mean_mm < 1e-9 && p.n == 6));
    }
}

#[test]
fn noisy_oracle_ignores_occlusion() {
    let ds = dataset(6, 1);
    let p = NoisyOracle { label: "noisy".into(), sigma_mm: 10.0, seed: 3 };
    let r = run_degree_sweep(&p, &ds, &config(&SHAPES, &[0.0, 0.3, 0.6]), None).unwrap();
    let first = r.curves[0].points[0].mean_mm;
    assert!(first > 5.0);
    for c in &r.curves {
        assert!(c.points.iter().all(|pt| pt.mean_mm == first));
    }
    let zero = NoisyOracle { label: "zero".into(), sigma_mm: 0.0, seed: 3 };
    let r = run_degree_sweep(&zero, &ds, &config(&[OccluderKind::Bars], &[0.0, 0.4]), None).unwrap();
    assert!(r.records.iter().all(|rec| rec.mpjpe_mm == 0.0));
}

#[test]
fn degree_zero_is_shared_and_unoccluded() {
    let ds = dataset(5, 2);
    let m = mock("m", 100.0);
    let r = run_degree_sweep(&m, &ds, &config(&SHAPES, &[0.0, 0.2]), None).unwrap();
    let zero: Vec<_> = r.curves.iter().map(|c| c.points[0].clone()).collect();
    assert!(zero.windows(2).all(|w| w[0] == w[1]));
    assert!((zero[0].mean_mm - 20.0).abs() < 1e-9);
    for rec in r.records.iter().filter(|r| r.degree == 0.0) {
        assert!((rec.mpjpe_mm - 20.0).abs() < 1e-9);
    }
}

#[test]
fn mock_matches_closed_form() {
    let ds = dataset(4, 3);
    let m = mock("m", 80.0);
    let cfg = config(&[OccluderKind::Rectangles], &[0.4]);
    let r = run_degree_sweep(&m, &ds, &cfg, None).unwrap();
    for (frame, rec) in ds.frames.iter().zip(&r.records) {
        let spec = OcclusionSpec { kind: OccluderKind::Rectangles, target_degree: 0.4, seed: occlusion_seed(9, frame.record.frame_id, OccluderKind::Rectangles, 0.4) };
        let masks = generate(&spec, &frame.bbox_crop, (64, 64), None, &mut spec.rng()).unwrap();
        assert!((measure_degree(&masks, &frame.bbox_crop).occluded_fraction - 0.4).abs() <= 0.02);
        // independent disk count around each projected non-root joint
        let mut total = 0.0;
        for p in frame.record.pose_gt.joints().iter().skip(1) {
            let q = frame.transform.warp_point(&crate::geometry::project(&frame.record.camera, p).unwrap()).unwrap();
            let (mut inside, mut hit) = (0.0, 0.0);
            for y in -8..72 {
                for x in -8..72 {
                    let (dx, dy) = (x as f64 + 0.5 - q.x, y as f64 + 0.5 - q.y);
                    if dx * dx + dy * dy <= 16.0 {
                        inside += 1.0;
                        if masks.masks.iter().any(|mk| mk.alpha_at(x, y) >= 128) {
                            hit += 1.0;
                        }
                    }
                }
            }
            total += if inside > 0.0 { hit / inside } else { 0.0 };
        }
        let expected = 20.0 + 80.0 * total / 17.0;
        assert!((rec.mpjpe_mm - expected).abs() < 1e-9, "{} vs {expected}", rec.mpjpe_mm);
    }
}

#[test]
fn sweep_is_deterministic() {
    let ds = dataset(4, 4);
    let lib = ObjectLibrary::synthetic(4, 4, 24, 1);
    let m = mock("m", 50.0);
    let cfg = config(&OccluderKind::ALL, &[0.0, 0.3]);
    let a = run_degree_sweep(&m, &ds, &cfg, Some(&lib)).unwrap();
    let b = run_degree_sweep(&m, &ds, &cfg, Some(&lib)).unwrap();
    let jsonl = |r: &SweepResult| {
        let mut buf = Vec::new();
        crate::metrics::write_records_jsonl(&mut buf, &r.records).unwrap();
        buf
    };
    assert_eq!(jsonl(&a), jsonl(&b));
    // another kind does not disturb existing cells
    let c = run_degree_sweep(&m, &ds, &config(&[OccluderKind::Bars], &[0.0, 0.3]), Some(&lib)).unwrap();
    assert_eq!(c.curves[0], a.curves[3]);
}

#[test]
fn matrix_rule() {
    let points = |v: &[f64]| {
        v.iter()
            .enumerate()
            .map(|(i, &m)| CurvePoint { degree: (i + 1) as f64 / 10.0, mean_mm: m, std_mm: 0.0, n: 1, excluded: 0 })
            .collect::<Vec<_>>()
    };
    let curves = vec![
        RobustnessCurve { label: "a".into(), kind: OccluderKind::Bars, points: points(&[10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0]) },
        RobustnessCurve { label: "a".into(), kind: OccluderKind::Circles, points: points(&[1.0, 1.0, 1.0, 1.0, 1.0]) },
    ];
    let m = matrix_from_curves(&curves).unwrap();
    assert_eq!(m.cell("a", OccluderKind::Bars), Some(30.0));
    assert_eq!(m.cell("a", OccluderKind::Circles), Some(1.0));
    let short = vec![RobustnessCurve { label: "b".into(), kind: OccluderKind::Bars, points: points(&[1.0, 2.0]) }];
    assert!(matches!(matrix_from_curves(&short), Err(SweepError::MissingDegree { .. })));
}

#[test]
fn matrix_orders_mocks() {
    let ds = dataset(6, 5);
    let (a, b, o) = (mock("plain", 120.0), mock("augmented", 60.0), Oracle { label: "oracle".into() });
    let (m, _) = run_matrix(&[&a, &b, &o], &ds, &SHAPES, 2, None).unwrap();
    for k in SHAPES {
        assert!(m.cell("augmented", k).unwrap() < m.cell("plain", k).unwrap());
        assert!(m.cell("oracle", k).unwrap() < 1e-9);
    }
    assert!(run_matrix(&[&a, &a], &ds, &SHAPES, 2, None).is_err());
}

struct Flaky;

impl Predictor for Flaky {
    fn label(&self) -> &str {
        "flaky"
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError> {
        if input.frame_id % 2 == 1 {
            Err(PredictorError::Failed("odd frame".into()))
        } else {
            Ok(Prediction::Pose(input.reference.pose_gt.clone()))
        }
    }

    fn concurrent_safe(&self) -> bool {
        false
    }
}

#[test]
fn failures_are_excluded_and_counted() {
    let ds = dataset(6, 6);
    let r = run_degree_sweep(&Flaky, &ds, &config(&[OccluderKind::Circles], &[0.0, 0.2]), None).unwrap();
    for p in &r.curves[0].points {
        assert_eq!((p.n, p.excluded), (3, 3));
    }
    assert_eq!(r.failures.len(), 6);
}

struct HeatmapOracle;

impl Predictor for HeatmapOracle {
    fn label(&self) -> &str {
        "heatmap"
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<Prediction, PredictorError> {
        let shape = HeatmapShape { depth: 64, height: 64, width: 64, depth_span_mm: 2000.0 };
        Ok(Prediction::Heatmap(encode_gaussian(input.reference.pose_gt, input.transform, input.camera, input.root_depth_mm, 1.0, shape)?))
    }
}

#[test]
fn heatmap_predictions_are_decoded() {
    let ds = dataset(3, 7);
    let r = run_degree_sweep(&HeatmapOracle, &ds, &config(&[OccluderKind::Bars], &[0.0]), None).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    // discretized Gaussians near the volume edge pull the expectation inwards slightly
    assert!(r.curves[0].points[0].mean_mm < 5.0, "{}", r.curves[0].points[0].mean_mm);
}

#[test]
fn nearest_neighbour_recovers_training_poses() {
    let ds = dataset(8, 8);
    let nn = NearestNeighbour::from_dataset("nn", &ds).unwrap();
    let r = run_degree_sweep(&nn, &ds, &config(&[OccluderKind::Bars], &[0.0, 0.2]), None).unwrap();
    assert!(r.curves[0].points[0].mean_mm < 1e-6);
    assert!(r.curves[0].points[1].mean_mm >= 0.0);
    let other = dataset(8, 99);
    let r = run_degree_sweep(&nn, &other, &config(&[OccluderKind::Bars], &[0.0]), None).unwrap();
    assert!(r.curves[0].points[0].mean_mm > 1.0);
}

#[test]
fn config_validation() {
    let ds = dataset(2, 0);
    let o = Oracle { label: "o".into() };
    assert!(run_degree_sweep(&o, &ds, &config(&[OccluderKind::Objects], &[0.1]), None).is_err());
    assert!(run_degree_sweep(&o, &ds, &config(&[OccluderKind::Bars], &[0.2, 0.1]), None).is_err());
    assert!(run_degree_sweep(&o, &ds, &config(&[OccluderKind::Bars], &[0.8]), None).is_err());
    assert!(run_degree_sweep(&o, &ds, &config(&[OccluderKind::None], &[0.0]), None).is_err());
    assert!(run_sweep(&[], &ds, &config(&[OccluderKind::Bars], &[0.1]), None).is_err());
    assert_eq!(degree_grid(0.1, 0.7), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
    assert!(make_reference_predictor(&ReferencePredictor::NoisyOracle { sigma_mm: -1.0 }, None, 0, 64, 0.8).is_err());
    let spec: ReferencePredictor = serde_json::from_str(r#"{"type":"occlusion_mock","base_mm":10,"sensitivity_mm":50}"#).unwrap();
    assert_eq!(make_reference_predictor(&spec, None, 0, 64, 0.8).unwrap().label(), "occlusion_mock_50");
    let _ = Split::Train;
}

#[test]
fn comparison_reports() {
    let rows = vec![("Walk".to_string(), 60.0), ("Avg".to_string(), 63.3)];
    let same = compare("a", &rows, "a", &rows).unwrap();
    assert!(same.rows.iter().all(|r| r.improvement_mm == 0.0 && r.improvement_pct == 0.0));
    let better = vec![("Avg".to_string(), 55.8)];
    let c = compare("base", &rows, "voc", &better).unwrap();
    assert_eq!(c.rows.len(), 1);
    assert_eq!(c.rows[0].improvement_text(), "7.50 mm (11.85%)");
    let mut csv = Vec::new();
    write_comparison_csv(&mut csv, &c).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap(), "group,baseline_mm,candidate_mm,improvement_mm,improvement_pct\nAvg,63.3,55.8,7.50,11.85\n");
    assert!(compare("a", &rows, "b", &[("x".to_string(), 1.0)]).is_err());
}

#[test]
fn curves_csv_round_trips_values() {
    let ds = dataset(3, 10);
    let r = run_degree_sweep(&mock("m", 30.0), &ds, &config(&[OccluderKind::Circles], &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5]), None).unwrap();
    let mut buf = Vec::new();
    write_curves_csv(&mut buf, &r.curves, false).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("kind,degree,mean_mm,std_mm,n\n"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let means: Vec<(f64, f64)> = rdr.records().map(|r| { let r = r.unwrap(); (r[1].parse().unwrap(), r[2].parse().unwrap()) }).collect();
    let cell = means.iter().filter(|(d, _)| *d > 0.05).map(|(_, m)| m).sum::<f64>() / 5.0;
    let m = matrix_from_curves(&r.curves).unwrap();
    assert!((m.cells[0][0] - cell).abs() < 1e-9);
    let mut mcsv = Vec::new();
    write_matrix_csv(&mut mcsv, &m).unwrap();
    assert!(String::from_utf8(mcsv).unwrap().starts_with("predictor,circles\nm,"));
}

#[test]
fn config_hash_is_stable() {
    let a = config(&SHAPES, &[0.1]);
    assert_eq!(config_hash(&a), config_hash(&a.clone()));
    assert_ne!(config_hash(&a), config_hash(&config(&SHAPES, &[0.2])));
    assert_eq!(config_hash(&a).len(), 64);
}
