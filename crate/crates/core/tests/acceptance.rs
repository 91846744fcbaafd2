//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use occbench::datamodel::{adaptive_subsample_poses, generate_synthetic_dataset, Pose3D, SynthConfig};
use occbench::geometry::{backproject, make_crop_transform, project, BoundingBox, CameraIntrinsics};
use occbench::heatmap::{decode_pose, soft_argmax, HeatmapShape, VolumetricHeatmap};
use occbench::metrics::{mpjpe, write_records_jsonl};
use occbench::occlusion::{
    calibrate_distributions, generate, ObjectLibrary, ObjectSource, OccluderKind, OccluderMaskSet, OcclusionSpec, Split,
};
use occbench::seed::{degree_key, derive_rng};
use occbench::sweep::{
    compare, matrix_from_curves, read_result_table, run_sweep, write_curves_csv, EvalDataset, NoisyOracle,
    OcclusionMock, SweepConfig, MATRIX_DEGREES,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(t)
    } else {
        Err(format!("took {t:.1?}, limit {limit:?}"))
    }
}

// ---------------------------------------------------------------- heatmaps

/// Softmax expectation from the definition: normalize first, then take the
/// weighted mean of flat-index-decoded voxel centres.
fn softmax_oracle(scores: &[f32], d: usize, h: usize, w: usize) -> [f64; 3] {
    let max = scores.iter().map(|&s| s as f64).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|&s| (s as f64 - max).exp()).sum();
    let mut out = [0.0; 3];
    for (i, &s) in scores.iter().enumerate() {
        let p = (s as f64 - max).exp() / z;
        let (di, hi, wi) = (i / (h * w), (i / w) % h, i % w);
        out[0] += p * (di as f64 + 0.5);
        out[1] += p * (hi as f64 + 0.5);
        out[2] += p * (wi as f64 + 0.5);
    }
    let _ = d;
    out
}

fn soft_argmax_equivalence() -> Outcome {
    let shape = HeatmapShape::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0f32, 3.0).unwrap();
    let mut worst = 0.0f64;
    let mut elapsed = Duration::ZERO;
    for _ in 0..1000 {
        let scores: Vec<f32> = (0..17 * 16 * 16 * 16).map(|_| normal.sample(&mut rng)).collect();
        let hm = VolumetricHeatmap::new(17, shape, scores, 256).map_err(|e| e.to_string())?;
        let t = Instant::now();
        let got = soft_argmax(&hm);
        elapsed += t.elapsed();
        for (j, c) in got.iter().enumerate() {
            let want = softmax_oracle(hm.joint_scores(j), 16, 16, 16);
            for (a, b) in [c.d, c.h, c.w].iter().zip(want) {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    let limit = Duration::from_secs(10);
    check(worst <= 1e-9 && elapsed <= limit, format!("max relative error {worst:.2e}, soft_argmax time {elapsed:.2?}"))
}

fn depth_voxel_constant() -> Outcome {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 500.0, 500.0, 1000, 1000).unwrap();
    let bbox = BoundingBox::new(380.0, 300.0, 240.0, 400.0).unwrap();
    let t = make_crop_transform(&k, &bbox, 256, 0.8).map_err(|e| e.to_string())?;
    let shape = HeatmapShape::default();
    let decode_at = |d: usize, h: usize, w: usize| -> Result<f64, String> {
        let mut hm = VolumetricHeatmap::zeros(2, shape, 256).map_err(|e| e.to_string())?;
        for j in 0..2 {
            for i in 0..16 * 16 * 16 {
                hm.set(j, i / 256, (i / 16) % 16, i % 16, -1e4);
            }
            hm.set(j, 8, 8, 8, 0.0);
        }
        hm.set(1, 8, 8, 8, -1e4);
        hm.set(1, d, h, w, 0.0);
        let pose = decode_pose(&hm, &t, &k, 4500.0, 0).map_err(|e| e.to_string())?;
        Ok(pose.joint(1).z)
    };
    let mut worst = 0.0f64;
    for (h, w) in [(0, 0), (3, 11), (8, 8), (15, 2)] {
        for d in 0..15 {
            let step = decode_at(d + 1, h, w)? - decode_at(d, h, w)?;
            worst = worst.max((step - 125.0).abs());
        }
    }
    check(worst <= 1e-6, format!("max |Δz − 125 mm| = {worst:.2e}"))
}

// ---------------------------------------------------------------- geometry

fn geometry_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut proj, mut warp, mut centre) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let size = rng.random_range(320..2000);
        let f = rng.random_range(300.0..3000.0);
        let k = CameraIntrinsics::new(f, f * rng.random_range(0.9..1.1), size as f64 * rng.random_range(0.4..0.6), size as f64 * rng.random_range(0.4..0.6), size, size).unwrap();
        let px = Point2::new(rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64));
        let z = rng.random_range(500.0..9000.0);
        let back = project(&k, &backproject(&k, &px, z).unwrap()).unwrap();
        proj = proj.max((back - px).norm());

        let (bw, bh) = (rng.random_range(40.0..300.0), rng.random_range(40.0..300.0));
        let b = BoundingBox::new(rng.random_range(0.0..size as f64 - bw), rng.random_range(0.0..size as f64 - bh), bw, bh).unwrap();
        let t = make_crop_transform(&k, &b, 256, rng.random_range(0.5..1.0)).unwrap();
        let q = Point2::new(rng.random_range(0.0..256.0), rng.random_range(0.0..256.0));
        warp = warp.max((t.warp_point(&t.inverse_warp_point(&q).unwrap()).unwrap() - q).norm());
        let c = t.warp_point(&b.center()).unwrap();
        centre = centre.max((c - Point2::new(128.0, 128.0)).norm());
    }
    let k = CameraIntrinsics::new(1100.0, 1100.0, 500.0, 400.0, 1000, 800).unwrap();
    let on_axis = BoundingBox::new(400.0, 250.0, 200.0, 300.0).unwrap();
    let t = make_crop_transform(&k, &on_axis, 256, 0.8).unwrap();
    let ident = (t.rotation() - nalgebra::Matrix3::identity()).abs().max();
    check(
        proj <= 1e-9 && warp <= 1e-9 && centre <= 1e-9 && ident <= 1e-12,
        format!("project {proj:.1e} px, warp {warp:.1e} px, centre {centre:.1e} px, on-axis rotation {ident:.1e}"),
    )
}

// --------------------------------------------------------------- occlusion

/// Pixel-count oracle: every pixel whose centre lies in the box, combined
/// alpha from all masks.
fn oracle_fraction(set: &OccluderMaskSet, b: &BoundingBox, canvas: u32) -> (u64, f64) {
    let (mut inside, mut occ) = (0u64, 0u64);
    for y in 0..canvas as i32 {
        let cy = y as f64 + 0.5;
        if cy < b.y || cy >= b.y + b.h {
            continue;
        }
        for x in 0..canvas as i32 {
            let cx = x as f64 + 0.5;
            if cx < b.x || cx >= b.x + b.w {
                continue;
            }
            inside += 1;
            let t: f64 = set.masks.iter().map(|m| 1.0 - m.alpha_at(x, y) as f64 / 255.0).product();
            if 1.0 - t >= 128.0 / 255.0 - 1e-12 {
                occ += 1;
            }
        }
    }
    (occ, occ as f64 / inside as f64)
}

const CANVAS: u32 = 256;

fn person_box() -> BoundingBox {
    BoundingBox::new(72.5, 25.5, 110.0, 204.0).unwrap()
}

/// Degree calibration and distribution matching share one set of samples.
fn occlusion_criteria(lib: &ObjectLibrary) -> (Outcome, Outcome) {
    let start = Instant::now();
    let degrees = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
    let src = ObjectSource { library: lib, split: Split::Test };
    let bbox = person_box();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut means = vec![vec![0.0; OccluderKind::ALL.len()]; degrees.len()];
    for (di, &degree) in degrees.iter().enumerate() {
        for (ki, kind) in OccluderKind::ALL.into_iter().enumerate() {
            let mut total = 0u64;
            for i in 0..200u64 {
                let mut rng = derive_rng(11, kind.name(), &[degree_key(degree), i]);
                let spec = OcclusionSpec::new(kind, degree, rng.random()).unwrap();
                match generate(&spec, &bbox, (CANVAS, CANVAS), Some(src), &mut rng) {
                    Ok(set) => {
                        let (count, f) = oracle_fraction(&set, &bbox, CANVAS);
                        worst = worst.max((f - degree).abs());
                        total += count;
                    }
                    Err(e) => failures.push(format!("{kind}@{degree}: {e}")),
                }
            }
            means[di][ki] = total as f64 / 200.0;
        }
    }
    let time = within_time(Duration::from_secs(120), start);
    let calib = match (&time, failures.is_empty()) {
        (Ok(t), true) => check(worst <= 0.02, format!("6 kinds × 7 degrees × 200 samples, max |measured − target| {worst:.4}, {t:.1?}")),
        (Err(e), _) => Err(e.clone()),
        (_, false) => Err(format!("{} generation failures, first: {}", failures.len(), failures[0])),
    };
    let mut dev = 0.0f64;
    for row in &means {
        let cross = row.iter().sum::<f64>() / row.len() as f64;
        for m in row {
            dev = dev.max((m - cross).abs() / cross);
        }
    }
    let report = calibrate_distributions(&OccluderKind::ALL, &[0.3], &bbox, (CANVAS, CANVAS), 200, Some(src), &mut ChaCha8Rng::seed_from_u64(5));
    let dist = match report {
        Ok(r) => check(
            dev <= 0.10 && r.passed(),
            format!("max deviation from cross-kind mean {:.2}% (report at 30%: {} flags)", 100.0 * dev, r.flags.len()),
        ),
        Err(e) => Err(e.to_string()),
    };
    (calib, dist)
}

// ----------------------------------------------------------------- metrics

fn mpjpe_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rand_pose = || {
        Pose3D::new((0..17).map(|_| Vector3::new(rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0), rng.random_range(2000.0..6000.0))).collect()).unwrap()
    };
    let mut ok = true;
    let mut worst_scale = 0.0f64;
    for _ in 0..200 {
        let (p, g) = (rand_pose(), rand_pose());
        ok &= mpjpe(&g, &g, 0, true).unwrap() == 0.0;
        let t = Vector3::new(123.4, -56.7, 890.1);
        ok &= mpjpe(&g.translated(&t), &g, 0, true).unwrap() < 1e-9;
        let incl = mpjpe(&p, &g, 0, true).unwrap();
        let excl = mpjpe(&p, &g, 0, false).unwrap();
        worst_scale = worst_scale.max((incl - excl * 16.0 / 17.0).abs() / incl);
    }
    let g = rand_pose();
    let off = g.map(|j, v| if j == 7 { v + Vector3::new(17.0, 0.0, 0.0) } else { *v }).unwrap();
    let one = mpjpe(&off, &g, 0, true).unwrap();
    check(
        ok && (one - 1.0).abs() < 1e-12 && worst_scale < 1e-12,
        format!("identity 0, translation 0, one joint off 17 mm → {one}, include-root ratio error {worst_scale:.1e}"),
    )
}

// ------------------------------------------------------------------- sweep

fn noisy_oracle_calibration() -> Outcome {
    // Monte-Carlo expectation of the root-included MPJPE for 17 joints
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.0, 10.0).unwrap();
    let draws = 200_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let s: f64 = (0..16)
            .map(|_| Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)).norm())
            .sum();
        acc += s / 17.0;
    }
    let expected = acc / draws as f64;

    let cfg = SynthConfig { num_frames: 2000, image_size: 96, seed: 21, ..SynthConfig::default() };
    let data = generate_synthetic_dataset(&cfg).map_err(|e| e.to_string())?;
    let ds = EvalDataset::prepare(&data.manifest, &data.images, 48, 0.8).map_err(|e| e.to_string())?;
    let p = NoisyOracle { label: "noisy".into(), sigma_mm: 10.0, seed: 8 };
    let sweep = SweepConfig { seed: 1, kinds: vec![OccluderKind::Circles], degrees: vec![0.0], ..SweepConfig::default() };
    let r = run_sweep(&[&p], &ds, &sweep, None).map_err(|e| e.to_string())?;
    let pt = &r.curves[0].points[0];
    let rel = (pt.mean_mm - expected).abs() / expected;
    check(
        pt.n >= 2000 && rel <= 0.02 && (expected - 15.0).abs() < 0.1,
        format!("{} frames: mean {:.3} mm vs expectation {expected:.3} mm ({:.2}%)", pt.n, pt.mean_mm, 100.0 * rel),
    )
}

fn fig3_and_matrix(lib: &ObjectLibrary) -> (Outcome, Outcome) {
    let start = Instant::now();
    let run = || -> Result<_, String> {
        let data = generate_synthetic_dataset(&SynthConfig { seed: 31, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
        let ds = EvalDataset::prepare(&data.manifest, &data.images, 256, 0.8).map_err(|e| e.to_string())?;
        let plain = OcclusionMock { label: "no augmentation".into(), base_mm: 40.0, sensitivity_mm: 200.0, radius_px: 16.0 };
        let augmented = OcclusionMock { label: "with augmentation".into(), base_mm: 40.0, sensitivity_mm: 100.0, radius_px: 16.0 };
        let cfg = SweepConfig { seed: 77, ..SweepConfig::default() };
        let r = run_sweep(&[&plain, &augmented], &ds, &cfg, Some(lib)).map_err(|e| e.to_string())?;
        Ok((ds.len(), r))
    };
    let (frames, r) = match run() {
        Ok(v) => v,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let time = within_time(Duration::from_secs(300), start);
    let mut problems = Vec::new();
    for c in &r.curves {
        for w in c.points.windows(2) {
            if w[1].mean_mm < w[0].mean_mm {
                problems.push(format!("{}/{} drops at {}", c.label, c.kind, w[1].degree));
            }
        }
        if c.points.len() != 8 {
            problems.push(format!("{}/{} has {} points", c.label, c.kind, c.points.len()));
        }
    }
    let plain = r.curves_for("no augmentation");
    let aug = r.curves_for("with augmentation");
    for (a, b) in plain.iter().zip(&aug) {
        for (pa, pb) in a.points.iter().zip(&b.points).filter(|(p, _)| p.degree > 0.0) {
            if pb.mean_mm >= pa.mean_mm {
                problems.push(format!("{} at {}: halved sensitivity not lower", a.kind, pa.degree));
            }
        }
    }
    let fig3 = match time {
        Err(e) => Err(e),
        Ok(t) if problems.is_empty() => Ok(format!(
            "{frames} frames, 6 kinds × 8 degrees × 2 mocks monotone, halved mock lower everywhere; at 70% {:.1} vs {:.1} mm (circles), {t:.1?}",
            plain[0].points[7].mean_mm, aug[0].points[7].mean_mm
        )),
        Ok(_) => Err(problems.join("; ")),
    };

    // matrix cells against the per-degree CSV
    let matrix = (|| -> Outcome {
        let m = matrix_from_curves(&r.curves).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &r.curves, true).map_err(|e| e.to_string())?;
        let mut rdr = csv::Reader::from_reader(&buf[..]);
        let rows: Vec<(String, String, f64, f64)> = rdr
            .records()
            .map(|rec| {
                let rec = rec.unwrap();
                (rec[0].to_string(), rec[1].to_string(), rec[2].parse().unwrap(), rec[3].parse().unwrap())
            })
            .collect();
        let mut worst = 0.0f64;
        for (ri, label) in m.rows.iter().enumerate() {
            for (ci, kind) in m.columns.iter().enumerate() {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|(l, k, d, _)| l == label && *k == kind.to_string() && MATRIX_DEGREES.iter().any(|x| (x - d).abs() < 1e-12))
                    .map(|r| r.3)
                    .collect();
                if vals.len() != 5 {
                    return Err(format!("{label}/{kind}: {} matrix degrees in CSV", vals.len()));
                }
                worst = worst.max((m.cells[ri][ci] - vals.iter().sum::<f64>() / 5.0).abs());
            }
        }
        check(worst <= 1e-9, format!("{}×{} cells, max |cell − mean over 10–50%| {worst:.1e}", m.rows.len(), m.columns.len()))
    })();
    (fig3, matrix)
}

fn table1_fixture() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/table1.csv");
    let file = std::fs::File::open(&path).map_err(|e| e.to_string())?;
    let table = read_result_table(file).map_err(|e| e.to_string())?;
    let base = table.row("Ours (no occlusion augm.)").ok_or("baseline row missing")?;
    let voc = table.row("w/ VOC objects augm.").ok_or("VOC row missing")?;
    let rect = table.row("w/ single rectangle augm.").ok_or("single rectangle row missing")?;
    let c = compare("baseline", &base, "voc", &voc).map_err(|e| e.to_string())?;
    let avg = c.rows.iter().find(|r| r.group == "Avg").ok_or("Avg column missing")?;
    let text = avg.improvement_text();
    let rect_avg = rect.iter().find(|(g, _)| g == "Avg").map(|r| r.1);
    let itself = compare("baseline", &base, "baseline", &base).map_err(|e| e.to_string())?;
    check(
        text == "7.50 mm (11.85%)" && avg.baseline_mm == 63.3 && avg.candidate_mm == 55.8 && rect_avg == Some(56.1)
            && itself.rows.iter().all(|r| r.improvement_mm == 0.0),
        format!("63.3 → 55.8 mm: improvement {text}; single rectangle avg {rect_avg:?}"),
    )
}

fn subsampling_oracle() -> Outcome {
    let reference = |poses: &[Pose3D], t: f64| -> Vec<usize> {
        let mut kept: Vec<usize> = vec![0];
        for i in 1..poses.len() {
            let last = &poses[*kept.last().unwrap()];
            if (0..poses[i].num_joints()).any(|j| (poses[i].joint(j) - last.joint(j)).norm() >= t) {
                kept.push(i);
            }
        }
        kept
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let joints = rng.random_range(1..18);
        let step = rng.random_range(1.0..40.0);
        let mut cur: Vec<Vector3<f64>> = (0..joints).map(|_| Vector3::new(0.0, 0.0, 4000.0)).collect();
        let poses: Vec<Pose3D> = (0..n)
            .map(|_| {
                for c in cur.iter_mut() {
                    *c += Vector3::new(rng.random_range(-step..step), rng.random_range(-step..step), rng.random_range(-step..step));
                }
                Pose3D::new(cur.clone()).unwrap()
            })
            .collect();
        if adaptive_subsample_poses(&poses, 30.0).unwrap() != reference(&poses, 30.0) {
            mismatches += 1;
        }
    }
    let a = Pose3D::new(vec![Vector3::new(0.0, 0.0, 4000.0), Vector3::new(100.0, 0.0, 4000.0)]).unwrap();
    let b = a.map(|j, v| if j == 1 { v + Vector3::new(0.0, 30.0, 0.0) } else { *v }).unwrap();
    let exact = adaptive_subsample_poses(&[a, b], 30.0).unwrap();
    check(mismatches == 0 && exact == vec![0, 1], format!("1000 sequences, {mismatches} mismatches; exact 30 mm kept: {}", exact == vec![0, 1]))
}

fn sweep_determinism(lib: &ObjectLibrary) -> Outcome {
    let data = generate_synthetic_dataset(&SynthConfig { num_frames: 12, image_size: 128, seed: 41, ..SynthConfig::default() })
        .map_err(|e| e.to_string())?;
    let ds = EvalDataset::prepare(&data.manifest, &data.images, 128, 0.8).map_err(|e| e.to_string())?;
    let mock = OcclusionMock { label: "mock".into(), base_mm: 30.0, sensitivity_mm: 90.0, radius_px: 8.0 };
    let noisy = NoisyOracle { label: "noisy".into(), sigma_mm: 10.0, seed: 3 };
    let cfg = SweepConfig { seed: 1234, ..SweepConfig::default() };
    let jsonl = || -> Result<Vec<u8>, String> {
        let r = run_sweep(&[&mock, &noisy], &ds, &cfg, Some(lib)).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_records_jsonl(&mut buf, &r.records).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let (a, b) = (jsonl()?, jsonl()?);
    check(a == b && !a.is_empty(), format!("two runs, {} bytes of JSONL records, identical: {}", a.len(), a == b))
}

fn main() {
    // libtest-style arguments (filters, --nocapture, ...) are accepted and ignored
    let lib = ObjectLibrary::synthetic(24, 24, 64, 2024);
    let (calibration, distribution) = occlusion_criteria(&lib);
    let (fig3, matrix) = fig3_and_matrix(&lib);
    let results: Vec<(&str, Outcome)> = vec![
        ("soft-argmax equivalence", soft_argmax_equivalence()),
        ("depth decoding constant", depth_voxel_constant()),
        ("geometry round trips", geometry_round_trips()),
        ("degree calibration", calibration),
        ("distribution matching", distribution),
        ("MPJPE invariants", mpjpe_invariants()),
        ("noisy-oracle calibration", noisy_oracle_calibration()),
        ("robustness curves (mock predictors)", fig3),
        ("train x test matrix rule", matrix),
        ("comparison fixture arithmetic", table1_fixture()),
        ("subsampling oracle", subsampling_oracle()),
        ("sweep determinism", sweep_determinism(&lib)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
