use deltaflow_core::{centroid, delta_flow, KeypointFlow, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk_points(rng: &mut ChaCha8Rng, n: usize, radius: f64, center: Vec2) -> Vec<Vec2> {
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            center + Vec2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Straight summation over every keypoint, written without the library helpers.
fn reference_delta(frames: &[Vec<Vec2>]) -> Vec<(f64, f64, f64)> {
    let n = frames[0].len() as f64;
    let mean = |f: &[Vec2]| {
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in f {
            sx += p.x;
            sy += p.y;
        }
        (sx / n, sy / n)
    };
    let (c1x, c1y) = mean(&frames[0]);
    frames
        .iter()
        .map(|f| {
            let (cx, cy) = mean(f);
            let mut rot = 0.0;
            for (p, q) in f.iter().zip(&frames[0]) {
                let (ax, ay) = (p.x - cx, p.y - cy);
                let (bx, by) = (q.x - c1x, q.y - c1y);
                rot += ax * by - ay * bx;
            }
            (cx - c1x, cy - c1y, rot / n)
        })
        .collect()
}

#[test]
fn centroid_of_disk_with_one_hidden_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = disk_points(&mut rng, 128, 40.0, Vec2::new(240.0, 200.0));
    let mut vis = vec![true; 128];
    vis[17] = false;
    let got = centroid(&pts, &vis, 4).unwrap();
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, p) in pts.iter().enumerate() {
        if i != 17 {
            sx += p.x;
            sy += p.y;
        }
    }
    assert!((got.x - sx / 127.0).abs() < 1e-12);
    assert!((got.y - sy / 127.0).abs() < 1e-12);
}

#[test]
fn rigid_rotation_matches_analytic_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(4..=256);
        let t = rng.random_range(2..=40);
        let radius = rng.random_range(5.0..100.0);
        let base = disk_points(&mut rng, n, radius, Vec2::new(240.0, 240.0));
        let c = base.iter().fold(Vec2::ZERO, |s, &p| s + p) / n as f64;
        let spread = base.iter().map(|&p| (p - c).norm_sq()).sum::<f64>() / n as f64;
        let angles: Vec<f64> = (0..t)
            .map(|i| if i == 0 { 0.0 } else { rng.random_range(-3.0..3.0) })
            .collect();
        let frames: Vec<Vec<Vec2>> = angles
            .iter()
            .map(|&a| base.iter().map(|&p| c + (p - c).rotate(a)).collect())
            .collect();
        let d = delta_flow(&KeypointFlow::fully_visible(frames.clone()).unwrap()).unwrap();
        let oracle = reference_delta(&frames);
        for (i, &a) in angles.iter().enumerate() {
            assert!(d.translations[i].norm() < 1e-9);
            assert!((d.rotations[i] - (-a.sin() * spread)).abs() < 1e-9 * spread.max(1.0));
            assert!((d.rotations[i] - oracle[i].2).abs() < 1e-9 * spread.max(1.0));
        }
    }
}

#[test]
fn random_flows_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(4..=256);
        let t = rng.random_range(2..=128);
        let frames: Vec<Vec<Vec2>> = (0..t)
            .map(|_| (0..n).map(|_| Vec2::new(rng.random_range(0.0..480.0), rng.random_range(0.0..480.0))).collect())
            .collect();
        let d = delta_flow(&KeypointFlow::fully_visible(frames.clone()).unwrap()).unwrap();
        for (i, (tx, ty, r)) in reference_delta(&frames).into_iter().enumerate() {
            assert!((d.translations[i].x - tx).abs() < 1e-9);
            assert!((d.translations[i].y - ty).abs() < 1e-9);
            assert!((d.rotations[i] - r).abs() < 1e-9 * r.abs().max(1.0));
        }
    }
}
