//! Independent oracles for derived values that cut across modules.

use std::f64::consts::{E, PI};

use approx::assert_relative_eq;
use cylocc::geom::{erp_depth_to_point_cloud, erp_pixel_to_direction, ErpImage, RasterKind};
use cylocc::grid::{class_frequencies, CoordSys, LabelSet, Payload};
use cylocc::lift::{align_history, build_hit_set};
use cylocc::losses::{class_weights, sem2d_loss, total_loss, ClassWeights, LossTerms, ProbGrid};
use cylocc::sketch::sketch_from_points;
use cylocc::synth::{
    analytic_voxel_gt, default_rig, demo_scene, render_erp_depth, ScenePrimitive, Shape,
};
use cylocc::{
    CandidateMask, FisheyeCamera, GridSpec, LabeledPointCloud, RigidTransform, Scene, Vec3,
    VoxelGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn erp_oracle(u: f64, v: f64, w: f64, h: f64) -> [f64; 3] {
    let lon = -PI + (u + 0.5) * 2.0 * PI / w;
    let lat = PI / 2.0 - (v + 0.5) * PI / h;
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

#[test]
fn erp_directions_match_closed_form() {
    let d: Vec3 = erp_pixel_to_direction(0.0, 499.5, 2000, 1000).unwrap();
    let o = erp_oracle(0.0, 499.5, 2000.0, 1000.0);
    assert_relative_eq!(d.x, -1.0, epsilon = 2e-6);
    assert_relative_eq!(d.y, -0.001_570_795, epsilon = 1e-8);
    assert_relative_eq!(d.z, 0.0, epsilon = 1e-12);
    for (got, want) in d.to_f64().iter().zip(o) {
        assert_relative_eq!(*got, want, epsilon = 1e-12);
    }
    for u in [0.0, 17.0, 999.0, 1999.0] {
        let d: Vec3 = erp_pixel_to_direction(u, 0.0, 2000, 1000).unwrap();
        assert_relative_eq!(d.z, (PI / 2.0 - PI / 2000.0).sin(), epsilon = 1e-12);
        assert_relative_eq!(d.z, 0.999_998_8, epsilon = 1e-7);
    }
}

#[test]
fn uniform_unit_depth_lifts_to_unit_sphere() {
    let depth = ErpImage::filled(4, 2, 1, RasterKind::Depth, 1.0).unwrap();
    let cloud: LabeledPointCloud = erp_depth_to_point_cloud(&depth, None, 1).unwrap();
    assert_eq!(cloud.len(), 8);
    for p in cloud.points() {
        let [x, y, z] = p.to_f64();
        assert_relative_eq!((x * x + y * y + z * z).sqrt(), 1.0, epsilon = 1e-12);
    }
}

/// Equidistant projection written out from the row-major pose.
fn project_oracle(cam: &FisheyeCamera, p: [f64; 3]) -> Option<(f64, f64)> {
    let m = cam.pose().to_row_major();
    let d = [p[0] - m[3], p[1] - m[7], p[2] - m[11]];
    // Camera frame = Rᵀ·(p − t); column k of R is (m[k], m[4+k], m[8+k]).
    let c: Vec<f64> = (0..3)
        .map(|k| m[k] * d[0] + m[4 + k] * d[1] + m[8 + k] * d[2])
        .collect();
    let range = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if range < 1e-9 {
        return None;
    }
    let theta = (c[2] / range).clamp(-1.0, 1.0).acos();
    if theta >= cam.fov / 2.0 {
        return None;
    }
    let psi = c[1].atan2(c[0]);
    let (u, v) = (
        cam.cx + cam.focal * theta * psi.cos(),
        cam.cy + cam.focal * theta * psi.sin(),
    );
    (u >= 0.0 && v >= 0.0 && u < cam.width as f64 && v < cam.height as f64).then_some((u, v))
}

#[test]
fn fisheye_pixel_round_trip() {
    let rig: Vec<FisheyeCamera> = default_rig();
    let cam = &rig[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 1000 {
        let (u, v) = (rng.gen_range(0.0..640.0), rng.gen_range(0.0..640.0));
        let Ok(dir) = cam.unproject_ego(u, v) else {
            continue;
        };
        let p = cam.position() + dir * 7.5;
        let (pu, pv) = cam.project(p).unwrap();
        worst = worst.max((pu - u).abs().max((pv - v).abs()));
        n += 1;
    }
    assert!(worst < 1e-6, "max round-trip error {worst} px");
}

#[test]
fn hit_sets_match_brute_force_projection() {
    let spec = GridSpec::default_cylindrical();
    let rig: Vec<FisheyeCamera> = default_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bits = vec![0u8; spec.voxel_count()];
    for _ in 0..1000 {
        bits[rng.gen_range(0..spec.voxel_count())] = 1;
    }
    let mask =
        CandidateMask::from_grid(VoxelGrid::new(spec, Payload::Occupancy(bits)).unwrap()).unwrap();
    let hits = build_hit_set(&mask, &rig).unwrap();
    let mut sorted = rig.clone();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut refs = 0;
    for v in hits.voxels() {
        let c = spec.index_to_center(v.voxel).unwrap().to_f64();
        let expected: Vec<(&str, f64, f64)> = sorted
            .iter()
            .filter_map(|cam| {
                project_oracle(cam, c).map(|(u, w)| {
                    (
                        cam.name.as_str(),
                        u / cam.width as f64,
                        w / cam.height as f64,
                    )
                })
            })
            .collect();
        assert_eq!(v.refs.len(), expected.len(), "voxel {:?}", v.voxel);
        for (r, e) in v.refs.iter().zip(&expected) {
            assert_eq!(r.camera, e.0);
            assert_relative_eq!(r.uv.0, e.1, epsilon = 1e-9);
            assert_relative_eq!(r.uv.1, e.2, epsilon = 1e-9);
        }
        refs += expected.len();
    }
    assert!(refs > 1000);
}

#[test]
fn warp_and_unwarp_error_is_bounded_by_curvature() {
    let spec = GridSpec::default_cylindrical();
    let field = |p: Vec3| (0.1 * p.x).sin() + (0.13 * p.y).cos() + 0.2 * p.z;
    let data: Vec<f32> = (0..spec.voxel_count())
        .map(|f| field(spec.index_to_center(spec.unflatten(f)).unwrap()) as f32)
        .collect();
    let grid = VoxelGrid::from_features(spec, 1, data.clone()).unwrap();
    let t = RigidTransform::from_yaw(0.05, Vec3::new(0.2, 0.1, 0.0));
    let id = RigidTransform::identity();
    let there = align_history(&grid, &id, &t, &spec).unwrap();
    let back = align_history(&there, &t, &id, &spec).unwrap();
    let out = back.features().unwrap();

    // Largest second difference along each index axis, in index units.
    let [dr, dt, dz] = spec.dims();
    let at = |r: usize, th: usize, z: usize| data[spec.flat_index([r, th % dt, z])] as f64;
    let mut curvature = [0.0f64; 3];
    for r in 1..dr - 1 {
        for th in 0..dt {
            for z in 1..dz - 1 {
                let c = at(r, th, z);
                curvature[0] =
                    curvature[0].max((at(r + 1, th, z) - 2.0 * c + at(r - 1, th, z)).abs());
                curvature[1] =
                    curvature[1].max((at(r, th + 1, z) - 2.0 * c + at(r, th + dt - 1, z)).abs());
                curvature[2] =
                    curvature[2].max((at(r, th, z + 1) - 2.0 * c + at(r, th, z - 1)).abs());
            }
        }
    }
    let bound: f64 = curvature.iter().sum();
    let mut worst = 0.0f64;
    for r in 4..dr - 4 {
        for th in 0..dt {
            for z in 0..dz {
                let f = spec.flat_index([r, th, z]);
                worst = worst.max((out[f] as f64 - data[f] as f64).abs());
            }
        }
    }
    assert!(
        worst <= bound,
        "round-trip error {worst} exceeds curvature bound {bound}"
    );
    assert!(worst > 0.0);
}

#[test]
fn weight_and_loss_closed_forms() {
    let w = class_weights(&[0.0, 1.0], E).unwrap();
    assert_relative_eq!(w.weights[0], 1.0, epsilon = 1e-12);
    assert_relative_eq!(w.weights[1], 1.0 / (1.0 + E).ln(), epsilon = 1e-12);

    let c = 12;
    let (width, height) = (6u32, 3u32);
    let probs = ProbGrid::<f64>::uniform((width * height) as usize, c);
    let sem = ErpImage::new(
        width,
        height,
        1,
        RasterKind::Semantic,
        (0..width * height).map(|i| (i % 12) as f32).collect(),
    )
    .unwrap();
    let l = sem2d_loss(&probs, &sem, &ClassWeights::unit(c), None).unwrap();
    assert_relative_eq!(l, 12f64.ln(), epsilon = 1e-9);
    assert_relative_eq!(12f64.ln(), 2.4849, epsilon = 1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let parts: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
        let t = LossTerms {
            ce: parts[0],
            scal: parts[1],
            dice: parts[2],
            sem2d: parts[3],
        };
        let mut oracle = 0.0;
        for p in parts {
            oracle += p;
        }
        assert_eq!(total_loss(&t).unwrap(), oracle);
    }
}

#[test]
fn rendered_depth_lies_on_scene_surfaces() {
    let scene: Scene = demo_scene(3);
    let origin = Vec3::new(0.1, -0.2, 0.3);
    let (depth, sem) =
        render_erp_depth(&scene, 360, 180, &RigidTransform::from_translation(origin)).unwrap();
    let cloud: LabeledPointCloud = erp_depth_to_point_cloud(&depth, Some(&sem), 1).unwrap();
    assert!(cloud.len() > 30_000);
    let mut worst = 0.0f64;
    for (p, label) in cloud.iter() {
        let world = p + origin;
        worst = worst.max(scene.signed_distance(world).abs());
        assert_eq!(scene.label_at(world + (world - origin) * 1e-7), Some(label));
    }
    assert!(worst < 1e-4, "worst surface distance {worst}");
}

#[test]
fn supersampling_converges_on_smooth_scenes() {
    let scene = Scene::new(vec![
        ScenePrimitive::ground(-1.7, 1),
        ScenePrimitive::new(
            Shape::Sphere {
                center: Vec3::new(6.0, 3.0, 0.0),
                radius: 2.5,
            },
            6,
        )
        .unwrap(),
        ScenePrimitive::new(
            Shape::Cylinder {
                center: (-8.0, -5.0),
                radius: 1.5,
                z: (-1.7, 2.5),
            },
            4,
        )
        .unwrap(),
    ]);
    let spec = GridSpec::default_cylindrical();
    let a = analytic_voxel_gt(&scene, &spec, 1).unwrap();
    let b = analytic_voxel_gt(&scene, &spec, 3).unwrap();
    let same = a
        .labels()
        .unwrap()
        .iter()
        .zip(b.labels().unwrap())
        .filter(|(x, y)| x == y)
        .count();
    assert!(
        same as f64 / spec.voxel_count() as f64 >= 0.95,
        "{same} of {}",
        spec.voxel_count()
    );
}

/// Cylindrical bin of `p` written out directly.
fn cyl_bin_oracle(spec: &GridSpec, p: [f64; 3]) -> Option<usize> {
    assert_eq!(spec.coord_sys(), CoordSys::Cylindrical);
    let [dr, dt, dz] = spec.dims();
    let [(r0, r1), _, (z0, z1)] = spec.ranges();
    let r = p[0].hypot(p[1]);
    let mut theta = p[1].atan2(p[0]);
    if theta >= PI {
        theta -= 2.0 * PI;
    }
    if !(r >= r0 && r < r1 && p[2] >= z0 && p[2] < z1) {
        return None;
    }
    let ir = ((r - r0) / ((r1 - r0) / dr as f64)).floor() as usize;
    let it = ((theta + PI) / (2.0 * PI / dt as f64)).floor() as usize % dt;
    let iz = ((p[2] - z0) / ((z1 - z0) / dz as f64)).floor() as usize;
    Some((ir * dt + it) * dz + iz)
}

#[test]
fn plane_sketch_matches_counting_oracle() {
    let spec = GridSpec::default_cylindrical();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec3> = (0..10_000)
        .map(|_| {
            let (r, a): (f64, f64) = (rng.gen_range(0.0..12.0), rng.gen_range(-PI..PI));
            Vec3::new(r * a.cos(), r * a.sin(), -1.7)
        })
        .collect();
    let cloud = LabeledPointCloud::new(points.clone(), vec![1; points.len()]).unwrap();
    let mask = sketch_from_points(&cloud, &spec, 2).unwrap();
    let mut counts = vec![0u32; spec.voxel_count()];
    for p in &points {
        if let Some(f) = cyl_bin_oracle(&spec, p.to_f64()) {
            counts[f] += 1;
        }
    }
    let expected: Vec<u8> = counts.iter().map(|&c| (c >= 2) as u8).collect();
    assert_eq!(mask.bits(), expected.as_slice());
    assert!(mask.count() > 100);
}

#[test]
fn class_frequencies_match_histogram() {
    let spec = GridSpec::cylindrical([10, 12, 4], (0.0, 25.6), (-2.8, 3.6)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<u8> = (0..spec.voxel_count())
        .map(|_| rng.gen_range(0..12))
        .collect();
    let mut hist = [0usize; 12];
    for &l in &labels {
        hist[l as usize] += 1;
    }
    let grid = VoxelGrid::from_labels(spec, labels).unwrap();
    let f = class_frequencies(&grid, LabelSet::default().num_classes()).unwrap();
    for c in 0..12 {
        assert_eq!(f[c], hist[c] as f64 / spec.voxel_count() as f64);
    }
}
