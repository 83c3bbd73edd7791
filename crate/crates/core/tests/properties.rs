use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcfscan_core::features::{pairwise_ratios, section_stats, Section, SectionLayout, RATIO_A0_P, REF_RATIO_C};
use vcfscan_core::geom::{Mat3, Vec3};
use vcfscan_core::heightmap::{AxialBounds, HeightMap};
use vcfscan_core::meshing::OrientedPointCloud;
use vcfscan_core::orientation::{apply_pose, cluster_normals, compute_pose, KMeansOptions, PoseHints};
use vcfscan_core::phantom::{generate_phantom, Deformation, PhantomSpec};
use vcfscan_core::pipeline::{process_vertebra, PipelineConfig};
use vcfscan_core::rules::{published_model, predict, PUBLISHED_COEFFICIENTS};
use vcfscan_core::volume::{extract_mask, GridGeometry, LabelVolume};

const BOUNDS: AxialBounds = AxialBounds { u_min: -20.0, u_max: 20.0, v_min: -15.0, v_max: 15.0 };

fn height_map() -> impl Strategy<Value = HeightMap> {
    prop::collection::vec(prop::option::weighted(0.9, 1.0f64..40.0), 16 * 16)
        .prop_map(|cells| HeightMap::from_cells(16, &cells, BOUNDS).unwrap())
}

fn ratios(map: &HeightMap) -> Option<[f64; 21]> {
    let stats = section_stats(map, &SectionLayout::default(), 0.0).ok()?;
    let means: Option<Vec<f64>> = stats.mean.iter().copied().collect();
    pairwise_ratios(&means?.try_into().unwrap()).ok()
}

fn wedge_ratio(f: f64) -> f64 {
    let spec = PhantomSpec { deformation: Deformation::Wedge(f), ..PhantomSpec::default() };
    let scan = generate_phantom(&spec, 0).unwrap();
    let g = process_vertebra(&scan.volume, spec.label, &PipelineConfig::default()).unwrap();
    g.stats.mean_of(Section::A0).unwrap() / g.stats.mean_of(Section::P).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratios_ignore_height_scale(map in height_map(), s in 0.1f64..10.0) {
        if let Some(a) = ratios(&map) {
            let b = ratios(&map.scaled(s)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn mirror_swaps_left_and_right(map in height_map()) {
        let a = section_stats(&map, &SectionLayout::default(), 0.0);
        let b = section_stats(&map.mirrored_u(), &SectionLayout::default(), 0.0);
        if let (Ok(a), Ok(b)) = (a, b) {
            let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-9,
                (x, y) => x == y,
            };
            prop_assert!(close(a.mean_of(Section::L), b.mean_of(Section::R)));
            prop_assert!(close(a.mean_of(Section::R), b.mean_of(Section::L)));
            for s in [Section::P, Section::M, Section::A, Section::C, Section::A0] {
                prop_assert!(close(a.mean_of(s), b.mean_of(s)));
            }
        }
    }

    #[test]
    fn masks_partition_the_volume(voxels in prop::collection::vec(0u32..4, 5 * 6 * 7)) {
        let geometry = GridGeometry::new([5, 6, 7], [1.0, 0.5, 2.0], Mat3::IDENTITY, Vec3::ZERO).unwrap();
        let vol = LabelVolume::new(geometry, voxels.clone()).unwrap();
        let mut owners = vec![0u32; voxels.len()];
        for label in vol.labels() {
            let mask = extract_mask(&vol, label).unwrap();
            for (i, &inside) in mask.data().iter().enumerate() {
                if inside {
                    prop_assert_eq!(owners[i], 0);
                    owners[i] = label;
                }
            }
        }
        prop_assert_eq!(owners, voxels);
    }

    #[test]
    fn published_rules_partition_inputs(x1 in -1.0f64..3.0, x2 in -1.0f64..3.0) {
        let p = predict(&published_model(), &Probe(x1, x2)).unwrap();
        prop_assert_eq!(p.fired.len(), 1);
        prop_assert_eq!(p.positive, x1 <= 0.91 || x2 <= 0.81);
        prop_assert!(PUBLISHED_COEFFICIENTS.contains(&p.score));
    }
}

struct Probe(f64, f64);

impl vcfscan_core::rules::FeatureSource for Probe {
    fn feature(&self, name: &str) -> Option<f64> {
        match name {
            RATIO_A0_P => Some(self.0),
            REF_RATIO_C => Some(self.1),
            _ => None,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn features_ignore_volume_placement(dx in -50.0f64..50.0, dy in -50.0f64..50.0, dz in -50.0f64..50.0) {
        let spec = PhantomSpec { deformation: Deformation::Wedge(0.8), ..PhantomSpec::default() };
        let scan = generate_phantom(&spec, 0).unwrap();
        let cfg = PipelineConfig::default();
        let base = process_vertebra(&scan.volume, spec.label, &cfg).unwrap();
        let g = scan.volume.geometry();
        let shifted = GridGeometry::new(g.dims, g.spacing, g.direction, g.origin + Vec3::new(dx, dy, dz)).unwrap();
        let vol = LabelVolume::new(shifted, scan.volume.voxels().to_vec()).unwrap();
        let moved = process_vertebra(&vol, spec.label, &cfg).unwrap();
        for (a, b) in base.stats.mean.iter().zip(&moved.stats.mean) {
            prop_assert!((a.unwrap() - b.unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn wedge_ratio_is_monotone(f1 in 0.6f64..0.95, gap in 0.05f64..0.3) {
        let f2 = (f1 + gap).min(1.0);
        prop_assert!(wedge_ratio(f1) < wedge_ratio(f2));
    }

    #[test]
    fn clustering_commutes_with_rotation(ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in 0.0f64..180.0, seed: u64) {
        let Some(axis) = Vec3::new(ax, ay, 0.5).normalized() else { return Ok(()) };
        let r = Mat3::rotation(axis, angle);
        let cloud = bundle_cloud();
        let rotated = OrientedPointCloud::new(
            cloud.points.iter().map(|&p| r.mul_vec(p)).collect(),
            cloud.normals.iter().map(|&n| r.mul_vec(n)).collect(),
        ).unwrap();
        let a = cluster_normals(&cloud, seed, &KMeansOptions::default()).unwrap();
        let b = cluster_normals(&rotated, seed, &KMeansOptions::default()).unwrap();
        let map: Vec<usize> = a
            .centroids
            .iter()
            .map(|ca| {
                let ra = r.mul_vec(*ca);
                (0..b.centroids.len()).min_by(|&x, &y| ra.angle_deg(b.centroids[x]).total_cmp(&ra.angle_deg(b.centroids[y]))).unwrap()
            })
            .collect();
        for (k, &m) in map.iter().enumerate() {
            prop_assert!(r.mul_vec(a.centroids[k]).angle_deg(b.centroids[m]) < 0.5);
        }
        let agree = a.assignments.iter().zip(&b.assignments).filter(|(x, y)| map[**x] == **y).count();
        prop_assert!(agree as f64 >= 0.99 * cloud.len() as f64, "{} of {}", agree, cloud.len());
    }
}

/// Six bundles of normals scattered up to ~0.15 rad around the signed axes.
/// A marching-cubes surface is unsuitable here: its edge vertices sit exactly
/// halfway between two face normals and rounding decides their cluster.
fn bundle_cloud() -> OrientedPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let axes = [Vec3::X, -Vec3::X, Vec3::Y, -Vec3::Y, Vec3::Z, -Vec3::Z];
    let normals: Vec<Vec3> = (0..600)
        .map(|i| {
            let jitter = Vec3::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
            (axes[i % 6] + jitter).normalized().unwrap()
        })
        .collect();
    OrientedPointCloud::new(normals.clone(), normals).unwrap()
}

#[test]
fn pose_is_idempotent() {
    let spec = PhantomSpec { deformation: Deformation::Crush(0.8), ..PhantomSpec::default() };
    let scan = generate_phantom(&spec, 0).unwrap();
    let g = GridGeometry { direction: Mat3::rotation(Vec3::new(1.0, 0.3, 0.0), 25.0), ..*scan.volume.geometry() };
    let vol = LabelVolume::new(g, scan.volume.voxels().to_vec()).unwrap();
    let first = process_vertebra(&vol, spec.label, &PipelineConfig::default()).unwrap();
    let clusters = cluster_normals(&first.posed_cloud, 3, &KMeansOptions::default()).unwrap();
    let again = compute_pose(&clusters, &first.posed_cloud, Some(&PoseHints::RAS)).unwrap();
    assert!(again.rotation.rotation_angle_deg() < 0.5, "{}", again.rotation.rotation_angle_deg());
    assert!(again.translation.norm() < 0.5, "{:?}", again.translation);
    let twice = apply_pose(&first.posed_cloud, &again);
    for (p, q) in first.posed_cloud.points.iter().zip(&twice.points) {
        assert!((*p - *q).norm() < 0.5);
    }
}

#[test]
fn voxel_corners_map_by_hand() {
    let direction = Mat3::from_col_vecs(Vec3::Y, -Vec3::X, Vec3::Z);
    let g = GridGeometry::new([4, 5, 6], [0.5, 2.0, 3.0], direction, Vec3::new(10.0, 20.0, 30.0)).unwrap();
    let vol = LabelVolume::new(g, vec![0; 120]).unwrap();
    // i steps along +y by 0.5, j along -x by 2, k along +z by 3.
    assert_eq!(vol.voxel_to_world(0, 0, 0), Vec3::new(10.0, 20.0, 30.0));
    assert_eq!(vol.voxel_to_world(3, 0, 0), Vec3::new(10.0, 21.5, 30.0));
    assert_eq!(vol.voxel_to_world(0, 4, 0), Vec3::new(2.0, 20.0, 30.0));
    assert_eq!(vol.voxel_to_world(3, 4, 5), Vec3::new(2.0, 21.5, 45.0));
}

#[test]
fn phantoms_are_deterministic() {
    let spec = PhantomSpec {
        jitter: 0.4,
        count_in_scan: 3,
        deformation: Deformation::Biconcave(0.7),
        ..PhantomSpec::default()
    };
    let a = generate_phantom(&spec, 11).unwrap();
    let b = generate_phantom(&spec, 11).unwrap();
    assert_eq!(a.volume, b.volume);
    assert_ne!(a.volume, generate_phantom(&spec, 12).unwrap().volume);
}
