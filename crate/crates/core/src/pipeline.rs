//! Per-vertebra geometry chain: mask → mesh → posed cloud → height map →
//! section statistics, and the scan-level feature assembly on top.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{
    build_feature_vectors, section_stats, FeatureVector, ReferenceStrategy, SectionLayout, SectionStats,
    DEFAULT_MIN_VALID_FRACTION,
};
use crate::heightmap::{project_heightmap, HeightMap, HeightMode, DEFAULT_GRID_SIZE};
use crate::meshing::{marching_cubes, to_point_cloud, MeshOptions, OrientedPointCloud, TriangleMesh};
use crate::orientation::{
    apply_pose, cluster_normals, compute_pose_with, CanonicalPose, InPlaneAxis, KMeansOptions, PoseHints,
};
use crate::volume::{extract_mask, LabelVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grid_size: usize,
    pub height_mode: HeightMode,
    pub min_voxels: usize,
    pub smooth: bool,
    pub kmeans: KMeansOptions,
    /// `false` switches pose estimation to the hint-free fallback.
    pub use_orientation_hints: bool,
    pub in_plane_axis: InPlaneAxis,
    pub layout: SectionLayout,
    pub min_valid_fraction: f64,
    pub reference: ReferenceStrategy,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mesh = MeshOptions::default();
        PipelineConfig {
            grid_size: DEFAULT_GRID_SIZE,
            height_mode: HeightMode::MaxZ,
            min_voxels: mesh.min_voxels,
            smooth: mesh.smooth,
            kmeans: KMeansOptions::default(),
            use_orientation_hints: true,
            in_plane_axis: InPlaneAxis::FootprintAxis,
            layout: SectionLayout::default(),
            min_valid_fraction: DEFAULT_MIN_VALID_FRACTION,
            reference: ReferenceStrategy::ScanMax,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Clustering seed for one vertebra; independent of processing order.
    pub fn vertebra_seed(&self, label: u32) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(label as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertebraGeometry {
    pub label: u32,
    pub mesh: TriangleMesh,
    pub dropped_components: usize,
    pub pose: CanonicalPose,
    pub posed_cloud: OrientedPointCloud,
    pub heightmap: HeightMap,
    pub stats: SectionStats,
}

/// Runs the geometry chain for one label of a volume.
pub fn process_vertebra(vol: &LabelVolume, label: u32, cfg: &PipelineConfig) -> Result<VertebraGeometry> {
    let mask = extract_mask(vol, label)?;
    let out = marching_cubes(&mask, &MeshOptions { min_voxels: cfg.min_voxels, smooth: cfg.smooth })?;
    let cloud = to_point_cloud(&out.mesh);
    let clusters = cluster_normals(&cloud, cfg.vertebra_seed(label), &cfg.kmeans)?;
    let hints = cfg.use_orientation_hints.then_some(PoseHints::RAS);
    let pose = compute_pose_with(&clusters, &cloud, hints.as_ref(), cfg.in_plane_axis)?;
    let posed_cloud = apply_pose(&cloud, &pose);
    let heightmap = project_heightmap(&posed_cloud, cfg.grid_size, cfg.height_mode)?;
    let stats = section_stats(&heightmap, &cfg.layout, cfg.min_valid_fraction)?;
    Ok(VertebraGeometry {
        label,
        mesh: out.mesh,
        dropped_components: out.dropped_components,
        pose,
        posed_cloud,
        heightmap,
        stats,
    })
}

/// Outcome of a whole scan: per-label geometry results in label order and,
/// when at least two vertebrae succeeded, their feature vectors.
#[derive(Debug, Clone)]
pub struct ScanFeatures {
    pub vertebrae: Vec<(u32, Result<SectionStats>)>,
    pub features: Result<Vec<FeatureVector>>,
}

/// Processes `labels` (sorted ascending first) and assembles feature vectors
/// with a single scan-wide reference.
pub fn process_scan(vol: &LabelVolume, labels: &[u32], cfg: &PipelineConfig) -> ScanFeatures {
    let mut labels = labels.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let vertebrae: Vec<(u32, Result<SectionStats>)> =
        labels.iter().map(|&l| (l, process_vertebra(vol, l, cfg).map(|g| g.stats))).collect();
    let ok: Vec<(u32, SectionStats)> =
        vertebrae.iter().filter_map(|(l, r)| r.as_ref().ok().map(|s| (*l, *s))).collect();
    let features = build_feature_vectors(&ok, cfg.reference);
    ScanFeatures { vertebrae, features }
}
