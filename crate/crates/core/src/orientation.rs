//! Principal-surface detection and canonical reorientation.
//!
//! The six main surfaces of a vertebral body are found by k-means on the
//! unit vertex normals. The inferior and posterior surfaces then define a
//! rigid transform into a local frame where `x` runs left to right, `y`
//! posterior to anterior and `z` inferior to superior, with the inferior
//! endplate on `z = 0`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{percentile, symmetric_eigen, Mat3, Vec3};
use crate::meshing::OrientedPointCloud;

pub const SURFACE_COUNT: usize = 6;
/// Normals closer than this are the same direction for the degeneracy check.
pub const DISTINCT_NORMAL_TOLERANCE: f64 = 1e-3;
/// Inferior and posterior centroids closer than this to parallel are rejected.
pub const AMBIGUOUS_POSE_DEG: f64 = 15.0;
/// Percentile of inferior-surface heights placed on `z = 0`.
pub const BASE_PERCENTILE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { k: SURFACE_COUNT, restarts: 10, max_iterations: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceClusters {
    pub assignments: Vec<usize>,
    /// Renormalized mean normal per cluster.
    pub centroids: Vec<Vec3>,
    pub sizes: Vec<usize>,
    pub inertia: f64,
}

fn nearest(centroids: &[Vec3], n: Vec3) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, &centre) in centroids.iter().enumerate() {
        let d = (n - centre).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn count_distinct(normals: &[Vec3], want: usize) -> usize {
    let mut reps: Vec<Vec3> = Vec::new();
    for &n in normals {
        if reps.iter().all(|&r| (r - n).norm() > DISTINCT_NORMAL_TOLERANCE) {
            reps.push(n);
            if reps.len() >= want {
                break;
            }
        }
    }
    reps.len()
}

fn kmeans_plus_plus(normals: &[Vec3], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut centres = Vec::with_capacity(k);
    centres.push(normals[rng.gen_range(0..normals.len())]);
    let mut d2: Vec<f64> = normals.iter().map(|&n| (n - centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = normals.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..normals.len())
        };
        let c = normals[pick];
        centres.push(c);
        for (d, &n) in d2.iter_mut().zip(normals) {
            *d = d.min((n - c).norm_squared());
        }
    }
    centres
}

fn lloyd(normals: &[Vec3], mut centres: Vec<Vec3>, max_iterations: usize) -> SurfaceClusters {
    let k = centres.len();
    let mut assignments = vec![usize::MAX; normals.len()];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (a, &n) in assignments.iter_mut().zip(normals) {
            let (c, _) = nearest(&centres, n);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Vec3::ZERO; k];
        let mut counts = vec![0usize; k];
        for (&a, &n) in assignments.iter().zip(normals) {
            sums[a] += n;
            counts[a] += 1;
        }
        for c in 0..k {
            match sums[c].normalized() {
                Some(m) if counts[c] > 0 => centres[c] = m,
                _ => {
                    // Empty or cancelling cluster: reseed at the worst-fit point.
                    let (far, _) = normals
                        .iter()
                        .enumerate()
                        .map(|(i, &n)| (i, (n - centres[assignments[i]]).norm_squared()))
                        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                    centres[c] = normals[far];
                }
            }
        }
    }
    let mut sizes = vec![0usize; k];
    let mut inertia = 0.0;
    for (a, &n) in assignments.iter_mut().zip(normals) {
        let (c, d) = nearest(&centres, n);
        *a = c;
        sizes[c] += 1;
        inertia += d;
    }
    SurfaceClusters { assignments, centroids: centres, sizes, inertia }
}

/// k-means on unit normals (k-means++ seeding, best of several restarts).
pub fn cluster_normals(cloud: &OrientedPointCloud, seed: u64, opts: &KMeansOptions) -> Result<SurfaceClusters> {
    let normals = &cloud.normals;
    if opts.k == 0 || opts.restarts == 0 {
        return Err(Error::InvalidConfig("k and restarts must be positive".into()));
    }
    if normals.len() < opts.k || count_distinct(normals, opts.k) < opts.k {
        return Err(Error::DegenerateGeometry(alloc::format!("fewer than {} distinct normal directions", opts.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SurfaceClusters> = None;
    for _ in 0..opts.restarts {
        let init = kmeans_plus_plus(normals, opts.k, &mut rng);
        let run = lloyd(normals, init, opts.max_iterations);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Patient-frame directions of the posterior and inferior surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseHints {
    pub posterior: Vec3,
    pub inferior: Vec3,
}

impl PoseHints {
    /// RAS convention: posterior is −A, inferior is −S.
    pub const RAS: PoseHints = PoseHints { posterior: Vec3::new(0.0, -1.0, 0.0), inferior: Vec3::new(0.0, 0.0, -1.0) };
}

/// Rigid transform `p ↦ rotation · p + translation` into the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalPose {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub posterior_cluster: usize,
    pub inferior_cluster: usize,
    /// Set when surfaces were identified without orientation hints.
    pub low_confidence: bool,
}

impl CanonicalPose {
    pub const IDENTITY: CanonicalPose = CanonicalPose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
        posterior_cluster: 0,
        inferior_cluster: 1,
        low_confidence: false,
    };

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn inverse(&self) -> CanonicalPose {
        let rt = self.rotation.transpose();
        CanonicalPose { rotation: rt, translation: -rt.mul_vec(self.translation), ..*self }
    }
}

fn argmax_alignment(centroids: &[Vec3], dir: Vec3, skip: Option<usize>) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (c, &centre) in centroids.iter().enumerate() {
        if Some(c) == skip {
            continue;
        }
        let d = centre.dot(dir);
        if d > best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn mean_projection(cloud: &OrientedPointCloud, clusters: &SurfaceClusters, c: usize, axis: Vec3) -> f64 {
    let (sum, n) = cloud
        .points
        .iter()
        .zip(&clusters.assignments)
        .filter(|(_, &a)| a == c)
        .fold((0.0, 0usize), |(s, n), (p, _)| (s + p.dot(axis), n + 1));
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Surfaces picked by shape alone: inferior = lowest cluster along the
/// smallest-extent principal axis, posterior = lowest remaining cluster
/// along the middle axis.
fn fallback_surfaces(clusters: &SurfaceClusters, cloud: &OrientedPointCloud) -> (usize, usize) {
    let c = cloud.centroid();
    let mut cov = [[0.0; 3]; 3];
    for p in &cloud.points {
        let d = *p - c;
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let (_, axes) = symmetric_eigen(&Mat3::from_rows(cov));
    let k = clusters.centroids.len();
    let inferior = (0..k)
        .min_by(|&a, &b| {
            mean_projection(cloud, clusters, a, axes[0]).total_cmp(&mean_projection(cloud, clusters, b, axes[0]))
        })
        .unwrap_or(0);
    let down = clusters.centroids[inferior];
    let posterior = (0..k)
        .filter(|&i| i != inferior && clusters.centroids[i].dot(down).abs() < 0.7)
        .min_by(|&a, &b| {
            mean_projection(cloud, clusters, a, axes[1]).total_cmp(&mean_projection(cloud, clusters, b, axes[1]))
        })
        .unwrap_or(if inferior == 0 { 1 } else { 0 });
    (inferior, posterior)
}

/// How the anterior axis `y'` is fixed inside the axial plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InPlaneAxis {
    /// Principal axis of the axial footprint closest to the negated
    /// posterior centroid. The side wall of a rounded body splits into
    /// clusters at arbitrary angles, so its centroid alone does not pin the
    /// rotation about `z'`.
    #[default]
    FootprintAxis,
    /// Negated posterior centroid, orthogonalized against `z'`.
    ClusterCentroid,
}

/// Relative eigenvalue gap below which the footprint counts as round and
/// the cluster centroid is used instead.
pub const ROUND_FOOTPRINT_GAP: f64 = 0.05;

/// Footprint principal axis in the plane `⟂ z` nearest to `y0`, signed to
/// agree with it; `None` for a round footprint.
fn footprint_axis(cloud: &OrientedPointCloud, z: Vec3, y0: Vec3) -> Option<Vec3> {
    let a = y0;
    let b = y0.cross(z);
    let c = cloud.centroid();
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for p in &cloud.points {
        let d = *p - c;
        let (pa, pb) = (d.dot(a), d.dot(b));
        saa += pa * pa;
        sbb += pb * pb;
        sab += pa * pb;
    }
    let half_diff = (saa - sbb) / 2.0;
    let radius = crate::geom::sqrt(half_diff * half_diff + sab * sab);
    let major = (saa + sbb) / 2.0 + radius;
    if major <= 0.0 || 2.0 * radius / major < ROUND_FOOTPRINT_GAP {
        return None;
    }
    let theta = libm::atan2(2.0 * sab, saa - sbb) / 2.0;
    let v1 = a * libm::cos(theta) + b * libm::sin(theta);
    let v2 = v1.cross(z);
    let pick = if v1.dot(y0).abs() >= v2.dot(y0).abs() { v1 } else { v2 };
    Some(if pick.dot(y0) < 0.0 { -pick } else { pick })
}

/// Builds the canonical pose from clustered surfaces with the default
/// in-plane strategy.
pub fn compute_pose(
    clusters: &SurfaceClusters,
    cloud: &OrientedPointCloud,
    hints: Option<&PoseHints>,
) -> Result<CanonicalPose> {
    compute_pose_with(clusters, cloud, hints, InPlaneAxis::default())
}

pub fn compute_pose_with(
    clusters: &SurfaceClusters,
    cloud: &OrientedPointCloud,
    hints: Option<&PoseHints>,
    in_plane: InPlaneAxis,
) -> Result<CanonicalPose> {
    if clusters.centroids.len() < 2 || clusters.assignments.len() != cloud.len() {
        return Err(Error::InvalidConfig("clusters do not match the point cloud".into()));
    }
    let (inferior, posterior, low_confidence) = match hints {
        Some(h) => {
            let inf = argmax_alignment(&clusters.centroids, h.inferior, None);
            let post = argmax_alignment(&clusters.centroids, h.posterior, Some(inf));
            (inf, post, false)
        }
        None => {
            let (inf, post) = fallback_surfaces(clusters, cloud);
            (inf, post, true)
        }
    };
    let ci = clusters.centroids[inferior];
    let cp = clusters.centroids[posterior];
    let angle = ci.angle_deg(cp);
    if !(AMBIGUOUS_POSE_DEG..=180.0 - AMBIGUOUS_POSE_DEG).contains(&angle) {
        return Err(Error::AmbiguousPose { angle_deg: angle.min(180.0 - angle) });
    }
    let z = (-ci).normalized().ok_or_else(|| Error::DegenerateGeometry("zero inferior centroid".into()))?;
    let y0 = -(cp - z * cp.dot(z))
        .normalized()
        .ok_or_else(|| Error::DegenerateGeometry("posterior centroid parallel to axis".into()))?;
    let y = match in_plane {
        InPlaneAxis::FootprintAxis => footprint_axis(cloud, z, y0).unwrap_or(y0),
        InPlaneAxis::ClusterCentroid => y0,
    };
    let x = y.cross(z);
    let rotation = Mat3::from_row_vecs(x, y, z);

    let mut base: Vec<f64> = cloud
        .points
        .iter()
        .zip(&clusters.assignments)
        .filter(|(_, &a)| a == inferior)
        .map(|(&p, _)| rotation.mul_vec(p).z)
        .collect();
    let base_z = percentile(&mut base, BASE_PERCENTILE)
        .ok_or_else(|| Error::DegenerateGeometry("empty inferior cluster".into()))?;
    let axial = cloud.points.iter().fold(Vec3::ZERO, |acc, &p| acc + rotation.mul_vec(p)) / cloud.len() as f64;
    let translation = Vec3::new(-axial.x, -axial.y, -base_z);
    Ok(CanonicalPose {
        rotation,
        translation,
        posterior_cluster: posterior,
        inferior_cluster: inferior,
        low_confidence,
    })
}

/// Maps points by rotation then translation, normals by rotation only.
pub fn apply_pose(cloud: &OrientedPointCloud, pose: &CanonicalPose) -> OrientedPointCloud {
    OrientedPointCloud {
        points: cloud.points.iter().map(|&p| pose.transform_point(p)).collect(),
        normals: cloud.normals.iter().map(|&n| pose.rotation.mul_vec(n)).collect(),
    }
}
