//! Synthetic voxelized vertebral bodies with controlled deformations.
//!
//! A phantom body is an elliptic cylinder standing on the axial plane. The
//! patient frame is RAS: `x` runs left to right, `y` posterior to anterior and
//! `z` inferior to superior. The body axis passes through `x = y = 0`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{floor, Mat3, Vec3};
use crate::volume::{GridGeometry, LabelVolume};

/// Empty voxels kept around the bodies on every side.
pub const MARGIN_VOXELS: usize = 4;
/// Minimum number of voxels across the smaller radius.
pub const MIN_VOXELS_PER_RADIUS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fraction", rename_all = "snake_case")]
pub enum Deformation {
    None,
    /// Height falls linearly from the posterior rim (factor 1) to the
    /// anterior rim (factor `fraction`).
    Wedge(f64),
    /// Radial dip reaching `fraction` on the body axis and 1 at the rim.
    Biconcave(f64),
    /// Uniform scaling of the height.
    Crush(f64),
}

impl Deformation {
    pub fn fraction(&self) -> f64 {
        match *self {
            Deformation::None => 1.0,
            Deformation::Wedge(f) | Deformation::Biconcave(f) | Deformation::Crush(f) => f,
        }
    }

    pub fn is_deformed(&self) -> bool {
        self.fraction() < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// Undeformed body height in mm.
    pub base_height: f64,
    /// Anteroposterior semi-axis in mm.
    pub radius_ap: f64,
    /// Lateral semi-axis in mm.
    pub radius_lateral: f64,
    pub deformation: Deformation,
    /// Voxel spacing (x, y, z) in mm.
    pub spacing: [f64; 3],
    /// Label of the deformed body; the extra references get `label + 1, ...`.
    pub label: u32,
    /// Total bodies in the scan (deformed one plus undeformed references).
    pub count_in_scan: usize,
    /// Gap between stacked bodies in mm.
    pub gap: f64,
    /// Uniform jitter of the voxel sampling position, in voxels (≤ 0.5).
    pub jitter: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            base_height: 25.0,
            radius_ap: 16.0,
            radius_lateral: 21.0,
            deformation: Deformation::None,
            spacing: [1.0; 3],
            label: 20,
            count_in_scan: 1,
            gap: 6.0,
            jitter: 0.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let f = self.deformation.fraction();
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("deformation fraction {f} outside (0, 1]")));
        }
        let positive = [self.base_height, self.radius_ap, self.radius_lateral]
            .iter()
            .chain(self.spacing.iter())
            .all(|&v| v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::InvalidConfig("height, radii and spacing must be positive".into()));
        }
        if self.label == 0 || self.count_in_scan == 0 {
            return Err(Error::InvalidConfig("label and count_in_scan must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::InvalidConfig("jitter must lie in [0, 0.5] voxels".into()));
        }
        if !(self.gap >= 0.0) {
            return Err(Error::InvalidConfig("gap must be non-negative".into()));
        }
        let across = (self.radius_ap.min(self.radius_lateral)) / self.spacing[0].max(self.spacing[1]);
        if across < MIN_VOXELS_PER_RADIUS {
            return Err(Error::Resolution { voxels_across_radius: across });
        }
        Ok(())
    }
}

/// Closed-form height of a phantom body over its axial footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub base_height: f64,
    pub radius_ap: f64,
    pub radius_lateral: f64,
    pub deformation: Deformation,
}

impl HeightField {
    /// True when the axial point `(u, v)` (lateral, anteroposterior; mm from
    /// the body axis) lies inside the elliptic footprint.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.rho_squared(u, v) <= 1.0
    }

    fn rho_squared(&self, u: f64, v: f64) -> f64 {
        let a = u / self.radius_lateral;
        let b = v / self.radius_ap;
        a * a + b * b
    }

    /// Height in mm at `(u, v)`; `None` outside the footprint.
    pub fn height(&self, u: f64, v: f64) -> Option<f64> {
        if !self.contains(u, v) {
            return None;
        }
        let h = self.base_height;
        Some(match self.deformation {
            Deformation::None => h,
            Deformation::Wedge(f) => {
                let t = ((v + self.radius_ap) / (2.0 * self.radius_ap)).clamp(0.0, 1.0);
                h * (1.0 - (1.0 - f) * t)
            }
            Deformation::Biconcave(f) => h * (1.0 - (1.0 - f) * (1.0 - self.rho_squared(u, v))),
            Deformation::Crush(f) => h * f,
        })
    }

    /// Tallest height anywhere on the footprint.
    pub fn max_height(&self) -> f64 {
        match self.deformation {
            Deformation::Crush(f) => self.base_height * f,
            _ => self.base_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomBody {
    pub label: u32,
    /// z of the inferior endplate in mm.
    pub base_z: f64,
    pub field: HeightField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomScan {
    pub volume: LabelVolume,
    /// The deformed body first, then the stacked references.
    pub bodies: Vec<PhantomBody>,
}

impl PhantomScan {
    pub fn primary(&self) -> &PhantomBody {
        &self.bodies[0]
    }
}

/// Voxelizes the phantom described by `spec`. `seed` only matters when
/// `spec.jitter > 0`.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<PhantomScan> {
    spec.validate()?;
    let [sx, sy, sz] = spec.spacing;

    let mut bodies = Vec::with_capacity(spec.count_in_scan);
    let mut z = 0.0;
    for n in 0..spec.count_in_scan {
        let deformation = if n == 0 { spec.deformation } else { Deformation::None };
        let field = HeightField {
            base_height: spec.base_height,
            radius_ap: spec.radius_ap,
            radius_lateral: spec.radius_lateral,
            deformation,
        };
        let label = spec.label.checked_add(n as u32).ok_or_else(|| Error::InvalidConfig("label overflow".into()))?;
        bodies.push(PhantomBody { label, base_z: z, field });
        z += spec.base_height + spec.gap;
    }
    let top = z - spec.gap;

    // Voxel centres: x, y symmetric about the axis; z offset by half a voxel
    // so the inferior endplate falls on a voxel boundary.
    let half_x = (spec.radius_lateral / sx).ceil_usize() + MARGIN_VOXELS;
    let half_y = (spec.radius_ap / sy).ceil_usize() + MARGIN_VOXELS;
    let nz = (top / sz).ceil_usize() + 2 * MARGIN_VOXELS;
    let dims = [2 * half_x + 1, 2 * half_y + 1, nz];
    let origin = Vec3::new(-(half_x as f64) * sx, -(half_y as f64) * sy, -(MARGIN_VOXELS as f64 - 0.5) * sz);
    let geometry = GridGeometry::new(dims, spec.spacing, Mat3::IDENTITY, origin)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut voxels = Vec::with_capacity(geometry.len());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut p = Vec3::new(origin.x + i as f64 * sx, origin.y + j as f64 * sy, origin.z + k as f64 * sz);
                if spec.jitter > 0.0 {
                    let j = spec.jitter;
                    p += Vec3::new(rng.gen_range(-j..=j) * sx, rng.gen_range(-j..=j) * sy, rng.gen_range(-j..=j) * sz);
                }
                let label = bodies
                    .iter()
                    .find_map(|b| {
                        let h = b.field.height(p.x, p.y)?;
                        (p.z > b.base_z && p.z < b.base_z + h).then_some(b.label)
                    })
                    .unwrap_or(0);
                voxels.push(label);
            }
        }
    }
    Ok(PhantomScan { volume: LabelVolume::new(geometry, voxels)?, bodies })
}

trait CeilUsize {
    fn ceil_usize(self) -> usize;
}

impl CeilUsize for f64 {
    fn ceil_usize(self) -> usize {
        let f = floor(self);
        if f == self {
            f as usize
        } else {
            f as usize + 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(d: Deformation) -> HeightField {
        HeightField { base_height: 25.0, radius_ap: 16.0, radius_lateral: 21.0, deformation: d }
    }

    #[test]
    fn undeformed_field_is_constant() {
        let f = field(Deformation::None);
        for (u, v) in [(0.0, 0.0), (10.0, 5.0), (-20.0, 0.0), (0.0, -15.9)] {
            assert_eq!(f.height(u, v), Some(25.0));
        }
        assert_eq!(f.height(0.0, 16.5), None);
    }

    #[test]
    fn wedge_rims() {
        let f = field(Deformation::Wedge(0.8));
        assert!((f.height(0.0, 16.0).unwrap() - 20.0).abs() < 1e-12);
        assert!((f.height(0.0, -16.0).unwrap() - 25.0).abs() < 1e-12);
        assert!((f.height(0.0, 0.0).unwrap() - 22.5).abs() < 1e-12);
    }

    #[test]
    fn biconcave_and_crush() {
        let b = field(Deformation::Biconcave(0.7));
        assert!((b.height(0.0, 0.0).unwrap() - 17.5).abs() < 1e-12);
        assert!((b.height(21.0, 0.0).unwrap() - 25.0).abs() < 1e-12);
        let c = field(Deformation::Crush(0.75));
        assert_eq!(c.height(3.0, 3.0), Some(18.75));
    }

    #[test]
    fn validation() {
        let mut s = PhantomSpec { deformation: Deformation::Wedge(0.0), ..Default::default() };
        assert!(s.validate().is_err());
        s.deformation = Deformation::Wedge(1.2);
        assert!(s.validate().is_err());
        s.deformation = Deformation::None;
        s.spacing = [3.0, 3.0, 1.0];
        assert!(matches!(s.validate(), Err(Error::Resolution { .. })));
    }

    #[test]
    fn stacked_labels_are_distinct() {
        let spec = PhantomSpec { count_in_scan: 3, spacing: [2.0; 3], ..Default::default() };
        let scan = generate_phantom(&spec, 0).unwrap();
        assert_eq!(scan.volume.labels(), alloc::vec![20, 21, 22]);
        assert!(scan.bodies[1].base_z > scan.bodies[0].base_z + 25.0);
    }
}
