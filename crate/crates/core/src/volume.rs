//! Label volumes, per-vertebra binary masks and annotation records.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};

/// Tolerance on `DᵀD − I` for a direction matrix to count as orthonormal.
pub const DIRECTION_TOLERANCE: f64 = 1e-6;

/// Physical placement of a voxel grid: voxel `(i, j, k)` sits at
/// `origin + direction · (spacing ⊙ (i, j, k))` in patient (RAS) millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Columns are the patient-frame directions of the voxel axes.
    pub direction: Mat3,
    pub origin: Vec3,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], direction: Mat3, origin: Vec3) -> Result<Self> {
        let g = GridGeometry { dims, spacing, direction, origin };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidVolume(alloc::format!("zero dimension in {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(alloc::format!("spacing must be positive, got {:?}", self.spacing)));
        }
        let err = self.direction.orthonormality_error();
        if !(err <= DIRECTION_TOLERANCE) {
            return Err(Error::InvalidVolume(alloc::format!("direction matrix not orthonormal (error {err:.3e})")));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite() && self.origin.z.is_finite()) {
            return Err(Error::InvalidVolume("origin is not finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index with x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// Patient-frame position of a (possibly fractional) voxel coordinate.
    pub fn to_world(&self, ijk: Vec3) -> Vec3 {
        let scaled = ijk.component_mul(Vec3::from_array(self.spacing));
        self.origin + self.direction.mul_vec(scaled)
    }
}

/// A dense 3D grid of vertebra labels (0 = background).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: GridGeometry,
    voxels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(geometry: GridGeometry, voxels: Vec<u32>) -> Result<Self> {
        geometry.validate()?;
        if voxels.len() != geometry.len() {
            return Err(Error::InvalidVolume(alloc::format!(
                "voxel count {} does not match dims {:?}",
                voxels.len(),
                geometry.dims
            )));
        }
        Ok(LabelVolume { geometry, voxels })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn voxels(&self) -> &[u32] {
        &self.voxels
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.voxels[self.geometry.index(i, j, k)]
    }

    /// Sorted distinct non-zero labels.
    pub fn labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = Vec::new();
        let mut last = 0u32;
        for &v in &self.voxels {
            if v != 0 && v != last {
                last = v;
                if let Err(pos) = seen.binary_search(&v) {
                    seen.insert(pos, v);
                }
            }
        }
        seen
    }

    pub fn voxel_to_world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.geometry.to_world(Vec3::new(i as f64, j as f64, k as f64))
    }
}

/// Binary mask of one vertebra sharing its volume's geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: GridGeometry,
    data: Vec<bool>,
    count: usize,
}

impl BinaryMask {
    pub fn new(geometry: GridGeometry, data: Vec<bool>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::InvalidVolume("mask length does not match dims".into()));
        }
        let count = data.iter().filter(|&&b| b).count();
        Ok(BinaryMask { geometry, data, count })
    }

    /// Builds a mask by evaluating `inside` at every voxel index.
    pub fn from_fn(geometry: GridGeometry, mut inside: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(inside(i, j, k));
                }
            }
        }
        BinaryMask::new(geometry, data)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Value at signed coordinates; outside the grid is `false`.
    #[inline]
    pub fn get_signed(&self, i: isize, j: isize, k: isize) -> bool {
        let [nx, ny, nz] = self.geometry.dims;
        if i < 0 || j < 0 || k < 0 || i as usize >= nx || j as usize >= ny || k as usize >= nz {
            return false;
        }
        self.get(i as usize, j as usize, k as usize)
    }

    /// Inclusive voxel bounding box of the set voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        if self.count == 0 {
            return None;
        }
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (idx, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let c = self.geometry.coords(idx);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        Some((lo, hi))
    }

    /// Crops to the bounding box of set voxels plus `pad` empty voxels on
    /// every side. The physical position of every voxel is preserved.
    pub fn cropped(&self, pad: usize) -> Result<BinaryMask> {
        let (lo, hi) = self.bounding_box().ok_or(Error::EmptyInput)?;
        let dims = [hi[0] - lo[0] + 1 + 2 * pad, hi[1] - lo[1] + 1 + 2 * pad, hi[2] - lo[2] + 1 + 2 * pad];
        let shift = Vec3::new(lo[0] as f64 - pad as f64, lo[1] as f64 - pad as f64, lo[2] as f64 - pad as f64);
        let geometry = GridGeometry { dims, origin: self.geometry.to_world(shift), ..self.geometry };
        let p = pad as isize;
        BinaryMask::from_fn(geometry, |i, j, k| {
            self.get_signed(
                i as isize - p + lo[0] as isize,
                j as isize - p + lo[1] as isize,
                k as isize - p + lo[2] as isize,
            )
        })
    }

    /// 6-connected components, largest first. Each entry holds the linear
    /// indices of one component.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let [nx, ny, nz] = self.geometry.dims;
        let mut seen = vec![false; self.data.len()];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            seen[start] = true;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                comp.push(idx);
                let [i, j, k] = self.geometry.coords(idx);
                let mut visit = |ni: usize, nj: usize, nk: usize| {
                    let n = self.geometry.index(ni, nj, nk);
                    if self.data[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                };
                if i > 0 {
                    visit(i - 1, j, k);
                }
                if i + 1 < nx {
                    visit(i + 1, j, k);
                }
                if j > 0 {
                    visit(i, j - 1, k);
                }
                if j + 1 < ny {
                    visit(i, j + 1, k);
                }
                if k > 0 {
                    visit(i, j, k - 1);
                }
                if k + 1 < nz {
                    visit(i, j, k + 1);
                }
            }
            comps.push(comp);
        }
        // stable: equal sizes keep scan order
        comps.sort_by_key(|c| core::cmp::Reverse(c.len()));
        comps
    }

    /// Keeps only the largest 6-connected component. Returns the mask and the
    /// number of components that were dropped.
    pub fn largest_component(&self) -> (BinaryMask, usize) {
        let comps = self.components();
        if comps.len() <= 1 {
            return (self.clone(), 0);
        }
        let mut data = vec![false; self.data.len()];
        for &idx in &comps[0] {
            data[idx] = true;
        }
        let count = comps[0].len();
        (BinaryMask { geometry: self.geometry, data, count }, comps.len() - 1)
    }

    /// One pass of 3×3×3 majority (box) smoothing.
    pub fn box_smoothed(&self) -> BinaryMask {
        let geometry = self.geometry;
        let mut data = Vec::with_capacity(self.data.len());
        let [nx, ny, nz] = geometry.dims;
        for k in 0..nz as isize {
            for j in 0..ny as isize {
                for i in 0..nx as isize {
                    let mut n = 0;
                    for dk in -1..=1 {
                        for dj in -1..=1 {
                            for di in -1..=1 {
                                n += self.get_signed(i + di, j + dj, k + dk) as u32;
                            }
                        }
                    }
                    data.push(n >= 14);
                }
            }
        }
        let count = data.iter().filter(|&&b| b).count();
        BinaryMask { geometry, data, count }
    }
}

/// Isolates one vertebra. Fails with [`Error::EmptyMask`] when `label` has no voxels.
pub fn extract_mask(vol: &LabelVolume, label: u32) -> Result<BinaryMask> {
    if label == 0 {
        return Err(Error::InvalidConfig("label 0 is background".into()));
    }
    let data: Vec<bool> = vol.voxels.iter().map(|&v| v == label).collect();
    let count = data.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::EmptyMask { label });
    }
    Ok(BinaryMask { geometry: vol.geometry, data, count })
}

/// Genant semiquantitative grade (0 normal .. 3 severe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GenantGrade(u8);

impl GenantGrade {
    pub fn new(grade: u8) -> Result<Self> {
        if grade <= 3 {
            Ok(GenantGrade(grade))
        } else {
            Err(Error::InvalidConfig(alloc::format!("genant grade {grade} outside 0..=3")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Moderate or severe fractures count as positive.
    pub fn is_positive(self, threshold: u8) -> bool {
        self.0 >= threshold
    }
}

impl TryFrom<u8> for GenantGrade {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        GenantGrade::new(v)
    }
}

impl From<GenantGrade> for u8 {
    fn from(g: GenantGrade) -> u8 {
        g.0
    }
}

/// Default grade cut: moderate (2) and severe (3) are fractures.
pub const DEFAULT_GRADE_THRESHOLD: u8 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionFlags {
    pub foreign_material: bool,
    pub single_vertebra_scan: bool,
}

impl ExclusionFlags {
    pub fn any(&self) -> bool {
        self.foreign_material || self.single_vertebra_scan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertebraRecord {
    pub scan_id: String,
    pub vertebra_label: u32,
    pub genant_grade: GenantGrade,
    pub exclusion_flags: ExclusionFlags,
}
