//! Projection of a posed point cloud onto a standardized axial grid.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::floor;
use crate::meshing::OrientedPointCloud;

pub const DEFAULT_GRID_SIZE: usize = 16;
pub const MIN_GRID_SIZE: usize = 4;
/// Height stored in cells without a superior-surface witness.
pub const INVALID_HEIGHT: f64 = f64::NAN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightMode {
    /// Highest point per column above the posed base plane.
    #[default]
    MaxZ,
    /// Highest minus lowest point per column.
    ColumnSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialBounds {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// G×G grid over the axial footprint. Cell `(row, col)` is stored at
/// `row * G + col`; rows follow `v` (posterior → anterior), columns follow
/// `u` (left → right).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    pub grid_size: usize,
    pub heights: Vec<f64>,
    pub valid: Vec<bool>,
    pub axial_bounds: AxialBounds,
}

impl HeightMap {
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.grid_size + col
    }

    pub fn height(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        self.valid[i].then_some(self.heights[i])
    }

    /// Normalized `(u, v)` of a cell centre in `[0, 1]²`.
    pub fn cell_centre(&self, row: usize, col: usize) -> (f64, f64) {
        let g = self.grid_size as f64;
        ((col as f64 + 0.5) / g, (row as f64 + 0.5) / g)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Builds a map from per-cell values; `None` marks an invalid cell.
    pub fn from_cells(grid_size: usize, cells: &[Option<f64>], axial_bounds: AxialBounds) -> Result<Self> {
        if cells.len() != grid_size * grid_size {
            return Err(Error::InvalidConfig("cell count does not match grid size".into()));
        }
        Ok(HeightMap {
            grid_size,
            heights: cells.iter().map(|c| c.unwrap_or(INVALID_HEIGHT)).collect(),
            valid: cells.iter().map(Option::is_some).collect(),
            axial_bounds,
        })
    }

    /// Every valid height multiplied by `s`.
    pub fn scaled(&self, s: f64) -> HeightMap {
        let heights = self.heights.iter().zip(&self.valid).map(|(&h, &v)| if v { h * s } else { h }).collect();
        HeightMap { heights, ..self.clone() }
    }

    /// Left–right mirror (column order reversed).
    pub fn mirrored_u(&self) -> HeightMap {
        let g = self.grid_size;
        let mut out = self.clone();
        for r in 0..g {
            for c in 0..g {
                let src = r * g + (g - 1 - c);
                out.heights[r * g + c] = self.heights[src];
                out.valid[r * g + c] = self.valid[src];
            }
        }
        out
    }
}

fn cell_of(x: f64, min: f64, max: f64, g: usize) -> usize {
    let t = (x - min) / (max - min) * g as f64;
    (floor(t).max(0.0) as usize).min(g - 1)
}

/// Bins posed points into a G×G grid and records one height per column.
/// A cell is valid only when it holds at least one point whose normal has a
/// positive `z` component.
pub fn project_heightmap(cloud: &OrientedPointCloud, grid_size: usize, mode: HeightMode) -> Result<HeightMap> {
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::InvalidConfig(alloc::format!("grid size must be >= {MIN_GRID_SIZE}")));
    }
    if cloud.is_empty() {
        return Err(Error::ProjectionFailure);
    }
    let mut b =
        AxialBounds { u_min: f64::INFINITY, u_max: f64::NEG_INFINITY, v_min: f64::INFINITY, v_max: f64::NEG_INFINITY };
    for p in &cloud.points {
        b.u_min = b.u_min.min(p.x);
        b.u_max = b.u_max.max(p.x);
        b.v_min = b.v_min.min(p.y);
        b.v_max = b.v_max.max(p.y);
    }
    if !(b.u_max > b.u_min && b.v_max > b.v_min) {
        return Err(Error::DegenerateGeometry("axial footprint has zero extent".into()));
    }
    let g = grid_size;
    let mut hi = vec![f64::NEG_INFINITY; g * g];
    let mut lo = vec![f64::INFINITY; g * g];
    let mut witness = vec![false; g * g];
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        let c = cell_of(p.y, b.v_min, b.v_max, g) * g + cell_of(p.x, b.u_min, b.u_max, g);
        hi[c] = hi[c].max(p.z);
        lo[c] = lo[c].min(p.z);
        witness[c] |= n.z > 0.0;
    }
    let heights: Vec<f64> = (0..g * g)
        .map(|c| {
            if !witness[c] {
                INVALID_HEIGHT
            } else {
                match mode {
                    HeightMode::MaxZ => hi[c].max(0.0),
                    HeightMode::ColumnSpan => hi[c] - lo[c],
                }
            }
        })
        .collect();
    if !witness.iter().any(|&w| w) {
        return Err(Error::ProjectionFailure);
    }
    Ok(HeightMap { grid_size: g, heights, valid: witness, axial_bounds: b })
}

/// 8-bit grayscale pixels, row-major with the anterior edge on the first
/// row. Valid cells map linearly from min → 0 to max → 255 (a constant map
/// renders 128); invalid cells are 0.
pub fn render_pixels(map: &HeightMap) -> Vec<u8> {
    let g = map.grid_size;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&h, &v) in map.heights.iter().zip(&map.valid) {
        if v {
            min = min.min(h);
            max = max.max(h);
        }
    }
    let mut out = Vec::with_capacity(g * g);
    for row in (0..g).rev() {
        for col in 0..g {
            let i = map.index(row, col);
            let px = if !map.valid[i] {
                0
            } else if max <= min {
                128
            } else {
                libm::round((map.heights[i] - min) / (max - min) * 255.0) as u8
            };
            out.push(px);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn box_cloud(h: f64) -> OrientedPointCloud {
        let mut pts = Vec::new();
        let mut nrm = Vec::new();
        for i in 0..=20 {
            for j in 0..=20 {
                let (x, y) = (i as f64, j as f64);
                pts.push(Vec3::new(x, y, h));
                nrm.push(Vec3::Z);
                pts.push(Vec3::new(x, y, 0.0));
                nrm.push(-Vec3::Z);
            }
        }
        OrientedPointCloud::new(pts, nrm).unwrap()
    }

    #[test]
    fn box_is_constant() {
        let map = project_heightmap(&box_cloud(25.0), 16, HeightMode::MaxZ).unwrap();
        assert_eq!(map.valid_count(), 256);
        assert!(map.heights.iter().all(|&h| h == 25.0));
        let span = project_heightmap(&box_cloud(25.0), 8, HeightMode::ColumnSpan).unwrap();
        assert!(span.heights.iter().all(|&h| h == 25.0));
    }

    #[test]
    fn walls_alone_do_not_validate_cells() {
        let cloud =
            OrientedPointCloud::new(vec![Vec3::new(0.0, 0.0, 5.0), Vec3::new(1.0, 1.0, 9.0)], vec![Vec3::X, Vec3::X])
                .unwrap();
        assert_eq!(project_heightmap(&cloud, 4, HeightMode::MaxZ), Err(Error::ProjectionFailure));
        assert!(project_heightmap(&box_cloud(1.0), 3, HeightMode::MaxZ).is_err());
    }

    #[test]
    fn render_conventions() {
        let bounds = AxialBounds { u_min: 0.0, u_max: 1.0, v_min: 0.0, v_max: 1.0 };
        let constant = HeightMap::from_cells(4, &[Some(3.0); 16], bounds).unwrap();
        assert!(render_pixels(&constant).iter().all(|&p| p == 128));

        // Height decreasing toward anterior rows.
        let cells: Vec<Option<f64>> = (0..16).map(|i| Some(20.0 - (i / 4) as f64)).collect();
        let wedge = HeightMap::from_cells(4, &cells, bounds).unwrap();
        let px = render_pixels(&wedge);
        let rows: Vec<u8> = px.chunks(4).map(|r| r[0]).collect();
        assert_eq!(rows, vec![0, 85, 170, 255]);

        let mut holes = cells.clone();
        holes[0] = None;
        let px = render_pixels(&HeightMap::from_cells(4, &holes, bounds).unwrap());
        assert_eq!(px[12], 0);
    }
}
