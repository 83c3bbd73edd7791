//! Raw test volume: one ASCII header line
//! `LVOL1 dx dy dz sx sy sz d00 d01 .. d22 ox oy oz`, then `dx·dy·dz`
//! little-endian `u16` labels with x fastest. The direction matrix is
//! written row-major; its columns are the voxel axes in patient space.

use std::io::Write;
use std::path::Path;

use vcfscan_core::geom::{Mat3, Vec3};
use vcfscan_core::volume::{GridGeometry, LabelVolume};

use crate::error::{Error, Result};

pub const MAGIC: &str = "LVOL1";

pub fn encode(vol: &LabelVolume) -> Result<Vec<u8>> {
    let g = vol.geometry();
    let mut fields: Vec<String> = vec![MAGIC.into()];
    fields.extend(g.dims.iter().map(|d| d.to_string()));
    fields.extend(g.spacing.iter().map(|s| s.to_string()));
    fields.extend(g.direction.rows.iter().flatten().map(|d| d.to_string()));
    fields.extend(g.origin.to_array().iter().map(|o| o.to_string()));
    let mut out = fields.join(" ").into_bytes();
    out.push(b'\n');
    out.reserve(2 * vol.voxels().len());
    for &v in vol.voxels() {
        let v =
            u16::try_from(v).map_err(|_| Error::Validation(format!("label {v} does not fit the raw u16 format")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path, max_voxels: u64) -> Result<LabelVolume> {
    let bad = |msg: &str| Error::format(path, msg);
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not ASCII"))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.first() != Some(&MAGIC) {
        return Err(bad("missing LVOL1 magic"));
    }
    if fields.len() != 1 + 3 + 3 + 9 + 3 {
        return Err(bad(&format!("expected 18 header values, found {}", fields.len() - 1)));
    }
    let mut dims = [0usize; 3];
    for (d, f) in dims.iter_mut().zip(&fields[1..4]) {
        *d = f.parse().map_err(|_| bad(&format!("bad dimension {f:?}")))?;
    }
    let nums: Vec<f64> = fields[4..]
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| bad(&format!("bad number {f:?}"))))
        .collect::<Result<_>>()?;
    let voxels = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64)).unwrap_or(u64::MAX);
    if voxels > max_voxels {
        return Err(Error::Resource { path: path.into(), voxels, budget: max_voxels });
    }
    let payload = &bytes[nl + 1..];
    if payload.len() as u64 != 2 * voxels {
        return Err(bad(&format!("payload has {} bytes, expected {}", payload.len(), 2 * voxels)));
    }
    let spacing = [nums[0], nums[1], nums[2]];
    let direction =
        Mat3::from_rows([[nums[3], nums[4], nums[5]], [nums[6], nums[7], nums[8]], [nums[9], nums[10], nums[11]]]);
    let origin = Vec3::new(nums[12], nums[13], nums[14]);
    let geometry = GridGeometry::new(dims, spacing, direction, origin).map_err(|e| bad(&e.to_string()))?;
    let labels = payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect();
    Ok(LabelVolume::new(geometry, labels)?)
}

pub fn write(vol: &LabelVolume, path: &Path) -> Result<()> {
    let bytes = encode(vol)?;
    let mut f = std::fs::File::create(path).map_err(Error::io(path))?;
    f.write_all(&bytes).map_err(Error::io(path))
}
