//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) label volumes.
//!
//! Orientation comes from the sform when it is present and orthonormal,
//! otherwise from the qform, otherwise from `pixdim` alone. A present
//! sform that is not orthonormal is only tolerated when a qform exists.

use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use vcfscan_core::geom::{Mat3, Vec3};
use vcfscan_core::volume::{GridGeometry, LabelVolume, DIRECTION_TOLERANCE};

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

/// Voxel types accepted by the reader and writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    I32,
    U16,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::I32 => 8,
            Datatype::U16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Option<Datatype> {
        Some(match code {
            2 => Datatype::U8,
            4 => Datatype::I16,
            8 => Datatype::I32,
            512 => Datatype::U16,
            _ => return None,
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 | Datatype::U16 => 2,
            Datatype::I32 => 4,
        }
    }

    fn max_label(self) -> u32 {
        match self {
            Datatype::U8 => u8::MAX as u32,
            Datatype::I16 => i16::MAX as u32,
            Datatype::U16 => u16::MAX as u32,
            Datatype::I32 => i32::MAX as u32,
        }
    }
}

/// The header fields the reader honors.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub little_endian: bool,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
}

struct Fields<'a> {
    b: &'a [u8],
    le: bool,
}

impl Fields<'_> {
    fn i16(&self, off: usize) -> i16 {
        let a = [self.b[off], self.b[off + 1]];
        if self.le {
            i16::from_le_bytes(a)
        } else {
            i16::from_be_bytes(a)
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let a = [self.b[off], self.b[off + 1], self.b[off + 2], self.b[off + 3]];
        if self.le {
            f32::from_le_bytes(a)
        } else {
            f32::from_be_bytes(a)
        }
    }
}

impl Header {
    pub fn parse(b: &[u8; HEADER_SIZE], path: &Path) -> Result<Header> {
        let le = if i32::from_le_bytes([b[0], b[1], b[2], b[3]]) == HEADER_SIZE as i32 {
            true
        } else if i32::from_be_bytes([b[0], b[1], b[2], b[3]]) == HEADER_SIZE as i32 {
            false
        } else {
            return Err(Error::format(path, "sizeof_hdr is not 348"));
        };
        if &b[344..348] != b"n+1\0" {
            return Err(Error::format(path, "missing n+1 magic (only single-file NIfTI-1 is supported)"));
        }
        let f = Fields { b, le };
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dim[i] = f.i16(40 + 2 * i);
            pixdim[i] = f.f32(76 + 4 * i);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f.f32(280 + 16 * r + 4 * c);
            }
        }
        Ok(Header {
            little_endian: le,
            dim,
            datatype: f.i16(70),
            pixdim,
            vox_offset: f.f32(108),
            qform_code: f.i16(252),
            sform_code: f.i16(254),
            quatern: [f.f32(256), f.f32(260), f.f32(264)],
            qoffset: [f.f32(268), f.f32(272), f.f32(276)],
            srow,
        })
    }

    pub fn dims(&self, path: &Path) -> Result<[usize; 3]> {
        let n = self.dim[0];
        if !(3..=7).contains(&n) {
            return Err(Error::format(path, format!("dim[0] = {n}, expected a 3D volume")));
        }
        if self.dim[4..=n as usize].iter().any(|&d| d > 1) {
            return Err(Error::format(path, "4D and higher volumes are not supported"));
        }
        let mut dims = [0usize; 3];
        for (k, d) in dims.iter_mut().enumerate() {
            let v = self.dim[k + 1];
            if v < 1 {
                return Err(Error::format(path, format!("dim[{}] = {v}", k + 1)));
            }
            *d = v as usize;
        }
        Ok(dims)
    }

    fn qform(&self) -> (Mat3, [f64; 3], Vec3) {
        let [b, c, d] = self.quatern.map(f64::from);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let r = Mat3::from_rows([
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), qfac * 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, qfac * 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), qfac * (a * a + d * d - c * c - b * b)],
        ]);
        let spacing = [1, 2, 3].map(|k| f64::from(self.pixdim[k]).abs());
        (r, spacing, Vec3::from_array(self.qoffset.map(f64::from)))
    }

    fn sform(&self) -> Option<(Mat3, [f64; 3], Vec3)> {
        let col = |j: usize| Vec3::new(self.srow[0][j] as f64, self.srow[1][j] as f64, self.srow[2][j] as f64);
        let cols = [col(0), col(1), col(2)];
        let spacing = cols.map(Vec3::norm);
        let units: Vec<Vec3> = cols.iter().map(|c| c.normalized()).collect::<Option<_>>()?;
        let direction = Mat3::from_col_vecs(units[0], units[1], units[2]);
        Some((direction, spacing, col(3)))
    }

    /// Direction, spacing and origin per the precedence in the module docs.
    pub fn orientation(&self, path: &Path) -> Result<(Mat3, [f64; 3], Vec3)> {
        if self.sform_code > 0 {
            match self.sform() {
                Some(s) if s.0.is_orthonormal(DIRECTION_TOLERANCE) => return Ok(s),
                _ if self.qform_code > 0 => {
                    log::warn!("{}: sform is not orthonormal, using qform", path.display());
                }
                _ => return Err(Error::format(path, "sform direction is not orthonormal")),
            }
        }
        if self.qform_code > 0 {
            return Ok(self.qform());
        }
        let spacing = [1, 2, 3].map(|k| f64::from(self.pixdim[k]).abs());
        Ok((Mat3::IDENTITY, spacing, Vec3::ZERO))
    }
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Reads a `.nii` or `.nii.gz` label volume; voxel values must be
/// non-negative integers.
pub fn read(path: &Path, max_voxels: u64) -> Result<LabelVolume> {
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    let mut reader: Box<dyn Read> =
        if is_gzip(path) { Box::new(GzDecoder::new(BufReader::new(file))) } else { Box::new(BufReader::new(file)) };
    read_from(&mut reader, path, max_voxels)
}

pub fn read_from(reader: &mut dyn Read, path: &Path, max_voxels: u64) -> Result<LabelVolume> {
    let mut hb = [0u8; HEADER_SIZE];
    reader.read_exact(&mut hb).map_err(|_| Error::format(path, "file shorter than the 348-byte header"))?;
    let h = Header::parse(&hb, path)?;
    let dims = h.dims(path)?;
    let dtype =
        Datatype::from_code(h.datatype).ok_or(Error::UnsupportedType { path: path.into(), code: h.datatype })?;
    let voxels = dims.iter().map(|&d| d as u64).product::<u64>();
    if voxels > max_voxels {
        return Err(Error::Resource { path: path.into(), voxels, budget: max_voxels });
    }
    let (direction, spacing, origin) = h.orientation(path)?;
    let geometry =
        GridGeometry::new(dims, spacing, direction, origin).map_err(|e| Error::format(path, e.to_string()))?;

    let offset = h.vox_offset as usize;
    if offset < HEADER_SIZE {
        return Err(Error::format(path, format!("vox_offset {offset} lies inside the header")));
    }
    std::io::copy(&mut reader.take((offset - HEADER_SIZE) as u64), &mut std::io::sink()).map_err(Error::io(path))?;
    let mut data = vec![0u8; voxels as usize * dtype.bytes()];
    reader.read_exact(&mut data).map_err(|_| Error::format(path, "voxel payload is truncated"))?;
    let labels =
        decode_labels(&data, dtype, h.little_endian).map_err(|v| Error::format(path, format!("negative label {v}")))?;
    Ok(LabelVolume::new(geometry, labels)?)
}

fn decode_labels(data: &[u8], dtype: Datatype, le: bool) -> std::result::Result<Vec<u32>, i64> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            data.chunks_exact($n)
                .map(|c| {
                    let a: [u8; $n] = c.try_into().unwrap();
                    let v = if le { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) } as i64;
                    u32::try_from(v).map_err(|_| v)
                })
                .collect()
        };
    }
    match dtype {
        Datatype::U8 => Ok(data.iter().map(|&v| v as u32).collect()),
        Datatype::I16 => conv!(i16, 2),
        Datatype::U16 => conv!(u16, 2),
        Datatype::I32 => conv!(i32, 4),
    }
}

/// Unit quaternion `(b, c, d)` and `qfac` for a proper or improper rotation.
fn quaternion(direction: &Mat3) -> ([f64; 3], f64) {
    let mut r = direction.rows;
    let qfac = if direction.determinant() < 0.0 { -1.0 } else { 1.0 };
    for row in r.iter_mut() {
        row[2] *= qfac;
    }
    let trace = r[0][0] + r[1][1] + r[2][2];
    let (a, b, c, d) = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        (0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s)
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
        ((r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s)
    } else if r[1][1] > r[2][2] {
        let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
        ((r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s)
    } else {
        let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
        ((r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s)
    };
    // NIfTI stores only b, c, d and assumes a >= 0.
    let sign = if a < 0.0 { -1.0 } else { 1.0 };
    ([b * sign, c * sign, d * sign], qfac)
}

/// Little-endian header with matching sform and qform (code 1).
pub fn encode_header(g: &GridGeometry, dtype: Datatype) -> [u8; HEADER_SIZE] {
    let mut b = [0u8; HEADER_SIZE];
    let mut put = |off: usize, bytes: &[u8]| b[off..off + bytes.len()].copy_from_slice(bytes);
    put(0, &(HEADER_SIZE as i32).to_le_bytes());
    let (q, qfac) = quaternion(&g.direction);
    let dim = [3, g.dims[0] as i16, g.dims[1] as i16, g.dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put(40 + 2 * i, &d.to_le_bytes());
    }
    put(70, &dtype.code().to_le_bytes());
    put(72, &(8 * dtype.bytes() as i16).to_le_bytes());
    let pixdim = [qfac, g.spacing[0], g.spacing[1], g.spacing[2], 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        put(76 + 4 * i, &(*p as f32).to_le_bytes());
    }
    put(108, &(VOX_OFFSET as f32).to_le_bytes());
    put(123, &[10u8]); // xyzt_units: mm, s
    put(252, &1i16.to_le_bytes());
    put(254, &1i16.to_le_bytes());
    for (i, v) in q.iter().chain(g.origin.to_array().iter()).enumerate() {
        put(256 + 4 * i, &(*v as f32).to_le_bytes());
    }
    let o = g.origin.to_array();
    for r in 0..3 {
        for c in 0..3 {
            put(280 + 16 * r + 4 * c, &((g.direction.rows[r][c] * g.spacing[c]) as f32).to_le_bytes());
        }
        put(280 + 16 * r + 12, &(o[r] as f32).to_le_bytes());
    }
    put(344, b"n+1\0");
    b
}

pub fn encode(vol: &LabelVolume, dtype: Datatype) -> Result<Vec<u8>> {
    let mut out = encode_header(vol.geometry(), dtype).to_vec();
    out.extend_from_slice(&[0u8; VOX_OFFSET - HEADER_SIZE]);
    out.reserve(vol.voxels().len() * dtype.bytes());
    for &v in vol.voxels() {
        if v > dtype.max_label() {
            return Err(Error::Validation(format!("label {v} does not fit NIfTI datatype {dtype:?}")));
        }
        match dtype {
            Datatype::U8 => out.push(v as u8),
            Datatype::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Datatype::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Datatype::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Writes `.nii`, or gzip-compressed `.nii.gz` when the path ends in `.gz`.
pub fn write(vol: &LabelVolume, dtype: Datatype, path: &Path) -> Result<()> {
    let bytes = encode(vol, dtype)?;
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    if is_gzip(path) {
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(&bytes).map_err(Error::io(path))?;
        enc.finish().map_err(Error::io(path))?;
    } else {
        let mut file = file;
        file.write_all(&bytes).map_err(Error::io(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_round_trips_rotations() {
        for (axis, angle) in [(Vec3::X, 0.0), (Vec3::Y, 180.0), (Vec3::new(1.0, 2.0, -0.5), 73.0), (Vec3::Z, 179.0)] {
            let d = Mat3::rotation(axis.normalized().unwrap(), angle);
            let g = GridGeometry::new([2, 2, 2], [1.0; 3], d, Vec3::ZERO).unwrap();
            let hb = encode_header(&g, Datatype::U8);
            let h = Header::parse(&hb, Path::new("q")).unwrap();
            let (r, _, _) = h.qform();
            assert!(r.mul_mat(&d.transpose()).rotation_angle_deg() < 1e-3);
        }
    }

    #[test]
    fn improper_direction_uses_qfac() {
        let d = Mat3::from_rows([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
        let g = GridGeometry::new([2, 2, 2], [1.0; 3], d, Vec3::ZERO).unwrap();
        let h = Header::parse(&encode_header(&g, Datatype::U8), Path::new("q")).unwrap();
        assert!(h.pixdim[0] < 0.0);
        let (r, _, _) = h.qform();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.rows[i][j] - d.rows[i][j]).abs() < 1e-6);
            }
        }
    }
}
