//! Small output formats: model JSON, PGM height-map images, ASCII PLY
//! meshes, pose JSON and height-map CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use vcfscan_core::heightmap::{render_pixels, HeightMap};
use vcfscan_core::meshing::TriangleMesh;
use vcfscan_core::orientation::CanonicalPose;
use vcfscan_core::rules::RuleModel;

use crate::error::{Error, Result};

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value)).map_err(Error::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

pub fn read_model(path: &Path) -> Result<RuleModel> {
    let model: RuleModel = read_json(path)?;
    model.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(model)
}

/// Binary PGM, anterior edge at the top.
pub fn encode_pgm(map: &HeightMap) -> Vec<u8> {
    let g = map.grid_size;
    let mut out = format!("P5\n{g} {g}\n255\n").into_bytes();
    out.extend(render_pixels(map));
    out
}

/// `G` lines of `G` comma-separated heights, row 0 (posterior) first,
/// `NA` for invalid cells.
pub fn encode_heightmap_csv(map: &HeightMap) -> String {
    let g = map.grid_size;
    let mut s = String::new();
    for row in 0..g {
        let cells: Vec<String> =
            (0..g).map(|col| map.height(row, col).map_or_else(|| "NA".into(), |h| h.to_string())).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn encode_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property float nx\nproperty float ny\nproperty float nz\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    for (v, n) in mesh.vertices.iter().zip(&mesh.normals) {
        let _ = writeln!(s, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

#[derive(Serialize)]
struct PoseDump<'a> {
    label: u32,
    /// Row-major rotation into the canonical frame.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    pose: &'a CanonicalPose,
}

pub fn encode_pose(label: u32, pose: &CanonicalPose) -> Vec<u8> {
    to_json(&PoseDump { label, rotation: pose.rotation.rows, translation: pose.translation.to_array(), pose })
}
