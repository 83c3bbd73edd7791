pub mod annotations;
pub mod features_csv;
pub mod formats;
pub mod lvol;
pub mod nifti;

use std::path::Path;

use vcfscan_core::volume::LabelVolume;

use crate::error::{Error, Result};

/// Volume file kinds, told apart by extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    Lvol,
    Nifti,
}

impl VolumeFormat {
    pub fn of(path: &Path) -> Option<VolumeFormat> {
        let name = path.file_name()?.to_str()?;
        if name.ends_with(".lvol") {
            Some(VolumeFormat::Lvol)
        } else if name.ends_with(".nii") || name.ends_with(".nii.gz") {
            Some(VolumeFormat::Nifti)
        } else {
            None
        }
    }
}

pub fn load_label_volume(path: &Path, max_voxels: u64) -> Result<LabelVolume> {
    match VolumeFormat::of(path) {
        Some(VolumeFormat::Lvol) => {
            let bytes = std::fs::read(path).map_err(Error::io(path))?;
            lvol::decode(&bytes, path, max_voxels)
        }
        Some(VolumeFormat::Nifti) => nifti::read(path, max_voxels),
        None => Err(Error::format(path, "unknown volume extension (expected .lvol, .nii or .nii.gz)")),
    }
}

/// Writes by extension; NIfTI output uses 16-bit signed labels.
pub fn write_label_volume(vol: &LabelVolume, path: &Path) -> Result<()> {
    match VolumeFormat::of(path) {
        Some(VolumeFormat::Lvol) => lvol::write(vol, path),
        Some(VolumeFormat::Nifti) => nifti::write(vol, nifti::Datatype::I16, path),
        None => Err(Error::Validation(format!("{}: unknown volume extension", path.display()))),
    }
}
