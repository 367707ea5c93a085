//! Frame directories and pose files.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, DepthMap, Image, Plane};
use crate::interfaces::wire::{decode_rgb_png, encode_gray_png, encode_rgb_png};

/// Largest depth a 16-bit millimetre PNG can hold.
pub const MAX_DEPTH_MM: f64 = 65535.0;

pub fn write_rgb(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_rgb_png(img)?)?;
    Ok(())
}

pub fn read_rgb(path: &Path) -> Result<Image> {
    decode_rgb_png(&fs::read(path)?)
}

pub fn write_alpha(path: &Path, alpha: &Plane) -> Result<()> {
    fs::write(path, encode_gray_png(alpha)?)?;
    Ok(())
}

/// Depth in millimetres as 16-bit grey. Invalid pixels are 0, depths past
/// the 16-bit range saturate.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let mm: Vec<u16> = depth
        .values()
        .iter()
        .zip(depth.validity())
        .map(|(d, ok)| {
            if *ok {
                (d * 1000.0).round().clamp(1.0, MAX_DEPTH_MM) as u16
            } else {
                0
            }
        })
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(depth.width as u32, depth.height as u32, mm)
        .ok_or_else(|| Error::Shape("depth buffer size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("writing {}: {e}", path.display())))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("reading {}: {e}", path.display())))?
        .to_luma16();
    let (w, h) = img.dimensions();
    let mut out = DepthMap::invalid(w as usize, h as usize);
    for (i, v) in img.into_raw().into_iter().enumerate() {
        if v > 0 {
            out.set(i, Some(v as f64 / 1000.0));
        }
    }
    Ok(out)
}

pub fn frame_name(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:04}.png")
}

/// `prefix_NNNN.png` files in `dir`, in index order.
pub fn list_frames(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(idx) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('_'))
            .and_then(|r| r.strip_suffix(".png"))
            .and_then(|r| r.parse::<usize>().ok())
        else {
            continue;
        };
        found.push((idx, path));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn read_frames(dir: &Path, prefix: &str) -> Result<Vec<Image>> {
    let paths = list_frames(dir, prefix)?;
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no {prefix}_NNNN.png frames in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| read_rgb(p)).collect()
}

/// World-to-camera pose as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// Row-major 3×3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&CameraPose> for PoseRecord {
    fn from(p: &CameraPose) -> Self {
        Self {
            rotation: p.rotation_row_major(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

pub fn write_poses(path: &Path, poses: &[CameraPose]) -> Result<()> {
    let recs: Vec<PoseRecord> = poses.iter().map(PoseRecord::from).collect();
    fs::write(path, serde_json::to_string_pretty(&recs).expect("poses serialize"))?;
    Ok(())
}

pub fn read_poses(path: &Path) -> Result<Vec<CameraPose>> {
    let text = fs::read_to_string(path)?;
    let recs: Vec<PoseRecord> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    recs.iter()
        .enumerate()
        .map(|(i, r)| {
            CameraPose::from_row_major(r.rotation, r.translation)
                .map_err(|e| Error::Format(format!("{}[{i}]: {e}", path.display())))
        })
        .collect()
}
