//! Depth view and camera files.
//!
//! A depth file holds a header line `width height` followed by
//! `width·height` whitespace-separated ASCII floats in row-major order. The
//! companion camera file holds `K` (9 floats) then the camera-to-world
//! transform `T` (16 floats), both row-major.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4};

use super::{CameraModel, DepthView, PerceptionError};
use crate::geometry::io::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum ViewFileError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn floats(text: &str) -> Result<Vec<f64>, FormatError> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| FormatError::Parse {
            line: 0,
            msg: e.to_string(),
        })
}

pub fn parse_camera(text: &str) -> Result<CameraModel, ViewFileError> {
    let vals = floats(text)?;
    if vals.len() != 25 {
        return Err(FormatError::Parse {
            line: 0,
            msg: format!("camera file needs 25 values (K then T), found {}", vals.len()),
        }
        .into());
    }
    let k = Matrix3::from_row_slice(&vals[..9]);
    let t = Matrix4::from_row_slice(&vals[9..]);
    Ok(CameraModel::new(k, t)?)
}

pub fn format_camera(camera: &CameraModel) -> String {
    let k = camera.intrinsics();
    let t = camera.extrinsic();
    let mut out = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..3).map(|c| k[(r, c)].to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| t[(r, c)].to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_depth(text: &str, camera: CameraModel) -> Result<DepthView, ViewFileError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(FormatError::Parse {
        line: 1,
        msg: "missing `width height` header".into(),
    })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| FormatError::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
    if dims.len() != 2 {
        return Err(FormatError::Parse {
            line: 1,
            msg: "header must be `width height`".into(),
        }
        .into());
    }
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    // `nan`/`inf` parse as non-finite and count as invalid depth.
    let depth = floats(&rest)?;
    Ok(DepthView::new(dims[0], dims[1], depth, camera)?)
}

pub fn format_depth(view: &DepthView) -> String {
    let mut out = format!("{} {}\n", view.width(), view.height());
    for row in view.depth_values().chunks(view.width()) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

pub fn load_view(depth_path: &Path, camera_path: &Path) -> Result<DepthView, ViewFileError> {
    let camera = parse_camera(&read_text(camera_path)?)?;
    parse_depth(&read_text(depth_path)?, camera)
}

pub fn save_view(depth_path: &Path, camera_path: &Path, view: &DepthView) -> Result<(), FormatError> {
    let write = |p: &Path, s: String| {
        fs::write(p, s).map_err(|source| FormatError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    write(camera_path, format_camera(view.camera()))?;
    write(depth_path, format_depth(view))
}
