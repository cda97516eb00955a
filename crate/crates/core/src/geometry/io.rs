//! Point-cloud and ellipsoid file formats.
//!
//! * text clouds: one `x y z` triple per line, `#` comments and blank lines
//!   ignored;
//! * binary clouds: consecutive little-endian `f32` triples, no header;
//! * ellipsoid records: 15 whitespace-separated numbers
//!   `center[3] semi_axes[3] rotation[9]` (rotation row-major).

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use super::{Ellipsoid, GeometryError, PointCloud};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("binary cloud length {0} is not a multiple of 12 bytes")]
    BinaryLength(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_text_cloud(text: &str) -> Result<PointCloud, FormatError> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != 3 {
            return Err(FormatError::Parse {
                line: i + 1,
                msg: format!("expected 3 values, found {}", vals.len()),
            });
        }
        pts.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    Ok(PointCloud::new(pts)?)
}

pub fn format_text_cloud(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}

pub fn decode_binary_cloud(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    if !bytes.len().is_multiple_of(12) {
        return Err(FormatError::BinaryLength(bytes.len()));
    }
    let pts = bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]) as f64;
            Vector3::new(f(0), f(4), f(8))
        })
        .collect();
    Ok(PointCloud::new(pts)?)
}

/// Narrows to `f32`; precision loss is inherent to the format.
pub fn encode_binary_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 12);
    for p in cloud.points() {
        for v in p.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Loads a cloud, choosing the binary layout for `.bin` files.
pub fn load_cloud(path: &Path) -> Result<PointCloud, FormatError> {
    let bytes = read(path)?;
    if path.extension().is_some_and(|e| e == "bin") {
        decode_binary_cloud(&bytes)
    } else {
        let text = String::from_utf8_lossy(&bytes);
        parse_text_cloud(&text)
    }
}

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    if path.extension().is_some_and(|e| e == "bin") {
        write(path, &encode_binary_cloud(cloud))
    } else {
        write(path, format_text_cloud(cloud).as_bytes())
    }
}

pub fn format_ellipsoid(e: &Ellipsoid) -> String {
    let rec = e.to_record();
    let fields: Vec<String> = rec.iter().map(|v| v.to_string()).collect();
    fields.join(" ") + "\n"
}

pub fn parse_ellipsoid(text: &str) -> Result<Ellipsoid, FormatError> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| FormatError::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
    Ok(Ellipsoid::from_record(&vals)?)
}

pub fn load_ellipsoid(path: &Path) -> Result<Ellipsoid, FormatError> {
    let bytes = read(path)?;
    parse_ellipsoid(&String::from_utf8_lossy(&bytes))
}

pub fn save_ellipsoid(path: &Path, e: &Ellipsoid) -> Result<(), FormatError> {
    write(path, format_ellipsoid(e).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn text_cloud_skips_comments() {
        let c = parse_text_cloud("# header\n1 2 3\n\n-0.5 0 1e-3\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[1], Vector3::new(-0.5, 0.0, 1e-3));
    }

    #[test]
    fn text_cloud_rejects_short_rows() {
        assert!(matches!(
            parse_text_cloud("1 2\n"),
            Err(FormatError::Parse { line: 1, .. })
        ));
        assert!(parse_text_cloud("1 2 nan\n").is_err());
    }

    #[test]
    fn binary_length_checked() {
        assert!(matches!(
            decode_binary_cloud(&[0u8; 13]),
            Err(FormatError::BinaryLength(13))
        ));
    }

    proptest! {
        #[test]
        fn binary_roundtrip_is_exact_for_f32_values(raw in prop::collection::vec(-1e3f32..1e3f32, 0..60)) {
            let n = raw.len() / 3 * 3;
            let pts: Vec<_> = raw[..n].chunks(3)
                .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect();
            let cloud = PointCloud::new(pts).unwrap();
            let back = decode_binary_cloud(&encode_binary_cloud(&cloud)).unwrap();
            prop_assert_eq!(back, cloud);
        }

        #[test]
        fn text_roundtrip_is_exact(raw in prop::collection::vec(-1e6f64..1e6, 0..30)) {
            let n = raw.len() / 3 * 3;
            let pts: Vec<_> = raw[..n].chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            let cloud = PointCloud::new(pts).unwrap();
            prop_assert_eq!(parse_text_cloud(&format_text_cloud(&cloud)).unwrap(), cloud);
        }
    }
}
