//! Point cloud file formats: ASCII PLY (at least `x y z` properties) and
//! whitespace-separated XYZ text. Loaders preserve file order as point
//! index order; writers are byte-stable (9 significant decimal digits).

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{GeometryError, Point3, PointCloud};

#[derive(Debug, Error)]
pub enum CloudIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported cloud format {0:?} (expected .ply or .xyz)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Loads a cloud, picking the parser from the file extension. The file
/// stem becomes the frame id.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud, CloudIoError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let frame_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cloud")
        .to_string();
    let text = fs::read_to_string(path)?;
    match ext.as_str() {
        "ply" => parse_ply(&text, frame_id),
        "xyz" | "txt" => parse_xyz(&text, frame_id),
        other => Err(CloudIoError::UnsupportedFormat(other.to_string())),
    }
}

/// Writes a cloud in the format implied by the extension.
pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), CloudIoError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let text = match ext.as_str() {
        "ply" => ply_string(cloud),
        "xyz" | "txt" => xyz_string(cloud),
        other => return Err(CloudIoError::UnsupportedFormat(other.to_string())),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Parses ASCII PLY. Requires float/double `x`, `y`, `z` vertex properties;
/// extra properties and trailing elements are ignored.
pub fn parse_ply(text: &str, frame_id: impl Into<String>) -> Result<PointCloud, CloudIoError> {
    let mut lines = text.lines().enumerate();

    let err = |line: usize, msg: &str| CloudIoError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };

    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(0, "missing `ply` magic")),
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut vertex_is_first_element = true;
    let mut header_end = 0usize;

    for (ln, raw) in lines.by_ref() {
        let line = raw.trim();
        if line == "end_header" {
            header_end = ln;
            break;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(err(ln, "only ascii PLY is supported"));
                }
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = tok.next().unwrap_or("");
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(ln, "bad element count"))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(err(ln, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    if vertex_count.is_none() {
                        vertex_is_first_element = false;
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if in_vertex_element {
                    let name = tok.clone().last().unwrap_or("");
                    properties.push(name.to_string());
                }
            }
            Some(_) | None => {}
        }
    }

    let count = vertex_count.ok_or_else(|| err(header_end, "no vertex element"))?;
    if !vertex_is_first_element {
        return Err(err(
            header_end,
            "vertex element must be the first element in the file",
        ));
    }
    let ix = properties.iter().position(|p| p == "x");
    let iy = properties.iter().position(|p| p == "y");
    let iz = properties.iter().position(|p| p == "z");
    let (ix, iy, iz) = match (ix, iy, iz) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(err(header_end, "vertex element lacks x/y/z properties")),
    };

    let mut points = Vec::with_capacity(count);
    for (ln, raw) in lines {
        if points.len() == count {
            break; // remaining lines belong to later elements (faces etc.)
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let need = ix.max(iy).max(iz);
        if cols.len() <= need {
            return Err(err(ln, "vertex line has too few columns"));
        }
        let parse = |s: &str| -> Result<f64, CloudIoError> {
            s.parse::<f64>().map_err(|_| err(ln, "bad float"))
        };
        points.push(Point3::new(
            parse(cols[ix])?,
            parse(cols[iy])?,
            parse(cols[iz])?,
        ));
    }
    if points.len() != count {
        return Err(CloudIoError::Parse {
            line: 0,
            msg: format!("expected {count} vertices, found {}", points.len()),
        });
    }
    Ok(PointCloud::new(points, frame_id)?)
}

/// Parses whitespace-separated XYZ text, one point per line. Blank lines
/// and `#` comments are skipped.
pub fn parse_xyz(text: &str, frame_id: impl Into<String>) -> Result<PointCloud, CloudIoError> {
    let mut points = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 3 {
            return Err(CloudIoError::Parse {
                line: ln + 1,
                msg: "expected at least 3 columns".to_string(),
            });
        }
        let parse = |s: &str| -> Result<f64, CloudIoError> {
            s.parse::<f64>().map_err(|_| CloudIoError::Parse {
                line: ln + 1,
                msg: format!("bad float {s:?}"),
            })
        };
        points.push(Point3::new(
            parse(cols[0])?,
            parse(cols[1])?,
            parse(cols[2])?,
        ));
    }
    Ok(PointCloud::new(points, frame_id)?)
}

/// ASCII PLY text for a cloud, byte-stable.
pub fn ply_string(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in cloud.iter() {
        out.push_str(&format!(
            "{} {} {}\n",
            format_sig9(p.x),
            format_sig9(p.y),
            format_sig9(p.z)
        ));
    }
    out
}

/// XYZ text for a cloud, byte-stable.
pub fn xyz_string(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in cloud.iter() {
        out.push_str(&format!(
            "{} {} {}\n",
            format_sig9(p.x),
            format_sig9(p.y),
            format_sig9(p.z)
        ));
    }
    out
}

/// Plain-decimal rendering with 9 significant digits, e.g. `-0.0123456789`
/// → `-0.0123456789`, `1234.56789` → `1234.56789`.
pub(crate) fn format_sig9(value: f64) -> String {
    if value == 0.0 {
        return "0.00000000".to_string();
    }
    let sci = format!("{value:.8e}"); // d.dddddddd e exp
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);

    let body = if exp >= 8 {
        let mut s = digits;
        s.extend(std::iter::repeat('0').take((exp - 8) as usize));
        s
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        let zeros: String = std::iter::repeat('0').take((-exp - 1) as usize).collect();
        format!("0.{zeros}{digits}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}
