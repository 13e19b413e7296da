//! ASCII point-cloud and trajectory files.
//!
//! Floats are written with Rust's shortest round-trip formatting (`1.5`,
//! `0`, `-2`), so `read(write(x)) == x` bit for bit. Parsing is
//! locale-independent. Lines end in `\n`.
//!
//! * PLY: ascii 1.0, a `vertex` element carrying `x`, `y`, `z` properties
//!   (other vertex properties and other elements are skipped on read).
//! * XYZ: one point per line, whitespace separated; extra columns ignored,
//!   blank lines and `#` comments skipped.
//! * Trajectory: `t x y z qx qy qz qw` per line with integer time index `t`.
//! * Labels: `inlier` or `outlier` per line.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Pose, Quaternion, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("ply") => Ok(CloudFormat::Ply),
            Some("xyz") => Ok(CloudFormat::Xyz),
            _ => Err(Error::UnsupportedFormat(format!(
                "{}: expected a .ply or .xyz extension",
                path.display()
            ))),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_coord(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = CloudFormat::from_path(path)?;
    let text = read_text(path)?;
    parse_cloud(&text, format, path)
}

/// Parses `text`; `path` is only used in error messages.
pub fn parse_cloud(text: &str, format: CloudFormat, path: &Path) -> Result<PointCloud> {
    match format {
        CloudFormat::Xyz => parse_xyz(text, path),
        CloudFormat::Ply => parse_ply(text, path),
    }
}

fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected 3 coordinates, found {}", toks.len()),
            ));
        }
        pts.push(Point3::new(
            parse_coord(toks[0], path, n + 1)?,
            parse_coord(toks[1], path, n + 1)?,
            parse_coord(toks[2], path, n + 1)?,
        ));
    }
    Ok(PointCloud::from_finite(pts))
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => saw_format = true,
            ["format", other, ..] => {
                return Err(Error::UnsupportedFormat(format!(
                    "{}: PLY format {other} (only ascii is supported)",
                    path.display()
                )))
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(path, n, format!("bad element count {count:?}")))?;
                elements.push(PlyElement {
                    name: (*name).to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] | ["property", _, name] => match elements.last_mut() {
                Some(e) => e.props.push((*name).to_string()),
                None => return Err(parse_err(path, n, "property before any element")),
            },
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => {
                return Err(parse_err(
                    path,
                    n,
                    format!("unrecognized header line {line:?}"),
                ))
            }
        }
    }
    if !header_done {
        return Err(parse_err(path, 1, "header has no end_header"));
    }
    if !saw_format {
        return Err(parse_err(path, 1, "header has no format line"));
    }

    let mut pts = Vec::new();
    let mut vertex_seen = false;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                if lines.next().is_none() {
                    return Err(parse_err(
                        path,
                        0,
                        format!("truncated '{}' element", el.name),
                    ));
                }
            }
            continue;
        }
        vertex_seen = true;
        let col = |name: &str| {
            el.props
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| parse_err(path, 1, format!("vertex element lacks '{name}'")))
        };
        let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
        pts.reserve(el.count);
        for k in 0..el.count {
            let Some((n, line)) = lines.next() else {
                return Err(parse_err(
                    path,
                    0,
                    format!("expected {} vertices, file ends after {k}", el.count),
                ));
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < el.props.len() {
                return Err(parse_err(
                    path,
                    n,
                    format!("expected {} values, found {}", el.props.len(), toks.len()),
                ));
            }
            pts.push(Point3::new(
                parse_coord(toks[cx], path, n)?,
                parse_coord(toks[cy], path, n)?,
                parse_coord(toks[cz], path, n)?,
            ));
        }
    }
    if !vertex_seen {
        return Err(parse_err(path, 1, "no vertex element"));
    }
    Ok(PointCloud::from_finite(pts))
}

pub fn format_cloud(cloud: &PointCloud, format: CloudFormat) -> String {
    let mut s = String::with_capacity(cloud.len() * 48 + 128);
    if format == CloudFormat::Ply {
        s.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(s, "element vertex {}", cloud.len());
        s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    }
    for p in cloud {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    fs::write(path, format_cloud(cloud, format))?;
    Ok(())
}

/// Writes with the format implied by the extension.
pub fn write_cloud_auto(cloud: &PointCloud, path: &Path) -> Result<()> {
    write_cloud(cloud, path, CloudFormat::from_path(path)?)
}

/// Quaternions further than this from unit norm are reported when loaded.
pub const QUATERNION_WARN_TOLERANCE: f64 = 1e-6;

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = read_text(path)?;
    parse_trajectory(&text, path)
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut poses: Vec<Pose> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let ln = n + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 8 {
            return Err(parse_err(
                path,
                ln,
                format!(
                    "expected 't x y z qx qy qz qw', found {} fields",
                    toks.len()
                ),
            ));
        }
        let t: i64 = toks[0].parse().map_err(|_| {
            parse_err(
                path,
                ln,
                format!("time index {:?} is not an integer", toks[0]),
            )
        })?;
        let v: Vec<f64> = toks[1..]
            .iter()
            .map(|tok| parse_coord(tok, path, ln))
            .collect::<Result<_>>()?;
        let q = Quaternion {
            x: v[3],
            y: v[4],
            z: v[5],
            w: v[6],
        };
        let norm = q.norm();
        if (norm - 1.0).abs() > QUATERNION_WARN_TOLERANCE {
            log::warn!(
                "{}:{ln}: quaternion norm {norm}, normalizing",
                path.display()
            );
        }
        if let Some(prev) = poses.last() {
            if t <= prev.t() {
                return Err(Error::NonMonotoneTimestamps {
                    path: path.to_path_buf(),
                    line: ln,
                    t,
                });
            }
        }
        let pose = Pose::from_quaternion(t, Point3::new(v[0], v[1], v[2]), q)
            .map_err(|e| parse_err(path, ln, e.to_string()))?;
        poses.push(pose);
    }
    if poses.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Trajectory::new(poses)
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut s = String::from("# t x y z qx qy qz qw\n");
    for p in traj.poses() {
        let (t, q) = (p.translation(), p.quaternion());
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            p.t(),
            t.x,
            t.y,
            t.z,
            q.x,
            q.y,
            q.z,
            q.w
        );
    }
    s
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, format_trajectory(traj))?;
    Ok(())
}

/// Per-point tag produced by the scene generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

pub fn format_labels(labels: &[Label]) -> String {
    let mut s = String::with_capacity(labels.len() * 8);
    for l in labels {
        s.push_str(match l {
            Label::Inlier => "inlier\n",
            Label::Outlier => "outlier\n",
        });
    }
    s
}

pub fn write_labels(labels: &[Label], path: &Path) -> Result<()> {
    fs::write(path, format_labels(labels))?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| match l.trim() {
            "inlier" => Ok(Label::Inlier),
            "outlier" => Ok(Label::Outlier),
            other => Err(parse_err(path, n + 1, format!("unknown label {other:?}"))),
        })
        .collect()
}

/// `dir/name`, for bundle writers.
pub fn bundle_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
