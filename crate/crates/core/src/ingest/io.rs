//! File formats: CSV point clouds, binary PGM masks, JSON rigs, frame directories.
//!
//! A frame directory holds `rig.json`, `points.csv` and one `mask_<i>.pgm` per
//! camera, in rig order.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::error::json_offset;
use crate::scene::{CameraModel, ClassId, RigidTransform, SemanticMask, SensorFrame, UNKNOWN};

/// PGM value meaning "no label".
pub const PGM_UNKNOWN: u8 = 255;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parsed point cloud file; `labels`/`frames` are present when the columns are.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTable {
    pub points: Vec<Vector3<f64>>,
    pub labels: Option<Vec<ClassId>>,
    pub frames: Option<Vec<u32>>,
}

pub fn parse_point_csv(bytes: &[u8]) -> Result<PointTable> {
    let what = "point cloud";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(what, 0, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_label = match names.as_slice() {
        ["x", "y", "z"] => (false, false),
        ["x", "y", "z", "label"] => (true, false),
        ["x", "y", "z", "frame"] => (false, true),
        ["x", "y", "z", "label", "frame"] => (true, true),
        _ => {
            return Err(Error::parse(
                what,
                0,
                format!("header must be x,y,z[,label][,frame], got {:?}", names.join(",")),
            ))
        }
    };
    let (with_label, with_frame) = has_label;
    let mut table = PointTable {
        labels: with_label.then(Vec::new),
        frames: with_frame.then(Vec::new),
        ..Default::default()
    };
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut record)
            .map_err(|e| Error::parse(what, e.position().map_or(0, |p| p.byte() as usize), e.to_string()))?;
        if !more {
            break;
        }
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        if record.len() != names.len() {
            return Err(Error::parse(what, offset, format!("expected {} fields, found {}", names.len(), record.len())));
        }
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(what, offset, format!("field {:?}: {e}", names[i])))
        };
        table.points.push(Vector3::new(num(0)?, num(1)?, num(2)?));
        let mut col = 3;
        if let Some(labels) = table.labels.as_mut() {
            let l = record[col]
                .parse::<u16>()
                .map_err(|e| Error::parse(what, offset, format!("label: {e}")))?;
            labels.push(l);
            col += 1;
        }
        if let Some(frames) = table.frames.as_mut() {
            frames.push(
                record[col]
                    .parse::<u32>()
                    .map_err(|e| Error::parse(what, offset, format!("frame: {e}")))?,
            );
        }
    }
    Ok(table)
}

pub fn point_csv(points: &[Vector3<f64>], labels: Option<&[ClassId]>, frame: Option<u32>) -> String {
    let mut out = String::from("x,y,z");
    if labels.is_some() {
        out.push_str(",label");
    }
    if frame.is_some() {
        out.push_str(",frame");
    }
    out.push('\n');
    for (i, p) in points.iter().enumerate() {
        // `{}` prints the shortest decimal that parses back to the same f64.
        out.push_str(&format!("{},{},{}", p.x, p.y, p.z));
        if let Some(l) = labels {
            out.push_str(&format!(",{}", l[i]));
        }
        if let Some(f) = frame {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
    }
    out
}

pub fn load_point_cloud(path: &Path) -> Result<Vec<Vector3<f64>>> {
    Ok(parse_point_csv(&read(path)?)?.points)
}

pub fn load_labeled_cloud(path: &Path, frame: u32) -> Result<LabeledPointCloud> {
    let table = parse_point_csv(&read(path)?)?;
    let labels = table
        .labels
        .ok_or_else(|| Error::parse("point cloud", 0, "missing label column"))?;
    Ok(LabeledPointCloud {
        points: table.points,
        labels,
        frame,
    })
}

pub fn write_point_cloud(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    write(path, point_csv(points, None, None).as_bytes())
}

pub fn write_labeled_cloud(path: &Path, cloud: &LabeledPointCloud) -> Result<()> {
    write(path, point_csv(&cloud.points, Some(&cloud.labels), Some(cloud.frame)).as_bytes())
}

/// Binary PGM (P5, 8-bit). Pixel value is the class id, 255 is unknown.
pub fn encode_pgm(mask: &SemanticMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.labels.iter().map(|&l| {
        if l == UNKNOWN || l >= PGM_UNKNOWN as ClassId {
            PGM_UNKNOWN
        } else {
            l as u8
        }
    }));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<SemanticMask> {
    let what = "PGM mask";
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<(usize, String)> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err(Error::parse(what, *pos, "truncated header")),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok((start, String::from_utf8_lossy(&bytes[start..*pos]).into_owned()))
    };
    let (at, magic) = token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::parse(what, at, format!("expected P5, found {magic:?}")));
    }
    let number = |pos: &mut usize, name: &str| -> Result<(usize, u32)> {
        let (at, t) = token(pos)?;
        t.parse::<u32>()
            .map(|v| (at, v))
            .map_err(|_| Error::parse(what, at, format!("bad {name} {t:?}")))
    };
    let (_, width) = number(&mut pos, "width")?;
    let (_, height) = number(&mut pos, "height")?;
    let (at, maxval) = number(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(what, at, format!("maxval {maxval} must be in 1..=255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(what, at, "zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::parse(what, pos, "missing raster separator"));
    }
    pos += 1;
    let n = width as usize * height as usize;
    if bytes.len() < pos + n {
        return Err(Error::parse(what, bytes.len(), format!("truncated raster, expected {n} bytes")));
    }
    let mut labels = Vec::with_capacity(n);
    for (i, &b) in bytes[pos..pos + n].iter().enumerate() {
        if b as u32 > maxval {
            return Err(Error::parse(what, pos + i, format!("pixel value {b} exceeds maxval {maxval}")));
        }
        labels.push(if b == PGM_UNKNOWN { UNKNOWN } else { b as ClassId });
    }
    SemanticMask::new(width, height, labels)
}

pub fn load_mask(path: &Path) -> Result<SemanticMask> {
    decode_pgm(&read(path)?)
}

pub fn write_mask(path: &Path, mask: &SemanticMask) -> Result<()> {
    write(path, &encode_pgm(mask))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    #[serde(rename = "R")]
    r: [f64; 9],
    #[serde(rename = "T")]
    t: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoseJson {
    #[serde(rename = "R")]
    r: [f64; 9],
    #[serde(rename = "T")]
    t: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RigJson {
    cameras: Vec<CameraJson>,
    ego_pose: PoseJson,
    t: u32,
}

/// Cameras (world→camera extrinsics), ego pose and frame index of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub cameras: Vec<CameraModel>,
    pub ego_pose: RigidTransform,
    pub t: u32,
}

fn mat_row_major(m: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(m)
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

pub fn parse_rig(text: &str) -> Result<Rig> {
    let raw: RigJson = serde_json::from_str(text)
        .map_err(|e| Error::parse("rig", json_offset(text, &e), e.to_string()))?;
    let cameras = raw
        .cameras
        .iter()
        .map(|c| {
            CameraModel::new(
                c.fx,
                c.fy,
                c.cx,
                c.cy,
                c.width,
                c.height,
                mat_row_major(&c.r),
                Vector3::from(c.t),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let ego_pose = RigidTransform::new(mat_row_major(&raw.ego_pose.r), Vector3::from(raw.ego_pose.t))?;
    Ok(Rig {
        cameras,
        ego_pose,
        t: raw.t,
    })
}

pub fn rig_json(rig: &Rig) -> String {
    let raw = RigJson {
        cameras: rig
            .cameras
            .iter()
            .map(|c| CameraJson {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
                r: row_major(&c.rotation),
                t: c.translation.into(),
            })
            .collect(),
        ego_pose: PoseJson {
            r: row_major(&rig.ego_pose.rotation),
            t: rig.ego_pose.translation.into(),
        },
        t: rig.t,
    };
    serde_json::to_string_pretty(&raw).expect("rig serializes")
}

pub fn load_rig(path: &Path) -> Result<Rig> {
    let bytes = read(path)?;
    parse_rig(&String::from_utf8_lossy(&bytes))
}

pub fn write_rig(path: &Path, rig: &Rig) -> Result<()> {
    write(path, rig_json(rig).as_bytes())
}

pub fn frame_dir_name(t: u32) -> String {
    format!("frame_{t:03}")
}

pub fn write_frame(dir: &Path, frame: &SensorFrame) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rig = Rig {
        cameras: frame.views.iter().map(|(c, _)| *c).collect(),
        ego_pose: frame.ego_pose,
        t: frame.t,
    };
    write_rig(&dir.join("rig.json"), &rig)?;
    write_point_cloud(&dir.join("points.csv"), &frame.points)?;
    for (i, (_, mask)) in frame.views.iter().enumerate() {
        write_mask(&dir.join(format!("mask_{i}.pgm")), mask)?;
    }
    Ok(())
}

pub fn load_frame(dir: &Path) -> Result<SensorFrame> {
    let rig = load_rig(&dir.join("rig.json"))?;
    let points = load_point_cloud(&dir.join("points.csv"))?;
    let views = rig
        .cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| Ok((*cam, load_mask(&dir.join(format!("mask_{i}.pgm")))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SensorFrame {
        t: rig.t,
        ego_pose: rig.ego_pose,
        views,
        points,
    })
}

/// All `frame_*` subdirectories of `root`, sorted by name.
pub fn frame_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn load_frames(root: &Path) -> Result<Vec<SensorFrame>> {
    frame_dirs(root)?.iter().map(|d| load_frame(d)).collect()
}
