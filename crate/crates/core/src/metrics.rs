//! Binary occupancy IoU and per-class mIoU between voxel grids.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{ClassId, SemanticTaxonomy, VoxelGrid};

fn check_shapes(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<()> {
    if !pred.spec.same_shape(&gt.spec) {
        return Err(Error::ShapeMismatch(format!("grids differ: {:?} vs {:?}", pred.spec, gt.spec)));
    }
    Ok(())
}

fn ratio(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Occupancy IoU ignoring class; 1.0 when both grids are empty.
pub fn iou(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (mut inter, mut union) = (0, 0);
    for idx in 0..pred.labels.len() {
        let (a, b) = (pred.is_occupied(idx), gt.is_occupied(idx));
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(ratio(inter, union))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassIou {
    pub class: ClassId,
    pub name: String,
    /// `None` when the class occurs in neither grid.
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    /// One row per class not in the ignore set.
    pub per_class: Vec<ClassIou>,
    pub mean: f64,
}

/// Per-class IoU over the taxonomy, minus `ignore`. Classes absent from both
/// grids are reported without a value and left out of the mean.
pub fn miou(pred: &VoxelGrid, gt: &VoxelGrid, taxonomy: &SemanticTaxonomy, ignore: &BTreeSet<ClassId>) -> Result<MiouReport> {
    check_shapes(pred, gt)?;
    let k = taxonomy.len();
    let (mut inter, mut union) = (vec![0usize; k], vec![0usize; k]);
    for (&a, &b) in pred.labels.iter().zip(&gt.labels) {
        if a == b {
            if (a as usize) < k {
                inter[a as usize] += 1;
                union[a as usize] += 1;
            }
            continue;
        }
        for l in [a, b] {
            if (l as usize) < k {
                union[l as usize] += 1;
            }
        }
    }
    let per_class: Vec<ClassIou> = taxonomy
        .classes()
        .iter()
        .filter(|c| !ignore.contains(&c.id))
        .map(|c| {
            let i = c.id as usize;
            ClassIou {
                class: c.id,
                name: c.name.clone(),
                iou: (union[i] > 0).then(|| ratio(inter[i], union[i])),
            }
        })
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
    if present.is_empty() {
        return Err(Error::UndefinedMean);
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(MiouReport { per_class, mean })
}

/// `class,name,iou` rows (empty iou for classes absent from both grids), then
/// `all,mIoU,<mean>` and `all,IoU,<binary iou>`.
pub fn metrics_csv(report: &MiouReport, binary_iou: f64) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "name", "iou"]).expect("in-memory write");
    for c in &report.per_class {
        let v = c.iou.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([c.class.to_string(), c.name.clone(), v]).expect("in-memory write");
    }
    w.write_record(["all", "mIoU", &report.mean.to_string()]).expect("in-memory write");
    w.write_record(["all", "IoU", &binary_iou.to_string()]).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn write_metrics(path: &Path, report: &MiouReport, binary_iou: f64) -> Result<()> {
    std::fs::write(path, metrics_csv(report, binary_iou)).map_err(|e| Error::io(path, e))
}
