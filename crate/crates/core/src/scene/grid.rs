use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::taxonomy::{ClassId, FREE, UNKNOWN};
use crate::error::{Error, Result};

/// Largest grid accepted by the splatter (1024³ voxels).
pub const MAX_VOXELS: usize = 1024 * 1024 * 1024;

const MAGIC: &[u8; 4] = b"OCCV";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 6 * 8 + 8 + 3 * 4;

/// Axis-aligned grid geometry. Cells are half-open `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [u32; 3],
}

impl GridSpec {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::Validation(format!("voxel size {voxel_size} must be positive")));
        }
        let mut dims = [0u32; 3];
        for i in 0..3 {
            let n = ((max[i] - min[i]) / voxel_size).round();
            if !(n >= 1.0 && n <= u32::MAX as f64) {
                return Err(Error::Validation(format!(
                    "grid extent along axis {i} gives {n} voxels"
                )));
            }
            dims[i] = n as u32;
        }
        Ok(Self {
            min,
            max,
            voxel_size,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index; x fastest, z slowest.
    pub fn flat(&self, i: [u32; 3]) -> usize {
        i[0] as usize + self.dims[0] as usize * (i[1] as usize + self.dims[1] as usize * i[2] as usize)
    }

    pub fn unflat(&self, idx: usize) -> [u32; 3] {
        let nx = self.dims[0] as usize;
        let ny = self.dims[1] as usize;
        [(idx % nx) as u32, ((idx / nx) % ny) as u32, (idx / (nx * ny)) as u32]
    }

    pub fn voxel_center(&self, i: [u32; 3]) -> Vector3<f64> {
        Vector3::new(
            self.min.x + (i[0] as f64 + 0.5) * self.voxel_size,
            self.min.y + (i[1] as f64 + 0.5) * self.voxel_size,
            self.min.z + (i[2] as f64 + 0.5) * self.voxel_size,
        )
    }

    /// Voxel containing `p`, or `None` outside `[0, dims)`.
    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Option<[u32; 3]> {
        let mut out = [0u32; 3];
        for i in 0..3 {
            let f = ((p[i] - self.min[i]) / self.voxel_size).floor();
            if !(f >= 0.0 && f < self.dims[i] as f64) {
                return None;
            }
            out[i] = f as u32;
        }
        Some(out)
    }

    /// Same bounds, size and dims.
    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.min == other.min
            && self.max == other.max
            && self.voxel_size == other.voxel_size
            && self.dims == other.dims
    }
}

/// Semantic voxel grid with optional per-voxel accumulated class mass.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    /// Class id, `FREE`, or `UNKNOWN` per voxel.
    pub labels: Vec<ClassId>,
    /// `len() * num_classes` values, voxel-major.
    pub logits: Option<Vec<f64>>,
    pub num_classes: usize,
}

impl VoxelGrid {
    pub fn free(spec: GridSpec, num_classes: usize) -> Self {
        Self {
            labels: vec![FREE; spec.len()],
            spec,
            logits: None,
            num_classes,
        }
    }

    pub fn get(&self, i: [u32; 3]) -> ClassId {
        self.labels[self.spec.flat(i)]
    }

    pub fn set(&mut self, i: [u32; 3], label: ClassId) {
        let idx = self.spec.flat(i);
        self.labels[idx] = label;
    }

    pub fn is_occupied(&self, idx: usize) -> bool {
        (self.labels[idx] as usize) < self.num_classes
    }

    pub fn occupied_count(&self) -> usize {
        (0..self.labels.len()).filter(|&i| self.is_occupied(i)).count()
    }

    pub fn voxel_logits(&self, idx: usize) -> Option<&[f64]> {
        self.logits
            .as_ref()
            .map(|l| &l[idx * self.num_classes..(idx + 1) * self.num_classes])
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} voxels",
                self.labels.len(),
                self.spec.len()
            )));
        }
        if let Some(bad) = self
            .labels
            .iter()
            .find(|&&l| l != FREE && l != UNKNOWN && l as usize >= self.num_classes)
        {
            return Err(Error::Validation(format!("voxel label {bad} outside taxonomy")));
        }
        Ok(())
    }

    /// Serialize to the OCCV1 layout.
    pub fn to_occv1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.labels.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in self.spec.min.iter().chain(self.spec.max.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.spec.voxel_size.to_le_bytes());
        for d in self.spec.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    /// Parse OCCV1 bytes. Dims are taken from the header as stored.
    pub fn from_occv1(bytes: &[u8], num_classes: usize) -> Result<Self> {
        let what = "OCCV1 grid";
        if bytes.len() < HEADER_LEN {
            return Err(Error::parse(what, bytes.len(), "truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::parse(what, 0, "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::parse(what, 4, format!("unsupported version {version}")));
        }
        let min = Vector3::new(f64_at(8), f64_at(16), f64_at(24));
        let max = Vector3::new(f64_at(32), f64_at(40), f64_at(48));
        let voxel_size = f64_at(56);
        let dims = [u32_at(64), u32_at(68), u32_at(72)];
        let n = dims.iter().map(|&d| d as usize).product::<usize>();
        let expect = HEADER_LEN + 2 * n;
        if bytes.len() < expect {
            return Err(Error::parse(what, bytes.len(), format!("truncated payload, expected {expect} bytes")));
        }
        if bytes.len() > expect {
            return Err(Error::parse(what, expect, "trailing bytes after payload"));
        }
        let labels = bytes[HEADER_LEN..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        let grid = VoxelGrid {
            spec: GridSpec {
                min,
                max,
                voxel_size,
                dims,
            },
            labels,
            logits: None,
            num_classes,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn write_occv1(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_occv1()).map_err(|e| Error::io(path, e))
    }

    pub fn read_occv1(path: &Path, num_classes: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_occv1(&bytes, num_classes)
    }

    /// Write logits as raw little-endian f32 in voxel order, K per voxel.
    pub fn write_logits_sidecar(&self, path: &Path) -> Result<()> {
        let logits = self
            .logits
            .as_ref()
            .ok_or_else(|| Error::Config("grid carries no logits".into()))?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for v in logits {
            file.write_all(&(*v as f32).to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        file.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid() -> GridSpec {
        GridSpec::new(Vector3::zeros(), Vector3::repeat(1.0), 0.5).unwrap()
    }

    #[test]
    fn world_to_voxel_examples() {
        let g = unit_grid();
        assert_eq!(g.world_to_voxel(&Vector3::new(0.6, 0.1, 0.1)), Some([1, 0, 0]));
        assert_eq!(g.world_to_voxel(&Vector3::new(1.0, 1.0, 1.0)), None);
        assert_eq!(g.world_to_voxel(&Vector3::new(-0.1, 0.0, 0.0)), None);
        assert_eq!(g.world_to_voxel(&Vector3::new(0.0, 0.0, 0.0)), Some([0, 0, 0]));
    }

    #[test]
    fn dims_round() {
        let g = GridSpec::new(Vector3::new(-40.0, -40.0, -1.0), Vector3::new(40.0, 40.0, 5.4), 0.4).unwrap();
        assert_eq!(g.dims, [200, 200, 16]);
    }

    #[test]
    fn occv1_layout() {
        let spec = GridSpec::new(Vector3::zeros(), Vector3::new(1.0, 0.5, 0.5), 0.5).unwrap();
        let mut grid = VoxelGrid::free(spec, 3);
        grid.set([1, 0, 0], 2);
        let bytes = grid.to_occv1();
        assert_eq!(&bytes[..4], b"OCCV");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[56..64], 0.5f64.to_le_bytes());
        assert_eq!(bytes[64..76], [2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[76..], &[0xFF, 0xFF, 2, 0]);
        assert_eq!(VoxelGrid::from_occv1(&bytes, 3).unwrap(), grid);
    }

    #[test]
    fn occv1_truncation_reports_offset() {
        let grid = VoxelGrid::free(unit_grid(), 2);
        let bytes = grid.to_occv1();
        match VoxelGrid::from_occv1(&bytes[..bytes.len() - 1], 2) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len() - 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(VoxelGrid::from_occv1(&bytes[..10], 2), Err(Error::Parse { offset: 10, .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(VoxelGrid::from_occv1(&bad, 2), Err(Error::Parse { offset: 0, .. })));
    }

    proptest! {
        #[test]
        fn center_round_trips(x in 0u32..7, y in 0u32..5, z in 0u32..3) {
            let g = GridSpec::new(Vector3::new(-1.3, 2.0, 0.1), Vector3::new(1.5, 4.0, 1.3), 0.4).unwrap();
            prop_assume!(x < g.dims[0] && y < g.dims[1] && z < g.dims[2]);
            prop_assert_eq!(g.world_to_voxel(&g.voxel_center([x, y, z])), Some([x, y, z]));
            prop_assert_eq!(g.unflat(g.flat([x, y, z])), [x, y, z]);
        }

        #[test]
        fn occv1_round_trip_bit_exact(labels in prop::collection::vec(prop_oneof![0u16..4, Just(FREE), Just(UNKNOWN)], 24)) {
            let spec = GridSpec::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.1 + 0.8, -0.2 + 0.6, 0.3 + 0.4), 0.2).unwrap();
            let grid = VoxelGrid { spec, labels, logits: None, num_classes: 4 };
            let bytes = grid.to_occv1();
            let back = VoxelGrid::from_occv1(&bytes, 4).unwrap();
            prop_assert_eq!(back.to_occv1(), bytes);
            prop_assert_eq!(back, grid);
        }
    }
}
