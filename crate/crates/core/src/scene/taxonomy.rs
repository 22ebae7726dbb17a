use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u16;

/// Label for "no class information" (unlabeled pixel or point, unknown voxel).
pub const UNKNOWN: ClassId = 0xFFFE;
/// Voxel label for empty space.
pub const FREE: ClassId = 0xFFFF;

/// Per-class policy. Distances are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPolicy {
    pub id: ClassId,
    pub name: String,
    #[serde(default)]
    pub movable: bool,
    #[serde(default)]
    pub foreground: bool,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Outlier rejection distance for voxels of this class.
    pub tau_c: f64,
    /// Linkage radius for anchor and cluster extraction.
    pub cluster_radius: f64,
}

#[derive(Deserialize)]
struct TaxonomyFile {
    classes: Vec<ClassPolicy>,
    #[serde(default)]
    sky_id: Option<ClassId>,
}

/// Ordered class set; ids are contiguous `0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaxonomyFile")]
pub struct SemanticTaxonomy {
    classes: Vec<ClassPolicy>,
    sky_id: Option<ClassId>,
}

impl TryFrom<TaxonomyFile> for SemanticTaxonomy {
    type Error = Error;

    fn try_from(file: TaxonomyFile) -> Result<Self> {
        SemanticTaxonomy::new(file.classes, file.sky_id)
    }
}

impl SemanticTaxonomy {
    pub fn new(mut classes: Vec<ClassPolicy>, sky_id: Option<ClassId>) -> Result<Self> {
        classes.sort_by_key(|c| c.id);
        if classes.is_empty() {
            return Err(Error::Validation("taxonomy has no classes".into()));
        }
        // 255 is the unknown value in mask files, so ids must fit below it.
        if classes.len() > 255 {
            return Err(Error::Validation("at most 255 classes are supported".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.id as usize != i {
                return Err(Error::Validation(format!(
                    "class ids must be contiguous from 0; expected {i}, found {}",
                    c.id
                )));
            }
            if classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Validation(format!("duplicate class name {:?}", c.name)));
            }
            if !(c.scale_min > 0.0 && c.scale_min <= c.scale_max && c.scale_max.is_finite()) {
                return Err(Error::Validation(format!(
                    "class {:?}: need 0 < scale_min <= scale_max",
                    c.name
                )));
            }
            if !(c.tau_c > 0.0) || !(c.cluster_radius > 0.0) {
                return Err(Error::Validation(format!(
                    "class {:?}: tau_c and cluster_radius must be positive",
                    c.name
                )));
            }
        }
        if let Some(s) = sky_id {
            if s as usize >= classes.len() {
                return Err(Error::Validation(format!("sky_id {s} is not a class")));
            }
        }
        Ok(Self { classes, sky_id })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::parse(
                "taxonomy",
                crate::error::json_offset(text, &e),
                e.to_string(),
            )
        })
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            classes: &'a [ClassPolicy],
            sky_id: Option<ClassId>,
        }
        serde_json::to_string_pretty(&Out {
            classes: &self.classes,
            sky_id: self.sky_id,
        })
        .expect("taxonomy serializes")
    }

    /// Number of classes `K`.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassPolicy] {
        &self.classes
    }

    pub fn class(&self, id: ClassId) -> Option<&ClassPolicy> {
        self.classes.get(id as usize)
    }

    pub fn sky_id(&self) -> Option<ClassId> {
        self.sky_id
    }

    pub fn unknown_id(&self) -> ClassId {
        UNKNOWN
    }

    pub fn is_class(&self, label: ClassId) -> bool {
        (label as usize) < self.classes.len()
    }

    pub fn is_movable(&self, id: ClassId) -> bool {
        self.class(id).is_some_and(|c| c.movable)
    }
}
