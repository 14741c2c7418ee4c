use serde::{Deserialize, Serialize};

use super::MeshError;

/// Dense class identifier; `0` is always `unclassified`.
pub type ClassId = u8;

pub const UNCLASSIFIED: ClassId = 0;

/// Which annotation track a class may appear in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRole {
    Face,
    Pixel,
    Both,
}

impl LabelRole {
    pub fn allows_face(self) -> bool {
        matches!(self, LabelRole::Face | LabelRole::Both)
    }

    pub fn allows_pixel(self) -> bool {
        matches!(self, LabelRole::Pixel | LabelRole::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelClass {
    pub id: ClassId,
    pub name: String,
    pub role: LabelRole,
    pub color: [u8; 3],
}

/// Ordered class list shared by face labels and pixel masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTaxonomy {
    classes: Vec<LabelClass>,
}

const URBAN_CLASSES: [(&str, LabelRole, [u8; 3]); 21] = [
    ("unclassified", LabelRole::Both, [0, 0, 0]),
    ("terrain", LabelRole::Face, [170, 85, 0]),
    ("high vegetation", LabelRole::Both, [0, 170, 0]),
    ("water", LabelRole::Both, [0, 90, 200]),
    ("car", LabelRole::Both, [255, 0, 255]),
    ("boat", LabelRole::Both, [0, 200, 200]),
    ("wall", LabelRole::Both, [120, 120, 60]),
    ("roof surface", LabelRole::Both, [200, 40, 40]),
    ("facade surface", LabelRole::Both, [230, 200, 120]),
    ("chimney", LabelRole::Both, [110, 40, 130]),
    ("dormer", LabelRole::Both, [255, 140, 0]),
    ("balcony", LabelRole::Both, [255, 220, 0]),
    ("roof installation", LabelRole::Both, [160, 0, 80]),
    ("window", LabelRole::Pixel, [60, 140, 255]),
    ("door", LabelRole::Pixel, [140, 70, 20]),
    ("low vegetation", LabelRole::Pixel, [120, 230, 80]),
    ("impervious surface", LabelRole::Pixel, [150, 150, 150]),
    ("road", LabelRole::Pixel, [70, 70, 70]),
    ("road marking", LabelRole::Pixel, [255, 255, 255]),
    ("cycle lane", LabelRole::Pixel, [200, 90, 90]),
    ("sidewalk", LabelRole::Pixel, [210, 180, 200]),
];

impl LabelTaxonomy {
    /// The urban taxonomy: `unclassified`, 12 face classes and 8 pixel classes.
    pub fn urban() -> Self {
        let classes = URBAN_CLASSES
            .iter()
            .enumerate()
            .map(|(id, (name, role, color))| LabelClass {
                id: id as ClassId,
                name: (*name).to_string(),
                role: *role,
                color: *color,
            })
            .collect();
        Self { classes }
    }

    /// Builds a taxonomy from an explicit list, checking it is the urban one
    /// up to display colours.
    pub fn from_classes(classes: Vec<LabelClass>) -> Result<Self, MeshError> {
        let reference = Self::urban();
        if classes.len() != reference.classes.len() {
            return Err(MeshError::TaxonomyMismatch(format!(
                "expected {} classes, found {}",
                reference.classes.len(),
                classes.len()
            )));
        }
        for (got, want) in classes.iter().zip(&reference.classes) {
            if got.id != want.id || got.name != want.name || got.role != want.role {
                return Err(MeshError::TaxonomyMismatch(format!(
                    "class {} ({:?}) does not match {} ({:?})",
                    got.id, got.name, want.id, want.name
                )));
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[LabelClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: ClassId) -> Option<&LabelClass> {
        self.classes.get(id as usize)
    }

    pub fn by_name(&self, name: &str) -> Option<&LabelClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn is_face_class(&self, id: ClassId) -> bool {
        self.get(id).is_some_and(|c| c.role.allows_face())
    }

    pub fn is_pixel_class(&self, id: ClassId) -> bool {
        id == UNCLASSIFIED || self.get(id).is_some_and(|c| c.role.allows_pixel())
    }

    /// Flat RGB palette indexed by class id.
    pub fn palette(&self) -> Vec<u8> {
        self.classes.iter().flat_map(|c| c.color).collect()
    }
}

impl Default for LabelTaxonomy {
    fn default() -> Self {
        Self::urban()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urban_taxonomy_shape() {
        let t = LabelTaxonomy::urban();
        assert_eq!(t.len(), 21);
        assert_eq!(t.get(0).unwrap().name, "unclassified");
        let face_only = t.classes().iter().filter(|c| c.role == LabelRole::Face).count();
        let pixel_only = t.classes().iter().filter(|c| c.role == LabelRole::Pixel).count();
        assert_eq!(face_only, 1);
        assert_eq!(pixel_only, 8);
        // 12 face classes, 19 pixel-track classes excluding unclassified
        let face_track = t.classes()[1..].iter().filter(|c| c.role.allows_face()).count();
        let pixel_track = t.classes()[1..].iter().filter(|c| c.role.allows_pixel()).count();
        assert_eq!(face_track, 12);
        assert_eq!(pixel_track, 19);
        let mut names: Vec<_> = t.classes().iter().map(|c| c.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 21);
    }

    #[test]
    fn rejects_extra_class() {
        let mut classes = LabelTaxonomy::urban().classes().to_vec();
        classes.push(LabelClass {
            id: 21,
            name: "bridge".into(),
            role: LabelRole::Face,
            color: [1, 2, 3],
        });
        assert!(matches!(
            LabelTaxonomy::from_classes(classes),
            Err(MeshError::TaxonomyMismatch(_))
        ));
    }
}
