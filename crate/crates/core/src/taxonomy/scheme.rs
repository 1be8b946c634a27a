use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const HABITAT_CLASSES_CSV: &str = include_str!("../../assets/habitat_classes.csv");
pub(crate) const TRANSITION_CATEGORIES_CSV: &str = include_str!("../../assets/transition_categories.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: u32,
    pub name: String,
    pub area_ha: Option<f64>,
}

/// Ordered set of classes with ids `0..K` and a nodata id outside that range.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScheme {
    classes: Vec<ClassInfo>,
    nodata: u32,
}

/// Nodata id used when a scheme does not specify one.
pub fn default_nodata(n_classes: usize) -> u32 {
    if n_classes < 255 {
        255
    } else if n_classes < 65_535 {
        65_535
    } else {
        i32::MAX as u32
    }
}

impl ClassScheme {
    /// Validates ids (unique, contiguous from 0, given in order) and makes
    /// repeated names unique by appending ` [id]` to each duplicate.
    pub fn new(mut classes: Vec<ClassInfo>, nodata: u32) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidScheme("scheme has no classes".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.id as usize != i {
                return Err(Error::InvalidScheme(format!(
                    "class ids must be contiguous from 0 in order; position {i} has id {}",
                    c.id
                )));
            }
            if c.name.trim().is_empty() {
                return Err(Error::InvalidScheme(format!("class {i} has an empty name")));
            }
            if let Some(a) = c.area_ha {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::InvalidScheme(format!("class {i} has invalid area {a}")));
                }
            }
        }
        if (nodata as usize) < classes.len() {
            return Err(Error::InvalidScheme(format!(
                "nodata id {nodata} collides with a class id"
            )));
        }
        let mut seen: HashMap<String, usize> = HashMap::new();
        for c in &classes {
            *seen.entry(c.name.clone()).or_default() += 1;
        }
        for c in &mut classes {
            if seen[&c.name] > 1 {
                c.name = format!("{} [{}]", c.name, c.id);
            }
        }
        let mut unique: Vec<&str> = classes.iter().map(|c| c.name.as_str()).collect();
        unique.sort_unstable();
        if unique.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScheme(
                "class names not unique after disambiguation".into(),
            ));
        }
        Ok(Self { classes, nodata })
    }

    /// Unnamed scheme `0..k` ("class 0", "class 1", ...).
    pub fn numbered(k: usize) -> Result<Self> {
        let classes = (0..k)
            .map(|i| ClassInfo {
                id: i as u32,
                name: format!("class {i}"),
                area_ha: None,
            })
            .collect();
        Self::new(classes, default_nodata(k))
    }

    /// The 23 habitat classes with their reference areas.
    pub fn habitat() -> Self {
        Self::from_csv_reader(HABITAT_CLASSES_CSV.as_bytes()).expect("bundled class scheme is valid")
    }

    /// The 9 transition categories, "No change" first and "Other Transition" last.
    pub fn transition_categories() -> Self {
        Self::from_csv_reader(TRANSITION_CATEGORIES_CSV.as_bytes()).expect("bundled category list is valid")
    }

    /// Binary change scheme: 0 = no change, 1 = change.
    pub fn binary_change() -> Self {
        let classes = ["No change", "Change"]
            .iter()
            .enumerate()
            .map(|(i, n)| ClassInfo {
                id: i as u32,
                name: (*n).to_string(),
                area_ha: None,
            })
            .collect();
        Self::new(classes, 255).expect("binary scheme is valid")
    }

    /// Reads `id,name[,area_ha]` (or `category_id,name`) with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
        let id_col =
            col(&["id", "class_id", "category_id"]).ok_or_else(|| Error::InvalidScheme("missing id column".into()))?;
        let name_col = col(&["name", "class_name", "category_name"])
            .ok_or_else(|| Error::InvalidScheme("missing name column".into()))?;
        let area_col = col(&["area_ha"]);
        let mut classes = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let id = field(id_col)
                .parse::<u32>()
                .map_err(|_| Error::InvalidScheme(format!("row {}: invalid id {:?}", line + 2, field(id_col))))?;
            let area_ha = match area_col.map(field) {
                None | Some("") => None,
                Some(s) => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidScheme(format!("row {}: invalid area {s:?}", line + 2)))?,
                ),
            };
            classes.push(ClassInfo {
                id,
                name: field(name_col).to_string(),
                area_ha,
            });
        }
        let n = classes.len();
        Self::new(classes, default_nodata(n))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_csv_reader(f)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(["id", "name", "area_ha"])?;
        for c in &self.classes {
            let area = c.area_ha.map(|a| a.to_string()).unwrap_or_default();
            w.write_record([c.id.to_string().as_str(), c.name.as_str(), area.as_str()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn with_nodata(self, nodata: u32) -> Result<Self> {
        Self::new(self.classes, nodata)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn nodata(&self) -> u32 {
        self.nodata
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.classes.len()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.classes.get(id as usize).map(|c| c.name.as_str())
    }

    /// Id of the class whose name matches case-insensitively.
    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.classes
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .map(|c| c.id)
    }

    /// Reference areas, if every class has one.
    pub fn areas_ha(&self) -> Option<Vec<f64>> {
        self.classes.iter().map(|c| c.area_ha).collect()
    }
}
