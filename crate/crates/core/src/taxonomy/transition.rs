use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;

use super::scheme::ClassScheme;
use crate::error::{Error, Result};
use crate::raster::{Band, BandTag, GeoGrid};

pub(crate) const TRANSITION_RULES_CSV: &str = include_str!("../../assets/transition_rules.csv");

/// Name of the identity category.
pub const NO_CHANGE: &str = "No change";
/// Name of the fallback category for pairs without a rule.
pub const OTHER_TRANSITION: &str = "Other Transition";

/// Categorical grid over transition categories.
pub type TransitionGrid = GeoGrid;

/// Lookup `(from, to) -> category` over a class scheme of `n_classes`.
/// Identity pairs are always "No change"; pairs without an explicit rule
/// fall back to "Other Transition".
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRuleSet {
    n_classes: usize,
    categories: ClassScheme,
    no_change: u32,
    fallback: u32,
    rules: BTreeMap<(u32, u32), u32>,
    /// Dense `n_classes x n_classes` table derived from the above.
    table: Vec<u32>,
}

impl TransitionRuleSet {
    pub fn new(
        n_classes: usize,
        categories: ClassScheme,
        rules: impl IntoIterator<Item = (u32, u32, u32)>,
    ) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidRules("class scheme is empty".into()));
        }
        let find = |name: &str| {
            categories
                .id_of(name)
                .ok_or_else(|| Error::InvalidRules(format!("category list lacks {name:?}")))
        };
        let no_change = find(NO_CHANGE)?;
        let fallback = find(OTHER_TRANSITION)?;
        let mut map = BTreeMap::new();
        for (from, to, cat) in rules {
            if from as usize >= n_classes || to as usize >= n_classes {
                return Err(Error::InvalidRules(format!(
                    "rule ({from}, {to}) references a class outside 0..{n_classes}"
                )));
            }
            if !categories.contains(cat) {
                return Err(Error::InvalidRules(format!(
                    "rule ({from}, {to}) references unknown category {cat}"
                )));
            }
            if from == to && cat != no_change {
                return Err(Error::InvalidRules(format!(
                    "identity pair ({from}, {to}) must map to {NO_CHANGE:?}"
                )));
            }
            if map.insert((from, to), cat).is_some_and(|prev| prev != cat) {
                return Err(Error::InvalidRules(format!("conflicting rules for ({from}, {to})")));
            }
        }
        let mut table = vec![fallback; n_classes * n_classes];
        for c in 0..n_classes {
            table[c * n_classes + c] = no_change;
        }
        for (&(f, t), &cat) in &map {
            table[f as usize * n_classes + t as usize] = cat;
        }
        Ok(Self {
            n_classes,
            categories,
            no_change,
            fallback,
            rules: map,
            table,
        })
    }

    /// The bundled reconstruction over the 23 habitat classes.
    pub fn habitat() -> Self {
        Self::from_csv_reader(
            TRANSITION_RULES_CSV.as_bytes(),
            ClassScheme::transition_categories(),
            ClassScheme::habitat().len(),
        )
        .expect("bundled transition rules are valid")
    }

    /// Reads `from_id,to_id,category_id` rows.
    pub fn from_csv_reader<R: Read>(reader: R, categories: ClassScheme, n_classes: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["from_id", "to_id", "category_id"] {
            return Err(Error::Parse(format!(
                "transition rule header must be from_id,to_id,category_id, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let rules = rdr
            .deserialize::<(u32, u32, u32)>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(n_classes, categories, rules)
    }

    pub fn load(rules: &Path, categories: &Path, n_classes: usize) -> Result<Self> {
        let cats = ClassScheme::load(categories)?;
        let f = std::fs::File::open(rules).map_err(|e| Error::io_at(rules, e))?;
        Self::from_csv_reader(f, cats, n_classes)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(["from_id", "to_id", "category_id"])?;
        for (&(f, t), &c) in &self.rules {
            w.serialize((f, t, c))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn categories(&self) -> &ClassScheme {
        &self.categories
    }

    pub fn no_change(&self) -> u32 {
        self.no_change
    }

    pub fn fallback(&self) -> u32 {
        self.fallback
    }

    /// Explicit rules as loaded (identity and fallback pairs are implicit).
    pub fn rules(&self) -> &BTreeMap<(u32, u32), u32> {
        &self.rules
    }

    /// Category of a pair whose ids are known to be valid.
    #[inline]
    pub(crate) fn lookup(&self, from: u32, to: u32) -> u32 {
        self.table[from as usize * self.n_classes + to as usize]
    }
}

pub fn map_transition_pair(from: u32, to: u32, rules: &TransitionRuleSet) -> Result<u32> {
    for id in [from, to] {
        if id as usize >= rules.n_classes {
            return Err(Error::InvalidClassId(id));
        }
    }
    Ok(rules.lookup(from, to))
}

/// Nodata sentinel of transition and binary change grids.
pub const CHANGE_NODATA: u32 = 255;

/// Per-pixel transition categories of two co-registered label grids.
/// Pixels that are nodata on either date are nodata.
pub fn build_transition_map(
    labels_t1: &GeoGrid,
    labels_t2: &GeoGrid,
    rules: &TransitionRuleSet,
) -> Result<TransitionGrid> {
    labels_t1.geometry().check_coregistered(labels_t2.geometry())?;
    let (a, nd1) = labels_t1.labels()?;
    let (b, nd2) = labels_t2.labels()?;
    let k = rules.n_classes() as u32;
    let check =
        |vals: &[u32], nd: Option<u32>, which: &str| match vals.par_iter().find_first(|&&v| v >= k && Some(v) != nd) {
            Some(v) => Err(Error::SchemeMismatch(format!(
                "{which} label {v} is outside the rule set's {k} classes"
            ))),
            None => Ok(()),
        };
    check(a, nd1, "t1")?;
    check(b, nd2, "t2")?;
    let out: Vec<u32> = a
        .par_iter()
        .zip(b.par_iter())
        .map(|(&x, &y)| {
            if Some(x) == nd1 || Some(y) == nd2 {
                CHANGE_NODATA
            } else {
                rules.lookup(x, y)
            }
        })
        .collect();
    GeoGrid::new(
        *labels_t1.geometry(),
        vec![Band::categorical(BandTag::Label, out, Some(CHANGE_NODATA))?],
    )
}

/// 0 where the category is `no_change`, 1 elsewhere; nodata preserved.
pub fn binarize_change(t: &TransitionGrid, no_change: u32) -> Result<GeoGrid> {
    let (vals, nodata) = t.labels()?;
    let out = vals
        .par_iter()
        .map(|&v| {
            if Some(v) == nodata {
                CHANGE_NODATA
            } else {
                u32::from(v != no_change)
            }
        })
        .collect();
    GeoGrid::new(
        *t.geometry(),
        vec![Band::categorical(BandTag::Label, out, Some(CHANGE_NODATA))?],
    )
}
