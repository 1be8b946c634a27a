use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{is_nodata, BandData, GeoGrid};

/// K x K pixel counts; rows are reference classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    /// From row-major counts.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::InvalidParameter(format!(
                "{} counts do not form a {k}x{k} matrix",
                counts.len()
            )));
        }
        Ok(Self { k, counts })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter(
                "confusion rows must form a square matrix".into(),
            ));
        }
        Self::from_counts(k, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.k + predicted]
    }

    #[inline]
    pub fn add(&mut self, reference: usize, predicted: usize, n: u64) {
        self.counts[reference * self.k + predicted] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Reference pixels of class `c` (TP + FN).
    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c * self.k..(c + 1) * self.k].iter().sum()
    }

    /// Pixels predicted as class `c` (TP + FP).
    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|r| self.get(r, c)).sum()
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        let mut out = self.clone();
        out.merge_into(other)?;
        Ok(out)
    }

    pub fn merge_into(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.k != other.k {
            return Err(Error::ClassCountMismatch(self.k, other.k));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Matrix with reference and prediction swapped.
    pub fn transpose(&self) -> ConfusionMatrix {
        let mut t = ConfusionMatrix::new(self.k);
        for r in 0..self.k {
            for p in 0..self.k {
                t.counts[p * self.k + r] = self.get(r, p);
            }
        }
        t
    }

    /// K x K grid CSV: header `reference\predicted,<ids...>`, one row per
    /// reference class.
    pub fn to_grid_csv(&self) -> String {
        let mut s = String::from("reference\\predicted");
        for c in 0..self.k {
            s.push(',');
            s.push_str(&c.to_string());
        }
        s.push('\n');
        for r in 0..self.k {
            s.push_str(&r.to_string());
            for p in 0..self.k {
                s.push(',');
                s.push_str(&self.get(r, p).to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// Label slices of a prediction/reference pair, checked against K.
struct Pair<'a> {
    pred: &'a [u32],
    pred_nd: Option<u32>,
    reference: &'a [u32],
    ref_nd: Option<u32>,
    mask: Option<Vec<bool>>,
}

/// Pixels where the mask band is not nodata.
fn mask_pixels(mask: &GeoGrid) -> Vec<bool> {
    match mask.bands()[0].data() {
        BandData::Categorical { values, nodata } => values.iter().map(|v| Some(*v) != *nodata).collect(),
        BandData::Continuous { values, nodata } => values.iter().map(|v| !is_nodata(*v, *nodata)).collect(),
    }
}

fn prepare<'a>(pred: &'a GeoGrid, reference: &'a GeoGrid, mask: Option<&GeoGrid>, k: usize) -> Result<Pair<'a>> {
    reference.geometry().check_coregistered(pred.geometry())?;
    if let Some(m) = mask {
        reference.geometry().check_coregistered(m.geometry())?;
    }
    let (p, pnd) = pred.labels()?;
    let (r, rnd) = reference.labels()?;
    for (vals, nd, which) in [(p, pnd, "prediction"), (r, rnd, "reference")] {
        if let Some(v) = vals.par_iter().find_first(|&&v| v as usize >= k && Some(v) != nd) {
            return Err(Error::SchemeMismatch(format!(
                "{which} label {v} is outside the {k}-class scheme"
            )));
        }
    }
    Ok(Pair {
        pred: p,
        pred_nd: pnd,
        reference: r,
        ref_nd: rnd,
        mask: mask.map(mask_pixels),
    })
}

fn count_range(pair: &Pair<'_>, k: usize, range: std::ops::Range<usize>) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(k);
    for i in range {
        let (p, r) = (pair.pred[i], pair.reference[i]);
        if Some(p) == pair.pred_nd || Some(r) == pair.ref_nd {
            continue;
        }
        if pair.mask.as_ref().is_some_and(|m| !m[i]) {
            continue;
        }
        m.counts[r as usize * k + p as usize] += 1;
    }
    m
}

/// Counts valid pixel pairs: pixels that are nodata in either grid, or
/// nodata in the mask, are skipped.
pub fn accumulate(pred: &GeoGrid, reference: &GeoGrid, mask: Option<&GeoGrid>, k: usize) -> Result<ConfusionMatrix> {
    accumulate_sharded(pred, reference, mask, k, 1)
}

/// As [`accumulate`], counting `shards` contiguous pixel ranges in parallel
/// and merging them. Integer counts make the result independent of the
/// shard count.
pub fn accumulate_sharded(
    pred: &GeoGrid,
    reference: &GeoGrid,
    mask: Option<&GeoGrid>,
    k: usize,
    shards: usize,
) -> Result<ConfusionMatrix> {
    if k == 0 {
        return Err(Error::InvalidParameter("class count must be positive".into()));
    }
    let pair = prepare(pred, reference, mask, k)?;
    let n = pair.pred.len();
    let shards = shards.clamp(1, n.max(1));
    let chunk = n.div_ceil(shards);
    let parts: Vec<ConfusionMatrix> = (0..shards)
        .into_par_iter()
        .map(|s| count_range(&pair, k, (s * chunk).min(n)..((s + 1) * chunk).min(n)))
        .collect();
    let mut total = ConfusionMatrix::new(k);
    for p in &parts {
        total.merge_into(p)?;
    }
    Ok(total)
}
