use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GeoGrid;
use crate::rng;

/// One block of a partition: grid index plus its pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub block_row: usize,
    pub block_col: usize,
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

/// Square blocks tiling a `width x height` raster; blocks on the right and
/// bottom edges may be smaller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub width: usize,
    pub height: usize,
    pub block_size: usize,
    pub n_block_rows: usize,
    pub n_block_cols: usize,
}

pub fn partition_blocks(width: usize, height: usize, block_size: usize) -> Result<BlockPartition> {
    if block_size == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    Ok(BlockPartition {
        width,
        height,
        block_size,
        n_block_rows: height.div_ceil(block_size),
        n_block_cols: width.div_ceil(block_size),
    })
}

impl BlockPartition {
    pub fn len(&self) -> usize {
        self.n_block_rows * self.n_block_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block with linear index `i` (row-major over the block grid).
    pub fn block(&self, i: usize) -> Block {
        let (br, bc) = (i / self.n_block_cols, i % self.n_block_cols);
        let (row0, col0) = (br * self.block_size, bc * self.block_size);
        Block {
            block_row: br,
            block_col: bc,
            row0,
            col0,
            height: self.block_size.min(self.height - row0),
            width: self.block_size.min(self.width - col0),
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        (0..self.len()).map(|i| self.block(i))
    }

    /// Linear index of the block containing pixel (row, col).
    #[inline]
    pub fn block_of(&self, row: usize, col: usize) -> usize {
        (row / self.block_size) * self.n_block_cols + col / self.block_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Train, Role::Val, Role::Test];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Role::Train),
            "val" | "validation" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(Error::Parse(format!("invalid split role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    partition: BlockPartition,
    roles: Vec<Role>,
}

/// `floor(x + 0.5)` with a small guard so values like 0.15 * 20 that land a
/// hair below .5 after floating-point multiplication still round up.
fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Target block counts (train, val, test) for `n` blocks.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let train = round_half_up(n as f64 * fractions[0]).min(n);
    let val = round_half_up(n as f64 * fractions[1]).min(n - train);
    [train, val, n - train - val]
}

pub fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Shuffles the block indices with ChaCha8 seeded by `seed` (Fisher-Yates,
/// stream `rng::domain::SPLIT`), then gives the first `round(N f_train)`
/// blocks to train, the next `round(N f_val)` to val and the rest to test.
pub fn assign_split(partition: &BlockPartition, seed: u64, fractions: [f64; 3]) -> Result<SplitAssignment> {
    validate_fractions(fractions)?;
    let n = partition.len();
    if n == 0 {
        return Err(Error::InvalidParameter("cannot split an empty block partition".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, rng::domain::SPLIT, 0), &mut order);
    let [train, val, _] = split_counts(n, fractions);
    let mut roles = vec![Role::Test; n];
    for (rank, &block) in order.iter().enumerate() {
        roles[block] = if rank < train {
            Role::Train
        } else if rank < train + val {
            Role::Val
        } else {
            Role::Test
        };
    }
    Ok(SplitAssignment {
        partition: partition.clone(),
        roles,
    })
}

impl SplitAssignment {
    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role_of_block(&self, i: usize) -> Role {
        self.roles[i]
    }

    #[inline]
    pub fn role_of_pixel(&self, row: usize, col: usize) -> Role {
        self.roles[self.partition.block_of(row, col)]
    }

    /// Number of blocks per role, in `Role::ALL` order.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &self.roles {
            c[*r as usize] += 1;
        }
        c
    }

    /// Row-major pixel mask, true inside blocks of `role`.
    pub fn pixel_mask(&self, role: Role) -> Vec<bool> {
        let p = &self.partition;
        let mut mask = Vec::with_capacity(p.width * p.height);
        for r in 0..p.height {
            mask.extend((0..p.width).map(|c| self.role_of_pixel(r, c) == role));
        }
        mask
    }

    /// CSV `block_row,block_col,role`, one line per block in row-major order.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(["block_row", "block_col", "role"])?;
        for (i, role) in self.roles.iter().enumerate() {
            let b = self.partition.block(i);
            w.write_record([b.block_row.to_string(), b.block_col.to_string(), role.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Reads the CSV written by [`SplitAssignment::to_csv_string`]; every
    /// block of `partition` must appear exactly once.
    pub fn from_csv_reader<R: Read>(reader: R, partition: &BlockPartition) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut roles: Vec<Option<Role>> = vec![None; partition.len()];
        for rec in rdr.deserialize::<(usize, usize, String)>() {
            let (br, bc, role) = rec?;
            if br >= partition.n_block_rows || bc >= partition.n_block_cols {
                return Err(Error::Parse(format!("block ({br}, {bc}) outside the partition")));
            }
            let slot = &mut roles[br * partition.n_block_cols + bc];
            if slot.replace(role.parse()?).is_some() {
                return Err(Error::Parse(format!("block ({br}, {bc}) listed twice")));
            }
        }
        let roles = roles
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Parse(format!("block {i} has no role"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition: partition.clone(),
            roles,
        })
    }
}

/// Copy of `grid` keeping only pixels inside blocks of `role`.
pub fn mask_by_split(grid: &GeoGrid, assignment: &SplitAssignment, role: Role) -> Result<GeoGrid> {
    let p = assignment.partition();
    if p.width != grid.width() || p.height != grid.height() {
        return Err(Error::InvalidParameter(format!(
            "split covers {}x{} pixels but the grid is {}x{}",
            p.width,
            p.height,
            grid.width(),
            grid.height()
        )));
    }
    Ok(grid.masked(&assignment.pixel_mask(role)))
}
