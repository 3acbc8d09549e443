//! Padded 3D grid storage and block decomposition.
//!
//! Logical coordinates address interior cells as `0..n` per axis, with the
//! fixed Dirichlet ring at `-1` and `n`. Storage is x-fastest. Each axis
//! reserves `pad` extra layers on the low side so that the compressed-grid
//! scheme can shift the logical origin by one cell per update without a
//! second array.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Width of the fixed boundary ring on each side of every axis.
pub const BOUNDARY: usize = 1;

/// Sweep direction of a pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> isize {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Initial value assignment for a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FillRule {
    /// Every cell, boundary included, holds the same value.
    Constant(f64),
    /// Interior center cell holds `1.0`, everything else `0.0`.
    Impulse,
    /// Uniform values in `[0, 1)` from a ChaCha8 stream, addressed by the
    /// global linear index so any sub-box can be filled independently.
    Random { seed: u64 },
}

impl FillRule {
    /// Fill `out` with the values of global row `(y, z)` starting at `x0`.
    /// Coordinates outside the global domain including its ring yield `0.0`.
    pub fn fill_row(&self, global: [usize; 3], x0: isize, y: isize, z: isize, out: &mut [f64]) {
        let inside = |p: isize, n: usize| p >= -1 && p <= n as isize;
        if !inside(y, global[1]) || !inside(z, global[2]) {
            out.fill(0.0);
            return;
        }
        match *self {
            FillRule::Constant(v) => {
                for (dx, o) in out.iter_mut().enumerate() {
                    *o = if inside(x0 + dx as isize, global[0]) {
                        v
                    } else {
                        0.0
                    };
                }
            }
            FillRule::Impulse => {
                let c = global.map(|n| (n / 2) as isize);
                for (dx, o) in out.iter_mut().enumerate() {
                    *o = if [x0 + dx as isize, y, z] == c {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
            FillRule::Random { seed } => {
                let ext = global.map(|n| n as u128 + 2);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut positioned = false;
                for (dx, o) in out.iter_mut().enumerate() {
                    let x = x0 + dx as isize;
                    if !inside(x, global[0]) {
                        *o = 0.0;
                        positioned = false;
                        continue;
                    }
                    if !positioned {
                        let lin =
                            ((z + 1) as u128 * ext[1] + (y + 1) as u128) * ext[0] + (x + 1) as u128;
                        // one f64 consumes two 32-bit words
                        rng.set_word_pos(2 * lin);
                        positioned = true;
                    }
                    *o = rng.random::<f64>();
                }
            }
        }
    }
}

impl std::fmt::Display for FillRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FillRule::Constant(v) => write!(f, "constant:{v}"),
            FillRule::Impulse => f.write_str("impulse"),
            FillRule::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

impl std::str::FromStr for FillRule {
    type Err = Error;

    /// Accepts `constant:V`, `impulse`, `random:SEED` and bare `random`
    /// (seed 0).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unknown fill rule '{s}'"));
        match s.split_once(':') {
            None if s == "impulse" => Ok(FillRule::Impulse),
            None if s == "random" => Ok(FillRule::Random { seed: 0 }),
            Some(("constant", v)) => v.parse().map(FillRule::Constant).map_err(|_| bad()),
            Some(("random", v)) => v
                .parse()
                .map(|seed| FillRule::Random { seed })
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Half-open box of logical interior coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Region {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        Self { lo, hi }
    }

    pub fn whole(dims: [usize; 3]) -> Self {
        Self {
            lo: [0; 3],
            hi: dims,
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn extent(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.hi[a].saturating_sub(self.lo[a]))
    }

    pub fn volume(&self) -> usize {
        self.extent().iter().product()
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region {
            lo: std::array::from_fn(|a| self.lo[a].max(other.lo[a])),
            hi: std::array::from_fn(|a| self.hi[a].min(other.hi[a])),
        }
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] < self.hi[a])
    }
}

/// Block edge lengths in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    pub bx: usize,
    pub by: usize,
    pub bz: usize,
}

impl BlockSpec {
    pub fn new(bx: usize, by: usize, bz: usize) -> Self {
        Self { bx, by, bz }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.bx, self.by, self.bz]
    }

    pub fn volume(&self) -> usize {
        self.bx * self.by * self.bz
    }

    /// Shrink each edge to at most the given extent.
    pub fn clamped_to(&self, dims: [usize; 3]) -> Self {
        Self::new(
            self.bx.min(dims[0]),
            self.by.min(dims[1]),
            self.bz.min(dims[2]),
        )
    }

    pub fn validate(&self, dims: [usize; 3]) -> Result<()> {
        for (a, (&b, &n)) in self.as_array().iter().zip(dims.iter()).enumerate() {
            if b == 0 {
                return Err(invalid(format!("block edge on axis {a} is zero")));
            }
            if b > n {
                return Err(invalid(format!(
                    "block edge {b} on axis {a} exceeds interior extent {n}"
                )));
            }
        }
        Ok(())
    }
}

/// One tile of the interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub base: [usize; 3],
    pub extent: [usize; 3],
}

impl Block {
    pub fn region(&self) -> Region {
        Region {
            lo: self.base,
            hi: std::array::from_fn(|a| self.base[a] + self.extent[a]),
        }
    }

    /// The block's region after `shift` diagonal steps in the sweep's shift
    /// direction (towards lower indices on forward sweeps). Interior tile
    /// faces move, faces on the domain edge stay put, so the shifted blocks
    /// of a plan still tile the interior (some may become empty).
    pub fn shifted(&self, dims: [usize; 3], shift: usize, direction: Direction) -> Region {
        let r = self.region();
        let mv = |p: usize, n: usize| -> usize {
            if p == 0 || p == n {
                return p;
            }
            match direction {
                Direction::Forward => p.saturating_sub(shift),
                Direction::Backward => (p + shift).min(n),
            }
        };
        Region {
            lo: std::array::from_fn(|a| mv(r.lo[a], dims[a])),
            hi: std::array::from_fn(|a| mv(r.hi[a], dims[a])),
        }
    }
}

/// Ordered tiling of the interior.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPlan {
    dims: [usize; 3],
    spec: BlockSpec,
    direction: Direction,
    blocks: Vec<Block>,
}

impl BlockPlan {
    /// Lexicographic tiling (z outer, x inner); reversed for backward sweeps.
    pub fn new(dims: [usize; 3], spec: BlockSpec, direction: Direction) -> Result<Self> {
        spec.validate(dims)?;
        let b = spec.as_array();
        let starts = |a: usize| (0..dims[a]).step_by(b[a]);
        let mut blocks = Vec::new();
        for z in starts(2) {
            for y in starts(1) {
                for x in starts(0) {
                    let base = [x, y, z];
                    let extent = std::array::from_fn(|a| b[a].min(dims[a] - base[a]));
                    blocks.push(Block { base, extent });
                }
            }
        }
        if direction == Direction::Backward {
            blocks.reverse();
        }
        Ok(Self {
            dims,
            spec,
            direction,
            blocks,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spec(&self) -> BlockSpec {
        self.spec
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// `None` is the end marker.
    pub fn next_block(&self, counter: usize) -> Option<&Block> {
        self.blocks.get(counter)
    }
}

/// Tile the interior of `grid` with `spec`.
pub fn decompose_blocks(grid: &Grid3, spec: BlockSpec, direction: Direction) -> Result<BlockPlan> {
    BlockPlan::new(grid.dims(), spec, direction)
}

/// Padded 3D double-precision grid.
#[derive(Clone, Debug)]
pub struct Grid3 {
    dims: [usize; 3],
    pad: usize,
    ext: [usize; 3],
    alignment: usize,
    data: Vec<f64>,
}

impl Grid3 {
    /// Allocate a grid and fill interior and boundary per `fill`.
    pub fn new(dims: [usize; 3], pad: usize, fill: FillRule) -> Result<Self> {
        Self::new_window(dims, pad, fill, dims, [0; 3])
    }

    /// Allocate a grid whose logical cell `p` corresponds to global cell
    /// `p + offset` of a larger domain of interior size `global`; used for
    /// subdomains so every rank sees the same initial values.
    pub fn new_window(
        dims: [usize; 3],
        pad: usize,
        fill: FillRule,
        global: [usize; 3],
        offset: [isize; 3],
    ) -> Result<Self> {
        let mut g = Self::zeroed(dims, pad)?;
        let row_len = dims[0] + 2 * BOUNDARY;
        let mut row = vec![0.0; row_len];
        for z in -1..=dims[2] as isize {
            for y in -1..=dims[1] as isize {
                fill.fill_row(
                    global,
                    offset[0] - 1,
                    y + offset[1],
                    z + offset[2],
                    &mut row,
                );
                let start = g.index(-1, y, z);
                g.data[start..start + row_len].copy_from_slice(&row);
            }
        }
        Ok(g)
    }

    /// Allocate an all-zero grid.
    pub fn zeroed(dims: [usize; 3], pad: usize) -> Result<Self> {
        if dims.contains(&0) {
            return Err(invalid(format!(
                "grid dimensions must be >= 1, got {dims:?}"
            )));
        }
        let ext = dims.map(|n| n + 2 * BOUNDARY + pad);
        let len = ext
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| invalid("grid too large"))?;
        Ok(Self {
            dims,
            pad,
            ext,
            alignment: 0,
            data: vec![0.0; len],
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn nx(&self) -> usize {
        self.dims[0]
    }

    pub fn ny(&self) -> usize {
        self.dims[1]
    }

    pub fn nz(&self) -> usize {
        self.dims[2]
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Allocated extent per axis: interior + 2 boundary + pad.
    pub fn extent(&self) -> [usize; 3] {
        self.ext
    }

    pub fn alignment(&self) -> usize {
        self.alignment
    }

    pub fn interior_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn strides(&self) -> [usize; 3] {
        [1, self.ext[0], self.ext[0] * self.ext[1]]
    }

    /// Physical index of logical 0 on every axis, displaced by `frame`
    /// diagonal steps.
    pub(crate) fn origin(&self, frame: isize) -> isize {
        (BOUNDARY + self.pad) as isize - self.alignment as isize + frame
    }

    /// Physical linear index of logical cell `(i, j, k)` in the current frame.
    #[inline]
    pub fn index(&self, i: isize, j: isize, k: isize) -> usize {
        let o = self.origin(0);
        let s = self.strides();
        let (pi, pj, pk) = (i + o, j + o, k + o);
        debug_assert!(
            pi >= 0
                && pj >= 0
                && pk >= 0
                && (pi as usize) < self.ext[0]
                && (pj as usize) < self.ext[1]
                && (pk as usize) < self.ext[2],
            "cell ({i},{j},{k}) outside storage"
        );
        pi as usize + pj as usize * s[1] + pk as usize * s[2]
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize, k: isize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// Move the logical origin by `delta` diagonal steps. Positive deltas move
    /// it towards lower physical indices (a forward compressed pass).
    pub fn shift_alignment(&mut self, delta: isize) -> Result<()> {
        let next = self.alignment as isize + delta;
        if next < 0 || next > self.pad as isize {
            return Err(invalid(format!(
                "alignment {} + {delta} leaves [0, {}]",
                self.alignment, self.pad
            )));
        }
        self.alignment = next as usize;
        Ok(())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[cfg(test)]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn as_mut_ptr(&mut self) -> *mut f64 {
        self.data.as_mut_ptr()
    }

    /// Interior values in storage order.
    pub fn interior(&self) -> Vec<f64> {
        self.box_values(&Region::whole(self.dims))
    }

    /// Values of a logical box (interior coordinates) in storage order.
    pub fn box_values(&self, r: &Region) -> Vec<f64> {
        let mut out = Vec::with_capacity(r.volume());
        self.for_each_row(r, |g, start, len| {
            out.extend_from_slice(&g.data[start..start + len])
        });
        out
    }

    /// Write `values` (storage order) into a logical box given in signed
    /// coordinates so halo and boundary layers are addressable.
    pub fn set_box_signed(&mut self, lo: [isize; 3], hi: [isize; 3], values: &[f64]) -> Result<()> {
        let ext: [usize; 3] = std::array::from_fn(|a| (hi[a] - lo[a]).max(0) as usize);
        if ext.iter().product::<usize>() != values.len() {
            return Err(invalid("box size does not match value count"));
        }
        let mut off = 0;
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                let s = self.index(lo[0], j, k);
                self.data[s..s + ext[0]].copy_from_slice(&values[off..off + ext[0]]);
                off += ext[0];
            }
        }
        Ok(())
    }

    /// Read a signed logical box in storage order.
    pub fn box_values_signed(&self, lo: [isize; 3], hi: [isize; 3]) -> Vec<f64> {
        let ext: [usize; 3] = std::array::from_fn(|a| (hi[a] - lo[a]).max(0) as usize);
        let mut out = Vec::with_capacity(ext.iter().product());
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                let s = self.index(lo[0], j, k);
                out.extend_from_slice(&self.data[s..s + ext[0]]);
            }
        }
        out
    }

    fn for_each_row(&self, r: &Region, mut f: impl FnMut(&Self, usize, usize)) {
        if r.is_empty() {
            return;
        }
        let len = r.hi[0] - r.lo[0];
        for k in r.lo[2]..r.hi[2] {
            for j in r.lo[1]..r.hi[1] {
                f(
                    self,
                    self.index(r.lo[0] as isize, j as isize, k as isize),
                    len,
                );
            }
        }
    }

    /// Sum of interior values in storage order.
    pub fn checksum(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_row(&Region::whole(self.dims), |g, start, len| {
            s += g.data[start..start + len].iter().sum::<f64>();
        });
        s
    }

    /// Bitwise comparison of interior and the six boundary faces.
    pub fn logically_identical(&self, other: &Grid3) -> bool {
        self.first_difference(other).is_none()
    }

    /// First logical cell (interior or face) whose bits differ.
    pub fn first_difference(&self, other: &Grid3) -> Option<[isize; 3]> {
        if self.dims != other.dims {
            return Some([-2, -2, -2]);
        }
        let n = self.dims.map(|d| d as isize);
        for k in -1..=n[2] {
            for j in -1..=n[1] {
                for i in -1..=n[0] {
                    let outside = [i, j, k]
                        .iter()
                        .zip(n.iter())
                        .filter(|(&p, &d)| p < 0 || p >= d)
                        .count();
                    // edges and corners are never read by the stencil
                    if outside > 1 {
                        continue;
                    }
                    if self.get(i, j, k).to_bits() != other.get(i, j, k).to_bits() {
                        return Some([i, j, k]);
                    }
                }
            }
        }
        None
    }

    /// Copy interior and faces of `other` (same dims) into this grid's
    /// current frame.
    pub fn copy_logical_from(&mut self, other: &Grid3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let n = self.dims.map(|d| d as isize);
        for k in -1..=n[2] {
            for j in -1..=n[1] {
                let a = self.index(-1, j, k);
                let b = other.index(-1, j, k);
                let len = self.dims[0] + 2;
                self.data[a..a + len].copy_from_slice(&other.data[b..b + len]);
            }
        }
        Ok(())
    }

    /// Header line `nx ny nz`, then the interior as little-endian f64 in
    /// storage order.
    pub fn write_snapshot(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        let mut buf = Vec::with_capacity(self.dims[0] * 8);
        for k in 0..self.dims[2] as isize {
            for j in 0..self.dims[1] as isize {
                let start = self.index(0, j, k);
                buf.clear();
                for v in &self.data[start..start + self.dims[0]] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_snapshot(&mut w)
    }
}

/// Interior dims and values from a snapshot stream.
pub fn read_snapshot(r: &mut impl Read) -> Result<([usize; 3], Vec<f64>)> {
    let mut reader = BufReader::new(r);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| invalid(format!("bad snapshot header: {e}")))
        })
        .collect::<Result<_>>()?;
    let dims: [usize; 3] = dims
        .try_into()
        .map_err(|_| invalid("snapshot header must hold three extents"))?;
    let count: usize = dims.iter().product();
    let mut bytes = vec![0u8; count * 8];
    reader.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((dims, values))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<([usize; 3], Vec<f64>)> {
    read_snapshot(&mut File::open(path)?)
}
