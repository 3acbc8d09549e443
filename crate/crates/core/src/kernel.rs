//! Seven-point Jacobi updates.
//!
//! Every execution path funnels through [`update_region_raw`], which sums the
//! six face neighbors in one fixed order. Blocked, compressed and pipelined
//! runs are therefore bitwise comparable with [`reference_sweep`].

use crate::error::{invalid, Error, Result};
use crate::grid::{BlockPlan, BlockSpec, Direction, Grid3, Region};

/// Storage scheme for the time levels of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridMode {
    /// Two arrays written in turn.
    TwoGrid,
    /// One array; each update writes its result one cell diagonally away.
    Compressed,
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridMode::TwoGrid => "two_grid",
            GridMode::Compressed => "compressed",
        })
    }
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_grid" | "two-grid" => Ok(GridMode::TwoGrid),
            "compressed" => Ok(GridMode::Compressed),
            other => Err(invalid(format!("unknown grid mode '{other}'"))),
        }
    }
}

/// Per-update write displacement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShiftVector {
    pub sx: isize,
    pub sy: isize,
    pub sz: isize,
}

impl ShiftVector {
    pub const ZERO: Self = Self {
        sx: 0,
        sy: 0,
        sz: 0,
    };
    pub const DOWN: Self = Self {
        sx: -1,
        sy: -1,
        sz: -1,
    };
    pub const UP: Self = Self {
        sx: 1,
        sy: 1,
        sz: 1,
    };

    pub fn for_sweep(mode: GridMode, direction: Direction) -> Self {
        match (mode, direction) {
            (GridMode::TwoGrid, _) => Self::ZERO,
            (GridMode::Compressed, Direction::Forward) => Self::DOWN,
            (GridMode::Compressed, Direction::Backward) => Self::UP,
        }
    }

    /// Common component of a diagonal shift.
    pub fn diagonal(&self) -> isize {
        debug_assert!(self.sx == self.sy && self.sy == self.sz);
        self.sx
    }
}

/// Storage geometry shared by the frames of one array.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geom {
    pub dims: [usize; 3],
    pub ext: [usize; 3],
    pub sy: usize,
    pub sz: usize,
}

impl Geom {
    pub fn of(g: &Grid3) -> Self {
        let s = g.strides();
        Self {
            dims: g.dims(),
            ext: g.extent(),
            sy: s[1],
            sz: s[2],
        }
    }

    #[inline(always)]
    fn at(&self, origin: isize, x: isize, y: isize, z: isize) -> usize {
        ((x + origin) + (y + origin) * self.sy as isize + (z + origin) * self.sz as isize) as usize
    }

    /// Whether the logical range `-1..=n` of a frame with this origin lies in
    /// storage on every axis.
    pub fn frame_fits(&self, origin: isize) -> bool {
        (0..3).all(|a| origin >= 1 && origin + (self.dims[a] as isize) < self.ext[a] as isize)
    }
}

/// Value of one cell update: the mean of its six face neighbors.
#[inline(always)]
fn stencil(xm: f64, xp: f64, ym: f64, yp: f64, zm: f64, zp: f64) -> f64 {
    (((xm + xp) + (ym + yp)) + (zm + zp)) / 6.0
}

/// Update one interior cell of `src`'s current frame.
pub fn stencil_update_cell(src: &Grid3, i: isize, j: isize, k: isize) -> f64 {
    let n = src.dims();
    debug_assert!(
        (0..n[0] as isize).contains(&i)
            && (0..n[1] as isize).contains(&j)
            && (0..n[2] as isize).contains(&k),
        "cell ({i},{j},{k}) is not interior"
    );
    stencil(
        src.get(i - 1, j, k),
        src.get(i + 1, j, k),
        src.get(i, j - 1, k),
        src.get(i, j + 1, k),
        src.get(i, j, k - 1),
        src.get(i, j, k + 1),
    )
}

#[inline(always)]
fn row_kernel(
    dst: &mut [f64],
    c: &[f64],
    ym: &[f64],
    yp: &[f64],
    zm: &[f64],
    zp: &[f64],
    direction: Direction,
) {
    let n = dst.len();
    let (c, ym, yp, zm, zp) = (&c[..n + 2], &ym[..n], &yp[..n], &zm[..n], &zp[..n]);
    match direction {
        Direction::Forward => {
            for x in 0..n {
                dst[x] = stencil(c[x], c[x + 2], ym[x], yp[x], zm[x], zp[x]);
            }
        }
        Direction::Backward => {
            for x in (0..n).rev() {
                dst[x] = stencil(c[x], c[x + 2], ym[x], yp[x], zm[x], zp[x]);
            }
        }
    }
}

/// Update every cell of `region`, reading the frame at `src_origin` and
/// writing the frame at `dst_origin`. With `remat`, boundary faces adjacent
/// to the region are copied into the destination frame in traversal order
/// (leading faces before, trailing faces after the rows they border).
///
/// # Safety
///
/// Both origins must satisfy [`Geom::frame_fits`] for their buffers. No
/// other thread may write any cell read here, or read or write any cell
/// written here, for the duration of the call. Source and destination rows
/// must not overlap: either distinct buffers or origins that differ by a
/// nonzero diagonal shift.
#[allow(clippy::too_many_arguments)]
pub(crate) unsafe fn update_region_raw(
    src: *const f64,
    src_origin: isize,
    dst: *mut f64,
    dst_origin: isize,
    geom: &Geom,
    region: &Region,
    direction: Direction,
    remat: bool,
) {
    if region.is_empty() {
        return;
    }
    let n = geom.dims.map(|d| d as isize);
    let lo = region.lo.map(|v| v as isize);
    let hi = region.hi.map(|v| v as isize);
    let len = (hi[0] - lo[0]) as usize;
    let sy = geom.sy as isize;
    let sz = geom.sz as isize;

    // SAFETY (all helpers): indices stay inside the fitted frames and the
    // caller guarantees exclusive access to the touched cells.
    let copy_row = |y: isize, z: isize, x0: isize, cnt: usize| {
        let s = geom.at(src_origin, x0, y, z);
        let d = geom.at(dst_origin, x0, y, z);
        std::ptr::copy(src.add(s), dst.add(d), cnt);
    };
    let copy_cell = |x: isize, y: isize, z: isize| {
        *dst.add(geom.at(dst_origin, x, y, z)) = *src.add(geom.at(src_origin, x, y, z));
    };
    let z_face = |z: isize| {
        for y in lo[1]..hi[1] {
            copy_row(y, z, lo[0], len);
        }
    };

    let forward = direction == Direction::Forward;
    let (z_lead, z_trail) = if forward { (-1, n[2]) } else { (n[2], -1) };
    let (y_lead, y_trail) = if forward { (-1, n[1]) } else { (n[1], -1) };
    let (x_lead, x_trail) = if forward { (-1, n[0]) } else { (n[0], -1) };
    let touches = |p: isize, a: usize| {
        if p < 0 {
            lo[a] == 0
        } else {
            hi[a] == n[a]
        }
    };

    let zs: Box<dyn Iterator<Item = isize>> = if forward {
        Box::new(lo[2]..hi[2])
    } else {
        Box::new((lo[2]..hi[2]).rev())
    };

    if remat && touches(z_lead, 2) {
        z_face(z_lead);
    }
    for z in zs {
        if remat && touches(y_lead, 1) {
            copy_row(y_lead, z, lo[0], len);
        }
        let ys: Box<dyn Iterator<Item = isize>> = if forward {
            Box::new(lo[1]..hi[1])
        } else {
            Box::new((lo[1]..hi[1]).rev())
        };
        for y in ys {
            if remat && touches(x_lead, 0) {
                copy_cell(x_lead, y, z);
            }
            let c0 = geom.at(src_origin, lo[0] - 1, y, z);
            let c = std::slice::from_raw_parts(src.add(c0), len + 2);
            let base = geom.at(src_origin, lo[0], y, z) as isize;
            let ym = std::slice::from_raw_parts(src.offset(base - sy), len);
            let yp = std::slice::from_raw_parts(src.offset(base + sy), len);
            let zm = std::slice::from_raw_parts(src.offset(base - sz), len);
            let zp = std::slice::from_raw_parts(src.offset(base + sz), len);
            let d0 = geom.at(dst_origin, lo[0], y, z);
            let out = std::slice::from_raw_parts_mut(dst.add(d0), len);
            row_kernel(out, c, ym, yp, zm, zp, direction);
            if remat && touches(x_trail, 0) {
                copy_cell(x_trail, y, z);
            }
        }
        if remat && touches(y_trail, 1) {
            copy_row(y_trail, z, lo[0], len);
        }
    }
    if remat && touches(z_trail, 2) {
        z_face(z_trail);
    }
}

/// Source and destination of one update.
pub enum Frames<'a> {
    TwoGrid { src: &'a Grid3, dst: &'a mut Grid3 },
    Compressed(&'a mut Grid3),
}

/// Apply one update to `region`, reading the frame `src_frame` diagonal steps
/// from the grid's current alignment and writing `dst_frame` steps away.
///
/// In compressed mode `dst_frame - src_frame` must be the sweep's shift
/// (`-1` forward, `+1` backward) and boundary faces next to the region are
/// re-materialized in the destination frame. In two-grid mode the frames are
/// normally both zero.
pub fn update_block(
    frames: Frames<'_>,
    region: &Region,
    src_frame: isize,
    dst_frame: isize,
    direction: Direction,
) -> Result<()> {
    match frames {
        Frames::TwoGrid { src, dst } => {
            if src.dims() != dst.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "{:?} vs {:?}",
                    src.dims(),
                    dst.dims()
                )));
            }
            check_region(src.dims(), region)?;
            let (sg, dg) = (Geom::of(src), Geom::of(dst));
            let (so, d_o) = (src.origin(src_frame), dst.origin(dst_frame));
            if !sg.frame_fits(so) || !dg.frame_fits(d_o) || sg.ext != dg.ext {
                return Err(invalid("frame outside allocated storage"));
            }
            // SAFETY: distinct buffers, frames fit, exclusive borrows.
            unsafe {
                update_region_raw(
                    src.data().as_ptr(),
                    so,
                    dst.as_mut_ptr(),
                    d_o,
                    &sg,
                    region,
                    direction,
                    false,
                )
            };
        }
        Frames::Compressed(g) => {
            check_region(g.dims(), region)?;
            let expected = ShiftVector::for_sweep(GridMode::Compressed, direction).diagonal();
            if dst_frame - src_frame != expected {
                return Err(invalid(format!(
                    "compressed update needs destination shift {expected}, got {}",
                    dst_frame - src_frame
                )));
            }
            let geom = Geom::of(g);
            let (so, d_o) = (g.origin(src_frame), g.origin(dst_frame));
            if !geom.frame_fits(so) || !geom.frame_fits(d_o) {
                return Err(invalid("frame outside allocated storage"));
            }
            let p = g.as_mut_ptr();
            // SAFETY: diagonal shift separates source and destination rows;
            // the traversal order never overwrites a value still to be read.
            unsafe { update_region_raw(p, so, p, d_o, &geom, region, direction, true) };
        }
    }
    Ok(())
}

fn check_region(dims: [usize; 3], r: &Region) -> Result<()> {
    if (0..3).any(|a| r.hi[a] > dims[a]) {
        return Err(invalid(format!("region {r:?} exceeds interior {dims:?}")));
    }
    Ok(())
}

fn check_pair(a: &Grid3, b: &Grid3) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Plain whole-domain Jacobi sweep `A -> B`; the oracle for all other paths.
/// Boundary faces of `b` are copied from `a`.
pub fn reference_sweep(a: &Grid3, b: &mut Grid3) -> Result<()> {
    check_pair(a, b)?;
    let n = a.dims().map(|d| d as isize);
    for k in -1..=n[2] {
        for j in -1..=n[1] {
            for i in -1..=n[0] {
                let interior = i >= 0 && i < n[0] && j >= 0 && j < n[1] && k >= 0 && k < n[2];
                let v = if interior {
                    stencil_update_cell(a, i, j, k)
                } else {
                    a.get(i, j, k)
                };
                b.set(i, j, k, v);
            }
        }
    }
    Ok(())
}

/// Run `sweeps` reference sweeps on copies of `initial`; returns the result.
pub fn reference_sweeps(initial: &Grid3, sweeps: usize) -> Result<Grid3> {
    let mut a = Grid3::zeroed(initial.dims(), 0)?;
    a.copy_logical_from(initial)?;
    let mut b = a.clone();
    for _ in 0..sweeps {
        reference_sweep(&a, &mut b)?;
        std::mem::swap(&mut a, &mut b);
    }
    Ok(a)
}

/// Jacobi sweep `A -> B` block by block. Bitwise identical to
/// [`reference_sweep`] since each cell's arithmetic is unchanged.
pub fn spatial_blocked_sweep(a: &Grid3, b: &mut Grid3, spec: BlockSpec) -> Result<()> {
    check_pair(a, b)?;
    let plan = BlockPlan::new(a.dims(), spec, Direction::Forward)?;
    copy_faces(a, b);
    for blk in plan.blocks() {
        update_block(
            Frames::TwoGrid { src: a, dst: b },
            &blk.region(),
            0,
            0,
            Direction::Forward,
        )?;
    }
    Ok(())
}

fn copy_faces(a: &Grid3, b: &mut Grid3) {
    let n = a.dims().map(|d| d as isize);
    for k in -1..=n[2] {
        for j in -1..=n[1] {
            for i in -1..=n[0] {
                let edge = i < 0 || i >= n[0] || j < 0 || j >= n[1] || k < 0 || k >= n[2];
                if edge {
                    b.set(i, j, k, a.get(i, j, k));
                }
            }
        }
    }
}
