use crate::error::{invalid, Result};
use crate::grid::Region;

/// Low or high end of an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Low = 0,
    High = 1,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Low, Side::High];

    pub fn opposite(self) -> Side {
        match self {
            Side::Low => Side::High,
            Side::High => Side::Low,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Option<Side> {
        match v {
            0 => Some(Side::Low),
            1 => Some(Side::High),
            _ => None,
        }
    }
}

/// Cartesian process grid; rank `r` has coordinates with x varying fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RankTopology {
    procs: [usize; 3],
}

impl RankTopology {
    pub fn new(procs: [usize; 3]) -> Result<Self> {
        if procs.contains(&0) {
            return Err(invalid(format!("process grid {procs:?} has an empty axis")));
        }
        Ok(Self { procs })
    }

    pub fn procs(&self) -> [usize; 3] {
        self.procs
    }

    pub fn size(&self) -> usize {
        self.procs.iter().product()
    }

    pub fn coords(&self, rank: usize) -> [usize; 3] {
        let [px, py, _] = self.procs;
        [rank % px, (rank / px) % py, rank / (px * py)]
    }

    pub fn rank_of(&self, c: [usize; 3]) -> usize {
        let [px, py, _] = self.procs;
        c[0] + px * (c[1] + py * c[2])
    }

    /// Neighbor of `rank` across `side` of `axis`, or `None` at the physical
    /// boundary.
    pub fn neighbor(&self, rank: usize, axis: usize, side: Side) -> Option<usize> {
        let mut c = self.coords(rank);
        match side {
            Side::Low if c[axis] == 0 => return None,
            Side::Low => c[axis] -= 1,
            Side::High if c[axis] + 1 == self.procs[axis] => return None,
            Side::High => c[axis] += 1,
        }
        Some(self.rank_of(c))
    }
}

/// One rank's share of the global domain.
///
/// Local coordinates cover the owned cells plus `h` halo layers on every
/// side that faces a neighbor. The local grid's boundary ring is only
/// meaningful on physical sides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subdomain {
    pub rank: usize,
    pub coords: [usize; 3],
    pub global: [usize; 3],
    /// Global coordinate of the first owned cell.
    pub owned_start: [usize; 3],
    pub owned: [usize; 3],
    pub h: usize,
    /// Neighbor ranks indexed by `[axis][side]`.
    pub neighbors: [[Option<usize>; 2]; 3],
}

impl Subdomain {
    pub fn neighbor(&self, axis: usize, side: Side) -> Option<usize> {
        self.neighbors[axis][side as usize]
    }

    /// Halo layers on the given side: `h` toward a neighbor, else 0.
    pub fn halo(&self, axis: usize, side: Side) -> usize {
        if self.neighbor(axis, side).is_some() {
            self.h
        } else {
            0
        }
    }

    pub fn local_dims(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.owned[a] + self.halo(a, Side::Low) + self.halo(a, Side::High))
    }

    /// Global coordinate of local cell 0.
    pub fn local_offset(&self) -> [isize; 3] {
        std::array::from_fn(|a| self.owned_start[a] as isize - self.halo(a, Side::Low) as isize)
    }

    /// Owned cells in local coordinates.
    pub fn owned_region(&self) -> Region {
        let lo: [usize; 3] = std::array::from_fn(|a| self.halo(a, Side::Low));
        Region::new(lo, std::array::from_fn(|a| lo[a] + self.owned[a]))
    }

    /// Owned cells in global coordinates.
    pub fn owned_global(&self) -> Region {
        Region::new(
            self.owned_start,
            std::array::from_fn(|a| self.owned_start[a] + self.owned[a]),
        )
    }

    /// Cells update `s` (1-based, `s <= h`) must cover: the owned region
    /// grown by `h - s` layers toward every neighbor.
    pub fn update_window(&self, s: usize) -> Region {
        let grow = self.h - s;
        let own = self.owned_region();
        let lo = std::array::from_fn(|a| {
            if self.neighbor(a, Side::Low).is_some() {
                own.lo[a] - grow
            } else {
                own.lo[a]
            }
        });
        let hi = std::array::from_fn(|a| {
            if self.neighbor(a, Side::High).is_some() {
                own.hi[a] + grow
            } else {
                own.hi[a]
            }
        });
        Region::new(lo, hi)
    }

    /// Windows for updates `1..=h`.
    pub fn update_windows(&self) -> Vec<Region> {
        (1..=self.h).map(|s| self.update_window(s)).collect()
    }
}

/// Split `global` evenly over `topo`, with `h` halo layers between ranks.
pub fn decompose_domain(
    global: [usize; 3],
    topo: RankTopology,
    h: usize,
) -> Result<Vec<Subdomain>> {
    if h == 0 {
        return Err(invalid("halo width must be >= 1"));
    }
    let procs = topo.procs();
    for a in 0..3 {
        if global[a] == 0 || global[a] % procs[a] != 0 {
            return Err(invalid(format!(
                "axis {a}: {} cells do not divide evenly over {} ranks",
                global[a], procs[a]
            )));
        }
        let share = global[a] / procs[a];
        if procs[a] > 1 && share < 2 * (h - 1) {
            return Err(invalid(format!(
                "axis {a}: subdomain width {share} too thin for halo width {h} (needs >= {})",
                2 * (h - 1)
            )));
        }
    }
    Ok((0..topo.size())
        .map(|rank| {
            let coords = topo.coords(rank);
            let owned: [usize; 3] = std::array::from_fn(|a| global[a] / procs[a]);
            Subdomain {
                rank,
                coords,
                global,
                owned_start: std::array::from_fn(|a| coords[a] * owned[a]),
                owned,
                h,
                neighbors: std::array::from_fn(|a| {
                    [
                        topo.neighbor(rank, a, Side::Low),
                        topo.neighbor(rank, a, Side::High),
                    ]
                }),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_are_symmetric() {
        let t = RankTopology::new([3, 2, 2]).unwrap();
        for r in 0..t.size() {
            assert_eq!(t.rank_of(t.coords(r)), r);
            for a in 0..3 {
                for s in Side::BOTH {
                    if let Some(n) = t.neighbor(r, a, s) {
                        assert_eq!(t.neighbor(n, a, s.opposite()), Some(r));
                    }
                }
            }
        }
    }

    #[test]
    fn single_rank_has_no_halo() {
        let subs = decompose_domain([60; 3], RankTopology::new([1, 1, 1]).unwrap(), 4).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].local_dims(), [60; 3]);
        assert_eq!(subs[0].update_window(1), Region::whole([60; 3]));
    }

    #[test]
    fn two_ranks_along_x() {
        let subs = decompose_domain([60; 3], RankTopology::new([2, 1, 1]).unwrap(), 4).unwrap();
        assert_eq!(subs[0].owned, [30, 60, 60]);
        assert_eq!(subs[0].local_dims(), [34, 60, 60]);
        assert_eq!(subs[1].local_offset(), [26, 0, 0]);
        assert_eq!(subs[1].owned_region(), Region::new([4, 0, 0], [34, 60, 60]));
        assert_eq!(
            subs[0].update_window(1),
            Region::new([0, 0, 0], [33, 60, 60])
        );
        assert_eq!(subs[1].update_window(4), subs[1].owned_region());
    }

    #[test]
    fn thin_and_uneven_splits_rejected() {
        let t = RankTopology::new([2, 2, 2]).unwrap();
        assert!(decompose_domain([60; 3], t, 16).is_ok());
        assert!(decompose_domain([60; 3], t, 17).is_err());
        assert!(decompose_domain([61, 60, 60], t, 2).is_err());
        assert!(decompose_domain([60; 3], t, 0).is_err());
    }

    #[test]
    fn owned_regions_tile_the_domain() {
        let global = [12, 9, 8];
        let subs = decompose_domain(global, RankTopology::new([3, 3, 2]).unwrap(), 2).unwrap();
        let mut hits = vec![0u8; global.iter().product()];
        for s in &subs {
            let g = s.owned_global();
            for z in g.lo[2]..g.hi[2] {
                for y in g.lo[1]..g.hi[1] {
                    for x in g.lo[0]..g.hi[0] {
                        hits[(z * global[1] + y) * global[0] + x] += 1;
                    }
                }
            }
        }
        assert!(hits.iter().all(|&c| c == 1));
    }
}
