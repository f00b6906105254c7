//! Uniform bin grid over point positions for radius and nearest-point queries.

use crate::error::{Error, Result};
use crate::model::{bounding_box, squared_distance, PointSet, Position};

/// Upper bound on the number of cells, as a multiple of the point count.
/// Requests finer than this are coarsened; query results never depend on the
/// cell size, only the scan cost does.
const MAX_CELLS_PER_POINT: usize = 16;
const MIN_CELL_BUDGET: usize = 4096;

/// Dense uniform grid of bins, each holding point indices in ascending order.
///
/// The grid covers the bounding box of the positions expanded by one cell on
/// every side, so every point falls strictly inside it.
#[derive(Debug, Clone)]
pub struct BinGrid {
    cell_size: f64,
    origin: Position,
    n_cols: usize,
    n_rows: usize,
    /// CSR layout: bin `b` holds `entries[starts[b]..starts[b + 1]]`.
    starts: Vec<usize>,
    entries: Vec<u32>,
}

impl BinGrid {
    /// Indexes every point of `ps`. `cell_size` may be enlarged to keep the
    /// grid within a memory budget when points are spread very widely.
    pub fn build(ps: &PointSet, cell_size: f64) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidCellSize(cell_size));
        }
        ps.validate()?;

        let (lo, hi) = bounding_box(&ps.positions);
        let budget = (MAX_CELLS_PER_POINT * ps.len()).max(MIN_CELL_BUDGET);
        let mut cell_size = cell_size;
        let (n_cols, n_rows) = loop {
            let cols = ((hi[0] - lo[0]) / cell_size).floor() + 3.0;
            let rows = ((hi[1] - lo[1]) / cell_size).floor() + 3.0;
            if cols * rows <= budget as f64 {
                break (cols as usize, rows as usize);
            }
            cell_size *= 2.0;
        };
        let origin = [lo[0] - cell_size, lo[1] - cell_size];

        let mut grid = BinGrid {
            cell_size,
            origin,
            n_cols,
            n_rows,
            starts: Vec::new(),
            entries: Vec::new(),
        };

        // Counting sort keeps indices ascending within each bin.
        let bins: Vec<usize> = ps
            .positions
            .iter()
            .map(|&p| {
                let (cx, cy) = grid.cell_of(p);
                cy * n_cols + cx
            })
            .collect();
        let mut counts = vec![0usize; n_cols * n_rows + 1];
        for &b in &bins {
            counts[b + 1] += 1;
        }
        for b in 0..n_cols * n_rows {
            counts[b + 1] += counts[b];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; ps.len()];
        for (i, &b) in bins.iter().enumerate() {
            entries[fill[b]] = i as u32;
            fill[b] += 1;
        }
        grid.starts = counts;
        grid.entries = entries;
        Ok(grid)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Position {
        self.origin
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_cols, self.n_rows)
    }

    pub fn num_indexed(&self) -> usize {
        self.entries.len()
    }

    /// Point indices stored in bin `(col, row)`.
    pub fn bin(&self, col: usize, row: usize) -> &[u32] {
        let b = row * self.n_cols + col;
        &self.entries[self.starts[b]..self.starts[b + 1]]
    }

    fn cell_coord(&self, v: f64, axis: usize) -> i64 {
        ((v - self.origin[axis]) / self.cell_size).floor() as i64
    }

    /// Bin holding position `p`, clamped to the grid bounds.
    pub fn cell_of(&self, p: Position) -> (usize, usize) {
        let cx = self.cell_coord(p[0], 0).clamp(0, self.n_cols as i64 - 1);
        let cy = self.cell_coord(p[1], 1).clamp(0, self.n_rows as i64 - 1);
        (cx as usize, cy as usize)
    }

    /// Indices `i` with `|q - mu_i| <= radius`, ascending.
    pub fn query_radius(&self, ps: &PointSet, q: Position, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        self.query_radius_into(ps, q, radius, &mut out);
        out
    }

    /// Like [`BinGrid::query_radius`] but reuses `out`, which is cleared first.
    pub fn query_radius_into(&self, ps: &PointSet, q: Position, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        let r2 = radius * radius;
        // One extra cell on each side absorbs rounding in the range bounds.
        let span = |axis: usize, n: usize| -> Option<(usize, usize)> {
            let lo = self
                .cell_coord(q[axis] - radius, axis)
                .saturating_sub(1)
                .max(0);
            let hi = self
                .cell_coord(q[axis] + radius, axis)
                .saturating_add(1)
                .min(n as i64 - 1);
            (lo <= hi).then_some((lo as usize, hi as usize))
        };
        let (Some((x0, x1)), Some((y0, y1))) = (span(0, self.n_cols), span(1, self.n_rows)) else {
            return;
        };
        let mut sorted = true;
        for row in y0..=y1 {
            for col in x0..=x1 {
                for &i in self.bin(col, row) {
                    if squared_distance(q, ps.positions[i as usize]) <= r2 {
                        if out.last().is_some_and(|&last| last > i) {
                            sorted = false;
                        }
                        out.push(i);
                    }
                }
            }
        }
        if !sorted {
            out.sort_unstable();
        }
    }

    /// Index of the point closest to `q`; ties go to the smallest index.
    ///
    /// Expands square rings of bins around `q`'s bin until no unvisited bin
    /// can contain a point closer than the best one found.
    pub fn nearest_point(&self, ps: &PointSet, q: Position) -> usize {
        let (cx, cy) = self.cell_of(q);
        let (cx, cy) = (cx as i64, cy as i64);
        let (nc, nr) = (self.n_cols as i64, self.n_rows as i64);
        let mut best: Option<(f64, u32)> = None;
        let mut k = 0i64;
        loop {
            let (x0, x1) = ((cx - k).max(0), (cx + k).min(nc - 1));
            let (y0, y1) = ((cy - k).max(0), (cy + k).min(nr - 1));
            for row in y0..=y1 {
                let on_edge_row = row == cy - k || row == cy + k;
                for col in x0..=x1 {
                    if !on_edge_row && col != cx - k && col != cx + k {
                        continue;
                    }
                    for &i in self.bin(col as usize, row as usize) {
                        let d2 = squared_distance(q, ps.positions[i as usize]);
                        match best {
                            Some((bd, bi)) if d2 > bd || (d2 == bd && i > bi) => {}
                            _ => best = Some((d2, i)),
                        }
                    }
                }
            }

            // Distance from q to the nearest bin outside the visited block.
            let mut bound = f64::INFINITY;
            let cs = self.cell_size;
            if cx - k > 0 {
                let edge = self.origin[0] + (cx - k) as f64 * cs;
                bound = bound.min((q[0] - edge).max(0.0));
            }
            if cx + k < nc - 1 {
                let edge = self.origin[0] + (cx + k + 1) as f64 * cs;
                bound = bound.min((edge - q[0]).max(0.0));
            }
            if cy - k > 0 {
                let edge = self.origin[1] + (cy - k) as f64 * cs;
                bound = bound.min((q[1] - edge).max(0.0));
            }
            if cy + k < nr - 1 {
                let edge = self.origin[1] + (cy + k + 1) as f64 * cs;
                bound = bound.min((edge - q[1]).max(0.0));
            }
            if bound == f64::INFINITY {
                break;
            }
            if let Some((bd, _)) = best {
                // Shrink the bound slightly to absorb rounding in bin assignment.
                let safe = bound * (1.0 - 1e-9) - 1e-12;
                if safe > 0.0 && bd < safe * safe {
                    break;
                }
            }
            k += 1;
        }
        best.expect("bin grid indexes at least one point").1 as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_points(n: usize, extent: f64, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| {
                [
                    uniform(&mut rng, 0.0, extent),
                    uniform(&mut rng, 0.0, extent),
                ]
            })
            .collect();
        PointSet::new(positions, vec![0.5; n], 1).unwrap()
    }

    fn brute_radius(ps: &PointSet, q: Position, r: f64) -> Vec<u32> {
        (0..ps.len() as u32)
            .filter(|&i| squared_distance(q, ps.positions[i as usize]) <= r * r)
            .collect()
    }

    fn brute_nearest(ps: &PointSet, q: Position) -> usize {
        let mut best = 0;
        for i in 1..ps.len() {
            if squared_distance(q, ps.positions[i]) < squared_distance(q, ps.positions[best]) {
                best = i;
            }
        }
        best
    }

    #[test]
    fn single_point_lives_in_interior_bin() {
        let ps = PointSet::new(vec![[0.0, 0.0]], vec![1.0], 1).unwrap();
        let grid = BinGrid::build(&ps, 1.0).unwrap();
        assert_eq!(grid.dims(), (3, 3));
        assert_eq!(grid.bin(1, 1), &[0]);
        assert_eq!(grid.num_indexed(), 1);
    }

    #[test]
    fn square_corners_are_conserved() {
        let ps = PointSet::new(
            vec![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]],
            vec![0.0; 4],
            1,
        )
        .unwrap();
        let grid = BinGrid::build(&ps, 10.0).unwrap();
        let (nc, nr) = grid.dims();
        let total: usize = (0..nr)
            .flat_map(|r| (0..nc).map(move |c| (c, r)))
            .map(|(c, r)| grid.bin(c, r).len())
            .sum();
        assert_eq!(total, 4);
        for (i, &p) in ps.positions.iter().enumerate() {
            assert_eq!(grid.query_radius(&ps, p, 1e-9), vec![i as u32]);
        }
    }

    #[test]
    fn every_point_indexed_exactly_once() {
        let ps = random_points(1000, 64.0, 7);
        let grid = BinGrid::build(&ps, 4.0).unwrap();
        let (nc, nr) = grid.dims();
        let mut seen = vec![0u32; ps.len()];
        for r in 0..nr {
            for c in 0..nc {
                let bin = grid.bin(c, r);
                assert!(bin.windows(2).all(|w| w[0] < w[1]));
                for &i in bin {
                    seen[i as usize] += 1;
                    assert_eq!(grid.cell_of(ps.positions[i as usize]), (c, r));
                }
            }
        }
        assert_eq!(seen.iter().sum::<u32>(), 1000);
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn invalid_cell_size_rejected() {
        let ps = random_points(3, 1.0, 1);
        for cs in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                BinGrid::build(&ps, cs),
                Err(Error::InvalidCellSize(_))
            ));
        }
    }

    #[test]
    fn radius_query_examples() {
        let ps = PointSet::new(vec![[0.0, 0.0], [10.0, 10.0]], vec![0.0, 1.0], 1).unwrap();
        let grid = BinGrid::build(&ps, 1.0).unwrap();
        assert_eq!(grid.query_radius(&ps, [0.0, 0.0], 1.0), vec![0]);
        assert!(grid.query_radius(&ps, [5.0, 5.0], 7.0).is_empty());
        // Closed ball: a point exactly on the boundary is included.
        assert_eq!(grid.query_radius(&ps, [3.0, 4.0], 5.0), vec![0]);
        // Query far outside the grid.
        assert!(grid.query_radius(&ps, [1e9, -1e9], 3.0).is_empty());
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let ps = random_points(200, 32.0, 11);
        let sigma = 1.5;
        let grid = BinGrid::build(&ps, 3.0 * sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let q = [uniform(&mut rng, -4.0, 36.0), uniform(&mut rng, -4.0, 36.0)];
            assert_eq!(
                grid.query_radius(&ps, q, 3.0 * sigma),
                brute_radius(&ps, q, 3.0 * sigma)
            );
        }
    }

    #[test]
    fn nearest_examples() {
        let single = PointSet::new(vec![[3.0, 4.0]], vec![0.0], 1).unwrap();
        let grid = BinGrid::build(&single, 1.0).unwrap();
        assert_eq!(grid.nearest_point(&single, [-100.0, 50.0]), 0);

        let pair = PointSet::new(vec![[2.0, 0.0], [-2.0, 0.0]], vec![0.0; 2], 1).unwrap();
        let grid = BinGrid::build(&pair, 0.5).unwrap();
        assert_eq!(grid.nearest_point(&pair, [0.0, 0.0]), 0);
        assert_eq!(grid.nearest_point(&pair, [0.0, 7.0]), 0);
    }

    #[test]
    fn nearest_matches_brute_force() {
        let ps = random_points(500, 64.0, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for cs in [0.7, 3.0, 20.0] {
            let grid = BinGrid::build(&ps, cs).unwrap();
            for _ in 0..100 {
                let q = [
                    uniform(&mut rng, -20.0, 84.0),
                    uniform(&mut rng, -20.0, 84.0),
                ];
                assert_eq!(grid.nearest_point(&ps, q), brute_nearest(&ps, q));
            }
        }
    }

    #[test]
    fn widely_spread_points_coarsen_the_grid() {
        let ps = PointSet::new(vec![[0.0, 0.0], [1e7, 1e7]], vec![0.0; 2], 1).unwrap();
        let grid = BinGrid::build(&ps, 0.01).unwrap();
        let (nc, nr) = grid.dims();
        assert!(nc * nr <= MIN_CELL_BUDGET);
        assert_eq!(grid.nearest_point(&ps, [9e6, 9e6]), 1);
        assert_eq!(grid.query_radius(&ps, [1.0, 0.0], 1.0), vec![0]);
    }
}
