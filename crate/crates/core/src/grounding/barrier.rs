use super::grid::{SafetyGrid, TreatUnknown};
use crate::geometry::Vec2;
use crate::safety_filter::BarrierField;
use crate::scalar::Scalar;
use std::io::{self, Write};
use std::sync::{Arc, RwLock};

/// Cells per bucket side in the boundary lookup index.
const BUCKET: usize = 8;

/// Thresholded safe set over a [`SafetyGrid`] with its signed distance field.
#[derive(Debug, Clone)]
pub struct Barrier<T> {
    grid: SafetyGrid<T>,
    tau: T,
    treat_unknown: TreatUnknown,
    safe: Vec<bool>,
    boundary: Vec<(usize, usize)>,
    buckets: Vec<Vec<u32>>,
    bx: usize,
    by: usize,
}

impl<T: Scalar> Barrier<T> {
    pub fn new(grid: SafetyGrid<T>, tau: T, treat_unknown: TreatUnknown) -> Self {
        let mut b = Self {
            grid,
            tau,
            treat_unknown,
            safe: Vec::new(),
            boundary: Vec::new(),
            buckets: Vec::new(),
            bx: 0,
            by: 0,
        };
        b.rebuild();
        b
    }

    pub fn grid(&self) -> &SafetyGrid<T> {
        &self.grid
    }

    /// Mutable counts. Call [`Self::rebuild`] afterwards.
    pub fn grid_mut(&mut self) -> &mut SafetyGrid<T> {
        &mut self.grid
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn treat_unknown(&self) -> TreatUnknown {
        self.treat_unknown
    }

    /// Recomputes the safe set, its boundary and the lookup index.
    pub fn rebuild(&mut self) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        self.safe = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| self.grid.probability(i, j, self.treat_unknown) >= self.tau)
            .collect();
        self.boundary.clear();
        for j in 0..ny {
            for i in 0..nx {
                if self.is_boundary(i, j) {
                    self.boundary.push((i, j));
                }
            }
        }
        self.bx = nx.div_ceil(BUCKET);
        self.by = ny.div_ceil(BUCKET);
        self.buckets = vec![Vec::new(); self.bx * self.by];
        for (k, &(i, j)) in self.boundary.iter().enumerate() {
            self.buckets[(j / BUCKET) * self.bx + i / BUCKET].push(k as u32);
        }
    }

    #[inline]
    pub fn is_safe_cell(&self, i: usize, j: usize) -> bool {
        self.safe[self.grid.idx(i, j)]
    }

    /// Safe cell that is 4-adjacent to an unsafe cell or on the grid rim.
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        if !self.is_safe_cell(i, j) {
            return false;
        }
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
            return true;
        }
        !self.is_safe_cell(i - 1, j)
            || !self.is_safe_cell(i + 1, j)
            || !self.is_safe_cell(i, j - 1)
            || !self.is_safe_cell(i, j + 1)
    }

    pub fn boundary(&self) -> &[(usize, usize)] {
        &self.boundary
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let (i, j) = self.grid.cell_of(p);
        self.is_safe_cell(i, j)
    }

    /// Nearest boundary cell center and its distance, after clamping `p`
    /// into the grid. Equals the brute-force minimum over all boundary cells.
    pub fn nearest_boundary(&self, p: Vec2<T>) -> Option<(Vec2<T>, T)> {
        if self.boundary.is_empty() {
            return None;
        }
        let p = self.grid.clamp_point(p);
        let (ci, cj) = self.grid.cell_of(p);
        let (qi, qj) = ((ci / BUCKET) as i64, (cj / BUCKET) as i64);
        let mut best: Option<(Vec2<T>, T)> = None;
        let max_ring = self.bx.max(self.by) as i64;
        for k in 0..=max_ring {
            for bj in (qj - k)..=(qj + k) {
                if bj < 0 || bj >= self.by as i64 {
                    continue;
                }
                let on_edge_row = bj == qj - k || bj == qj + k;
                let step = if on_edge_row || k == 0 { 1 } else { 2 * k };
                let mut bi = qi - k;
                while bi <= qi + k {
                    if bi >= 0 && bi < self.bx as i64 {
                        for &b in &self.buckets[bj as usize * self.bx + bi as usize] {
                            let (i, j) = self.boundary[b as usize];
                            let c = self.grid.cell_center(i, j);
                            let d = p.dist(c);
                            if best.map_or(true, |(_, bd)| d < bd) {
                                best = Some((c, d));
                            }
                        }
                    }
                    bi += step;
                }
            }
            // Unvisited buckets lie at least (k * BUCKET - 1) cells away.
            if let Some((_, bd)) = best {
                let bound = T::lit((k as f64) * BUCKET as f64 - 1.0) * self.grid.resolution();
                if k >= 1 && bd <= bound {
                    break;
                }
            }
        }
        best
    }

    /// Appends the centers of all boundary cells within `radius` of `p`
    /// (after clamping `p` into the grid) to `out`.
    pub fn boundary_within(&self, p: Vec2<T>, radius: T, out: &mut Vec<Vec2<T>>) {
        if self.boundary.is_empty() || !(radius >= T::zero()) {
            return;
        }
        let p = self.grid.clamp_point(p);
        let span = T::lit(BUCKET as f64) * self.grid.resolution();
        let lo = |x: T, o: T| (((x - radius - o) / span).floor().as_f64()).max(0.0) as usize;
        let hi = |x: T, o: T, n: usize| ((((x + radius - o) / span).floor().as_f64()).max(0.0) as usize).min(n - 1);
        // Bucket b holds cells i in [b*BUCKET, (b+1)*BUCKET), i.e. centers from
        // origin + (b*BUCKET)*res; widen by one bucket for the half-cell offset.
        let o = self.grid.origin();
        let (i0, i1) = (lo(p.x, o.x).saturating_sub(1), (hi(p.x, o.x, self.bx) + 1).min(self.bx - 1));
        let (j0, j1) = (lo(p.y, o.y).saturating_sub(1), (hi(p.y, o.y, self.by) + 1).min(self.by - 1));
        for bj in j0..=j1 {
            for bi in i0..=i1 {
                for &b in &self.buckets[bj * self.bx + bi] {
                    let (i, j) = self.boundary[b as usize];
                    let c = self.grid.cell_center(i, j);
                    if p.dist(c) <= radius {
                        out.push(c);
                    }
                }
            }
        }
    }

    /// Signed distance to the boundary cell centers: positive in the safe
    /// set, negative outside. With an empty safe set the value is minus the
    /// grid diagonal.
    pub fn value(&self, p: Vec2<T>) -> T {
        match self.nearest_boundary(p) {
            Some((_, d)) => {
                if self.contains(p) {
                    d
                } else {
                    -d
                }
            }
            None => -self.diagonal(),
        }
    }

    fn diagonal(&self) -> T {
        let r = self.grid.resolution();
        (T::lit(self.grid.nx() as f64) * r).hypot(T::lit(self.grid.ny() as f64) * r)
    }

    /// Unit gradient of the signed distance, pointing toward increasing `h`.
    /// At a boundary cell center the direction into the safe set is used.
    /// Zero when the safe set is empty.
    pub fn gradient(&self, p: Vec2<T>) -> Vec2<T> {
        let Some((y, _)) = self.nearest_boundary(p) else {
            return Vec2::zero();
        };
        let q = self.grid.clamp_point(p);
        let v = q - y;
        let n = v.norm();
        if n < T::lit(1e-9) {
            return self.inward_normal(y);
        }
        let g = v * (T::one() / n);
        if self.contains(p) {
            g
        } else {
            -g
        }
    }

    /// Direction from a boundary cell toward the safe interior: away from
    /// its unsafe or off-grid 4-neighbors.
    fn inward_normal(&self, c: Vec2<T>) -> Vec2<T> {
        let (i, j) = self.grid.cell_of(c);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut out = Vec2::zero();
        let blocked = |di: i64, dj: i64| {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 || !self.is_safe_cell(a as usize, b as usize)
        };
        for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            if blocked(di, dj) {
                out = out - Vec2::new(T::lit(di as f64), T::lit(dj as f64));
            }
        }
        let n = out.norm();
        if n > T::zero() {
            out * (T::one() / n)
        } else {
            Vec2::new(T::one(), T::zero())
        }
    }

    /// CSV rows `cell_x,cell_y,h` evaluated at cell centers.
    pub fn write_sdf_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "cell_x,cell_y,h")?;
        for j in 0..self.grid.ny() {
            for i in 0..self.grid.nx() {
                writeln!(w, "{},{},{}", i, j, self.value(self.grid.cell_center(i, j)))?;
            }
        }
        Ok(())
    }
}

impl<T: Scalar> BarrierField<T> for Barrier<T> {
    fn value(&self, p: Vec2<T>) -> T {
        Barrier::value(self, p)
    }
    fn gradient(&self, p: Vec2<T>) -> Vec2<T> {
        Barrier::gradient(self, p)
    }
}

/// Single-writer, multiple-reader handle. Readers take an immutable snapshot;
/// a publish swaps the whole barrier, so no reader observes a partial update.
#[derive(Debug, Clone)]
pub struct SharedBarrier<T> {
    inner: Arc<RwLock<Arc<Barrier<T>>>>,
}

impl<T: Scalar> SharedBarrier<T> {
    pub fn new(b: Barrier<T>) -> Self {
        Self {
            inner: Arc::new(RwLock::new(Arc::new(b))),
        }
    }

    pub fn snapshot(&self) -> Arc<Barrier<T>> {
        self.inner.read().expect("barrier lock poisoned").clone()
    }

    pub fn publish(&self, b: Barrier<T>) {
        *self.inner.write().expect("barrier lock poisoned") = Arc::new(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn field(nx: usize, ny: usize, unsafe_cells: &[(usize, usize)]) -> Barrier<f64> {
        let mut g = SafetyGrid::new(0.2, Vec2::zero(), nx, ny).unwrap();
        for i in 0..nx {
            for j in 0..ny {
                g.add_safe(i, j, 1);
            }
        }
        for &(i, j) in unsafe_cells {
            g.add_unsafe(i, j, 5);
        }
        Barrier::new(g, 0.5, TreatUnknown::Safe)
    }

    #[test]
    fn unobserved_grid_boundary_is_rim() {
        let g = SafetyGrid::<f64>::new(0.2, Vec2::zero(), 6, 5).unwrap();
        let b = Barrier::new(g, 0.5, TreatUnknown::Safe);
        assert_eq!(b.boundary().len(), 2 * 6 + 2 * 3);
        assert!(b.boundary().iter().all(|&(i, j)| i == 0 || j == 0 || i == 5 || j == 4));
    }

    #[test]
    fn single_unsafe_cell_has_four_neighbor_boundary() {
        let b = field(11, 11, &[(5, 5)]);
        let inner: Vec<_> = b
            .boundary()
            .iter()
            .copied()
            .filter(|&(i, j)| i > 0 && j > 0 && i < 10 && j < 10)
            .collect();
        assert_eq!(inner, vec![(5, 4), (4, 5), (6, 5), (5, 6)]);
    }

    #[test]
    fn value_at_boundary_center_is_zero() {
        let b = field(11, 11, &[(5, 5)]);
        assert_eq!(b.value(b.grid().cell_center(5, 4)), 0.0);
        // Unsafe cell center is one cell from its neighbors.
        assert_abs_diff_eq!(b.value(b.grid().cell_center(5, 5)), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn ring_of_radius_five() {
        // Safe disc whose boundary ring sits 5 cells from the center.
        let n = 21;
        let c = 10i64;
        let mut unsafe_cells = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (di, dj) = (i as i64 - c, j as i64 - c);
                if di.abs().max(dj.abs()) > 5 {
                    unsafe_cells.push((i, j));
                }
            }
        }
        let b = field(n, n, &unsafe_cells);
        let x = b.grid().cell_center(10, 10);
        assert_abs_diff_eq!(b.value(x), 1.0, epsilon = 1e-12);
        // Two cells outside the safe square.
        let y = b.grid().cell_center(10, 17);
        assert_abs_diff_eq!(b.value(y), -0.4, epsilon = 1e-12);
        let g = b.gradient(y);
        assert_abs_diff_eq!(g.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.y, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_direction_examples() {
        // Boundary at the left column: safe x to its right has gradient +x.
        let unsafe_cells: Vec<_> = (0..11).map(|j| (0, j)).collect();
        let b = field(11, 11, &unsafe_cells);
        let g = b.gradient(b.grid().cell_center(4, 5));
        assert_abs_diff_eq!(g.x, 1.0, epsilon = 1e-12);
        // On the boundary: inward normal, away from the unsafe column.
        let g = b.gradient(b.grid().cell_center(1, 5));
        assert_abs_diff_eq!(g.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-12);
        // In the unsafe column: points toward safety.
        let g = b.gradient(b.grid().cell_center(0, 5) - Vec2::new(0.0, 0.0));
        assert!(g.x > 0.99);
    }

    #[test]
    fn boundary_within_matches_scan() {
        let cells: Vec<_> = (0..40).flat_map(|i| [(i, 3 + i % 7), (i / 2, 30)]).collect();
        let b = field(40, 35, &cells);
        for (x, y, r) in [(1.0, 1.0, 0.5), (4.1, 3.3, 1.3), (7.9, 6.9, 0.0), (-3.0, 2.0, 4.0), (4.0, 4.0, 20.0)] {
            let p = Vec2::new(x, y);
            let mut got = Vec::new();
            b.boundary_within(p, r, &mut got);
            let q = b.grid().clamp_point(p);
            let mut want: Vec<_> = b
                .boundary()
                .iter()
                .map(|&(i, j)| b.grid().cell_center(i, j))
                .filter(|c| q.dist(*c) <= r)
                .collect();
            let key = |v: &Vec2<f64>| (v.x.to_bits(), v.y.to_bits());
            got.sort_by_key(key);
            want.sort_by_key(key);
            assert_eq!(got, want, "p = {p:?}, r = {r}");
        }
    }

    #[test]
    fn empty_safe_set() {
        let mut g = SafetyGrid::<f64>::new(0.2, Vec2::zero(), 3, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                g.add_unsafe(i, j, 1);
            }
        }
        let b = Barrier::new(g, 0.5, TreatUnknown::Safe);
        assert!(b.value(Vec2::new(0.2, 0.2)) < 0.0);
        assert_eq!(b.gradient(Vec2::new(0.2, 0.2)), Vec2::zero());
    }

    #[test]
    fn shared_snapshot_is_stable() {
        let shared = SharedBarrier::new(field(5, 5, &[]));
        let before = shared.snapshot();
        shared.publish(field(5, 5, &[(2, 2)]));
        let after = shared.snapshot();
        assert!(before.is_safe_cell(2, 2));
        assert!(!after.is_safe_cell(2, 2));
    }

    #[test]
    fn sdf_csv_has_header_and_rows() {
        let b = field(3, 2, &[]);
        let mut out = Vec::new();
        b.write_sdf_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 7);
        assert!(s.starts_with("cell_x,cell_y,h"));
    }
}
