use crate::geometry::Vec2;
use crate::scalar::Scalar;
use std::io::{self, BufRead, Write};

/// Policy for cells with no observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatUnknown {
    #[default]
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid resolution must be positive")]
    Resolution,
    #[error("grid extent must be at least 1x1")]
    Extent,
    #[error("snapshot parse error: {0}")]
    Snapshot(String),
}

/// Planar grid of safe/unsafe observation counts. `origin` is the center of
/// cell `(0, 0)`; cell `(i, j)` is centered at `origin + (i, j) * resolution`
/// with `i` along world x. Storage is row-major over `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyGrid<T> {
    resolution: T,
    origin: Vec2<T>,
    nx: usize,
    ny: usize,
    n_safe: Vec<u32>,
    n_unsafe: Vec<u32>,
}

impl<T: Scalar> SafetyGrid<T> {
    pub fn new(resolution: T, origin: Vec2<T>, nx: usize, ny: usize) -> Result<Self, GridError> {
        if !(resolution > T::zero() && resolution.is_finite()) {
            return Err(GridError::Resolution);
        }
        if nx == 0 || ny == 0 {
            return Err(GridError::Extent);
        }
        Ok(Self {
            resolution,
            origin,
            nx,
            ny,
            n_safe: vec![0; nx * ny],
            n_unsafe: vec![0; nx * ny],
        })
    }

    /// Grid covering `[lo - margin, hi + margin]`.
    pub fn covering(lo: Vec2<T>, hi: Vec2<T>, margin: T, resolution: T) -> Result<Self, GridError> {
        if !(resolution > T::zero()) {
            return Err(GridError::Resolution);
        }
        let origin = Vec2::new(lo.x - margin, lo.y - margin);
        let cells = |a: T, b: T| ((b - a + margin * T::two()) / resolution).ceil().as_f64() as usize + 1;
        Self::new(resolution, origin, cells(lo.x, hi.x), cells(lo.y, hi.y))
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }
    pub fn origin(&self) -> Vec2<T> {
        self.origin
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2<T> {
        Vec2::new(
            self.origin.x + T::lit(i as f64) * self.resolution,
            self.origin.y + T::lit(j as f64) * self.resolution,
        )
    }

    /// Unclamped cell coordinates of a point.
    pub fn cell_of_unclamped(&self, p: Vec2<T>) -> (i64, i64) {
        let f = |x: T, o: T| ((x - o) / self.resolution).round().as_f64() as i64;
        (f(p.x, self.origin.x), f(p.y, self.origin.y))
    }

    pub fn in_extent(&self, p: Vec2<T>) -> bool {
        let (i, j) = self.cell_of_unclamped(p);
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny
    }

    /// Cell containing `p`, clamped into the extent.
    pub fn cell_of(&self, p: Vec2<T>) -> (usize, usize) {
        let (i, j) = self.cell_of_unclamped(p);
        (
            i.clamp(0, self.nx as i64 - 1) as usize,
            j.clamp(0, self.ny as i64 - 1) as usize,
        )
    }

    /// Clamps a point to the rectangle spanned by the cell centers.
    pub fn clamp_point(&self, p: Vec2<T>) -> Vec2<T> {
        let hi = self.cell_center(self.nx - 1, self.ny - 1);
        Vec2::new(p.x.max(self.origin.x).min(hi.x), p.y.max(self.origin.y).min(hi.y))
    }

    pub fn counts(&self, i: usize, j: usize) -> (u32, u32) {
        let k = self.idx(i, j);
        (self.n_safe[k], self.n_unsafe[k])
    }

    pub fn add_safe(&mut self, i: usize, j: usize, n: u32) {
        let k = self.idx(i, j);
        self.n_safe[k] = self.n_safe[k].saturating_add(n);
    }

    pub fn add_unsafe(&mut self, i: usize, j: usize, n: u32) {
        let k = self.idx(i, j);
        self.n_unsafe[k] = self.n_unsafe[k].saturating_add(n);
    }

    /// `n_safe / (n_safe + n_unsafe)`, or the unknown-cell default.
    pub fn probability(&self, i: usize, j: usize, unknown: TreatUnknown) -> T {
        let (s, u) = self.counts(i, j);
        if s + u == 0 {
            return match unknown {
                TreatUnknown::Safe => T::one(),
                TreatUnknown::Unsafe => T::zero(),
            };
        }
        T::lit(s as f64) / T::lit((s as f64) + (u as f64))
    }

    pub fn observed_cells(&self) -> usize {
        self.n_safe
            .iter()
            .zip(&self.n_unsafe)
            .filter(|(s, u)| **s + **u > 0)
            .count()
    }

    /// Text header followed by one `n_safe n_unsafe` line per cell, row-major.
    pub fn write_snapshot<W: Write>(&self, mut w: W, tau: T) -> io::Result<()> {
        writeln!(w, "resolution {}", self.resolution)?;
        writeln!(w, "origin {} {}", self.origin.x, self.origin.y)?;
        writeln!(w, "extent {} {}", self.nx, self.ny)?;
        writeln!(w, "tau {}", tau)?;
        for k in 0..self.nx * self.ny {
            writeln!(w, "{} {}", self.n_safe[k], self.n_unsafe[k])?;
        }
        Ok(())
    }

    /// Inverse of [`Self::write_snapshot`]; returns the grid and `tau`.
    pub fn read_snapshot<R: BufRead>(r: R) -> Result<(Self, T), GridError> {
        let bad = |m: &str| GridError::Snapshot(m.to_string());
        let mut lines = r.lines().map(|l| l.map_err(|e| GridError::Snapshot(e.to_string())));
        let mut header = |key: &str| -> Result<Vec<f64>, GridError> {
            let l = lines.next().ok_or_else(|| bad("truncated header"))??;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            it.map(|t| t.parse::<f64>().map_err(|_| bad("number"))).collect()
        };
        let res = header("resolution")?;
        let org = header("origin")?;
        let ext = header("extent")?;
        let tau = header("tau")?;
        if res.len() != 1 || org.len() != 2 || ext.len() != 2 || tau.len() != 1 {
            return Err(bad("header arity"));
        }
        let mut g = Self::new(
            T::lit(res[0]),
            Vec2::new(T::lit(org[0]), T::lit(org[1])),
            ext[0] as usize,
            ext[1] as usize,
        )?;
        for k in 0..g.nx * g.ny {
            let l = lines.next().ok_or_else(|| bad("truncated counts"))??;
            let mut it = l.split_whitespace().map(|t| t.parse::<u32>());
            match (it.next(), it.next()) {
                (Some(Ok(s)), Some(Ok(u))) => {
                    g.n_safe[k] = s;
                    g.n_unsafe[k] = u;
                }
                _ => return Err(bad("count line")),
            }
        }
        Ok((g, T::lit(tau[0])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_examples() {
        let mut g = SafetyGrid::<f64>::new(0.2, Vec2::zero(), 4, 4).unwrap();
        g.add_safe(1, 1, 3);
        g.add_unsafe(1, 1, 1);
        assert_eq!(g.probability(1, 1, TreatUnknown::Safe), 0.75);
        g.add_unsafe(2, 2, 5);
        assert_eq!(g.probability(2, 2, TreatUnknown::Safe), 0.0);
        assert_eq!(g.probability(0, 0, TreatUnknown::Safe), 1.0);
        assert_eq!(g.probability(0, 0, TreatUnknown::Unsafe), 0.0);
    }

    #[test]
    fn cell_lookup_and_clamp() {
        let g = SafetyGrid::<f64>::new(0.2, Vec2::new(1.0, -1.0), 10, 5).unwrap();
        assert_eq!(g.cell_of(Vec2::new(1.0, -1.0)), (0, 0));
        assert_eq!(g.cell_of(Vec2::new(1.29, -0.71)), (1, 1));
        assert_eq!(g.cell_of(Vec2::new(-50.0, 50.0)), (0, 4));
        assert!(!g.in_extent(Vec2::new(-50.0, 0.0)));
        assert_eq!(g.idx(3, 2), 23);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut g = SafetyGrid::<f64>::new(0.2, Vec2::new(-1.5, 2.0), 3, 2).unwrap();
        g.add_safe(2, 1, 7);
        g.add_unsafe(0, 0, 2);
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf, 0.5).unwrap();
        let (h, tau) = SafetyGrid::<f64>::read_snapshot(&buf[..]).unwrap();
        assert_eq!(h, g);
        assert_eq!(tau, 0.5);
    }

    #[test]
    fn invalid_grids() {
        assert!(SafetyGrid::<f64>::new(0.0, Vec2::zero(), 1, 1).is_err());
        assert!(SafetyGrid::<f64>::new(0.2, Vec2::zero(), 0, 1).is_err());
    }
}
