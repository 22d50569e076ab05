use super::predicate::{Operator, Predicate};
use crate::geometry::{convex_hull, Vec2};
use std::collections::HashMap;

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("mask is {got:?}, expected {expected:?}")]
pub struct DimensionMismatch {
    pub expected: (usize, usize),
    pub got: (usize, usize),
}

impl PixelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                m.data[v * width + u] = f(u, v);
            }
        }
        m
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask data length");
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.data[v * self.width + u] = on;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|b| *b)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<(), DimensionMismatch> {
        if self.dims() == (width, height) {
            Ok(())
        } else {
            Err(DimensionMismatch {
                expected: (width, height),
                got: self.dims(),
            })
        }
    }

    /// Set pixels as `(u, v)`.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(k, _)| (k % w, k / w))
    }

    pub fn union_with(&mut self, o: &PixelMask) {
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a |= *b;
        }
    }

    pub fn subtract(&mut self, o: &PixelMask) {
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a &= !*b;
        }
    }

    /// Whether every set pixel of `o` is set here.
    pub fn contains(&self, o: &PixelMask) -> bool {
        self.data.iter().zip(&o.data).all(|(a, b)| *a || !*b)
    }
}

/// Mask of pixels whose label equals `class`.
pub fn class_mask(labels: &[u16], width: usize, height: usize, class: u16) -> PixelMask {
    PixelMask::from_vec(width, height, labels.iter().map(|l| *l == class).collect())
}

/// Square dilation with side `side`: every set pixel marks the block of
/// offsets `-(side/2) ..= side - 1 - side/2` in both axes. Separable, using
/// running counts per row then per column.
pub fn dilate_square(mask: &PixelMask, side: usize) -> PixelMask {
    if side <= 1 {
        return mask.clone();
    }
    let lo = side / 2;
    let hi = side - 1 - side / 2;
    let (w, h) = mask.dims();
    // out(p) = any in(q) with q in [p - hi, p + lo]
    let pass = |get: &dyn Fn(usize) -> bool, n: usize, out: &mut dyn FnMut(usize, bool)| {
        let mut prefix = vec![0u32; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + get(i) as u32;
        }
        for p in 0..n {
            let a = p.saturating_sub(hi);
            let b = (p + lo).min(n - 1);
            out(p, prefix[b + 1] > prefix[a]);
        }
    };
    let mut rows = PixelMask::new(w, h);
    for v in 0..h {
        pass(&|u| mask.get(u, v), w, &mut |u, on| rows.set(u, v, on));
    }
    let mut out = PixelMask::new(w, h);
    for u in 0..w {
        pass(&|v| rows.get(u, v), h, &mut |v, on| out.set(u, v, on));
    }
    out
}

/// Filled convex hull of the set pixel centers. Collinear input fills the
/// segment between the extreme pixels, a single pixel fills itself.
pub fn fill_convex_hull(mask: &PixelMask) -> PixelMask {
    let (w, h) = mask.dims();
    // Only the extreme pixel of each row can be a hull vertex.
    let mut pts: Vec<Vec2<f64>> = Vec::new();
    for v in 0..h {
        let row = &mask.as_slice()[v * w..(v + 1) * w];
        if let Some(first) = row.iter().position(|b| *b) {
            let last = row.iter().rposition(|b| *b).expect("row has a set pixel");
            pts.push(Vec2::new(first as f64, v as f64));
            if last != first {
                pts.push(Vec2::new(last as f64, v as f64));
            }
        }
    }
    let mut out = PixelMask::new(w, h);
    let hull = convex_hull(&pts);
    if hull.is_empty() {
        return out;
    }
    let n = hull.len();
    let edges: Vec<(Vec2<f64>, Vec2<f64>)> = if n == 1 {
        vec![(hull[0], hull[0])]
    } else {
        (0..n).map(|i| (hull[i], hull[(i + 1) % n])).collect()
    };
    let ymin = hull.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = hull.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    const TOL: f64 = 1e-9;
    for v in (ymin.round() as usize)..=(ymax.round() as usize) {
        let y = v as f64;
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        for &(a, b) in &edges {
            let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
            if y < y0 - TOL || y > y1 + TOL {
                continue;
            }
            if (b.y - a.y).abs() < TOL {
                xmin = xmin.min(a.x.min(b.x));
                xmax = xmax.max(a.x.max(b.x));
            } else {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                xmin = xmin.min(x);
                xmax = xmax.max(x);
            }
        }
        if xmin > xmax {
            continue;
        }
        let u0 = (xmin - TOL).ceil().max(0.0) as usize;
        let u1 = ((xmax + TOL).floor() as usize).min(w - 1);
        for u in u0..=u1 {
            out.set(u, v, true);
        }
    }
    out
}

/// Result of applying one spatial operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorOutput {
    pub mask: PixelMask,
    /// The predicate's class was not available for grounding.
    pub grounding_failure: bool,
}

pub const DEFAULT_DILATION_PX: usize = 50;

/// Grounds a predicate in image space. Unknown classes yield an empty mask
/// and a grounding failure.
pub fn apply_operator(
    pred: &Predicate,
    class_masks: &HashMap<String, PixelMask>,
    dims: (usize, usize),
    dilation_px: usize,
) -> OperatorOutput {
    let Some(m) = class_masks.get(&pred.class_label) else {
        return OperatorOutput {
            mask: PixelMask::new(dims.0, dims.1),
            grounding_failure: true,
        };
    };
    let mask = match pred.operator {
        Operator::On | Operator::Near => m.clone(),
        Operator::Around => dilate_square(m, dilation_px),
        Operator::Between => fill_convex_hull(m),
    };
    OperatorOutput {
        mask,
        grounding_failure: false,
    }
}

/// Image-space partition: `(union safe) \ (union unsafe)` and the unsafe union.
pub fn compose_image_safe_set(
    safe: &[PixelMask],
    unsafe_: &[PixelMask],
    width: usize,
    height: usize,
) -> Result<(PixelMask, PixelMask), DimensionMismatch> {
    let mut s = PixelMask::new(width, height);
    let mut u = PixelMask::new(width, height);
    for m in safe {
        m.check_dims(width, height)?;
        s.union_with(m);
    }
    for m in unsafe_ {
        m.check_dims(width, height)?;
        u.union_with(m);
    }
    s.subtract(&u);
    Ok((s, u))
}
