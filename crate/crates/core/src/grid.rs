//! Tensor grids over boxes in physical `(x^T, x_n, x_{n+1})` or square-root
//! `(x^T, xi, eta)` coordinates, and scalar fields sampled on their nodes.
//!
//! Coordinates use the packed layout of [`crate::coeff::pack_point`]:
//! `[x_1, ..., x_{n-1}, x_n, x_{n+1}]` (or `[..., xi, eta]`), `d = n + 1`.

use crate::coeff::{pack_point, unpack_point};
use crate::error::{Error, Result};
use crate::geom::{inverse_map, perp_weights, MappedPoint, SlitPoint, MAX_T};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// Coordinate frame of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// `(x^T, x_n, x_{n+1})`; the slit is the ray `{x_n < 0, x_{n+1} = 0}`.
    Physical,
    /// `(x^T, xi, eta)`; the slit is the flat boundary `{xi = 0}`.
    SquareRoot,
}

/// Uniform axis with `m` cells on `[min, max]`.
#[derive(Clone, Copy, Debug)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub m: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, m: usize) -> Self {
        Axis { min, max, m }
    }

    pub fn h(&self) -> f64 {
        (self.max - self.min) / self.m as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.h()
    }

    /// True iff the axis is symmetric about 0 with a node plane at 0.
    pub fn symmetric(&self) -> bool {
        (self.min + self.max).abs() < 1e-14 * (self.max - self.min).abs() && self.m % 2 == 0
    }
}

/// Tensor grid; `axes.len() == n + 1`.
#[derive(Clone, Debug)]
pub struct SlitGrid {
    pub n: usize,
    pub frame: Frame,
    pub axes: Vec<Axis>,
}

impl SlitGrid {
    pub fn new(n: usize, frame: Frame, axes: Vec<Axis>) -> Result<Self> {
        if n == 0 || n > 2 || axes.len() != n + 1 {
            return Err(Error::GridMismatch(format!(
                "need n in {{1, 2}} and {} axes, got n = {n}, {} axes",
                n + 1,
                axes.len()
            )));
        }
        for a in &axes {
            if a.m < 2 || !(a.max > a.min) {
                return Err(Error::GridMismatch("axis needs max > min and >= 2 cells".into()));
            }
        }
        if frame == Frame::SquareRoot && axes[n - 1].min < 0.0 {
            return Err(Error::GridMismatch("square-root frame requires xi >= 0".into()));
        }
        Ok(SlitGrid { n, frame, axes })
    }

    /// Uniform box `[lo, hi]^d`-style grid with `m` cells per axis.
    pub fn uniform(n: usize, frame: Frame, lo: &[f64], hi: &[f64], m: usize) -> Result<Self> {
        let axes = (0..n + 1).map(|i| Axis::new(lo[i], hi[i], m)).collect();
        SlitGrid::new(n, frame, axes)
    }

    pub fn d(&self) -> usize {
        self.n + 1
    }

    /// Nodes per axis.
    pub fn shape(&self) -> [usize; 3] {
        let mut s = [1; 3];
        for (i, a) in self.axes.iter().enumerate() {
            s[i] = a.m + 1;
        }
        s
    }

    pub fn node_count(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.m).product()
    }

    /// Lexicographic node index (last axis fastest).
    pub fn idx(&self, multi: &[usize; 3]) -> usize {
        let s = self.shape();
        (multi[0] * s[1] + multi[1]) * s[2] + multi[2]
    }

    pub fn multi(&self, idx: usize) -> [usize; 3] {
        let s = self.shape();
        [idx / (s[1] * s[2]), (idx / s[2]) % s[1], idx % s[2]]
    }

    pub fn node_coord(&self, multi: &[usize; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (i, a) in self.axes.iter().enumerate() {
            c[i] = a.node(multi[i]);
        }
        c
    }

    /// Interpret frame coordinates as a physical-space point.
    pub fn physical_point(&self, coords: &[f64; 3]) -> SlitPoint {
        let d = self.d();
        match self.frame {
            Frame::Physical => unpack_point(coords, d),
            Frame::SquareRoot => {
                let mut xt = [0.0; MAX_T];
                xt[..d - 2].copy_from_slice(&coords[..d - 2]);
                let m = MappedPoint { xt, nt: d - 2, xi: coords[d - 2].max(0.0), eta: coords[d - 1] };
                inverse_map(&m).expect("xi >= 0 by construction")
            }
        }
    }

    pub fn node_point(&self, multi: &[usize; 3]) -> SlitPoint {
        self.physical_point(&self.node_coord(multi))
    }

    /// Frame coordinates of a physical point.
    pub fn frame_coords(&self, p: &SlitPoint) -> [f64; 3] {
        match self.frame {
            Frame::Physical => pack_point(p),
            Frame::SquareRoot => {
                let d = self.d();
                let (_, xi, eta) = perp_weights(p);
                let mut c = [0.0; 3];
                c[..d - 2].copy_from_slice(&p.xt[..d - 2]);
                c[d - 2] = xi;
                c[d - 1] = eta;
                c
            }
        }
    }

    /// Cell containing `coords` plus local coordinates in `[0, 1]^d`;
    /// `None` outside the box (boundary included via clamping of the index).
    pub fn locate(&self, coords: &[f64; 3]) -> Option<([usize; 3], [f64; 3])> {
        let mut cell = [0usize; 3];
        let mut loc = [0.0; 3];
        for (i, a) in self.axes.iter().enumerate() {
            let t = (coords[i] - a.min) / a.h();
            if t < -1e-12 || t > a.m as f64 + 1e-12 {
                return None;
            }
            let mut c = libm::floor(t) as isize;
            c = c.clamp(0, a.m as isize - 1);
            cell[i] = c as usize;
            loc[i] = (t - c as f64).clamp(0.0, 1.0);
        }
        Some((cell, loc))
    }

    pub fn is_outer_boundary(&self, multi: &[usize; 3]) -> bool {
        for (i, a) in self.axes.iter().enumerate() {
            if multi[i] == 0 || multi[i] == a.m {
                // In the square-root frame the {xi = 0} face is the slit,
                // not outer boundary.
                if self.frame == Frame::SquareRoot && i == self.d() - 2 && multi[i] == 0 {
                    continue;
                }
                return true;
            }
        }
        false
    }

    /// Slit nodes: `{xi = 0}` face in the square-root frame; thin-plane
    /// nodes with `x_n < 0` in the physical frame.
    pub fn is_slit_node(&self, multi: &[usize; 3]) -> bool {
        let d = self.d();
        match self.frame {
            Frame::SquareRoot => {
                self.axes[d - 2].min == 0.0 && multi[d - 2] == 0
            }
            Frame::Physical => {
                let c = self.node_coord(multi);
                c[d - 1] == 0.0 && c[d - 2] < 0.0
            }
        }
    }

    /// Corner node indices of a cell, lexicographic over the `2^d` corners
    /// (unused corners repeat index 0 slots for d = 2).
    pub fn cell_corners(&self, cell: &[usize; 3]) -> ([usize; 8], usize) {
        let d = self.d();
        let mut out = [0usize; 8];
        let count = 1 << d;
        for k in 0..count {
            let mut m = *cell;
            for i in 0..d {
                if (k >> (d - 1 - i)) & 1 == 1 {
                    m[i] += 1;
                }
            }
            out[k] = self.idx(&m);
        }
        (out, count)
    }

    pub fn cell_center(&self, cell: &[usize; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (i, a) in self.axes.iter().enumerate() {
            c[i] = a.node(cell[i]) + 0.5 * a.h();
            if i >= self.d() {
                c[i] = 0.0;
            }
        }
        c
    }

    /// Iterate all cells as multi-indices.
    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let ms = [self.axes[0].m, self.axes[1].m, if self.d() > 2 { self.axes[2].m } else { 1 }];
        (0..ms[0]).flat_map(move |i| {
            (0..ms[1]).flat_map(move |j| (0..ms[2]).map(move |k| [i, j, k]))
        })
    }
}

/// Declared parity of a field in the last coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// Scalar field sampled on the nodes of a grid.
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub grid: Arc<SlitGrid>,
    pub values: Vec<f64>,
    pub parity: Parity,
}

impl FieldSample {
    pub fn zeros(grid: Arc<SlitGrid>) -> Self {
        let n = grid.node_count();
        FieldSample { grid, values: vec![0.0; n], parity: Parity::None }
    }

    /// Sample an analytic function of the physical point at every node.
    pub fn from_fn(grid: Arc<SlitGrid>, f: impl Fn(&SlitPoint) -> f64) -> Self {
        let mut out = FieldSample::zeros(grid);
        for idx in 0..out.values.len() {
            let m = out.grid.multi(idx);
            out.values[idx] = f(&out.grid.node_point(&m));
        }
        out
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    /// Multilinear interpolation at frame coordinates; `None` outside.
    pub fn interp(&self, coords: &[f64; 3]) -> Option<f64> {
        let (cell, loc) = self.grid.locate(coords)?;
        let (corners, count) = self.grid.cell_corners(&cell);
        let d = self.grid.d();
        let mut s = 0.0;
        for k in 0..count {
            let mut w = 1.0;
            for i in 0..d {
                let bit = (k >> (d - 1 - i)) & 1;
                w *= if bit == 1 { loc[i] } else { 1.0 - loc[i] };
            }
            s += w * self.values[corners[k]];
        }
        Some(s)
    }

    /// Interpolated value at a physical point; `None` outside the grid box.
    pub fn eval_physical(&self, p: &SlitPoint) -> Option<f64> {
        self.interp(&self.grid.frame_coords(p))
    }

    /// Q1 value at a cell center: corner average.
    pub fn cell_value(&self, cell: &[usize; 3]) -> f64 {
        let (corners, count) = self.grid.cell_corners(cell);
        let mut s = 0.0;
        for &c in corners.iter().take(count) {
            s += self.values[c];
        }
        s / count as f64
    }

    /// Q1 gradient at a cell center, in frame coordinates: per direction,
    /// the mean of the `2^{d-1}` edge differences divided by the spacing.
    /// Never differences across the slit when the grid has a node plane on it.
    pub fn cell_gradient(&self, cell: &[usize; 3]) -> [f64; 3] {
        let (corners, count) = self.grid.cell_corners(cell);
        let d = self.grid.d();
        let mut g = [0.0; 3];
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..count {
                let bit = (k >> (d - 1 - i)) & 1;
                let sign = if bit == 1 { 1.0 } else { -1.0 };
                s += sign * self.values[corners[k]];
            }
            g[i] = s / ((count / 2) as f64 * self.grid.axes[i].h());
        }
        g
    }

    /// Verify declared parity on mirrored node pairs (requires the last
    /// axis to be symmetric about 0).
    pub fn check_parity(&self) -> Result<()> {
        if self.parity == Parity::None {
            return Ok(());
        }
        let d = self.grid.d();
        let last = &self.grid.axes[d - 1];
        if !last.symmetric() {
            return Err(Error::GridMismatch(
                "parity declared but last axis not symmetric about 0".into(),
            ));
        }
        let sign = if self.parity == Parity::Even { 1.0 } else { -1.0 };
        for idx in 0..self.values.len() {
            let mut m = self.grid.multi(idx);
            m[d - 1] = last.m - m[d - 1];
            let mirror = self.values[self.grid.idx(&m)];
            if (self.values[idx] - sign * mirror).abs() > 1e-12 {
                return Err(Error::GridMismatch(format!(
                    "parity violated at node {idx}: {} vs {}",
                    self.values[idx], mirror
                )));
            }
        }
        Ok(())
    }

    /// Pointwise linear combination `self + t * other` on a shared grid.
    pub fn axpy(&self, t: f64, other: &FieldSample) -> Result<FieldSample> {
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch("field lengths differ".into()));
        }
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v += t * o;
        }
        out.parity = if self.parity == other.parity { self.parity } else { Parity::None };
        Ok(out)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Integration / evaluation region in physical coordinates.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    Ball { center: SlitPoint, r: f64 },
    BoxAll,
}

impl Region {
    pub fn ball_origin(n: usize, r: f64) -> Region {
        Region::Ball {
            center: SlitPoint { xt: [0.0; MAX_T], nt: n - 1, xn: 0.0, xnp1: 0.0 },
            r,
        }
    }

    pub fn contains(&self, p: &SlitPoint) -> bool {
        match self {
            Region::Ball { center, r } => p.dist(center) <= *r,
            Region::BoxAll => true,
        }
    }
}
