//! Weighted norms and inequality checkers for the slit-domain energy space:
//! cell-centered quadrature of the weights `xi^2`, `1/rho`, `rho xi^4`,
//! the thin Poincare and Hardy ratios, the Campanato deviation functional
//! and the Caccioppoli pair.
//!
//! All reductions use pairwise summation over a fixed cell order, so results
//! are deterministic.

use crate::defaults::RATIO_FLOOR;
use crate::dsolve::LinearPoly;
use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geom::{perp_weights, SlitPoint};
use crate::grid::{FieldSample, Frame, Region};
use crate::sparse::pairwise_slice;
use alloc::format;
use alloc::vec::Vec;
use libm::{pow, sqrt};

/// The four integrals of the weighted space over a region.
#[derive(Clone, Copy, Debug, Default)]
pub struct WeightedNorms {
    /// `int xi^2 |grad w|^2`.
    pub energy: f64,
    /// `int w^2 / rho`.
    pub wl2: f64,
    /// `int w^2`.
    pub plain_l2: f64,
    /// `int |grad w|^2`.
    pub plain_energy: f64,
}

/// Per-cell quadrature datum handed to integrand closures: physical center
/// point, interpolated value and the physical-coordinates gradient (packed
/// layout).
pub struct CellPoint {
    pub p: SlitPoint,
    pub value: f64,
    pub grad: [f64; 3],
}

/// Integrate `f(point, value, grad) dx` over `region` with the midpoint rule
/// on the field's grid. In the square-root frame the Jacobian `4 rho` and
/// the gradient transform `J^{-T}` are applied, so `f` always sees physical
/// quantities. Physical-frame cells containing the perp origin average `f`
/// over a 4x4 perp sub-grid (value and gradient frozen at the center) to
/// tame `1/rho`-type weights at the tip.
pub fn integrate(
    w: &FieldSample,
    region: &Region,
    f: &dyn Fn(&CellPoint) -> f64,
) -> f64 {
    let grid = &w.grid;
    let d = grid.d();
    let mut cell_vol = 1.0;
    for a in grid.axes.iter().take(d) {
        cell_vol *= a.h();
    }
    let mut contrib: Vec<f64> = Vec::with_capacity(grid.cell_count());
    for cell in grid.cells() {
        let c = grid.cell_center(&cell);
        let p = grid.physical_point(&c);
        if !region.contains(&p) {
            continue;
        }
        let value = w.cell_value(&cell);
        let graw = w.cell_gradient(&cell);
        let (grad, vol) = match grid.frame {
            Frame::Physical => (graw, cell_vol),
            Frame::SquareRoot => {
                let (xi, eta) = (c[d - 2], c[d - 1]);
                let rho = xi * xi + eta * eta;
                let mut g = graw;
                // J^{-T} = [[xi, -eta], [eta, xi]] / (2 rho) on the perp pair.
                let (gxi, geta) = (graw[d - 2], graw[d - 1]);
                g[d - 2] = (xi * gxi - eta * geta) / (2.0 * rho);
                g[d - 1] = (eta * gxi + xi * geta) / (2.0 * rho);
                (g, 4.0 * rho * cell_vol)
            }
        };
        let cp = CellPoint { p, value, grad };
        if grid.frame == Frame::Physical && cell_touches_tip(grid, &cell) {
            // 4x4 perp-plane sub-quadrature of the integrand weight.
            let hn = grid.axes[d - 2].h();
            let hp = grid.axes[d - 1].h();
            let base = grid.node_coord(&cell);
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let mut q = cp.p;
                    q.xn = base[d - 2] + (a as f64 + 0.5) * hn / 4.0;
                    q.xnp1 = base[d - 1] + (b as f64 + 0.5) * hp / 4.0;
                    s += f(&CellPoint { p: q, value: cp.value, grad: cp.grad });
                }
            }
            contrib.push(vol * s / 16.0);
        } else {
            contrib.push(vol * f(&cp));
        }
    }
    pairwise_slice(&contrib)
}

fn cell_touches_tip(grid: &crate::grid::SlitGrid, cell: &[usize; 3]) -> bool {
    let d = grid.d();
    let lo = grid.node_coord(cell);
    let hn = grid.axes[d - 2].h();
    let hp = grid.axes[d - 1].h();
    lo[d - 2] <= 0.0 && lo[d - 2] + hn >= 0.0 && lo[d - 1] <= 0.0 && lo[d - 1] + hp >= 0.0
}

/// The four weighted integrals over `region`.
pub fn weighted_norms(w: &FieldSample, region: &Region) -> Result<WeightedNorms> {
    let energy = integrate(w, region, &|c| {
        let xi = perp_weights(&c.p).1;
        xi * xi * norm2(&c.grad)
    });
    let wl2 = integrate(w, region, &|c| c.value * c.value / c.p.rho().max(RATIO_FLOOR));
    let plain_l2 = integrate(w, region, &|c| c.value * c.value);
    let plain_energy = integrate(w, region, &|c| norm2(&c.grad));
    let out = WeightedNorms { energy, wl2, plain_l2, plain_energy };
    for v in [out.energy, out.wl2, out.plain_l2, out.plain_energy] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::RegionUnresolved(format!("non-finite integral {v}")));
        }
    }
    Ok(out)
}

fn norm2(g: &[f64; 3]) -> f64 {
    g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
}

/// Thin Poincare ratio `(int w^2/rho) / (int xi^2 |grad w|^2)` for a field
/// supported in `B_r` (enforced by masking nodes outside the ball to zero).
///
/// `0` for the zero field; an error when the energy vanishes but the
/// weighted mass does not.
pub fn check_poincare(w: &FieldSample, r: f64) -> Result<f64> {
    let mut masked = w.clone();
    for idx in 0..masked.values.len() {
        let m = masked.grid.multi(idx);
        if masked.grid.node_point(&m).norm() >= r {
            masked.values[idx] = 0.0;
        }
    }
    let norms = weighted_norms(&masked, &Region::BoxAll)?;
    ratio_or_zero(norms.wl2, norms.energy)
}

/// Hardy ratio `(int (u/xi)^2 / rho) / (int |grad u|^2)` for a field with
/// zero slit trace.
pub fn check_hardy(u: &FieldSample, region: &Region) -> Result<f64> {
    let num = integrate(u, region, &|c| {
        let (rho, xi, _) = perp_weights(&c.p);
        let v = c.value / xi.max(RATIO_FLOOR);
        v * v / rho.max(RATIO_FLOOR)
    });
    let norms = weighted_norms(u, region)?;
    ratio_or_zero(num, norms.plain_energy)
}

fn ratio_or_zero(num: f64, den: f64) -> Result<f64> {
    if den <= 0.0 {
        if num <= 1e-30 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateInput(format!(
            "zero energy with nonzero weighted mass {num}"
        )));
    }
    Ok(num / den)
}

/// Campanato deviation
/// `sigma = sqrt( r^{-(n+2+2 alpha)} int_{B_r(center)} |w - L|^2 / rho )`.
///
/// `center` must lie on the straightened boundary (zero perp part);
/// `r` below 3 grid cells is rejected as unresolvable.
pub fn campanato_deviation(
    w: &FieldSample,
    l: &LinearPoly,
    center: &SlitPoint,
    r: f64,
    alpha: f64,
) -> Result<f64> {
    let d = w.grid.d();
    let h = w.grid.axes[d - 2].h().max(w.grid.axes[d - 1].h());
    if r < 3.0 * h {
        return Err(Error::RegionUnresolved(format!(
            "radius {r} below 3 cells (h = {h})"
        )));
    }
    let region = Region::Ball { center: *center, r };
    let n = w.grid.n as f64;
    // Subtract L at the nodes so fields equal to L give exactly zero
    // (center-evaluating L would leave an O(h^2) curvature mismatch of rho).
    let mut dev = w.clone();
    for idx in 0..dev.values.len() {
        let m = dev.grid.multi(idx);
        dev.values[idx] -= l.eval(&dev.grid.node_point(&m));
    }
    let s2 = integrate(&dev, &region, &|c| {
        c.value * c.value / c.p.rho().max(RATIO_FLOOR)
    });
    Ok(sqrt(s2.max(0.0) * pow(r, -(n + 2.0 + 2.0 * alpha))))
}

/// Caccioppoli pair for the model degenerate equation on `B_r`:
/// `lhs = int_{B_{r/2}} xi^2 |grad w|^2`,
/// `rhs = int_{B_r} (w^2/rho + xi^2 |f|^2 + rho xi^4 g^2)`.
pub fn check_caccioppoli(
    w: &FieldSample,
    f: &dyn VectorField,
    g: &dyn ScalarField,
    r: f64,
) -> Result<(f64, f64)> {
    let n = w.grid.n;
    let inner = Region::ball_origin(n, r / 2.0);
    let outer = Region::ball_origin(n, r);
    let lhs = integrate(w, &inner, &|c| {
        let xi = perp_weights(&c.p).1;
        xi * xi * norm2(&c.grad)
    });
    let rhs = integrate(w, &outer, &|c| {
        let (rho, xi, _) = perp_weights(&c.p);
        let fv = f.eval(&c.p);
        let gv = g.eval(&c.p);
        c.value * c.value / rho.max(RATIO_FLOOR)
            + xi * xi * norm2(&fv)
            + rho * xi * xi * xi * xi * gv * gv
    });
    Ok((lhs, rhs))
}
