//! Slit-domain geometry.
//!
//! Points live in `R^{n+1}` split as `x = (x^T, x^perp)` with
//! `x^perp = (x_n, x_{n+1})` and the slit `S = {x_n < 0, x_{n+1} = 0}`.
//! The square-root map `xi + i eta = (x_n + i x_{n+1})^{1/2}` opens the slit
//! onto the flat boundary `{xi = 0}`; `xi` is also the model 1/2-homogeneous
//! solution vanishing on `S`, and `rho = |x^perp|`.

use crate::coeff::Mat;
use crate::error::{Error, Result};
use alloc::format;
use alloc::string::String;
use libm::sqrt;

/// Maximum number of tangential coordinates (`n - 1`); the lab runs `n <= 2`.
pub const MAX_T: usize = 2;

/// A point of the slit domain in physical coordinates.
///
/// The sign of `xnp1` doubles as the side flag for slit trace points:
/// `+0.0` is the upper lip, `-0.0` the lower lip. `x_{n+1}`-even fields make
/// the flag irrelevant, which is asserted in tests rather than assumed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlitPoint {
    pub xt: [f64; MAX_T],
    /// Number of tangential coordinates in use (`n - 1`).
    pub nt: usize,
    pub xn: f64,
    pub xnp1: f64,
}

impl SlitPoint {
    /// Point for `n = 1` (no tangential coordinates).
    pub fn d2(xn: f64, xnp1: f64) -> Self {
        SlitPoint { xt: [0.0; MAX_T], nt: 0, xn, xnp1 }
    }

    /// Point for `n = 2` (one tangential coordinate).
    pub fn d3(x1: f64, xn: f64, xnp1: f64) -> Self {
        SlitPoint { xt: [x1, 0.0], nt: 1, xn, xnp1 }
    }

    pub fn n(&self) -> usize {
        self.nt + 1
    }

    pub fn perp(&self) -> [f64; 2] {
        [self.xn, self.xnp1]
    }

    /// `rho = |x^perp|`.
    pub fn rho(&self) -> f64 {
        libm::hypot(self.xn, self.xnp1)
    }

    /// Euclidean norm of the full point.
    pub fn norm(&self) -> f64 {
        let mut s = self.xn * self.xn + self.xnp1 * self.xnp1;
        for i in 0..self.nt {
            s += self.xt[i] * self.xt[i];
        }
        sqrt(s)
    }

    pub fn dist(&self, other: &SlitPoint) -> f64 {
        let mut s = (self.xn - other.xn) * (self.xn - other.xn)
            + (self.xnp1 - other.xnp1) * (self.xnp1 - other.xnp1);
        for i in 0..self.nt.max(other.nt) {
            let d = self.xt[i] - other.xt[i];
            s += d * d;
        }
        sqrt(s)
    }

    /// True iff the point lies on the (closed-from-both-sides) slit.
    pub fn on_slit(&self) -> bool {
        self.xn < 0.0 && self.xnp1 == 0.0
    }

    /// Side of the thin plane, honouring the signed-zero flag.
    fn perp_side(&self) -> i8 {
        if self.xnp1.is_sign_negative() {
            -1
        } else {
            1
        }
    }
}

/// `(rho, xi, eta)` at a point: `rho = |x^perp|` and
/// `xi + i eta = (x_n + i x_{n+1})^{1/2}` with the principal branch
/// (`xi >= 0`, branch cut along `S`, `eta` carrying the sign of `x_{n+1}`).
pub fn perp_weights(p: &SlitPoint) -> (f64, f64, f64) {
    let rho = p.rho();
    let xi = sqrt(((p.xn + rho) / 2.0).max(0.0));
    let eta_mag = sqrt(((rho - p.xn) / 2.0).max(0.0));
    let eta = if p.perp_side() < 0 { -eta_mag } else { eta_mag };
    (rho, xi, eta)
}

/// `xi(p)` alone: the model 1/2-homogeneous solution.
pub fn xi_of(p: &SlitPoint) -> f64 {
    perp_weights(p).1
}

/// A point in square-root coordinates `(x^T, xi, eta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappedPoint {
    pub xt: [f64; MAX_T],
    pub nt: usize,
    pub xi: f64,
    pub eta: f64,
}

impl MappedPoint {
    pub fn rho(&self) -> f64 {
        self.xi * self.xi + self.eta * self.eta
    }
}

/// Open the slit: `(x^T, x_n, x_{n+1}) -> (x^T, xi, eta)`.
pub fn sqrt_map(p: &SlitPoint) -> MappedPoint {
    let (_, xi, eta) = perp_weights(p);
    MappedPoint { xt: p.xt, nt: p.nt, xi, eta }
}

/// Inverse of [`sqrt_map`]: `x_n = xi^2 - eta^2`, `x_{n+1} = 2 xi eta`.
///
/// Rejects `xi < 0` (the principal branch has `xi >= 0`). On `{xi = 0}` the
/// sign of `eta` selects the slit lip via the signed zero of `x_{n+1}`.
pub fn inverse_map(m: &MappedPoint) -> Result<SlitPoint> {
    if m.xi < 0.0 {
        return Err(Error::OutOfDomain(format!("inverse_map requires xi >= 0, got {}", m.xi)));
    }
    let xn = m.xi * m.xi - m.eta * m.eta;
    let mut xnp1 = 2.0 * m.xi * m.eta;
    if xnp1 == 0.0 && m.eta < 0.0 {
        xnp1 = -0.0;
    }
    Ok(SlitPoint { xt: m.xt, nt: m.nt, xn, xnp1 })
}

/// Anisotropic 1/2-homogeneous solution for a constant reference matrix:
/// a stretched copy of `xi` with `kappa = sqrt(Abar^{nn} / Abar^{n+1,n+1})`.
#[derive(Clone, Copy, Debug)]
pub struct HomSolution {
    pub kappa: f64,
    pub abar: Mat,
}

/// Build the homogeneous solution for a constant matrix `Abar`.
///
/// `Abar` must be elliptic and have zero `(i, n+1)` entries for `i <= n`.
pub fn hom_solution(abar: &Mat) -> Result<HomSolution> {
    let d = abar.dim;
    for i in 0..d - 1 {
        if abar.a[i][d - 1] != 0.0 || abar.a[d - 1][i] != 0.0 {
            return Err(Error::BadCoefficient(String::from(
                "reference matrix must have zero (i, n+1) off-diagonal entries",
            )));
        }
    }
    if !abar.is_positive_definite() {
        return Err(Error::BadCoefficient(String::from("reference matrix is not elliptic")));
    }
    let kappa = sqrt(abar.a[d - 2][d - 2] / abar.a[d - 1][d - 1]);
    Ok(HomSolution { kappa, abar: *abar })
}

impl HomSolution {
    /// `sqrt((x_n + sqrt(x_n^2 + kappa^2 x_{n+1}^2)) / 2) = xi(x_n, kappa x_{n+1})`.
    pub fn eval(&self, p: &SlitPoint) -> f64 {
        let stretched = SlitPoint { xnp1: self.kappa * p.xnp1, ..*p };
        xi_of(&stretched)
    }
}

/// Homogeneous solution with `kappa` given directly (used per-center where
/// only the anisotropy ratio matters).
pub fn hom_eval_kappa(kappa: f64, p: &SlitPoint) -> f64 {
    let stretched = SlitPoint { xnp1: kappa * p.xnp1, ..*p };
    xi_of(&stretched)
}

/// `rho_kappa = sqrt(x_n^2 + kappa^2 x_{n+1}^2)`, the stretched radius used
/// by per-center linear "polynomials".
pub fn rho_kappa(kappa: f64, p: &SlitPoint) -> f64 {
    libm::hypot(p.xn, kappa * p.xnp1)
}

/// Comparability metric on `R^{n+1} \ S`: tangential/perpendicular split
/// with the planar geodesic in `R^2` minus the negative axis.
///
/// The perpendicular part is the straight segment when it avoids the open
/// slit and the two-segment path through the slit tip otherwise. Slit trace
/// points are two-sided limits distinguished by the sign flag of `x_{n+1}`.
pub fn path_distance(p: &SlitPoint, q: &SlitPoint) -> f64 {
    let mut tang2 = 0.0;
    for i in 0..p.nt.max(q.nt) {
        let d = p.xt[i] - q.xt[i];
        tang2 += d * d;
    }
    let d_perp = perp_geodesic(p, q);
    sqrt(tang2 + d_perp * d_perp)
}

fn perp_geodesic(p: &SlitPoint, q: &SlitPoint) -> f64 {
    let straight = libm::hypot(p.xn - q.xn, p.xnp1 - q.xnp1);
    let (p1, q1) = (p.xnp1, q.xnp1);
    if p.perp_side() == q.perp_side() {
        return straight;
    }
    // Opposite sides (possibly as trace limits). Find where the segment
    // meets the thin plane.
    let around = p.rho() + q.rho();
    let denom = p1 - q1;
    if denom == 0.0 {
        // Both magnitudes zero with opposite flags: trace points.
        if p.xn < 0.0 || q.xn < 0.0 {
            return around.min(straight + around).min(around);
        }
        return straight;
    }
    let t = p1 / denom;
    let cross_xn = p.xn + t * (q.xn - p.xn);
    if cross_xn < 0.0 {
        around
    } else {
        straight
    }
}

/// Cone of opening 1 centred at `(x^T, 0)`:
/// `{y : |y^perp| <= r, |y^T - x^T| <= |y^perp|} \ S`.
#[derive(Clone, Copy, Debug)]
pub struct Cone {
    pub xt: [f64; MAX_T],
    pub nt: usize,
    pub r: f64,
}

impl Cone {
    pub fn new(xt: [f64; MAX_T], nt: usize, r: f64) -> Self {
        Cone { xt, nt, r }
    }

    pub fn contains(&self, y: &SlitPoint) -> bool {
        if y.on_slit() {
            return false;
        }
        let rp = y.rho();
        rp <= self.r && self.tangential_dist(y) <= rp
    }

    /// Membership in the conic annulus `Cone_r \ Cone_{r/2}`.
    pub fn annulus_contains(&self, y: &SlitPoint) -> bool {
        if !self.contains(y) {
            return false;
        }
        let inner = Cone { r: self.r / 2.0, ..*self };
        !inner.contains(y)
    }

    fn tangential_dist(&self, y: &SlitPoint) -> f64 {
        let mut s = 0.0;
        for i in 0..self.nt.max(y.nt) {
            let d = y.xt[i] - self.xt[i];
            s += d * d;
        }
        sqrt(s)
    }
}

/// Project a point onto the cone boundary:
/// `w^T = y^T`, `w^perp = (|y^T - c.xT| / |y^perp|) y^perp`.
///
/// For `y` already on the cone boundary this is the identity; for `y`
/// strictly inside the cone the scaling factor is `<= 1`.
pub fn cone_project(y: &SlitPoint, c: &Cone) -> Result<SlitPoint> {
    let rperp = y.rho();
    if rperp == 0.0 {
        return Err(Error::DegenerateInput(String::from("cone_project requires y^perp != 0")));
    }
    let scale = c.tangential_dist(y) / rperp;
    Ok(SlitPoint { xn: scale * y.xn, xnp1: scale * y.xnp1, ..*y })
}

/// Graph function `gamma(x^T)` describing the free boundary.
pub trait GraphFn: Send + Sync {
    /// `None` when `gamma` is undefined at `x^T`.
    fn eval(&self, xt: &[f64]) -> Option<f64>;
}

/// Trivial graph `gamma = 0`.
pub struct ZeroGraph;

impl GraphFn for ZeroGraph {
    fn eval(&self, _xt: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

impl<F: Fn(&[f64]) -> Option<f64> + Send + Sync> GraphFn for F {
    fn eval(&self, xt: &[f64]) -> Option<f64> {
        self(xt)
    }
}

/// Straighten the free boundary: `x_n = y_n - gamma(y^T)`, other
/// coordinates unchanged.
pub fn straighten(gamma: &dyn GraphFn, y: &SlitPoint) -> Result<SlitPoint> {
    let g = gamma
        .eval(&y.xt[..y.nt])
        .ok_or_else(|| Error::OutOfDomain(String::from("graph function undefined at y^T")))?;
    Ok(SlitPoint { xn: y.xn - g, ..*y })
}

/// Inverse of [`straighten`]: `y_n = x_n + gamma(x^T)`.
pub fn unstraighten(gamma: &dyn GraphFn, x: &SlitPoint) -> Result<SlitPoint> {
    let g = gamma
        .eval(&x.xt[..x.nt])
        .ok_or_else(|| Error::OutOfDomain(String::from("graph function undefined at x^T")))?;
    Ok(SlitPoint { xn: x.xn + g, ..*x })
}
