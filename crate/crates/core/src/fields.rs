//! Field abstractions and the analytic fields used throughout the lab:
//! the model homogeneous solutions, manufactured solutions, and seeded
//! corpora for the inequality and property-(F) checks.

use crate::geom::{perp_weights, SlitPoint};
use crate::grid::FieldSample;
use libm::{atan2, cos, pow, sin, sqrt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scalar field evaluable at physical points.
pub trait ScalarField: Send + Sync {
    fn eval(&self, p: &SlitPoint) -> f64;
}

impl<F: Fn(&SlitPoint) -> f64 + Send + Sync> ScalarField for F {
    fn eval(&self, p: &SlitPoint) -> f64 {
        self(p)
    }
}

impl ScalarField for FieldSample {
    /// Interpolated evaluation; coordinates are clamped to the grid box so
    /// evaluation just outside (roundoff, boundary quadrature points) reads
    /// the nearest face value.
    fn eval(&self, p: &SlitPoint) -> f64 {
        let mut c = self.grid.frame_coords(p);
        for (i, a) in self.grid.axes.iter().enumerate() {
            c[i] = c[i].clamp(a.min, a.max);
        }
        self.interp(&c).unwrap_or(0.0)
    }
}

/// Vector field in the packed `[x^T..., x_n, x_{n+1}]` layout.
pub trait VectorField: Send + Sync {
    fn eval(&self, p: &SlitPoint) -> [f64; 3];
}

impl<F: Fn(&SlitPoint) -> [f64; 3] + Send + Sync> VectorField for F {
    fn eval(&self, p: &SlitPoint) -> [f64; 3] {
        self(p)
    }
}

/// Zero vector field.
pub struct ZeroVec;

impl VectorField for ZeroVec {
    fn eval(&self, _p: &SlitPoint) -> [f64; 3] {
        [0.0; 3]
    }
}

/// The model 1/2-homogeneous solution `xi`.
pub fn xi_field(p: &SlitPoint) -> f64 {
    perp_weights(p).1
}

/// `Re((x_n + i x_{n+1})^{3/2}) = x_n xi - x_{n+1} eta` on the principal
/// branch: the 3/2-homogeneous blow-up at a regular free boundary point.
pub fn re_z32(p: &SlitPoint) -> f64 {
    let (_, xi, eta) = perp_weights(p);
    p.xn * xi - p.xnp1 * eta
}

/// Perpendicular gradient of [`re_z32`]: `(3/2)(xi, -eta)` by the chain rule
/// for the holomorphic `z^{3/2}`.
pub fn re_z32_grad_perp(p: &SlitPoint) -> [f64; 2] {
    let (_, xi, eta) = perp_weights(p);
    [1.5 * xi, -1.5 * eta]
}

/// The `xi^2`-harmonic manufactured solution `w* = x_n - rho / 2`
/// (equivalently `xi^2/2 - 3 eta^2 / 2` in square-root coordinates).
pub fn wstar(p: &SlitPoint) -> f64 {
    p.xn - p.rho() / 2.0
}

/// `rho = |x^perp|` as a field.
pub fn rho_field(p: &SlitPoint) -> f64 {
    p.rho()
}

/// Perp-plane polar angle in `(-pi, pi]`, branch cut on the slit.
pub fn theta(p: &SlitPoint) -> f64 {
    let t = atan2(p.xnp1, p.xn);
    if t == -core::f64::consts::PI {
        core::f64::consts::PI
    } else {
        t
    }
}

/// Seeded compactly supported test field for the thin Poincare corpus:
/// a smooth radial bump on `B_r` times a low-order angular factor in the
/// perp plane, plus an optional smooth tangential modulation for `n = 2`.
pub struct PoincareField {
    pub r: f64,
    profile_pow: f64,
    coeffs: [f64; 5],
    tang: [f64; 2],
}

impl PoincareField {
    pub fn seeded(seed: u64, r: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile_pow = rng.gen_range(1.0..3.0);
        let mut coeffs = [0.0; 5];
        for c in coeffs.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let tang = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        PoincareField { r, profile_pow, coeffs, tang }
    }
}

impl ScalarField for PoincareField {
    fn eval(&self, p: &SlitPoint) -> f64 {
        let s = p.norm() / self.r;
        if s >= 1.0 {
            return 0.0;
        }
        let bump = pow(1.0 - s * s, self.profile_pow);
        let th = theta(p);
        // Low-order Fourier angular factor; the half-angle modes cos(theta/2)
        // are continuous across the slit and probe the sharp constant.
        let ang = self.coeffs[0]
            + self.coeffs[1] * cos(th)
            + self.coeffs[2] * sin(th) * (p.rho() / self.r)
            + self.coeffs[3] * cos(th / 2.0)
            + self.coeffs[4] * cos(2.0 * th);
        let mut t = 1.0;
        for i in 0..p.nt {
            t += self.tang[i] * p.xt[i] / self.r;
        }
        bump * ang * t
    }
}

/// Slit-concentrated cone profile `(1 - |x|)_+` times an even angular
/// profile peaking at the slit; the corpus stress case.
pub fn slit_concentrated(p: &SlitPoint) -> f64 {
    let s = p.norm();
    if s >= 1.0 {
        return 0.0;
    }
    let th = theta(p);
    (1.0 - s) * (0.5 + 0.5 * cos(th))
}

/// Seeded smooth scalar for generic corpora (property-(F) tests, Caccioppoli
/// data): a low-frequency trigonometric polynomial of the full point.
pub struct SmoothField {
    amp: [f64; 4],
    freq: [[f64; 3]; 4],
    phase: [f64; 4],
}

impl SmoothField {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amp = [0.0; 4];
        let mut freq = [[0.0; 3]; 4];
        let mut phase = [0.0; 4];
        for k in 0..4 {
            amp[k] = rng.gen_range(-1.0..1.0);
            phase[k] = rng.gen_range(0.0..6.28);
            for f in freq[k].iter_mut() {
                *f = rng.gen_range(-2.0..2.0);
            }
        }
        SmoothField { amp, freq, phase }
    }
}

impl ScalarField for SmoothField {
    fn eval(&self, p: &SlitPoint) -> f64 {
        let v = crate::coeff::pack_point(p);
        let mut s = 0.0;
        for k in 0..4 {
            s += self.amp[k]
                * cos(self.freq[k][0] * v[0] + self.freq[k][1] * v[1] + self.freq[k][2] * v[2]
                    + self.phase[k]);
        }
        s
    }
}

/// `sqrt(rho)`: the property-(F) counterexample numerator. The quotient
/// `sqrt(rho)/xi = 1/cos(theta/2)` blows up at the slit.
pub fn sqrt_rho(p: &SlitPoint) -> f64 {
    sqrt(p.rho())
}
