//! Coefficient fields `A = A_D + x_{n+1} A_O` with the block structure of the
//! standing assumptions: `A_D` has zero `(i, n+1)` entries for `i <= n`, `A_O`
//! lives only in those entries, and both parts are even in `x_{n+1}`.
//!
//! Coordinate vectors are packed as `[x_1, ..., x_{n-1}, x_n, x_{n+1}]` of
//! length `d = n + 1 <= 3`; index `d-2` is the `n`-direction and `d-1` the
//! `n+1`-direction throughout.

use crate::error::{Error, Result};
use crate::geom::{GraphFn, SlitPoint, MAX_T};
use alloc::format;
use alloc::sync::Arc;
use libm::{cos, sqrt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Small dense symmetric matrix, dimension `d = n + 1 <= 3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    pub dim: usize,
    pub a: [[f64; 3]; 3],
}

impl Mat {
    pub fn zero(dim: usize) -> Self {
        Mat { dim, a: [[0.0; 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Mat::zero(dim);
        for i in 0..dim {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += self.a[i][j] * v[j];
            }
        }
        out
    }

    pub fn quad_form(&self, v: &[f64; 3]) -> f64 {
        let av = self.mul_vec(v);
        let mut s = 0.0;
        for i in 0..self.dim {
            s += v[i] * av[i];
        }
        s
    }

    pub fn add_scaled(&self, other: &Mat, t: f64) -> Mat {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.a[i][j] += t * other.a[i][j];
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.dim {
            for j in 0..i {
                if (self.a[i][j] - self.a[j][i]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Sylvester criterion on the leading principal minors (`dim <= 3`).
    pub fn is_positive_definite(&self) -> bool {
        let a = &self.a;
        let m1 = a[0][0];
        if self.dim == 1 {
            return m1 > 0.0;
        }
        let m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if self.dim == 2 {
            return m1 > 0.0 && m2 > 0.0;
        }
        let m3 = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        m1 > 0.0 && m2 > 0.0 && m3 > 0.0
    }
}

/// Pack a point into the `[x^T..., x_n, x_{n+1}]` coordinate vector.
pub fn pack_point(p: &SlitPoint) -> [f64; 3] {
    let d = p.n() + 1;
    let mut v = [0.0; 3];
    for i in 0..p.nt {
        v[i] = p.xt[i];
    }
    v[d - 2] = p.xn;
    v[d - 1] = p.xnp1;
    v
}

/// Inverse of [`pack_point`] for dimension `d = n + 1`.
pub fn unpack_point(v: &[f64; 3], d: usize) -> SlitPoint {
    let mut xt = [0.0; MAX_T];
    for (i, slot) in xt.iter_mut().enumerate().take(d - 2) {
        *slot = v[i];
    }
    SlitPoint { xt, nt: d - 2, xn: v[d - 2], xnp1: v[d - 1] }
}

type MatFn = dyn Fn(&SlitPoint) -> Mat + Send + Sync;

/// Matrix coefficient field `A(x) = A_D(x) + x_{n+1} A_O(x)`.
#[derive(Clone)]
pub struct CoeffField {
    /// Spatial dimension parameter `n`; matrices are `(n+1) x (n+1)`.
    pub n: usize,
    a_d: Arc<MatFn>,
    a_o: Arc<MatFn>,
    /// Lower ellipticity bound `lambda`.
    pub lambda: f64,
    /// Upper ellipticity bound `Lambda`.
    pub big_lambda: f64,
    /// Holder-`alpha` seminorm bound of the coefficients.
    pub eps0: f64,
    /// Holder exponent in `(0, 1/2)`.
    pub alpha: f64,
}

impl CoeffField {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn identity(n: usize) -> Self {
        let d = n + 1;
        CoeffField {
            n,
            a_d: Arc::new(move |_| Mat::identity(d)),
            a_o: Arc::new(move |_| Mat::zero(d)),
            lambda: 1.0,
            big_lambda: 1.0,
            eps0: 0.0,
            alpha: 0.25,
        }
    }

    /// Constant field with `A_D = m`, `A_O = 0`.
    pub fn constant(n: usize, m: Mat) -> Result<Self> {
        let d = n + 1;
        if m.dim != d {
            return Err(Error::BadCoefficient(format!(
                "matrix dimension {} does not match n + 1 = {}",
                m.dim, d
            )));
        }
        if !m.is_symmetric(1e-12) || !m.is_positive_definite() {
            return Err(Error::BadCoefficient(
                "constant coefficient must be symmetric positive definite".into(),
            ));
        }
        for i in 0..d - 1 {
            if m.a[i][d - 1] != 0.0 {
                return Err(Error::BadCoefficient(
                    "constant coefficient must have zero (i, n+1) entries".into(),
                ));
            }
        }
        // Gershgorin bounds are crude but safe for the constant case.
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..d {
            let mut off = 0.0;
            for j in 0..d {
                if j != i {
                    off += m.a[i][j].abs();
                }
            }
            lo = lo.min(m.a[i][i] - off);
            hi = hi.max(m.a[i][i] + off);
        }
        Ok(CoeffField {
            n,
            a_d: Arc::new(move |_| m),
            a_o: Arc::new(move |_| Mat::zero(d)),
            lambda: lo.max(1e-12),
            big_lambda: hi,
            eps0: 0.0,
            alpha: 0.25,
        })
    }

    /// Seeded smooth perturbation of the identity respecting assumptions
    /// (a)-(d): even diagonal-block `A_D` perturbation of size `eps0` plus an
    /// `A_O` part confined to the `(i, n+1)` entries. Low spatial frequencies
    /// keep the tangential-derivative Holder seminorm comparable to `eps0`.
    pub fn perturbed(n: usize, eps0: f64, alpha: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.4).contains(&eps0) {
            return Err(Error::BadCoefficient(format!(
                "perturbation size eps0 = {eps0} outside [0, 0.4)"
            )));
        }
        let d = n + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // One smooth even scalar profile per independent A_D entry of the
        // diagonal block, plus one per A_O entry.
        let mut amps = [[0.0f64; 3]; 3];
        let mut waves = [[[0.0f64; 4]; 3]; 3];
        for i in 0..d {
            for j in 0..=i {
                if j < d - 1 && i == d - 1 {
                    continue; // (i, n+1) entries of A_D stay zero
                }
                amps[i][j] = rng.gen_range(-1.0..1.0);
                for w in waves[i][j].iter_mut() {
                    *w = rng.gen_range(-2.0..2.0);
                }
            }
        }
        let mut oamps = [0.0f64; 3];
        let mut owaves = [[0.0f64; 4]; 3];
        for i in 0..d - 1 {
            oamps[i] = rng.gen_range(-1.0..1.0);
            for w in owaves[i].iter_mut() {
                *w = rng.gen_range(-2.0..2.0);
            }
        }
        // Normalize so the total symmetric perturbation has operator norm
        // at most eps0 (row-sum bound on |amps| <= 1 entries).
        let scale = eps0 / (2.0 * d as f64);
        let profile = |w: &[f64; 4], p: &SlitPoint| -> f64 {
            let v = pack_point(p);
            // even in x_{n+1}: the last coordinate enters squared
            cos(w[0] * v[0] + w[1] * v[1] + w[3]) * cos(w[2] * v[2] * v[2])
        };
        let a_d = {
            let amps = amps;
            let waves = waves;
            move |p: &SlitPoint| -> Mat {
                // The closure dimension: entries only in the top block + corner.
                let mut m = Mat::identity(d);
                for i in 0..d {
                    for j in 0..=i {
                        if amps[i][j] == 0.0 {
                            continue;
                        }
                        let v = scale * amps[i][j] * profile(&waves[i][j], p);
                        m.a[i][j] += v;
                        if i != j {
                            m.a[j][i] += v;
                        }
                    }
                }
                m
            }
        };
        let a_o = {
            let oamps = oamps;
            let owaves = owaves;
            move |p: &SlitPoint| -> Mat {
                let mut m = Mat::zero(d);
                for i in 0..d - 1 {
                    if oamps[i] == 0.0 {
                        continue;
                    }
                    let v = scale * oamps[i] * profile(&owaves[i], p);
                    m.a[i][d - 1] = v;
                    m.a[d - 1][i] = v;
                }
                m
            }
        };
        Ok(CoeffField {
            n,
            a_d: Arc::new(a_d),
            a_o: Arc::new(a_o),
            lambda: 1.0 - 2.0 * eps0,
            big_lambda: 1.0 + 2.0 * eps0,
            eps0,
            alpha,
        })
    }

    /// Build a field from explicit part closures (callers must guarantee the
    /// block structure; `validate` probes it on samples).
    pub fn from_parts(
        n: usize,
        a_d: Arc<MatFn>,
        a_o: Arc<MatFn>,
        lambda: f64,
        big_lambda: f64,
        eps0: f64,
        alpha: f64,
    ) -> Self {
        CoeffField { n, a_d, a_o, lambda, big_lambda, eps0, alpha }
    }

    pub fn eval_d(&self, p: &SlitPoint) -> Mat {
        (self.a_d)(p)
    }

    pub fn eval_o(&self, p: &SlitPoint) -> Mat {
        (self.a_o)(p)
    }

    /// Full coefficient `A(x) = A_D(x) + x_{n+1} A_O(x)`.
    pub fn eval(&self, p: &SlitPoint) -> Mat {
        self.eval_d(p).add_scaled(&self.eval_o(p), p.xnp1)
    }

    /// Anisotropy ratio `kappa(A(x^T)) = sqrt(A^{nn} / A^{n+1,n+1})` at a
    /// tangential point (thin-plane trace of the coefficient).
    pub fn kappa_at(&self, xt: &[f64]) -> f64 {
        let mut t = [0.0; MAX_T];
        for (i, &v) in xt.iter().enumerate().take(MAX_T) {
            t[i] = v;
        }
        let p = SlitPoint { xt: t, nt: self.n - 1, xn: 0.0, xnp1: 0.0 };
        let m = self.eval(&p);
        let d = self.dim();
        sqrt(m.a[d - 2][d - 2] / m.a[d - 1][d - 1])
    }

    /// Probe ellipticity, block structure and evenness on sample points.
    pub fn validate(&self, samples: &[SlitPoint]) -> Result<()> {
        let d = self.dim();
        for p in samples {
            let ad = self.eval_d(p);
            let ao = self.eval_o(p);
            let a = self.eval(p);
            if !a.is_symmetric(1e-10) {
                return Err(Error::BadCoefficient("A not symmetric at a sample".into()));
            }
            for i in 0..d - 1 {
                if ad.a[i][d - 1].abs() > 1e-12 {
                    return Err(Error::BadCoefficient(
                        "A_D has a nonzero (i, n+1) entry".into(),
                    ));
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let in_band = (i == d - 1) != (j == d - 1);
                    if !in_band && ao.a[i][j].abs() > 1e-12 {
                        return Err(Error::BadCoefficient(
                            "A_O has an entry outside the (i, n+1) band".into(),
                        ));
                    }
                }
            }
            // Evenness in x_{n+1}.
            let q = SlitPoint { xnp1: -p.xnp1, ..*p };
            let adq = self.eval_d(&q);
            let aoq = self.eval_o(&q);
            for i in 0..d {
                for j in 0..d {
                    if (ad.a[i][j] - adq.a[i][j]).abs() > 1e-10
                        || (ao.a[i][j] - aoq.a[i][j]).abs() > 1e-10
                    {
                        return Err(Error::BadCoefficient(
                            "coefficient parts not even in x_{n+1}".into(),
                        ));
                    }
                }
            }
            // Ellipticity against the declared bounds, with slack for the
            // conservative bound estimates.
            for k in 0..d {
                let mut e = [0.0; 3];
                e[k] = 1.0;
                let q = a.quad_form(&e);
                if q < 0.5 * self.lambda || q > 2.0 * self.big_lambda {
                    return Err(Error::BadCoefficient(format!(
                        "sampled quadratic form {q} violates ellipticity window"
                    )));
                }
            }
            if !a.is_positive_definite() {
                return Err(Error::BadCoefficient("A not positive definite at a sample".into()));
            }
        }
        Ok(())
    }
}

/// Jacobian `dx/dy` of the straightening map `x_n = y_n - gamma(y^T)`:
/// identity except the `n`-th row, which carries `-grad_T gamma`.
/// Tangential derivatives of `gamma` by centered differences with step `h`.
pub fn straighten_jacobian(gamma: &dyn GraphFn, yt: &[f64], d: usize, h: f64) -> Result<Mat> {
    let mut j = Mat::identity(d);
    for m in 0..d - 2 {
        let mut up = [0.0; MAX_T];
        let mut dn = [0.0; MAX_T];
        up[..yt.len()].copy_from_slice(yt);
        dn[..yt.len()].copy_from_slice(yt);
        up[m] += h;
        dn[m] -= h;
        let gu = gamma
            .eval(&up[..yt.len()])
            .ok_or_else(|| Error::OutOfDomain("graph undefined at shifted point".into()))?;
        let gd = gamma
            .eval(&dn[..yt.len()])
            .ok_or_else(|| Error::OutOfDomain("graph undefined at shifted point".into()))?;
        j.a[d - 2][m] = -(gu - gd) / (2.0 * h);
    }
    Ok(j)
}

/// Pullback of coefficients under boundary straightening. Holds the original
/// `y`-coordinate field `B` and the graph `gamma`; evaluation happens in the
/// straightened `x`-frame at points `y` of the original frame.
pub struct Pullback<'a> {
    pub b: &'a CoeffField,
    pub gamma: &'a dyn GraphFn,
    /// Finite-difference step for gamma- and coefficient-derivatives.
    pub fd_h: f64,
}

impl<'a> Pullback<'a> {
    pub fn new(b: &'a CoeffField, gamma: &'a dyn GraphFn, fd_h: f64) -> Self {
        Pullback { b, gamma, fd_h }
    }

    /// `a^{ij}(y) = b^{pq}(y) (dx_i/dy_p)(dx_j/dy_q)`, i.e. `J B J^T`.
    pub fn coeff_at(&self, y: &SlitPoint) -> Result<Mat> {
        let d = self.b.dim();
        let j = straighten_jacobian(self.gamma, &y.xt[..y.nt], d, self.fd_h)?;
        let b = self.b.eval(y);
        let mut out = Mat::zero(d);
        for i in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for p in 0..d {
                    for q in 0..d {
                        s += b.a[p][q] * j.a[i][p] * j.a[k][q];
                    }
                }
                out.a[i][k] = s;
            }
        }
        Ok(out)
    }

    /// Drift term `f_m(y) = -(dx_i/dy_p)(d_{y_m} b^{pq}) u_q e_i` given the
    /// gradient `grad_u` of the solution in `y`-coordinates (packed layout).
    pub fn drift_at(&self, m: usize, grad_u: &[f64; 3], y: &SlitPoint) -> Result<[f64; 3]> {
        let d = self.b.dim();
        if m >= d - 1 {
            return Err(Error::OutOfDomain(format!("drift direction {m} out of range")));
        }
        let j = straighten_jacobian(self.gamma, &y.xt[..y.nt], d, self.fd_h)?;
        let db = self.coeff_derivative(m, y);
        let mut f = [0.0; 3];
        for i in 0..d {
            let mut s = 0.0;
            for p in 0..d {
                for q in 0..d {
                    s += j.a[i][p] * db.a[p][q] * grad_u[q];
                }
            }
            f[i] = -s;
        }
        Ok(f)
    }

    /// `d_{y_m} b^{pq}` by centered differences.
    fn coeff_derivative(&self, m: usize, y: &SlitPoint) -> Mat {
        let d = self.b.dim();
        let mut vp = pack_point(y);
        let mut vm = pack_point(y);
        vp[m] += self.fd_h;
        vm[m] -= self.fd_h;
        let bp = self.b.eval(&unpack_point(&vp, d));
        let bm = self.b.eval(&unpack_point(&vm, d));
        let mut out = Mat::zero(d);
        for i in 0..d {
            for j in 0..d {
                out.a[i][j] = (bp.a[i][j] - bm.a[i][j]) / (2.0 * self.fd_h);
            }
        }
        out
    }

    /// `phi_m = d_{y_m} F` by centered differences of the sampled data.
    pub fn phi_at<F: Fn(&SlitPoint) -> f64>(&self, m: usize, f_data: &F, y: &SlitPoint) -> f64 {
        let d = self.b.dim();
        let mut vp = pack_point(y);
        let mut vm = pack_point(y);
        vp[m] += self.fd_h;
        vm[m] -= self.fd_h;
        (f_data(&unpack_point(&vp, d)) - f_data(&unpack_point(&vm, d))) / (2.0 * self.fd_h)
    }
}
