//! Galerkin discretisation and solvers for the degenerate model equation
//! `div(xi^2 A grad w) = div(xi^2 f) + xi^2 g` and the uniform equation
//! `div(A grad u) = div(f)` with zero slit trace.
//!
//! Discretisation lives in square-root coordinates `(x^T, xi, eta)` where the
//! slit is the flat face `{xi = 0}`. The change of variables contributes the
//! Jacobian `4 rho` and the gradient transform `G = blockdiag(I, J^{-T})`
//! with `J^{-T} = [[xi, -eta], [eta, xi]] / (2 rho)`, so the effective
//! quadrature-point matrix is `4 rho * weight * G^T A G` with `weight = xi^2`
//! (degenerate; natural boundary at `{xi = 0}`) or `1` (uniform; Dirichlet
//! rows at `{xi = 0}`).

use crate::coeff::{pack_point, CoeffField, Mat};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geom::{rho_kappa, SlitPoint};
use crate::grid::{FieldSample, Frame, Region, SlitGrid};
use crate::sparse::{cg_solve, Builder, CgStats};
use crate::wspace::weighted_norms;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use libm::{pow, sqrt};

/// Element of the ring `R[x_1, ..., x_n, rho]` truncated at first order:
/// `L(x) = c0 + sum c_i x_i + c_rho rho_kappa(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearPoly {
    pub c0: f64,
    /// Tangential coefficients `c_1 .. c_{n-1}`.
    pub ct: [f64; 2],
    /// Coefficient of `x_n`.
    pub cn: f64,
    /// Coefficient of the stretched radius `rho_kappa`.
    pub c_rho: f64,
    /// Anisotropy of the radius variable; `1` for the isotropic `rho`.
    pub kappa: f64,
}

impl LinearPoly {
    pub fn zero() -> Self {
        LinearPoly { c0: 0.0, ct: [0.0; 2], cn: 0.0, c_rho: 0.0, kappa: 1.0 }
    }

    pub fn eval(&self, p: &SlitPoint) -> f64 {
        let mut s = self.c0 + self.cn * p.xn + self.c_rho * rho_kappa(self.kappa, p);
        for i in 0..p.nt {
            s += self.ct[i] * p.xt[i];
        }
        s
    }

    pub fn add(&self, o: &LinearPoly) -> LinearPoly {
        LinearPoly {
            c0: self.c0 + o.c0,
            ct: [self.ct[0] + o.ct[0], self.ct[1] + o.ct[1]],
            cn: self.cn + o.cn,
            c_rho: self.c_rho + o.c_rho,
            kappa: self.kappa,
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.c0
            .abs()
            .max(self.ct[0].abs())
            .max(self.ct[1].abs())
            .max(self.cn.abs())
            .max(self.c_rho.abs())
    }
}

/// Weight of the bilinear form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    /// `xi^2` weight; no constraint at `{xi = 0}`.
    Degenerate,
    /// Unit weight; zero Dirichlet trace at `{xi = 0}`.
    Uniform,
}

/// Degenerate model problem data on a square-root-frame grid.
pub struct DegenerateProblem {
    pub a: CoeffField,
    pub f: Arc<dyn VectorField>,
    pub g: Arc<dyn ScalarField>,
    pub alpha: f64,
    /// Dirichlet data on the outer boundary.
    pub boundary: Arc<dyn ScalarField>,
}

impl DegenerateProblem {
    /// Integrability exponent `p = (n + 3) / (1 - alpha)` tied to `alpha`.
    pub fn p_exponent(&self) -> f64 {
        (self.a.n as f64 + 3.0) / (1.0 - self.alpha)
    }
}

/// Uniform problem data (zero slit trace).
pub struct UniformProblem {
    pub a: CoeffField,
    pub f: Arc<dyn VectorField>,
    pub boundary: Arc<dyn ScalarField>,
}

/// Gradient transform `G = blockdiag(I_{d-2}, J^{-T})` at computational
/// coordinates, and the Jacobian factor `4 rho`.
fn transform_at(coords: &[f64; 3], d: usize) -> (Mat, f64) {
    let (xi, eta) = (coords[d - 2], coords[d - 1]);
    let rho = xi * xi + eta * eta;
    let mut g = Mat::identity(d);
    g.a[d - 2][d - 2] = xi / (2.0 * rho);
    g.a[d - 2][d - 1] = -eta / (2.0 * rho);
    g.a[d - 1][d - 2] = eta / (2.0 * rho);
    g.a[d - 1][d - 1] = xi / (2.0 * rho);
    (g, 4.0 * rho)
}

/// Assemble and solve the weighted system with explicit node constraints.
///
/// `fixed[i]` marks Dirichlet nodes with value `fixed_vals[i]`; the free
/// block stays symmetric positive definite and is solved by Jacobi-CG.
pub fn solve_core(
    a_eval: &dyn Fn(&SlitPoint) -> Mat,
    grid: &Arc<SlitGrid>,
    kind: WeightKind,
    f: &dyn VectorField,
    g: &dyn ScalarField,
    fixed: &[bool],
    fixed_vals: &[f64],
    x0: Option<&[f64]>,
) -> Result<(FieldSample, CgStats)> {
    if grid.frame != Frame::SquareRoot {
        return Err(Error::GridMismatch("solver requires a square-root-frame grid".into()));
    }
    let d = grid.d();
    for a in &grid.axes {
        if a.m < 8 {
            return Err(Error::GridMismatch("grid too coarse: need >= 8 cells per axis".into()));
        }
    }
    let nn = grid.node_count();
    if fixed.len() != nn || fixed_vals.len() != nn {
        return Err(Error::GridMismatch("constraint arrays must match node count".into()));
    }

    let mut builder = Builder::new(nn);
    let mut rhs = vec![0.0; nn];

    let nc = 1usize << d;
    let hs: [f64; 3] = [
        grid.axes[0].h(),
        grid.axes[1].h(),
        if d > 2 { grid.axes[2].h() } else { 1.0 },
    ];
    let mut cellvol = 1.0;
    for h in hs.iter().take(d) {
        cellvol *= h;
    }
    let wq = cellvol / nc as f64;
    let gp = 0.5 / sqrt(3.0); // Gauss offsets +-1/(2 sqrt 3) in unit coords

    let mut shape = [0.0f64; 8];
    let mut sgrad = [[0.0f64; 3]; 8];

    for cell in grid.cells() {
        let (corners, _) = grid.cell_corners(&cell);
        let base = grid.node_coord(&cell);
        let mut ke = [[0.0f64; 8]; 8];
        let mut fe = [0.0f64; 8];
        for q in 0..nc {
            // Local Gauss coordinates in [0, 1]^d, indexed like corners.
            let mut zeta = [0.5f64; 3];
            let mut coords = [0.0f64; 3];
            for i in 0..d {
                let bit = (q >> (d - 1 - i)) & 1;
                zeta[i] = if bit == 1 { 0.5 + gp } else { 0.5 - gp };
                coords[i] = base[i] + zeta[i] * hs[i];
            }
            let p = grid.physical_point(&coords);
            let a = a_eval(&p);
            if !a.is_positive_definite() {
                return Err(Error::BadCoefficient(format!(
                    "coefficient not positive definite near ({}, {}, {})",
                    coords[0], coords[1], coords[2]
                )));
            }
            let (gmat, jfac) = transform_at(&coords, d);
            let xi = coords[d - 2];
            let weight = match kind {
                WeightKind::Degenerate => xi * xi,
                WeightKind::Uniform => 1.0,
            };
            // Effective matrix jfac * weight * G^T A G.
            let mut m = Mat::zero(d);
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for pp in 0..d {
                        for qq in 0..d {
                            s += gmat.a[pp][i] * a.a[pp][qq] * gmat.a[qq][j];
                        }
                    }
                    m.a[i][j] = jfac * weight * s;
                }
            }
            // Q1 shapes and gradients at zeta.
            for k in 0..nc {
                let mut val = 1.0;
                for i in 0..d {
                    let bit = (k >> (d - 1 - i)) & 1;
                    val *= if bit == 1 { zeta[i] } else { 1.0 - zeta[i] };
                }
                shape[k] = val;
                for i in 0..d {
                    let bit = (k >> (d - 1 - i)) & 1;
                    let mut gv = if bit == 1 { 1.0 } else { -1.0 } / hs[i];
                    for j in 0..d {
                        if j != i {
                            let bj = (k >> (d - 1 - j)) & 1;
                            gv *= if bj == 1 { zeta[j] } else { 1.0 - zeta[j] };
                        }
                    }
                    sgrad[k][i] = gv;
                }
            }
            for ka in 0..nc {
                for kb in 0..nc {
                    let mut s = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            s += sgrad[ka][i] * m.a[i][j] * sgrad[kb][j];
                        }
                    }
                    ke[ka][kb] += wq * s;
                }
            }
            // RHS: weight-scaled divergence data plus bulk term.
            let fphys = f.eval(&p);
            let mut fcomp = [0.0f64; 3];
            for i in 0..d - 2 {
                fcomp[i] = fphys[i];
            }
            // (G^T f)_perp = J^{-1} f_perp with J^{-1} = [[xi, eta], [-eta, xi]] / (2 rho).
            let eta = coords[d - 1];
            let rho = xi * xi + eta * eta;
            fcomp[d - 2] = (xi * fphys[d - 2] + eta * fphys[d - 1]) / (2.0 * rho);
            fcomp[d - 1] = (-eta * fphys[d - 2] + xi * fphys[d - 1]) / (2.0 * rho);
            let gv = g.eval(&p);
            let wf = jfac * weight;
            for k in 0..nc {
                let mut s = 0.0;
                for i in 0..d {
                    s += fcomp[i] * sgrad[k][i];
                }
                fe[k] += wq * (wf * s - wf * gv * shape[k]);
            }
        }
        // Scatter with Dirichlet elimination.
        for ka in 0..nc {
            let i = corners[ka];
            if fixed[i] {
                continue;
            }
            rhs[i] += fe[ka];
            for kb in 0..nc {
                let j = corners[kb];
                if fixed[j] {
                    rhs[i] -= ke[ka][kb] * fixed_vals[j];
                } else {
                    builder.add(i, j, ke[ka][kb]);
                }
            }
        }
    }
    for i in 0..nn {
        if fixed[i] {
            builder.set_identity_row(i);
            rhs[i] = fixed_vals[i];
        }
    }
    let k = builder.finish();
    let (x, stats) = cg_solve(
        &k,
        &rhs,
        x0,
        crate::defaults::CG_TOL,
        crate::defaults::CG_MAX_ITER,
    )?;
    let mut out = FieldSample::zeros(grid.clone());
    out.values = x;
    Ok((out, stats))
}

/// Dirichlet mask for a plain outer-boundary solve: outer faces always;
/// the `{xi = 0}` face additionally for the uniform equation.
pub fn boundary_constraints(
    grid: &SlitGrid,
    kind: WeightKind,
    boundary: &dyn ScalarField,
) -> (Vec<bool>, Vec<f64>) {
    let nn = grid.node_count();
    let mut fixed = vec![false; nn];
    let mut vals = vec![0.0; nn];
    for idx in 0..nn {
        let m = grid.multi(idx);
        let outer = grid.is_outer_boundary(&m);
        let slit = kind == WeightKind::Uniform && grid.is_slit_node(&m);
        if outer || slit {
            fixed[idx] = true;
            vals[idx] = if slit && !outer { 0.0 } else { boundary.eval(&grid.node_point(&m)) };
        }
    }
    (fixed, vals)
}

/// Solve the degenerate equation with outer Dirichlet data.
pub fn solve_degenerate(
    p: &DegenerateProblem,
    grid: &Arc<SlitGrid>,
) -> Result<(FieldSample, CgStats)> {
    let (fixed, vals) = boundary_constraints(grid, WeightKind::Degenerate, p.boundary.as_ref());
    // Warm start from the boundary extension.
    let x0: Vec<f64> = (0..grid.node_count())
        .map(|i| p.boundary.eval(&grid.node_point(&grid.multi(i))))
        .collect();
    let a = p.a.clone();
    solve_core(
        &move |q: &SlitPoint| a.eval(q),
        grid,
        WeightKind::Degenerate,
        p.f.as_ref(),
        p.g.as_ref(),
        &fixed,
        &vals,
        Some(&x0),
    )
}

/// Solve the uniform equation with zero trace on the slit.
pub fn solve_uniform(p: &UniformProblem, grid: &Arc<SlitGrid>) -> Result<(FieldSample, CgStats)> {
    let (fixed, vals) = boundary_constraints(grid, WeightKind::Uniform, p.boundary.as_ref());
    let zero_g = |_: &SlitPoint| 0.0;
    let a = p.a.clone();
    solve_core(
        &move |q: &SlitPoint| a.eval(q),
        grid,
        WeightKind::Uniform,
        p.f.as_ref(),
        &zero_g,
        &fixed,
        &vals,
        None,
    )
}

/// Harmonic replacement: re-solve `div(xi^2 Abar grad h) = 0` inside the
/// physical ball of radius `ball_r`, keeping `w`'s values outside. The output
/// equals `w` outside the ball.
pub fn harmonic_replacement(
    w: &FieldSample,
    abar: &Mat,
    ball_r: f64,
) -> Result<FieldSample> {
    let grid = &w.grid;
    let nn = grid.node_count();
    let mut fixed = vec![false; nn];
    for idx in 0..nn {
        let m = grid.multi(idx);
        if grid.node_point(&m).norm() >= ball_r {
            fixed[idx] = true;
        }
    }
    let zf = crate::fields::ZeroVec;
    let zg = |_: &SlitPoint| 0.0;
    let ab = *abar;
    let (h, _) = solve_core(
        &move |_: &SlitPoint| ab,
        grid,
        WeightKind::Degenerate,
        &zf,
        &zg,
        &fixed,
        &w.values,
        Some(&w.values),
    )?;
    Ok(h)
}

/// Weighted least squares against the basis `{1, x_1, ..., x_{n-1}, x_n,
/// rho_kappa}` with weight `1/rho` over `B_r(center)`: the canonical
/// projection minimizing the Campanato integrand.
pub fn linearize(
    h: &FieldSample,
    center: &SlitPoint,
    r: f64,
    kappa: f64,
) -> Result<LinearPoly> {
    let d = h.grid.d();
    let nb = d + 1;
    let basis = |p: &SlitPoint, k: usize| -> f64 {
        if k == 0 {
            1.0
        } else if k < d - 1 {
            p.xt[k - 1] - center.xt[k - 1]
        } else if k == d - 1 {
            p.xn
        } else {
            rho_kappa(kappa, p)
        }
    };
    // Sample the basis at the nodes and quadrate with the same corner
    // averaging as the field itself; the discrete projection then reproduces
    // basis members exactly, independent of the cell weights.
    let grid = &h.grid;
    let mut cellvol = 1.0;
    for a in grid.axes.iter().take(d) {
        cellvol *= a.h();
    }
    let mut gmat = [[0.0f64; 4]; 4];
    let mut bvec = [0.0f64; 4];
    for cell in grid.cells() {
        let c = grid.cell_center(&cell);
        let p = grid.physical_point(&c);
        if p.dist(center) > r {
            continue;
        }
        let rho = p.rho().max(crate::defaults::RATIO_FLOOR);
        let vol = match grid.frame {
            Frame::Physical => cellvol,
            Frame::SquareRoot => 4.0 * rho * cellvol,
        };
        let weight = vol / rho;
        let (corners, count) = grid.cell_corners(&cell);
        let mut bs = [0.0f64; 4];
        let mut hv = 0.0;
        for &ci in corners.iter().take(count) {
            let q = grid.node_point(&grid.multi(ci));
            for (k, b) in bs.iter_mut().enumerate().take(nb) {
                *b += basis(&q, k);
            }
            hv += h.values[ci];
        }
        for b in bs.iter_mut().take(nb) {
            *b /= count as f64;
        }
        hv /= count as f64;
        for k in 0..nb {
            for l in k..nb {
                gmat[k][l] += weight * bs[k] * bs[l];
            }
            bvec[k] += weight * hv * bs[k];
        }
    }
    for k in 0..nb {
        for l in 0..k {
            gmat[k][l] = gmat[l][k];
        }
    }
    let coeffs = solve_small(&mut gmat, &mut bvec, nb)?;
    let mut l = LinearPoly::zero();
    l.kappa = kappa;
    l.c0 = coeffs[0];
    l.cn = coeffs[d - 1];
    l.c_rho = coeffs[d];
    for i in 0..d - 2 {
        l.ct[i] = coeffs[1 + i];
        // The basis used x_i - center_i; fold the shift into c0 so eval
        // works in absolute coordinates.
        l.c0 -= l.ct[i] * center.xt[i];
    }
    Ok(l)
}

fn solve_small(g: &mut [[f64; 4]; 4], b: &mut [f64; 4], n: usize) -> Result<[f64; 4]> {
    let mut scale = 0.0f64;
    for i in 0..n {
        scale = scale.max(g[i][i].abs());
    }
    if scale == 0.0 {
        return Err(Error::IllConditioned("empty quadrature region".into()));
    }
    for col in 0..n {
        // Partial pivot.
        let mut piv = col;
        for row in col + 1..n {
            if g[row][col].abs() > g[piv][col].abs() {
                piv = row;
            }
        }
        if g[piv][col].abs() < 1e-12 * scale {
            return Err(Error::IllConditioned(
                "linearization normal equations nearly singular".into(),
            ));
        }
        if piv != col {
            g.swap(piv, col);
            b.swap(piv, col);
        }
        for row in col + 1..n {
            let f = g[row][col] / g[col][col];
            for k in col..n {
                g[row][k] -= f * g[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 4];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= g[i][k] * x[k];
        }
        x[i] = s / g[i][i];
    }
    Ok(x)
}

/// One Campanato level: radii, deviations and the per-level linear parts.
#[derive(Clone, Debug)]
pub struct CampanatoIterate {
    pub radii: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub per_level: Vec<LinearPoly>,
    pub l_total: LinearPoly,
    /// Levels dropped because `lambda^k r0 < 8h`.
    pub unresolved_levels: usize,
}

/// The iteration of the averaged-Schauder proof:
/// `w_{k+1} = w_k - l_k` with `l_k = linearize(harmonic_replacement(w_k))`
/// on balls shrinking by `lambda`.
pub fn campanato_iterate(
    w: &FieldSample,
    abar: &Mat,
    center: &SlitPoint,
    r0: f64,
    lambda: f64,
    k_levels: usize,
    alpha: f64,
    eps0: f64,
) -> Result<CampanatoIterate> {
    let n = w.grid.n as f64;
    let lo = pow(eps0.max(1e-12), 2.0 / (n + 4.0));
    if eps0 > 0.0 && (lambda < lo || lambda > 0.25) {
        return Err(Error::OutOfDomain(format!(
            "shrink rate {lambda} outside admissible window [{lo}, 0.25]"
        )));
    }
    if lambda <= 0.0 || lambda > 0.25 {
        return Err(Error::OutOfDomain(format!("shrink rate {lambda} outside (0, 0.25]")));
    }
    let d = w.grid.d();
    let h = w.grid.axes[d - 2].h().max(w.grid.axes[d - 1].h());
    let mut cur = w.clone();
    let mut out = CampanatoIterate {
        radii: Vec::new(),
        sigmas: Vec::new(),
        per_level: Vec::new(),
        l_total: LinearPoly::zero(),
        unresolved_levels: 0,
    };
    for k in 0..k_levels {
        let rk = r0 * pow(lambda, k as f64);
        if rk < 8.0 * h {
            out.unresolved_levels = k_levels - k;
            break;
        }
        // Absorb the current linear part first (the constant-data reduction
        // of the averaged-Schauder proof): replacement then acts on a field
        // with zero linear model, so exactly linear inputs stay fixed points.
        let l_direct = linearize(&cur, center, rk / 2.0, 1.0)?;
        let mut rem = cur.clone();
        for idx in 0..rem.values.len() {
            let m = rem.grid.multi(idx);
            rem.values[idx] -= l_direct.eval(&rem.grid.node_point(&m));
        }
        let rep = harmonic_replacement(&rem, abar, rk / 2.0)?;
        let lk = l_direct.add(&linearize(&rep, center, rk / 2.0, 1.0)?);
        // Subtract the linear part nodewise.
        for idx in 0..cur.values.len() {
            let m = cur.grid.multi(idx);
            cur.values[idx] -= lk.eval(&cur.grid.node_point(&m));
        }
        out.l_total = out.l_total.add(&lk);
        let sigma =
            crate::wspace::campanato_deviation(&cur, &LinearPoly::zero(), center, rk / 2.0, alpha)?;
        out.radii.push(rk);
        out.sigmas.push(sigma);
        out.per_level.push(lk);
    }
    Ok(out)
}

/// Absorb a bounded scalar `phi` into the divergence term:
/// `F(x) = e_{n+1} int_0^{x_{n+1}} phi(x^T, x_n, s) ds`, so that
/// `div F = phi`.
pub struct AbsorbPhi<'a> {
    pub phi: &'a dyn ScalarField,
    pub quad_points: usize,
}

impl<'a> AbsorbPhi<'a> {
    pub fn new(phi: &'a dyn ScalarField) -> Self {
        AbsorbPhi { phi, quad_points: 48 }
    }
}

impl<'a> VectorField for AbsorbPhi<'a> {
    fn eval(&self, p: &SlitPoint) -> [f64; 3] {
        let d = p.n() + 1;
        let m = self.quad_points;
        let mut s = 0.0;
        for k in 0..m {
            let t = (k as f64 + 0.5) / m as f64 * p.xnp1;
            let q = SlitPoint { xnp1: t, ..*p };
            s += self.phi.eval(&q);
        }
        s *= p.xnp1 / m as f64;
        let mut out = [0.0; 3];
        out[d - 1] = s;
        out
    }
}

/// Absorb a `(xi^2 / rho) h` right-hand side into the divergence term:
/// `f(x) = (int_0^1 s h(x^T, s x^perp) ds) grad rho`, which satisfies
/// `div(xi^2 f) = (xi^2 / rho) h` away from the tip.
pub struct AbsorbH<'a> {
    pub h: &'a dyn ScalarField,
    pub quad_points: usize,
}

impl<'a> AbsorbH<'a> {
    pub fn new(h: &'a dyn ScalarField) -> Self {
        AbsorbH { h, quad_points: 64 }
    }
}

impl<'a> VectorField for AbsorbH<'a> {
    fn eval(&self, p: &SlitPoint) -> [f64; 3] {
        let d = p.n() + 1;
        let rho = p.rho();
        let mut out = [0.0; 3];
        if rho == 0.0 {
            return out;
        }
        let m = self.quad_points;
        let mut s = 0.0;
        for k in 0..m {
            let t = (k as f64 + 0.5) / m as f64;
            let q = SlitPoint { xn: t * p.xn, xnp1: t * p.xnp1, ..*p };
            s += t * self.h.eval(&q);
        }
        s /= m as f64;
        out[d - 2] = s * p.xn / rho;
        out[d - 1] = s * p.xnp1 / rho;
        out
    }
}

/// Energy of a field over a physical ball (convenience used by the
/// replacement bounds).
pub fn energy_in_ball(w: &FieldSample, r: f64) -> Result<f64> {
    Ok(weighted_norms(w, &Region::ball_origin(w.grid.n, r))?.energy)
}

/// Default square-root-frame grid covering the physical ball `B_rad`:
/// `xi in [0, s]`, `eta in [-s, s]` with `s = sqrt(rad) * 1.05`, and
/// tangential axes `[-rad, rad]` for `n = 2`. `m` controls the eta cell
/// count; other axes scale to keep cells roughly square.
pub fn default_sqrt_grid(n: usize, rad: f64, m: usize) -> Result<Arc<SlitGrid>> {
    let s = sqrt(rad) * 1.05;
    let grid = match n {
        1 => SlitGrid::new(
            1,
            Frame::SquareRoot,
            vec![
                crate::grid::Axis::new(0.0, s, m / 2),
                crate::grid::Axis::new(-s, s, m),
            ],
        )?,
        2 => SlitGrid::new(
            2,
            Frame::SquareRoot,
            vec![
                crate::grid::Axis::new(-rad, rad, m),
                crate::grid::Axis::new(0.0, s, m / 2),
                crate::grid::Axis::new(-s, s, m),
            ],
        )?,
        _ => return Err(Error::GridMismatch("n must be 1 or 2".into())),
    };
    Ok(Arc::new(grid))
}

/// Finite-difference divergence of an analytic vector field at a point
/// (shared by the identity and absorption oracles).
pub fn fd_divergence(f: &dyn VectorField, p: &SlitPoint, step: f64) -> f64 {
    let d = p.n() + 1;
    let mut s = 0.0;
    for i in 0..d {
        let mut vp = pack_point(p);
        let mut vm = pack_point(p);
        vp[i] += step;
        vm[i] -= step;
        let fp = f.eval(&crate::coeff::unpack_point(&vp, d));
        let fm = f.eval(&crate::coeff::unpack_point(&vm, d));
        s += (fp[i] - fm[i]) / (2.0 * step);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{self, ScalarField};
    use crate::geom::perp_weights;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    fn xi2_times(f: impl Fn(&SlitPoint) -> [f64; 3] + Send + Sync) -> impl VectorField {
        move |p: &SlitPoint| {
            let (_, xi, _) = perp_weights(p);
            let v = f(p);
            [xi * xi * v[0], xi * xi * v[1], xi * xi * v[2]]
        }
    }

    /// Symbolic-divergence oracle for the manufactured solution:
    /// `div(xi^2 grad rho) = 2 xi^2 / rho`, `div(xi^2 grad x_n) = xi^2 / rho`
    /// and hence `div(xi^2 grad w*) = 0` for `w* = x_n - rho/2`.
    #[test]
    fn divergence_identities() {
        let step = 1e-5;
        for &(xn, xnp1) in &[(0.4, 0.3), (-0.3, 0.5), (0.2, -0.6)] {
            let p = SlitPoint::d2(xn, xnp1);
            let (rho, xi, _) = perp_weights(&p);
            let grad_rho = xi2_times(|q: &SlitPoint| {
                let r = q.rho();
                [q.xn / r, q.xnp1 / r, 0.0]
            });
            assert_close(fd_divergence(&grad_rho, &p, step), 2.0 * xi * xi / rho, 1e-5);
            let grad_xn = xi2_times(|_q: &SlitPoint| [1.0, 0.0, 0.0]);
            assert_close(fd_divergence(&grad_xn, &p, step), xi * xi / rho, 1e-5);
            let grad_wstar = xi2_times(|q: &SlitPoint| {
                let r = q.rho();
                [1.0 - 0.5 * q.xn / r, -0.5 * q.xnp1 / r, 0.0]
            });
            assert_close(fd_divergence(&grad_wstar, &p, step), 0.0, 1e-5);
        }
    }

    #[test]
    fn degenerate_constant_is_exact() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let one = |_: &SlitPoint| 1.0;
        let p = DegenerateProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            g: Arc::new(move |_: &SlitPoint| 0.0),
            alpha: 0.25,
            boundary: Arc::new(one),
        };
        let (w, stats) = solve_degenerate(&p, &grid).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        for &v in &w.values {
            assert_close(v, 1.0, 1e-8);
        }
    }

    #[test]
    fn degenerate_manufactured_wstar() {
        let grid = default_sqrt_grid(1, 1.0, 48).unwrap();
        let p = DegenerateProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            g: Arc::new(move |_: &SlitPoint| 0.0),
            alpha: 0.25,
            boundary: Arc::new(fields::wstar),
        };
        let (w, _) = solve_degenerate(&p, &grid).unwrap();
        let mut err = 0.0f64;
        for idx in 0..w.values.len() {
            let m = w.grid.multi(idx);
            let q = w.grid.node_point(&m);
            err = err.max((w.values[idx] - fields::wstar(&q)).abs());
        }
        assert!(err < 0.02, "L-inf error {err} too large at this resolution");
    }

    #[test]
    fn degenerate_convergence_order() {
        let mut errs = [0.0f64; 2];
        for (k, m) in [24usize, 48].iter().enumerate() {
            let grid = default_sqrt_grid(1, 1.0, *m).unwrap();
            let p = DegenerateProblem {
                a: CoeffField::identity(1),
                f: Arc::new(crate::fields::ZeroVec),
                g: Arc::new(move |_: &SlitPoint| 0.0),
                alpha: 0.25,
                boundary: Arc::new(fields::wstar),
            };
            let (w, _) = solve_degenerate(&p, &grid).unwrap();
            let mut err = 0.0f64;
            for idx in 0..w.values.len() {
                let mm = w.grid.multi(idx);
                let q = w.grid.node_point(&mm);
                err = err.max((w.values[idx] - fields::wstar(&q)).abs());
            }
            errs[k] = err;
        }
        let order = libm::log(errs[0] / errs[1]) / libm::log(2.0);
        assert!(order >= 0.9, "order {order} from errors {errs:?}");
    }

    #[test]
    fn uniform_reproduces_xi_exactly() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let p = UniformProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            boundary: Arc::new(fields::xi_field),
        };
        let (u, _) = solve_uniform(&p, &grid).unwrap();
        for idx in 0..u.values.len() {
            let m = u.grid.multi(idx);
            let q = u.grid.node_point(&m);
            assert_close(u.values[idx], fields::xi_field(&q), 1e-7);
        }
    }

    #[test]
    fn uniform_model_blow_up_data() {
        let grid = default_sqrt_grid(1, 1.0, 48).unwrap();
        let p = UniformProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            boundary: Arc::new(fields::re_z32),
        };
        let (u, _) = solve_uniform(&p, &grid).unwrap();
        let mut err = 0.0f64;
        for idx in 0..u.values.len() {
            let m = u.grid.multi(idx);
            let q = u.grid.node_point(&m);
            err = err.max((u.values[idx] - fields::re_z32(&q)).abs());
        }
        assert!(err < 0.02, "L-inf error {err}");
    }

    /// Cross-solver equivalence from the absorption identity:
    /// `div(xi^2 (1/2) grad rho) = xi^2 * (1/rho)`.
    #[test]
    fn absorb_identity_cross_solve() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let f_side = DegenerateProblem {
            a: CoeffField::identity(1),
            f: Arc::new(|q: &SlitPoint| {
                let r = q.rho();
                [0.5 * q.xn / r, 0.5 * q.xnp1 / r, 0.0]
            }),
            g: Arc::new(|_: &SlitPoint| 0.0),
            alpha: 0.25,
            boundary: Arc::new(|_: &SlitPoint| 0.0),
        };
        let g_side = DegenerateProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            g: Arc::new(|q: &SlitPoint| 1.0 / q.rho()),
            alpha: 0.25,
            boundary: Arc::new(|_: &SlitPoint| 0.0),
        };
        let (wf, _) = solve_degenerate(&f_side, &grid).unwrap();
        let (wg, _) = solve_degenerate(&g_side, &grid).unwrap();
        let scale = wf.linf().max(wg.linf());
        let mut dmax = 0.0f64;
        for i in 0..wf.values.len() {
            dmax = dmax.max((wf.values[i] - wg.values[i]).abs());
        }
        assert!(
            dmax <= 0.05 * scale,
            "absorbed solves differ by {dmax} (scale {scale})"
        );
    }

    #[test]
    fn replacement_idempotent_on_harmonic() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let w = FieldSample::from_fn(grid, fields::wstar);
        let h = harmonic_replacement(&w, &Mat::identity(2), 0.5).unwrap();
        let mut dmax = 0.0f64;
        for i in 0..w.values.len() {
            dmax = dmax.max((h.values[i] - w.values[i]).abs());
        }
        assert!(dmax < 5e-3, "replacement moved a harmonic field by {dmax}");
    }

    #[test]
    fn replacement_decreases_energy() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let w = FieldSample::from_fn(grid, fields::rho_field);
        let h = harmonic_replacement(&w, &Mat::identity(2), 0.5).unwrap();
        let ew = energy_in_ball(&w, 0.5).unwrap();
        let eh = energy_in_ball(&h, 0.5).unwrap();
        assert!(eh <= ew * (1.0 + 1e-8), "Dirichlet principle violated: {eh} > {ew}");
        // And the replacement genuinely moved the field.
        let mut moved = 0.0f64;
        for i in 0..w.values.len() {
            moved = moved.max((h.values[i] - w.values[i]).abs());
        }
        assert!(moved > 1e-3);
    }

    #[test]
    fn linearize_recovers_basis_members() {
        let grid = default_sqrt_grid(2, 1.0, 24).unwrap();
        let h = FieldSample::from_fn(grid, |p| 3.0 + 2.0 * p.xt[0] - p.rho());
        let center = SlitPoint::d3(0.0, 0.0, 0.0);
        let l = linearize(&h, &center, 0.6, 1.0).unwrap();
        assert_close(l.c0, 3.0, 1e-8);
        assert_close(l.ct[0], 2.0, 1e-8);
        assert_close(l.cn, 0.0, 1e-8);
        assert_close(l.c_rho, -1.0, 1e-8);
    }

    #[test]
    fn linearize_wstar() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let h = FieldSample::from_fn(grid, fields::wstar);
        let center = SlitPoint::d2(0.0, 0.0);
        let l = linearize(&h, &center, 0.6, 1.0).unwrap();
        assert_close(l.c0, 0.0, 1e-8);
        assert_close(l.cn, 1.0, 1e-8);
        assert_close(l.c_rho, -0.5, 1e-8);
    }

    #[test]
    fn iterate_on_linear_input_is_silent() {
        let grid = default_sqrt_grid(1, 1.0, 48).unwrap();
        let w = FieldSample::from_fn(grid, |p| 1.0 + 2.0 * p.xn - 0.3 * p.rho());
        let center = SlitPoint::d2(0.0, 0.0);
        let rep = campanato_iterate(&w, &Mat::identity(2), &center, 0.8, 0.25, 3, 0.25, 0.0)
            .unwrap();
        assert!(!rep.sigmas.is_empty());
        for (k, &s) in rep.sigmas.iter().enumerate() {
            assert!(s < 1e-4, "sigma_{k} = {s} for linear input");
        }
        for lk in rep.per_level.iter().skip(1) {
            assert!(lk.max_abs_coeff() < 1e-4);
        }
    }

    #[test]
    fn iterate_recovers_leading_linear_part() {
        let grid = default_sqrt_grid(1, 1.0, 96).unwrap();
        let w = FieldSample::from_fn(grid, |p| fields::wstar(p) + pow(p.rho(), 1.25));
        let center = SlitPoint::d2(0.0, 0.0);
        let rep = campanato_iterate(&w, &Mat::identity(2), &center, 0.8, 0.25, 3, 0.25, 0.0)
            .unwrap();
        // sigma stays bounded; c0 and c_n converge fast (the rho^{1.25}
        // perturbation is even, so it is 1/rho-orthogonal to x_n on centered
        // balls), while c_rho approaches -1/2 only at the r^alpha rate of the
        // scaling oracle: bound the gap by that envelope instead of a fixed
        // small tolerance.
        assert!(rep.sigmas.iter().all(|s| s.is_finite() && *s < 5.0));
        assert_close(rep.l_total.c0, 0.0, 5e-2);
        assert_close(rep.l_total.cn, 1.0, 5e-2);
        let r_last = rep.radii.last().unwrap() / 2.0;
        let envelope = 1.5 * pow(r_last, 0.25);
        assert!(
            (rep.l_total.c_rho + 0.5).abs() <= envelope,
            "c_rho = {} not within {envelope} of -1/2",
            rep.l_total.c_rho
        );
        // Per-level rho-coefficient increments shrink as the radius does.
        if rep.per_level.len() >= 2 {
            let d0 = (rep.per_level[0].c_rho + 0.5).abs();
            let d1 = rep.per_level[1].c_rho.abs();
            assert!(d1 < d0, "level increments {d0} -> {d1} not shrinking");
        }
    }

    #[test]
    fn iterate_rejects_bad_lambda() {
        let grid = default_sqrt_grid(1, 1.0, 16).unwrap();
        let w = FieldSample::zeros(grid);
        let center = SlitPoint::d2(0.0, 0.0);
        assert!(
            campanato_iterate(&w, &Mat::identity(2), &center, 0.8, 0.6, 2, 0.25, 0.0).is_err()
        );
    }

    #[test]
    fn absorb_phi_examples() {
        let one = |_: &SlitPoint| 1.0;
        let f = AbsorbPhi::new(&one);
        let p = SlitPoint::d2(0.4, 0.7);
        let v = f.eval(&p);
        assert_close(v[1], 0.7, 1e-12);
        assert_close(v[0], 0.0, 1e-15);

        let linear = |q: &SlitPoint| q.xn;
        let f = AbsorbPhi::new(&linear);
        let v = f.eval(&p);
        assert_close(v[1], 0.7 * 0.4, 1e-12);

        // Finite-difference oracle: div F = phi for smooth phi.
        let smooth = |q: &SlitPoint| libm::sin(q.xn) * libm::cos(q.xnp1);
        let f = AbsorbPhi::new(&smooth);
        for &(xn, xnp1) in &[(0.3, 0.5), (-0.2, -0.4)] {
            let q = SlitPoint::d2(xn, xnp1);
            assert_close(fd_divergence(&f, &q, 1e-5), smooth.eval(&q), 1e-4);
        }
    }

    #[test]
    fn absorb_h_examples() {
        let one = |_: &SlitPoint| 1.0;
        let f = AbsorbH::new(&one);
        let p = SlitPoint::d2(0.3, 0.4);
        let v = f.eval(&p);
        // f = (1/2) grad rho.
        assert_close(v[0], 0.5 * 0.3 / 0.5, 1e-10);
        assert_close(v[1], 0.5 * 0.4 / 0.5, 1e-10);

        let zero = |_: &SlitPoint| 0.0;
        let fz = AbsorbH::new(&zero);
        assert_eq!(fz.eval(&p), [0.0; 3]);

        // h = x_1 is constant along the perp segment: f = (x_1/2) grad rho.
        let tangential = |q: &SlitPoint| q.xt[0];
        let ft = AbsorbH::new(&tangential);
        let q = SlitPoint::d3(0.6, 0.3, 0.4);
        let v = ft.eval(&q);
        assert_close(v[1], 0.6 * 0.5 * 0.3 / 0.5, 1e-10);
        assert_close(v[2], 0.6 * 0.5 * 0.4 / 0.5, 1e-10);

        // div(xi^2 f) = (xi^2/rho) h for h = 1, against the symbolic identity.
        let f1 = AbsorbH::new(&one);
        let wrapped = |q: &SlitPoint| {
            let (_, xi, _) = perp_weights(q);
            let v = f1.eval(q);
            [xi * xi * v[0], xi * xi * v[1], xi * xi * v[2]]
        };
        for &(xn, xnp1) in &[(0.4, 0.2), (-0.3, 0.4)] {
            let q = SlitPoint::d2(xn, xnp1);
            let (rho, xi, _) = perp_weights(&q);
            assert_close(fd_divergence(&wrapped, &q, 1e-5), xi * xi / rho, 1e-4);
        }
    }

    #[test]
    fn even_data_produces_even_solution() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let p = DegenerateProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            g: Arc::new(|_: &SlitPoint| 0.0),
            alpha: 0.25,
            // Even in x_{n+1} <-> even in eta.
            boundary: Arc::new(|q: &SlitPoint| q.xn + q.xnp1 * q.xnp1),
        };
        let (w, _) = solve_degenerate(&p, &grid).unwrap();
        // Mirror nodes in eta.
        let d = w.grid.d();
        let meta = w.grid.axes[d - 1].m;
        for idx in 0..w.values.len() {
            let mut m = w.grid.multi(idx);
            m[d - 1] = meta - m[d - 1];
            let v = w.values[w.grid.idx(&m)];
            assert_close(w.values[idx], v, 1e-8);
        }
    }

    #[test]
    fn maximum_principle_sanity() {
        let grid = default_sqrt_grid(1, 1.0, 32).unwrap();
        let p = DegenerateProblem {
            a: CoeffField::identity(1),
            f: Arc::new(crate::fields::ZeroVec),
            g: Arc::new(|_: &SlitPoint| 0.0),
            alpha: 0.25,
            boundary: Arc::new(|q: &SlitPoint| q.xn),
        };
        let (w, _) = solve_degenerate(&p, &grid).unwrap();
        let mut bmin = f64::INFINITY;
        let mut bmax = f64::NEG_INFINITY;
        for idx in 0..w.values.len() {
            let m = w.grid.multi(idx);
            if w.grid.is_outer_boundary(&m) {
                bmin = bmin.min(w.values[idx]);
                bmax = bmax.max(w.values[idx]);
            }
        }
        for &v in &w.values {
            assert!(v >= bmin - 1e-8 && v <= bmax + 1e-8);
        }
    }

    #[test]
    fn interior_constant_residual_zero() {
        // Constants are xi^2-harmonic: inserting 1 into the assembled
        // degenerate stiffness gives zero residual away from boundary rows.
        let grid = default_sqrt_grid(1, 1.0, 16).unwrap();
        let nn = grid.node_count();
        let fixed = vec![false; nn];
        let vals = vec![0.0; nn];
        // Assemble via solve_core machinery by building the operator and
        // applying it: reuse solve path with f = g = 0 and no constraints
        // is singular for CG, so probe through a manufactured RHS instead:
        // residual = K * 1 must vanish at interior rows. Build K directly.
        let a = CoeffField::identity(1);
        let zf = crate::fields::ZeroVec;
        let zg = |_: &SlitPoint| 0.0;
        // A fully unconstrained solve would be singular; instead constrain a
        // single node and check the solution is the constant extension.
        let mut fixed = fixed;
        let mut vals = vals;
        fixed[0] = true;
        vals[0] = 1.0;
        let (w, _) = solve_core(
            &move |q: &SlitPoint| a.eval(q),
            &grid,
            WeightKind::Degenerate,
            &zf,
            &zg,
            &fixed,
            &vals,
            None,
        )
        .unwrap();
        for &v in &w.values {
            assert_close(v, 1.0, 1e-7);
        }
    }

    #[test]
    fn tangential_coordinate_is_harmonic_n2() {
        // x_1 is degenerate-harmonic (weight independent of x_1); with x_1
        // boundary data the solve returns x_1.
        let grid = default_sqrt_grid(2, 1.0, 16).unwrap();
        let p = DegenerateProblem {
            a: CoeffField::identity(2),
            f: Arc::new(crate::fields::ZeroVec),
            g: Arc::new(|_: &SlitPoint| 0.0),
            alpha: 0.25,
            boundary: Arc::new(|q: &SlitPoint| q.xt[0]),
        };
        let (w, _) = solve_degenerate(&p, &grid).unwrap();
        for idx in 0..w.values.len() {
            let m = w.grid.multi(idx);
            let q = w.grid.node_point(&m);
            assert_close(w.values[idx], q.xt[0], 1e-7);
        }
    }
}
