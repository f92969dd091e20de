//! Thin obstacle (Signorini) solver in physical coordinates: projected SOR
//! on the even half-grid `x_{n+1} >= 0`, contact set and free boundary
//! extraction, Almgren frequency and blow-up rescaling.

use crate::coeff::CoeffField;
use crate::defaults::{
    PSOR_COMPLEMENTARITY_TOL, PSOR_ENERGY_TOL, PSOR_MAX_SWEEPS, PSOR_OMEGA, REGULAR_TAU,
};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::grid::{Axis, FieldSample, Frame, Parity, SlitGrid};
use crate::sparse::{cg_solve, pairwise_slice, Builder, Csr};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use libm::{cos, sin, sqrt};

/// Thin obstacle problem data: `min J(U) = int (1/2) grad U^T A grad U + F U`
/// subject to `U >= 0` on the thin plane, with Dirichlet data `g` on the
/// outer boundary (obstacle `psi = 0`).
pub struct SignoriniProblem {
    pub a: CoeffField,
    /// Bulk term `F` (W^{1,inf} data).
    pub f_rhs: Arc<dyn ScalarField>,
    /// Outer boundary data.
    pub boundary: Arc<dyn ScalarField>,
}

/// Even half-grid `[-1, 1]^{n} x [0, 1]` with `m` cells on the long axes.
pub fn half_grid(n: usize, m: usize) -> Result<Arc<SlitGrid>> {
    let mut axes = Vec::new();
    for _ in 0..n - 1 {
        axes.push(Axis::new(-1.0, 1.0, m));
    }
    axes.push(Axis::new(-1.0, 1.0, m));
    axes.push(Axis::new(0.0, 1.0, m / 2));
    Ok(Arc::new(SlitGrid::new(n, Frame::Physical, axes)?))
}

/// Converged Signorini solution on the half-grid.
pub struct SignoriniSolution {
    pub u: FieldSample,
    /// Contact mask over all nodes (true only on thin-plane nodes with
    /// `U = 0`).
    pub contact: Vec<bool>,
    /// Discrete energy `J(U)` of the half-domain functional.
    pub energy: f64,
    pub sweeps: usize,
    /// Set when the boundary trace on the thin plane is negative somewhere
    /// (admissible data, but worth surfacing).
    pub flagged_negative_boundary: bool,
}

struct Assembled {
    k: Csr,
    b: Vec<f64>,
    fixed: Vec<bool>,
    vals: Vec<f64>,
    /// Nodes subject to the `U >= 0` projection (free thin-plane nodes).
    project: Vec<bool>,
}

fn assemble_physical(p: &SignoriniProblem, grid: &Arc<SlitGrid>) -> Result<Assembled> {
    if grid.frame != Frame::Physical {
        return Err(Error::GridMismatch("signorini solver needs a physical-frame grid".into()));
    }
    let d = grid.d();
    if grid.axes[d - 1].min != 0.0 {
        return Err(Error::GridMismatch("expected the even half-grid x_{n+1} >= 0".into()));
    }
    let nn = grid.node_count();
    let mut fixed = vec![false; nn];
    let mut vals = vec![0.0; nn];
    let mut project = vec![false; nn];
    for idx in 0..nn {
        let m = grid.multi(idx);
        let mut outer = false;
        for (i, a) in grid.axes.iter().enumerate().take(d) {
            if m[i] == 0 || m[i] == a.m {
                // The thin plane {x_{n+1} = 0} is not outer boundary.
                if i == d - 1 && m[i] == 0 {
                    continue;
                }
                outer = true;
            }
        }
        let q = grid.node_point(&m);
        if outer {
            fixed[idx] = true;
            vals[idx] = p.boundary.eval(&q);
        } else if m[d - 1] == 0 {
            project[idx] = true;
        }
    }

    let nc = 1usize << d;
    let mut hs = [1.0f64; 3];
    let mut cellvol = 1.0;
    for i in 0..d {
        hs[i] = grid.axes[i].h();
        cellvol *= hs[i];
    }
    let wq = cellvol / nc as f64;
    let gp = 0.5 / sqrt(3.0);
    let mut builder = Builder::new(nn);
    let mut b = vec![0.0; nn];
    let mut shape = [0.0f64; 8];
    let mut sgrad = [[0.0f64; 3]; 8];
    for cell in grid.cells() {
        let (corners, _) = grid.cell_corners(&cell);
        let base = grid.node_coord(&cell);
        let mut ke = [[0.0f64; 8]; 8];
        let mut fe = [0.0f64; 8];
        for q in 0..nc {
            let mut zeta = [0.5f64; 3];
            let mut coords = [0.0f64; 3];
            for i in 0..d {
                let bit = (q >> (d - 1 - i)) & 1;
                zeta[i] = if bit == 1 { 0.5 + gp } else { 0.5 - gp };
                coords[i] = base[i] + zeta[i] * hs[i];
            }
            let pt = grid.physical_point(&coords);
            let a = p.a.eval(&pt);
            if !a.is_positive_definite() {
                return Err(Error::BadCoefficient("A not positive definite at a Gauss point".into()));
            }
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
                            s += sgrad[ka][i] * a.a[i][j] * sgrad[kb][j];
                        }
                    }
                    ke[ka][kb] += wq * s;
                }
            }
            let fv = p.f_rhs.eval(&pt);
            for k in 0..nc {
                fe[k] -= wq * fv * shape[k];
            }
        }
        for ka in 0..nc {
            let i = corners[ka];
            if fixed[i] {
                continue;
            }
            b[i] += fe[ka];
            for kb in 0..nc {
                let j = corners[kb];
                if fixed[j] {
                    b[i] -= ke[ka][kb] * vals[j];
                } else {
                    builder.add(i, j, ke[ka][kb]);
                }
            }
        }
    }
    for i in 0..nn {
        if fixed[i] {
            builder.set_identity_row(i);
            b[i] = vals[i];
        }
    }
    Ok(Assembled { k: builder.finish(), b, fixed, vals, project })
}

fn energy_of(k: &Csr, b: &[f64], u: &[f64]) -> f64 {
    let mut ku = vec![0.0; u.len()];
    k.matvec(u, &mut ku);
    let terms: Vec<f64> = (0..u.len()).map(|i| 0.5 * u[i] * ku[i] - b[i] * u[i]).collect();
    pairwise_slice(&terms)
}

/// Identity-constrain the masked rows and columns of `k` (values at masked
/// nodes are pinned to zero, so no RHS lifting is needed).
fn constrained_copy(k: &Csr, mask: &[bool]) -> Csr {
    let mut out = k.clone();
    for i in 0..k.n {
        for e in out.indptr[i]..out.indptr[i + 1] {
            let j = out.indices[e];
            if mask[i] || mask[j] {
                out.data[e] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    out
}

/// Outer iteration cap for the active-set polish.
const ACTIVE_SET_MAX_ITER: usize = 30;

/// PSOR sweeps with an unchanged clamp set before handing over to the
/// active-set polish.
const PSOR_STABLE_SWEEPS: usize = 50;

/// Projected SOR with deterministic lexicographic sweeps, followed by an
/// active-set polish.
///
/// The PSOR phase ends when either the per-sweep energy decrease drops
/// below the energy tolerance with the thin-plane complementarity residual
/// `max |min(U_i, (KU - b)_i)|` below its tolerance, or the clamp set has
/// been unchanged for [`PSOR_STABLE_SWEEPS`] sweeps. PSOR resolves the
/// contact topology quickly but converges slowly in magnitude, so the
/// solution is then polished by primal-dual active-set iterations: with the
/// contact set frozen the problem is linear and a constrained CG solve
/// reaches solver tolerance; mislabeled nodes are exchanged between solves.
/// Complementarity is re-verified on the polished iterate.
pub fn solve_signorini(
    p: &SignoriniProblem,
    grid: &Arc<SlitGrid>,
) -> Result<SignoriniSolution> {
    let asm = assemble_physical(p, grid)?;
    let Assembled { k, b, fixed, vals, project } = asm;
    let nn = k.n;

    // Warm start: unconstrained solve, then clamp the thin plane.
    let (mut u, _) = cg_solve(&k, &b, Some(&vals), 1e-8, crate::defaults::CG_MAX_ITER)?;
    for i in 0..nn {
        if project[i] && u[i] < 0.0 {
            u[i] = 0.0;
        }
    }

    let diag = k.diagonal();
    let mut energy = energy_of(&k, &b, &u);
    let mut sweeps = 0;
    let mut converged = false;
    let mut clamped: Vec<bool> = (0..nn).map(|i| project[i] && u[i] == 0.0).collect();
    let mut stable = 0usize;
    while sweeps < PSOR_MAX_SWEEPS {
        let mut clamp_changed = false;
        for i in 0..nn {
            if fixed[i] {
                continue;
            }
            let (cols, data) = k.row(i);
            let mut s = b[i];
            for (c, v) in cols.iter().zip(data) {
                if *c != i {
                    s -= v * u[*c];
                }
            }
            let unew = s / diag[i];
            let mut val = u[i] + PSOR_OMEGA * (unew - u[i]);
            let mut is_clamped = false;
            if project[i] && val < 0.0 {
                val = 0.0;
                is_clamped = true;
            }
            if project[i] && is_clamped != clamped[i] {
                clamped[i] = is_clamped;
                clamp_changed = true;
            }
            u[i] = val;
        }
        sweeps += 1;
        stable = if clamp_changed { 0 } else { stable + 1 };
        if stable >= PSOR_STABLE_SWEEPS {
            converged = true;
            break;
        }
        let enew = energy_of(&k, &b, &u);
        let decrease = energy - enew;
        energy = enew;
        if decrease.abs() < PSOR_ENERGY_TOL * energy.abs().max(1.0) {
            // Check complementarity before accepting.
            let mut ku = vec![0.0; nn];
            k.matvec(&u, &mut ku);
            let mut comp = 0.0f64;
            for i in 0..nn {
                if project[i] {
                    let r = ku[i] - b[i];
                    comp = comp.max(u[i].min(r).abs());
                }
            }
            if comp <= PSOR_COMPLEMENTARITY_TOL {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::SolverDiverged { iterations: sweeps, residual: f64::NAN });
    }

    // Active-set polish: freeze the contact set, solve the reduced linear
    // system to CG tolerance, and exchange mislabeled nodes (u_i - mu_i < 0
    // activates, mu = KU - b) until the set is self-consistent.
    let mut active: Vec<bool> = (0..nn).map(|i| project[i] && u[i] <= 0.0).collect();
    for _ in 0..ACTIVE_SET_MAX_ITER {
        let kc = constrained_copy(&k, &active);
        let bc: Vec<f64> = (0..nn).map(|i| if active[i] { 0.0 } else { b[i] }).collect();
        let x0: Vec<f64> = (0..nn).map(|i| if active[i] { 0.0 } else { u[i] }).collect();
        let (unew, _) =
            cg_solve(&kc, &bc, Some(&x0), crate::defaults::CG_TOL, crate::defaults::CG_MAX_ITER)?;
        u = unew;
        let mut ku = vec![0.0; nn];
        k.matvec(&u, &mut ku);
        let mut changed = false;
        for i in 0..nn {
            if !project[i] {
                continue;
            }
            let mu = ku[i] - b[i];
            let flag = u[i] - mu < 0.0;
            if flag != active[i] {
                active[i] = flag;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for i in 0..nn {
        if project[i] && u[i] < 0.0 {
            u[i] = 0.0;
        }
    }
    energy = energy_of(&k, &b, &u);
    {
        let mut ku = vec![0.0; nn];
        k.matvec(&u, &mut ku);
        let mut comp = 0.0f64;
        let mut scale = 1.0f64;
        for i in 0..nn {
            scale = scale.max(b[i].abs());
            if project[i] {
                comp = comp.max(u[i].min(ku[i] - b[i]).abs());
            }
        }
        if comp > PSOR_COMPLEMENTARITY_TOL * scale {
            return Err(Error::SolverDiverged { iterations: sweeps, residual: comp });
        }
    }

    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    let mut contact = vec![false; nn];
    let mut flagged_negative_boundary = false;
    for i in 0..nn {
        let m = grid.multi(i);
        if m[grid.d() - 1] == 0 {
            if u[i] <= 1e-6 * scale {
                contact[i] = true;
            }
            if fixed[i] && vals[i] < 0.0 {
                flagged_negative_boundary = true;
            }
        }
    }
    let mut field = FieldSample::zeros(grid.clone());
    field.values = u;
    field.parity = Parity::Even; // by the half-grid reduction
    Ok(SignoriniSolution { u: field, contact, energy, sweeps, flagged_negative_boundary })
}

/// Mirror an even half-grid field to the full symmetric grid.
pub fn mirror_full(u: &FieldSample) -> Result<FieldSample> {
    let g = &u.grid;
    let d = g.d();
    if g.axes[d - 1].min != 0.0 {
        return Err(Error::GridMismatch("mirror_full expects a half-grid field".into()));
    }
    let mut axes = g.axes.clone();
    let mh = axes[d - 1].m;
    axes[d - 1] = Axis::new(-axes[d - 1].max, axes[d - 1].max, 2 * mh);
    let full = Arc::new(SlitGrid::new(g.n, Frame::Physical, axes)?);
    let mut out = FieldSample::zeros(full);
    for idx in 0..out.values.len() {
        let mut m = out.grid.multi(idx);
        let j = m[d - 1];
        m[d - 1] = if j >= mh { j - mh } else { mh - j };
        out.values[idx] = u.values[u.grid.idx(&m)];
    }
    out.parity = Parity::Even;
    Ok(out)
}

/// One tangential line of the free boundary graph.
#[derive(Clone, Copy, Debug)]
pub struct FbLine {
    pub xt: [f64; 2],
    /// Sub-grid zero crossing `gamma(x^T)`; `None` when the line has no
    /// contact or full contact.
    pub gamma: Option<f64>,
    /// True when the contact indicator has multiple crossings on this line
    /// (non-graph topology); the outermost crossing is reported.
    pub multiple: bool,
}

/// Extract `gamma(x^T)` per tangential line as the outermost zero crossing
/// of the thin-plane trace, sub-grid located by linear interpolation.
pub fn free_boundary_graph(sol: &SignoriniSolution) -> Result<Vec<FbLine>> {
    let g = &sol.u.grid;
    let d = g.d();
    let shape = g.shape();
    let tang_count = if d == 2 { 1 } else { shape[0] };
    let mn = g.axes[d - 2].m;
    let mut out = Vec::new();
    for t in 0..tang_count {
        let mut crossings = 0usize;
        let mut gamma = None;
        for i in 0..mn {
            let mut ma = [0usize; 3];
            let mut mb = [0usize; 3];
            if d == 3 {
                ma[0] = t;
                mb[0] = t;
            }
            ma[d - 2] = i;
            mb[d - 2] = i + 1;
            // thin-plane index is 0 on the last axis
            let (ia, ib) = (g.idx(&ma), g.idx(&mb));
            let (ca, cb) = (sol.contact[ia], sol.contact[ib]);
            if ca && !cb {
                crossings += 1;
                let (ua, ub) = (sol.u.values[ia], sol.u.values[ib]);
                let xa = g.axes[d - 2].node(i);
                let h = g.axes[d - 2].h();
                let frac = if ub > ua { (0.0 - ua) / (ub - ua) } else { 0.0 };
                gamma = Some(xa + frac.clamp(0.0, 1.0) * h);
            }
        }
        let xt = if d == 3 { [g.axes[0].node(t), 0.0] } else { [0.0, 0.0] };
        out.push(FbLine { xt, gamma, multiple: crossings > 1 });
    }
    Ok(out)
}

/// Almgren frequency profile at a center.
#[derive(Clone, Debug)]
pub struct FrequencyProfile {
    pub center: crate::geom::SlitPoint,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

/// `N(r) = r int_{B_r} |grad U|^2 / int_{dB_r} U^2` on a full physical grid.
///
/// Volume integral by cell quadrature with a 2^d-subsample coverage fraction
/// at the ball boundary; sphere integral by the trapezoid rule over
/// interpolated samples (256 angles in 2-D, 64 x 128 lat-long in 3-D).
pub fn frequency(u: &FieldSample, x0: &crate::geom::SlitPoint, r: f64) -> Result<f64> {
    let g = &u.grid;
    if g.frame != Frame::Physical {
        return Err(Error::GridMismatch("frequency expects a physical-frame field".into()));
    }
    let d = g.d();
    let mut cellvol = 1.0;
    let mut diag = 0.0;
    for a in g.axes.iter().take(d) {
        cellvol *= a.h();
        diag += a.h() * a.h();
    }
    let diag = sqrt(diag);
    let mut contrib: Vec<f64> = Vec::new();
    for cell in g.cells() {
        let c = g.cell_center(&cell);
        let p = g.physical_point(&c);
        let dist = p.dist(x0);
        if dist > r + diag {
            continue;
        }
        let frac = if dist < r - diag {
            1.0
        } else {
            // Corner subsample for a smooth coverage fraction.
            let (corners, count) = g.cell_corners(&cell);
            let mut inside = 0usize;
            for &ci in corners.iter().take(count) {
                if g.node_point(&g.multi(ci)).dist(x0) <= r {
                    inside += 1;
                }
            }
            inside as f64 / count as f64
        };
        if frac == 0.0 {
            continue;
        }
        let gr = u.cell_gradient(&cell);
        let e = gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2];
        contrib.push(frac * cellvol * e);
    }
    let vol = pairwise_slice(&contrib);
    let sph = sphere_integral_sq(u, x0, r)?;
    if sph <= 0.0 {
        return Err(Error::DegenerateInput("vanishing sphere integral in frequency".into()));
    }
    Ok(r * vol / sph)
}

/// `int_{dB_r} U^2` by angular quadrature of the interpolated field.
pub fn sphere_integral_sq(
    u: &FieldSample,
    x0: &crate::geom::SlitPoint,
    r: f64,
) -> Result<f64> {
    let d = u.grid.d();
    let pi = core::f64::consts::PI;
    let mut vals: Vec<f64> = Vec::new();
    if d == 2 {
        let m = 256usize;
        for k in 0..m {
            let th = (k as f64 + 0.5) * 2.0 * pi / m as f64 - pi;
            let p = crate::geom::SlitPoint {
                xn: x0.xn + r * cos(th),
                xnp1: x0.xnp1 + r * sin(th),
                ..*x0
            };
            let v = u
                .eval_physical(&p)
                .ok_or_else(|| Error::RegionUnresolved(format!("sphere of radius {r} leaves grid")))?;
            vals.push(v * v * (2.0 * pi * r / m as f64));
        }
    } else {
        let (mt, mp) = (64usize, 128usize);
        for i in 0..mt {
            let th = (i as f64 + 0.5) * pi / mt as f64; // polar from +x1 axis
            for j in 0..mp {
                let ph = (j as f64 + 0.5) * 2.0 * pi / mp as f64 - pi;
                let p = crate::geom::SlitPoint {
                    xt: [x0.xt[0] + r * cos(th), 0.0],
                    nt: 1,
                    xn: x0.xn + r * sin(th) * cos(ph),
                    xnp1: x0.xnp1 + r * sin(th) * sin(ph),
                };
                let v = u.eval_physical(&p).ok_or_else(|| {
                    Error::RegionUnresolved(format!("sphere of radius {r} leaves grid"))
                })?;
                let da = r * r * sin(th) * (pi / mt as f64) * (2.0 * pi / mp as f64);
                vals.push(v * v * da);
            }
        }
    }
    Ok(pairwise_slice(&vals))
}

/// Frequency over a radius list.
pub fn frequency_profile(
    u: &FieldSample,
    x0: &crate::geom::SlitPoint,
    radii: &[f64],
) -> Result<FrequencyProfile> {
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        values.push(frequency(u, x0, r)?);
    }
    Ok(FrequencyProfile { center: *x0, radii: radii.to_vec(), values })
}

/// Classification verdict with the monotonicity diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct Classification {
    pub regular: bool,
    pub extrapolated: f64,
    /// Largest decrease `N(r_small) - N(r_large) > 0` beyond tolerance.
    pub monotonicity_violation: f64,
}

/// Regular iff the small-radius extrapolation of `N` lies in
/// `(3/2 - tau, 3/2 + tau)`.
pub fn classify_regular(profile: &FrequencyProfile, tau: Option<f64>) -> Result<Classification> {
    if profile.radii.len() < 4 {
        return Err(Error::DegenerateInput("classification needs at least 4 radii".into()));
    }
    let tau = tau.unwrap_or(REGULAR_TAU);
    // Radii may come in any order; sort ascending.
    let mut pairs: Vec<(f64, f64)> =
        profile.radii.iter().cloned().zip(profile.values.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Least-squares intercept of N(r) at r = 0; averaging over all radii
    // damps the quadrature noise of individual frequency values.
    let k = pairs.len() as f64;
    let mr = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let mn = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(r, nv) in &pairs {
        num += (r - mr) * (nv - mn);
        den += (r - mr) * (r - mr);
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    let extrapolated = mn - slope * mr;
    let mut viol = 0.0f64;
    for w in pairs.windows(2) {
        viol = viol.max(w[0].1 - w[1].1);
    }
    Ok(Classification {
        regular: (extrapolated - 1.5).abs() < tau,
        extrapolated,
        monotonicity_violation: viol,
    })
}

/// Blow-up rescaling `U_r(x) = U(r x + x0) / sqrt(avg_{dB_r} U^2)` resampled
/// on the unit-ball box with `m` cells per axis.
pub fn blow_up(
    u: &FieldSample,
    x0: &crate::geom::SlitPoint,
    r: f64,
    m: usize,
) -> Result<FieldSample> {
    let d = u.grid.d();
    let area = if d == 2 {
        2.0 * core::f64::consts::PI * r
    } else {
        4.0 * core::f64::consts::PI * r * r
    };
    let norm = sqrt(sphere_integral_sq(u, x0, r)? / area);
    if norm <= 0.0 {
        return Err(Error::DegenerateInput("vanishing blow-up normalizer".into()));
    }
    let lo = [-1.0; 3];
    let hi = [1.0; 3];
    let out_grid = Arc::new(SlitGrid::uniform(u.grid.n, Frame::Physical, &lo, &hi, m)?);
    let mut out = FieldSample::zeros(out_grid);
    for idx in 0..out.values.len() {
        let mm = out.grid.multi(idx);
        let q = out.grid.node_point(&mm);
        let p = crate::geom::SlitPoint {
            xt: [x0.xt[0] + r * q.xt[0], 0.0],
            nt: q.nt,
            xn: x0.xn + r * q.xn,
            xnp1: x0.xnp1 + r * q.xnp1,
        };
        out.values[idx] = u.eval(&p) / norm;
    }
    Ok(out)
}

/// Tangential/normal derivative `u_m = d U / d x_m` on the half grid by
/// centered differences, one-sided adjacent to the contact set and at the
/// domain faces. `m` is a packed direction index `< n`.
pub fn derivative_fields(sol: &SignoriniSolution, m: usize) -> Result<FieldSample> {
    let g = &sol.u.grid;
    let d = g.d();
    if m >= d - 1 {
        return Err(Error::OutOfDomain(format!("direction {m} out of range (need < {})", d - 1)));
    }
    let h = g.axes[m].h();
    let shape = g.shape();
    let mut out = FieldSample::zeros(g.clone());
    out.parity = Parity::Even;
    for idx in 0..out.values.len() {
        let mm = g.multi(idx);
        let i = mm[m];
        let last = shape[m] - 1;
        let take = |j: usize| {
            let mut mj = mm;
            mj[m] = j;
            (g.idx(&mj), sol.u.values[g.idx(&mj)])
        };
        let on_plane = mm[d - 1] == 0;
        let v = if i == 0 {
            (take(1).1 - take(0).1) / h
        } else if i == last {
            (take(last).1 - take(last - 1).1) / h
        } else {
            let (im, vm) = take(i - 1);
            let (ip, vp) = take(i + 1);
            let (ic, vc) = take(i);
            if on_plane {
                let cc = sol.contact[ic];
                let cm = sol.contact[im];
                let cp = sol.contact[ip];
                if cc != cm && cc == cp {
                    (vp - vc) / h
                } else if cc != cp && cc == cm {
                    (vc - vm) / h
                } else {
                    (vp - vm) / (2.0 * h)
                }
            } else {
                (vp - vm) / (2.0 * h)
            }
        };
        out.values[idx] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;
    use crate::geom::SlitPoint;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    fn model_problem() -> SignoriniProblem {
        SignoriniProblem {
            a: CoeffField::identity(1),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(fields::re_z32),
        }
    }

    #[test]
    fn unconstrained_when_data_positive() {
        // g >= delta > 0: no contact, U is the unconstrained extension.
        let grid = half_grid(1, 32).unwrap();
        let p = SignoriniProblem {
            a: CoeffField::identity(1),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(|_: &SlitPoint| 1.0),
        };
        let sol = solve_signorini(&p, &grid).unwrap();
        assert!(sol.contact.iter().all(|&c| !c), "positive data must not contact");
        for &v in &sol.u.values {
            assert_close(v, 1.0, 1e-6);
        }
    }

    #[test]
    fn model_solution_matches_re_z32() {
        let grid = half_grid(1, 64).unwrap();
        let sol = solve_signorini(&model_problem(), &grid).unwrap();
        let mut err = 0.0f64;
        for idx in 0..sol.u.values.len() {
            let m = sol.u.grid.multi(idx);
            let q = sol.u.grid.node_point(&m);
            err = err.max((sol.u.values[idx] - fields::re_z32(&q)).abs());
        }
        assert!(err < 0.02, "model L-inf error {err}");
        // Contact = {x_n <= 0} on the thin plane; free boundary near 0.
        let fb = free_boundary_graph(&sol).unwrap();
        let gamma = fb[0].gamma.expect("model problem has a free boundary");
        assert!(gamma.abs() <= 2.0 / 32.0, "free boundary at {gamma}");
    }

    #[test]
    fn model_convergence_order() {
        let mut errs = [0.0f64; 2];
        for (k, m) in [32usize, 64].iter().enumerate() {
            let grid = half_grid(1, *m).unwrap();
            let sol = solve_signorini(&model_problem(), &grid).unwrap();
            let mut err = 0.0f64;
            for idx in 0..sol.u.values.len() {
                let mm = sol.u.grid.multi(idx);
                let q = sol.u.grid.node_point(&mm);
                err = err.max((sol.u.values[idx] - fields::re_z32(&q)).abs());
            }
            errs[k] = err;
        }
        let order = libm::log(errs[0] / errs[1]) / libm::log(2.0);
        assert!(order >= 0.9, "order {order} from {errs:?}");
    }

    #[test]
    fn full_contact_for_nonpositive_data() {
        let grid = half_grid(1, 32).unwrap();
        let p = SignoriniProblem {
            a: CoeffField::identity(1),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(|q: &SlitPoint| -1.0 + q.xnp1),
        };
        let sol = solve_signorini(&p, &grid).unwrap();
        assert!(sol.flagged_negative_boundary);
        // All interior thin-plane nodes in contact.
        let g = &sol.u.grid;
        let d = g.d();
        for idx in 0..sol.u.values.len() {
            let m = g.multi(idx);
            if m[d - 1] == 0 && m[d - 2] > 0 && m[d - 2] < g.axes[d - 2].m {
                assert!(sol.contact[idx], "thin-plane node escaped contact");
            }
        }
    }

    #[test]
    fn translated_data_moves_free_boundary() {
        let grid = half_grid(1, 64).unwrap();
        let shift = 0.3;
        let p = SignoriniProblem {
            a: CoeffField::identity(1),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(move |q: &SlitPoint| {
                fields::re_z32(&SlitPoint { xn: q.xn - shift, ..*q })
            }),
        };
        let sol = solve_signorini(&p, &grid).unwrap();
        let fb = free_boundary_graph(&sol).unwrap();
        let gamma = fb[0].gamma.unwrap();
        assert_close(gamma, shift, 2.0 / 64.0);
    }

    #[test]
    fn tilted_data_gives_linear_graph() {
        let grid = half_grid(2, 24).unwrap();
        let c = 0.2;
        let p = SignoriniProblem {
            a: CoeffField::identity(2),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(move |q: &SlitPoint| {
                fields::re_z32(&SlitPoint { xn: q.xn - c * q.xt[0], ..*q })
            }),
        };
        let sol = solve_signorini(&p, &grid).unwrap();
        let fb = free_boundary_graph(&sol).unwrap();
        // Fit a slope over interior lines.
        let mut num = 0.0;
        let mut den = 0.0;
        for line in &fb {
            if line.xt[0].abs() > 0.5 {
                continue;
            }
            if let Some(g) = line.gamma {
                num += line.xt[0] * g;
                den += line.xt[0] * line.xt[0];
            }
        }
        let slope = num / den;
        assert_close(slope, c, 0.05 * c.max(0.2));
    }

    /// Homogeneity oracle: N = lambda exactly for lambda-homogeneous fields.
    #[test]
    fn frequency_homogeneity_oracle() {
        let g = Arc::new(
            SlitGrid::uniform(1, Frame::Physical, &[-1.0, -1.0], &[1.0, 1.0], 512).unwrap(),
        );
        let origin = SlitPoint::d2(0.0, 0.0);
        let uxi = FieldSample::from_fn(g.clone(), fields::xi_field);
        let n = frequency(&uxi, &origin, 0.3).unwrap();
        assert_close(n, 0.5, 0.01);
        let uxn = FieldSample::from_fn(g.clone(), |p| p.xn);
        let n = frequency(&uxn, &origin, 0.3).unwrap();
        assert_close(n, 1.0, 0.01);
        let u32 = FieldSample::from_fn(g, fields::re_z32);
        let n = frequency(&u32, &origin, 0.3).unwrap();
        assert_close(n, 1.5, 0.02);
    }

    #[test]
    fn frequency_monotone_for_harmonic() {
        let g = Arc::new(
            SlitGrid::uniform(1, Frame::Physical, &[-1.0, -1.0], &[1.0, 1.0], 256).unwrap(),
        );
        let u = FieldSample::from_fn(g, |p| p.xn + 0.2 * fields::re_z32(p));
        let origin = SlitPoint::d2(0.0, 0.0);
        let prof = frequency_profile(&u, &origin, &[0.15, 0.25, 0.35, 0.5]).unwrap();
        for w in prof.values.windows(2) {
            assert!(w[0] <= w[1] + 0.01, "monotonicity violated: {:?}", prof.values);
        }
    }

    #[test]
    fn classify_regular_cases() {
        let origin = SlitPoint::d2(0.0, 0.0);
        let g = Arc::new(
            SlitGrid::uniform(1, Frame::Physical, &[-1.0, -1.0], &[1.0, 1.0], 256).unwrap(),
        );
        let radii = [0.15, 0.25, 0.35, 0.5];
        let model = FieldSample::from_fn(g.clone(), fields::re_z32);
        let prof = frequency_profile(&model, &origin, &radii).unwrap();
        assert!(classify_regular(&prof, None).unwrap().regular);
        let xi = FieldSample::from_fn(g.clone(), fields::xi_field);
        let prof = frequency_profile(&xi, &origin, &radii).unwrap();
        assert!(!classify_regular(&prof, None).unwrap().regular);
        let xn = FieldSample::from_fn(g, |p| p.xn);
        let prof = frequency_profile(&xn, &origin, &radii).unwrap();
        assert!(!classify_regular(&prof, None).unwrap().regular);
    }

    /// Scaling remark: classification is invariant under
    /// `U -> R^{-3/2} U(R x)`.
    #[test]
    fn classify_invariant_under_rescaling() {
        let origin = SlitPoint::d2(0.0, 0.0);
        let g = Arc::new(
            SlitGrid::uniform(1, Frame::Physical, &[-1.0, -1.0], &[1.0, 1.0], 256).unwrap(),
        );
        let rr = 0.5;
        let scaled = FieldSample::from_fn(g, move |p| {
            let q = SlitPoint::d2(rr * p.xn, rr * p.xnp1);
            libm::pow(rr, -1.5) * fields::re_z32(&q)
        });
        let radii = [0.15, 0.25, 0.35, 0.5];
        let prof = frequency_profile(&scaled, &origin, &radii).unwrap();
        assert!(classify_regular(&prof, None).unwrap().regular);
    }

    #[test]
    fn blow_up_of_homogeneous_is_scale_free() {
        let g = Arc::new(
            SlitGrid::uniform(1, Frame::Physical, &[-1.0, -1.0], &[1.0, 1.0], 256).unwrap(),
        );
        let u = FieldSample::from_fn(g, fields::re_z32);
        let origin = SlitPoint::d2(0.0, 0.0);
        let b1 = blow_up(&u, &origin, 0.2, 64).unwrap();
        let b2 = blow_up(&u, &origin, 0.4, 64).unwrap();
        let mut dmax = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..b1.values.len() {
            dmax = dmax.max((b1.values[i] - b2.values[i]).abs());
            scale = scale.max(b1.values[i].abs());
        }
        assert!(dmax <= 0.05 * scale, "blow-ups differ by {dmax} at scale {scale}");
    }

    #[test]
    fn derivative_fields_oracle() {
        let grid = half_grid(1, 64).unwrap();
        let sol = solve_signorini(&model_problem(), &grid).unwrap();
        let un = derivative_fields(&sol, 0).unwrap();
        // Analytic-derivative oracle away from the slit neighborhood:
        // d/dx_n Re z^{3/2} = (3/2) xi.
        let mut err = 0.0f64;
        for idx in 0..un.values.len() {
            let m = un.grid.multi(idx);
            let q = un.grid.node_point(&m);
            if q.norm() > 0.5 || q.rho() < 0.1 {
                continue;
            }
            err = err.max((un.values[idx] - 1.5 * fields::xi_field(&q)).abs());
        }
        assert!(err < 0.05, "u_n error {err}");
        // Linear-in-x1 data has constant tangential derivative.
        let grid3 = half_grid(2, 16).unwrap();
        let p = SignoriniProblem {
            a: CoeffField::identity(2),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(|q: &SlitPoint| 1.0 + 0.5 * q.xt[0]),
        };
        let sol3 = solve_signorini(&p, &grid3).unwrap();
        let u1 = derivative_fields(&sol3, 0).unwrap();
        for &v in &u1.values {
            assert_close(v, 0.5, 1e-5);
        }
        assert!(derivative_fields(&sol3, 2).is_err());
    }

    #[test]
    fn even_mirror_round_trip() {
        let grid = half_grid(1, 16).unwrap();
        let u = FieldSample::from_fn(grid, |p| p.xn + p.xnp1 * p.xnp1);
        let full = mirror_full(&u).unwrap();
        full.check_parity().unwrap();
        assert_close(
            full.eval_physical(&SlitPoint::d2(0.25, -0.5)).unwrap(),
            0.25 + 0.25,
            1e-12,
        );
    }
}
