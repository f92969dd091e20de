//! Experiment dispatch: one function per experiment kind, each producing
//! deterministic CSV artifacts plus a `report.json` in the configured output
//! directory.

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{self, num, JsonReport};
use slitlab_core::analysis::{
    c2alpha_pipeline, campanato_fit, harnack_experiment, HarnackParams, PipelineParams,
};
use slitlab_core::dsolve::{default_sqrt_grid, solve_degenerate, DegenerateProblem};
use slitlab_core::fields::{self, PoincareField, ScalarField, ZeroVec};
use slitlab_core::geom::SlitPoint;
use slitlab_core::grid::{FieldSample, Frame, Region, SlitGrid};
use slitlab_core::signorini::{
    classify_regular, free_boundary_graph, frequency_profile, half_grid, mirror_full,
    solve_signorini, SignoriniProblem,
};
use slitlab_core::wspace::{check_hardy, check_poincare};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

/// Runtime failure of an experiment (as opposed to a failed acceptance
/// assertion, which is a `pass = false` report with exit code 1).
#[derive(Debug)]
pub enum RunError {
    Core(slitlab_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<slitlab_core::Error> for RunError {
    fn from(e: slitlab_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Worker-thread cap: `SLITLAB_THREADS` if set (minimum 1), otherwise the
/// available parallelism.
pub fn thread_cap() -> usize {
    if let Ok(v) = std::env::var("SLITLAB_THREADS") {
        if let Ok(t) = v.trim().parse::<usize>() {
            return t.max(1);
        }
    }
    std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
}

/// Evaluate `f` over the index range on up to [`thread_cap`] threads; the
/// output order is by index, so results do not depend on the thread count.
fn parallel_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = thread_cap().min(count.max(1));
    if threads <= 1 {
        return (0..count).map(f).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= count {
                    break;
                }
                *slots[i].lock().unwrap() = Some(f(i));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

fn phys_grid(n: usize, m: usize) -> Result<Arc<SlitGrid>> {
    let lo = [-1.0; 3];
    let hi = [1.0; 3];
    Ok(Arc::new(SlitGrid::uniform(n, Frame::Physical, &lo[..n + 1], &hi[..n + 1], m)?))
}

/// Radii resolvable at spacing `h` for frequency quadrature (at least six
/// cells across); classification needs four survivors.
fn resolved_radii(radii: &[f64], h: f64) -> Result<Vec<f64>> {
    let out: Vec<f64> = radii.iter().cloned().filter(|&r| r >= 6.0 * h).collect();
    if out.len() < 4 {
        return Err(RunError::Core(slitlab_core::Error::RegionUnresolved(format!(
            "only {} of {} radii are resolvable at h = {h}",
            out.len(),
            radii.len()
        ))));
    }
    Ok(out)
}

fn origin(n: usize) -> SlitPoint {
    if n == 1 {
        SlitPoint::d2(0.0, 0.0)
    } else {
        SlitPoint::d3(0.0, 0.0, 0.0)
    }
}

fn base_report(cfg: &ExperimentConfig) -> JsonReport {
    let mut rep = JsonReport::new(cfg.kind.name());
    rep.input("n", cfg.n)
        .input("h", format!("1/{}", cfg.h_den))
        .input("seed", cfg.seed)
        .input("alpha", cfg.alpha)
        .input(
            "coeff",
            match cfg.coeff {
                crate::config::CoeffKind::Constant => "constant".to_string(),
                crate::config::CoeffKind::Perturbation => {
                    format!("perturbation(eps0={}, seed={})", cfg.eps0, cfg.coeff_seed.unwrap_or(cfg.seed))
                }
            },
        );
    rep
}

/// Run the configured experiment, writing all artifacts under `cfg.out`.
/// Returns the JSON report; `pass = false` means an acceptance assertion
/// failed (exit code 1 for the CLI), while `Err` is a runtime failure.
pub fn run(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let report = match cfg.kind {
        ExperimentKind::Inequalities => run_inequalities(cfg)?,
        ExperimentKind::Signorini => run_signorini(cfg)?,
        ExperimentKind::Degenerate => run_degenerate(cfg)?,
        ExperimentKind::Frequency => run_frequency(cfg)?,
        ExperimentKind::Campanato => run_campanato(cfg)?,
        ExperimentKind::Harnack => run_harnack(cfg)?,
        ExperimentKind::Pipeline => run_pipeline(cfg)?,
    };
    report::write_json(&cfg.out.join("report.json"), &report)?;
    Ok(report)
}

/// Thin Poincare corpus plus the Hardy equality probe.
fn run_inequalities(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let grid = phys_grid(cfg.n, cfg.cells())?;
    let ratios = parallel_map(cfg.seeds, |i| {
        let seed = cfg.seed + i as u64;
        let f = PoincareField::seeded(seed, 1.0);
        let w = FieldSample::from_fn(grid.clone(), |p| f.eval(p));
        check_poincare(&w, 1.0)
    });
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    for (i, r) in ratios.into_iter().enumerate() {
        let ratio = r?;
        max_ratio = max_ratio.max(ratio);
        rows.push(vec![num((cfg.seed + i as u64) as f64), num(ratio)]);
    }
    report::write_csv(&cfg.out.join("poincare.csv"), &["seed", "ratio"], &rows)?;

    let u = FieldSample::from_fn(grid, fields::xi_field);
    let hardy = check_hardy(&u, &Region::ball_origin(cfg.n, 1.0))?;
    report::write_csv(
        &cfg.out.join("hardy.csv"),
        &["h", "ratio"],
        &[vec![num(cfg.h()), num(hardy)]],
    )?;

    let bound = 4.0 * (1.0 + cfg.poincare_slack);
    // The Hardy probe is pinned to +/- 0.05 at h = 1/256; coarser grids get
    // proportionally wider quadrature slack.
    let hardy_tol = 0.05f64.max(12.8 * cfg.h());
    let mut rep = base_report(cfg);
    rep.input("seeds", cfg.seeds);
    rep.constant("poincare_max", max_ratio)
        .constant("poincare_bound", bound)
        .constant("hardy_ratio", hardy)
        .constant("hardy_tol", hardy_tol);
    rep.pass = max_ratio <= bound && (hardy - 4.0).abs() <= hardy_tol;
    Ok(rep)
}

/// Model thin obstacle solve: PSOR on the half-grid with blow-up boundary
/// data, free-boundary extraction and frequency classification at the origin.
fn run_signorini(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let grid = half_grid(cfg.n, cfg.cells())?;
    let prob = SignoriniProblem {
        a: cfg.coeff_field()?,
        f_rhs: Arc::new(|_: &SlitPoint| 0.0),
        boundary: Arc::new(fields::re_z32),
    };
    let sol = solve_signorini(&prob, &grid)?;

    let fb = free_boundary_graph(&sol)?;
    let mut rows = Vec::new();
    let mut gamma_origin = f64::NAN;
    let mut best = f64::INFINITY;
    for line in &fb {
        let x1 = line.xt[0];
        rows.push(vec![
            num(x1),
            line.gamma.map(num).unwrap_or_default(),
            (line.multiple as u8).to_string(),
        ]);
        if let Some(g) = line.gamma {
            if x1.abs() < best {
                best = x1.abs();
                gamma_origin = g;
            }
        }
    }
    report::write_csv(&cfg.out.join("free_boundary.csv"), &["x1", "gamma", "multiple"], &rows)?;

    let full = mirror_full(&sol.u)?;
    let radii = resolved_radii(&cfg.radii, cfg.h())?;
    let prof = frequency_profile(&full, &origin(cfg.n), &radii)?;
    let freq_rows: Vec<Vec<f64>> =
        prof.radii.iter().zip(&prof.values).map(|(&r, &v)| vec![r, v]).collect();
    report::write_csv_nums(&cfg.out.join("frequency.csv"), &["r", "N"], &freq_rows)?;
    let cls = classify_regular(&prof, Some(cfg.tau))?;

    let shape = sol.u.grid.shape();
    let d = sol.u.grid.d();
    let thin_nodes = (sol.u.values.len() / shape[d - 1]).max(1);
    let contact = sol.contact.iter().filter(|&&c| c).count();

    let mut rep = base_report(cfg);
    rep.constant("energy", sol.energy)
        .constant("sweeps", sol.sweeps as f64)
        .constant("contact_fraction", contact as f64 / thin_nodes as f64)
        .constant("monotonicity_violation", cls.monotonicity_violation);
    if gamma_origin.is_finite() {
        rep.constant("gamma_origin", gamma_origin);
    }
    rep.exponent("frequency_extrapolated", cls.extrapolated);
    rep.pass = cls.regular && !sol.flagged_negative_boundary;
    Ok(rep)
}

/// Degenerate solver manufactured study against the `xi^2`-harmonic
/// reference `w* = x_n - rho/2` (constant coefficients only; perturbation
/// runs still solve, but skip the exact-error assertion).
fn run_degenerate(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let grid = default_sqrt_grid(cfg.n, 1.0, cfg.cells())?;
    let prob = DegenerateProblem {
        a: cfg.coeff_field()?,
        f: Arc::new(ZeroVec),
        g: Arc::new(|_: &SlitPoint| 0.0),
        alpha: cfg.alpha,
        boundary: Arc::new(fields::wstar),
    };
    let (w, stats) = solve_degenerate(&prob, &grid)?;

    let manufactured = cfg.coeff == crate::config::CoeffKind::Constant;
    let mut err = 0.0f64;
    let shape = w.grid.shape();
    let d = w.grid.d();
    let mut rows = Vec::new();
    for idx in 0..w.values.len() {
        let m = w.grid.multi(idx);
        let p = w.grid.node_point(&m);
        let exact = fields::wstar(&p);
        if manufactured {
            err = err.max((w.values[idx] - exact).abs());
        }
        // Slice along the eta axis at mid-xi for the profile artifact.
        if m[d - 2] == shape[d - 2] / 2 && (d == 2 || m[0] == shape[0] / 2) {
            rows.push(vec![p.xn, p.xnp1, w.values[idx], exact]);
        }
    }
    report::write_csv_nums(&cfg.out.join("profile.csv"), &["xn", "xnp1", "w", "wstar"], &rows)?;

    let mut rep = base_report(cfg);
    rep.constant("cg_iterations", stats.iterations as f64)
        .constant("cg_residual", stats.relative_residual);
    let converged = stats.relative_residual <= 1e-8;
    if manufactured {
        rep.constant("linf_error", err);
        rep.pass = converged && err <= 4.0 * cfg.h();
    } else {
        rep.pass = converged;
    }
    Ok(rep)
}

/// Almgren frequency profile of the model blow-up field.
fn run_frequency(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let grid = phys_grid(cfg.n, cfg.cells())?;
    let u = FieldSample::from_fn(grid, fields::re_z32);
    let radii = resolved_radii(&cfg.radii, cfg.h())?;
    let prof = frequency_profile(&u, &origin(cfg.n), &radii)?;
    let rows: Vec<Vec<f64>> =
        prof.radii.iter().zip(&prof.values).map(|(&r, &v)| vec![r, v]).collect();
    report::write_csv_nums(&cfg.out.join("frequency.csv"), &["r", "N"], &rows)?;
    let cls = classify_regular(&prof, Some(cfg.tau))?;

    let mut rep = base_report(cfg);
    rep.constant("monotonicity_violation", cls.monotonicity_violation);
    rep.exponent("frequency_extrapolated", cls.extrapolated);
    rep.pass = cls.regular;
    Ok(rep)
}

/// Campanato exponent recovery on `w* + rho^{1 + alpha}`.
fn run_campanato(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let grid = phys_grid(cfg.n, cfg.cells())?;
    let a = cfg.alpha;
    let w = FieldSample::from_fn(grid, move |p| fields::wstar(p) + p.rho().powf(1.0 + a));
    let fit = campanato_fit(&w, &origin(cfg.n), &cfg.radii, a, 1.0)?;
    let rows: Vec<Vec<f64>> =
        fit.radii.iter().zip(&fit.sigmas).map(|(&r, &s)| vec![r, s]).collect();
    report::write_csv_nums(&cfg.out.join("campanato.csv"), &["r", "sigma"], &rows)?;

    let mut rep = base_report(cfg);
    rep.exponent("sigma_decay", fit.exponent);
    rep.constant("sigma_small", *fit.sigmas.last().unwrap_or(&f64::NAN));
    rep.pass = (fit.exponent - a).abs() <= 0.1;
    Ok(rep)
}

/// Boundary Harnack experiment on the model pair `(Re z^{3/2}, xi)`.
fn run_harnack(cfg: &ExperimentConfig) -> Result<JsonReport> {
    let grid = phys_grid(cfg.n, cfg.cells())?;
    let u1 = FieldSample::from_fn(grid.clone(), fields::re_z32);
    let u2 = FieldSample::from_fn(grid, fields::xi_field);
    let a = cfg.coeff_field()?;
    let centers: Vec<SlitPoint> = if cfg.n == 1 {
        vec![origin(1)]
    } else {
        [-0.25, 0.0, 0.25].iter().map(|&x| SlitPoint::d3(x, 0.0, 0.0)).collect()
    };
    let params =
        HarnackParams { radii: cfg.radii.clone(), alpha: cfg.alpha, hopf_floor: 0.05 };
    let rep0 = harnack_experiment(&u1, &u2, &a, &centers, &params)?;

    let mut rows = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        rows.push(vec![
            if c.nt > 0 { c.xt[0] } else { 0.0 },
            rep0.cbar[i],
            rep0.per_center[i].exponent,
        ]);
    }
    report::write_csv_nums(&cfg.out.join("harnack.csv"), &["center_x1", "cbar", "exponent"], &rows)?;

    let mut rep = base_report(cfg);
    rep.exponent("tangential_exponent", rep0.tangential_exponent);
    // Per-center decay exponents are recorded but not gated: for ratios that
    // are exactly linear the deviations sit at discretization-noise level and
    // their slope carries no information.
    let finite = rep0.cbar.iter().all(|c| c.is_finite())
        && rep0.per_center.iter().all(|c| c.sigmas.iter().all(|s| s.is_finite()));
    rep.pass = finite && rep0.tangential_exponent >= cfg.alpha;
    Ok(rep)
}

/// End-to-end free-boundary regularity pipeline (n = 2 only). A failed
/// stage hypothesis is reported as `pass = false` at that stage rather than
/// a runtime error.
fn run_pipeline(cfg: &ExperimentConfig) -> Result<JsonReport> {
    if cfg.n != 2 {
        return Err(RunError::Core(slitlab_core::Error::GridMismatch(
            "the pipeline experiment needs n = 2".into(),
        )));
    }
    let prob = SignoriniProblem {
        a: cfg.coeff_field()?,
        f_rhs: Arc::new(|_: &SlitPoint| 0.0),
        boundary: Arc::new(fields::re_z32),
    };
    let params = PipelineParams {
        m: cfg.cells(),
        alpha: cfg.alpha,
        tau: cfg.tau,
        hopf_floor: cfg.hopf_floor,
        ..PipelineParams::default()
    };
    match c2alpha_pipeline(&prob, &params) {
        Ok(out) => {
            let stage_rows: Vec<Vec<String>> = out
                .stages
                .iter()
                .map(|s| vec![s.stage.clone(), (s.pass as u8).to_string(), s.detail.clone()])
                .collect();
            report::write_csv(
                &cfg.out.join("stages.csv"),
                &["stage", "pass", "detail"],
                &stage_rows,
            )?;
            let gamma_rows: Vec<Vec<f64>> =
                out.gamma.iter().map(|&(x, g)| vec![x, g]).collect();
            report::write_csv_nums(&cfg.out.join("gamma.csv"), &["x1", "gamma"], &gamma_rows)?;

            let mut rep = base_report(cfg);
            rep.constant("hopf_min", out.hopf_min);
            rep.exponent("frequency_extrapolated", out.frequency_extrapolated)
                .exponent("dgamma_exponent", out.dgamma_exponent);
            rep.pass = out.pass && out.dgamma_exponent >= cfg.alpha;
            Ok(rep)
        }
        Err(slitlab_core::Error::HypothesisFailed { stage, detail }) => {
            let mut rep = base_report(cfg);
            rep.stage = stage;
            rep.input("detail", detail);
            rep.pass = false;
            Ok(rep)
        }
        Err(e) => Err(e.into()),
    }
}
