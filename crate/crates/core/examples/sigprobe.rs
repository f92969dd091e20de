use slitlab_core::coeff::CoeffField;
use slitlab_core::fields;
use slitlab_core::geom::SlitPoint;
use slitlab_core::signorini::{half_grid, solve_signorini, SignoriniProblem};
use std::sync::Arc;
fn main() {
    for m in [64usize, 128, 256, 512] {
        let grid = half_grid(1, m).unwrap();
        let prob = SignoriniProblem {
            a: CoeffField::identity(1),
            f_rhs: Arc::new(|_: &SlitPoint| 0.0),
            boundary: Arc::new(fields::re_z32),
        };
        let t = std::time::Instant::now();
        let sol = solve_signorini(&prob, &grid).unwrap();
        let mut err = 0.0f64;
        for idx in 0..sol.u.values.len() {
            let mm = sol.u.grid.multi(idx);
            let p = sol.u.grid.node_point(&mm);
            err = err.max((sol.u.values[idx] - fields::re_z32(&p)).abs());
        }
        println!("m={m} err={err:.6e} sweeps={} time={:?}", sol.sweeps, t.elapsed());
    }
}
