//! Minimal sparse linear algebra: CSR symmetric matrices assembled from
//! per-element contributions, and a Jacobi-preconditioned conjugate gradient.

use crate::defaults::{CG_MAX_ITER, CG_TOL};
use crate::error::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Row-wise accumulator for stiffness assembly.
pub struct Builder {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Builder {
    pub fn new(n: usize) -> Self {
        Builder { rows: vec![Vec::new(); n] }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.rows[i].push((j, v));
        }
    }

    /// Replace a row by the identity row (Dirichlet constraint). Column
    /// entries pointing at `i` must be removed by [`Builder::drop_column`]
    /// or handled by the caller via RHS lifting before `finish`.
    pub fn set_identity_row(&mut self, i: usize) {
        self.rows[i].clear();
        self.rows[i].push((i, 1.0));
    }

    pub fn finish(mut self) -> Csr {
        let n = self.rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in self.rows.iter_mut() {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == j {
                    s += row[k].1;
                    k += 1;
                }
                if s != 0.0 || j < n {
                    indices.push(j);
                    data.push(s);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, data }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    d[i] = self.data[k];
                }
            }
        }
        d
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        let mut s = 0.0;
        for i in 0..self.n {
            let r = b[i] - ax[i];
            s += r * r;
        }
        libm::sqrt(s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Pairwise summation for deterministic, accurate reductions.
    pairwise(&mut a.iter().zip(b).map(|(x, y)| x * y))
}

fn pairwise(it: &mut dyn Iterator<Item = f64>) -> f64 {
    let chunk: Vec<f64> = it.collect();
    pairwise_slice(&chunk)
}

pub(crate) fn pairwise_slice(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_slice(&v[..mid]) + pairwise_slice(&v[mid..])
        }
    }
}

/// Outcome of a CG solve.
#[derive(Clone, Copy, Debug)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for SPD systems. Zero rows of
/// the diagonal (fully constrained or empty rows) get unit preconditioner.
pub fn cg_solve(a: &Csr, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n;
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let diag = a.diagonal();
    let minv: Vec<f64> = diag.iter().map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let bnorm = libm::sqrt(dot(b, b));
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], CgStats { iterations: 0, relative_residual: 0.0 }));
    }

    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        let rnorm = libm::sqrt(dot(&r, &r));
        if rnorm <= tol * bnorm {
            return Ok((x, CgStats { iterations: it, relative_residual: rnorm / bnorm }));
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::IllConditioned(
                "conjugate gradient met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = libm::sqrt(dot(&r, &r));
    Err(Error::SolverDiverged { iterations: max_iter, residual: rnorm / bnorm })
}

/// Convenience wrapper with library defaults.
pub fn cg_solve_default(a: &Csr, b: &[f64]) -> Result<(Vec<f64>, CgStats)> {
    cg_solve(a, b, None, CG_TOL, CG_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplace_1d(n: usize) -> Csr {
        // Dirichlet tridiagonal [-1, 2, -1].
        let mut b = Builder::new(n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        b.finish()
    }

    #[test]
    fn builder_merges_duplicates() {
        let mut b = Builder::new(2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.5);
        b.add(0, 1, -1.0);
        b.add(1, 1, 1.0);
        let m = b.finish();
        let (cols, vals) = m.row(0);
        assert_eq!(cols, &[0, 1]);
        assert!((vals[0] - 3.5).abs() < 1e-15);
    }

    #[test]
    fn cg_solves_laplacian() {
        let n = 100;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| libm::sin(i as f64)).collect();
        let (x, stats) = cg_solve_default(&a, &b).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        assert!(a.residual_norm(&x, &b) <= 1e-8);
    }

    #[test]
    fn cg_zero_rhs() {
        let a = laplace_1d(10);
        let (x, stats) = cg_solve_default(&a, &vec![0.0; 10]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn cg_rejects_indefinite() {
        let mut b = Builder::new(2);
        b.add(0, 0, 1.0);
        b.add(1, 1, -1.0);
        let a = b.finish();
        let r = cg_solve_default(&a, &[1.0, 1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64) * 1e-3).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_slice(&v) - naive).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn cg_recovers_manufactured_solution(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let a = laplace_1d(n);
            let xtrue: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b = vec![0.0; n];
            a.matvec(&xtrue, &mut b);
            let (x, _) = cg_solve_default(&a, &b).unwrap();
            for i in 0..n {
                prop_assert!((x[i] - xtrue[i]).abs() < 1e-6);
            }
        }
    }
}
