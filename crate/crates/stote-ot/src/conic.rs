//! ADMM solver for linear programs over products of Hermitian PSD blocks,
//! nonnegative scalars and free scalars.
//!
//! Problems are stated as `min c^T x` subject to `A x = b`, `x in K`. Each
//! PSD block of size `n` occupies `n^2` real coordinates in isometric order:
//! the diagonal first, then `sqrt(2) Re h_ij` and `sqrt(2) Im h_ij` for each
//! `i < j`. Nonnegative scalars follow the blocks and free scalars come last.
//!
//! The dual returned alongside the primal solves `max b^T y` subject to
//! `c - A^T y in K*` (for `Sense::Min`).

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{c, herm_eig_from, re, ComplexMatrix, HermitianMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200_000;

const OVER_RELAXATION: f64 = 1.6;
const PENALTY: f64 = 1.0;
const PENALTY_RANGE: (f64, f64) = (1e-6, 1e6);
const PENALTY_IMBALANCE: f64 = 5.0;
const CHECK_EVERY: usize = 25;
const DIVERGENCE_WINDOW: usize = 10_000;
const RUIZ_PASSES: usize = 15;
const COLD_RESTART_EVERY: usize = 1000;
const ANDERSON_MEMORY: usize = 8;
const ANDERSON_REGULARIZATION: f64 = 1e-10;

/// Shape of the cone `K`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConeSpec {
    pub psd_blocks: Vec<usize>,
    pub nonneg: usize,
    pub free: usize,
}

impl ConeSpec {
    pub fn new(psd_blocks: Vec<usize>, nonneg: usize, free: usize) -> Result<Self> {
        if psd_blocks.contains(&0) {
            return Err(Error::InvalidArgument("PSD block of size 0".into()));
        }
        Ok(Self { psd_blocks, nonneg, free })
    }

    /// Total number of real coordinates.
    pub fn dim(&self) -> usize {
        self.psd_blocks.iter().map(|n| n * n).sum::<usize>() + self.nonneg + self.free
    }

    pub fn block_offset(&self, block: usize) -> usize {
        self.psd_blocks[..block].iter().map(|n| n * n).sum()
    }

    fn scalar_offset(&self) -> usize {
        self.block_offset(self.psd_blocks.len())
    }

    pub fn var_index(&self, var: Var) -> usize {
        match var {
            Var::Nonneg(i) => self.scalar_offset() + i,
            Var::Free(i) => self.scalar_offset() + self.nonneg + i,
        }
    }
}

/// Scalar variable handle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Nonneg(usize),
    Free(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// Isometric real coordinates of a Hermitian matrix.
pub fn svec(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.rows();
    let mut out = Vec::with_capacity(n * n);
    svec_into(h.as_slice(), n, &mut out);
    out
}

fn svec_into(h: &[crate::linalg::C64], n: usize, out: &mut Vec<f64>) {
    for i in 0..n {
        out.push(h[i * n + i].re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let z = h[i * n + j];
            out.push(SQRT_2 * z.re);
            out.push(SQRT_2 * z.im);
        }
    }
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> HermitianMatrix {
    HermitianMatrix::from_hermitian_part(&smat_raw(v, n))
}

fn smat_raw(v: &[f64], n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = re(v[i]);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = c(v[k], v[k + 1]) / SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// `min/max c^T x` subject to `A x = b`, `x in K`.
#[derive(Clone, Debug)]
pub struct ConicProblem {
    pub objective: Vec<f64>,
    /// Dense row-major equality matrix, one `Vec` per row.
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub cone: ConeSpec,
    pub sense: Sense,
}

impl ConicProblem {
    pub fn builder(cone: ConeSpec, sense: Sense) -> ConicBuilder {
        ConicBuilder {
            problem: ConicProblem {
                objective: vec![0.0; cone.dim()],
                eq_matrix: Vec::new(),
                eq_rhs: Vec::new(),
                cone,
                sense,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cone.dim();
        if self.objective.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "objective has {} entries, cone has {n}",
                self.objective.len()
            )));
        }
        if self.eq_rhs.len() != self.eq_matrix.len() {
            return Err(Error::DimensionMismatch("eq_rhs and eq_matrix row counts differ".into()));
        }
        if let Some(row) = self.eq_matrix.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "equality row has {} columns, cone has {n}",
                row.len()
            )));
        }
        let finite = self.objective.iter().chain(&self.eq_rhs).all(|x| x.is_finite())
            && self.eq_matrix.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

/// Incremental construction of a [`ConicProblem`] in matrix terms.
pub struct ConicBuilder {
    problem: ConicProblem,
}

/// One term of a linear functional.
pub enum Term<'a> {
    /// `Tr[W X_b]` for PSD block `b`.
    Block(usize, &'a HermitianMatrix),
    /// `coeff * x` for a scalar variable.
    Scalar(Var, f64),
}

impl ConicBuilder {
    fn add_block_coeffs(&self, target: &mut [f64], block: usize, w: &HermitianMatrix) {
        let n = self.problem.cone.psd_blocks[block];
        assert_eq!(w.dim(), n, "coefficient matrix does not match block {block}");
        let off = self.problem.cone.block_offset(block);
        for (t, v) in target[off..off + n * n].iter_mut().zip(svec(w)) {
            *t += v;
        }
    }

    fn add_terms(&self, target: &mut [f64], terms: &[Term]) {
        for term in terms {
            match term {
                Term::Block(b, w) => self.add_block_coeffs(target, *b, w),
                Term::Scalar(v, coeff) => target[self.problem.cone.var_index(*v)] += coeff,
            }
        }
    }

    pub fn objective(mut self, terms: &[Term]) -> Self {
        let mut c = std::mem::take(&mut self.problem.objective);
        self.add_terms(&mut c, terms);
        self.problem.objective = c;
        self
    }

    pub fn constraint(mut self, terms: &[Term], rhs: f64) -> Self {
        let mut row = vec![0.0; self.problem.cone.dim()];
        self.add_terms(&mut row, terms);
        self.problem.eq_matrix.push(row);
        self.problem.eq_rhs.push(rhs);
        self
    }

    pub fn build(self) -> ConicProblem {
        self.problem
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    MaxIter,
    InfeasibleSuspected,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub primal: Vec<f64>,
    /// One multiplier per equality row.
    pub dual: Vec<f64>,
    pub objective_value: f64,
    pub dual_value: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn block(&self, cone: &ConeSpec, block: usize) -> HermitianMatrix {
        let n = cone.psd_blocks[block];
        let off = cone.block_offset(block);
        smat(&self.primal[off..off + n * n], n)
    }

    pub fn scalar(&self, cone: &ConeSpec, var: Var) -> f64 {
        self.primal[cone.var_index(var)]
    }

    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }

    /// Turns any status other than `Solved` into an error.
    pub fn require_solved(self) -> Result<Self> {
        if self.is_solved() {
            Ok(self)
        } else {
            Err(Error::Solver {
                status: self.status,
                primal_residual: self.primal_residual,
                dual_residual: self.dual_residual,
            })
        }
    }
}

/// Row-space projector data for the scaled equality system.
struct AffineProjector {
    /// Orthonormal rows spanning the row space of the scaled `A`.
    q: Vec<Vec<f64>>,
    /// Minimum-norm particular solution of the scaled system.
    x_p: Vec<f64>,
    /// `y = lift * (Q w)` recovers least-squares multipliers.
    lift: Vec<Vec<f64>>,
}

impl AffineProjector {
    fn new(a: &[Vec<f64>], b: &[f64], n: usize) -> Self {
        let m = a.len();
        if m == 0 {
            return Self { q: vec![], x_p: vec![0.0; n], lift: vec![] };
        }
        let gram = ComplexMatrix::from_fn(m, m, |i, j| re(dot(&a[i], &a[j])));
        let eig = herm_eig_from(&gram, None);
        let top = eig.max_eigenvalue().max(0.0);
        let keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > 1e-12 * top).collect();
        let u = &eig.eigenvectors;
        let mut q = Vec::with_capacity(keep.len());
        let mut coef_b = Vec::with_capacity(keep.len());
        for &k in &keep {
            let s = 1.0 / eig.eigenvalues[k].sqrt();
            let mut row = vec![0.0; n];
            for (i, ai) in a.iter().enumerate() {
                let w = u[(i, k)].re * s;
                if w != 0.0 {
                    axpy(w, ai, &mut row);
                }
            }
            q.push(row);
            coef_b.push(s * (0..m).map(|i| u[(i, k)].re * b[i]).sum::<f64>());
        }
        let mut x_p = vec![0.0; n];
        for (row, cb) in q.iter().zip(&coef_b) {
            axpy(*cb, row, &mut x_p);
        }
        let lift = (0..m)
            .map(|i| keep.iter().map(|&k| u[(i, k)].re / eig.eigenvalues[k].sqrt()).collect())
            .collect();
        Self { q, x_p, lift }
    }

    /// `v - A^T (A A^T)^+ (A v - b)` in place.
    fn project(&self, v: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.clear();
        scratch.extend(self.q.iter().map(|row| dot(row, v)));
        for (row, &s) in self.q.iter().zip(scratch.iter()) {
            axpy(-s, row, v);
        }
        for (vi, pi) in v.iter_mut().zip(&self.x_p) {
            *vi += pi;
        }
    }

    fn least_squares(&self, w: &[f64]) -> Vec<f64> {
        let qw: Vec<f64> = self.q.iter().map(|row| dot(row, w)).collect();
        self.lift.iter().map(|l| dot(l, &qw)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn inf_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Column groups that share one scaling factor so the cone is preserved.
fn column_groups(cone: &ConeSpec) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut off = 0;
    for &n in &cone.psd_blocks {
        groups.push(off..off + n * n);
        off += n * n;
    }
    for _ in 0..(cone.nonneg + cone.free) {
        groups.push(off..off + 1);
        off += 1;
    }
    groups
}

/// Ruiz equilibration: returns row scales and per-column scales.
fn equilibrate(a: &[Vec<f64>], cone: &ConeSpec) -> (Vec<f64>, Vec<f64>) {
    let n = cone.dim();
    let m = a.len();
    let groups = column_groups(cone);
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    for _ in 0..RUIZ_PASSES {
        let row_norm: Vec<f64> = (0..m)
            .map(|i| inf_norm(a[i].iter().zip(&e).map(|(x, s)| x * s * d[i])))
            .collect();
        for (di, rn) in d.iter_mut().zip(&row_norm) {
            if *rn > 0.0 {
                *di /= rn.sqrt();
            }
        }
        for g in &groups {
            let mut cn: f64 = 0.0;
            for row in 0..m {
                for j in g.clone() {
                    cn = cn.max((a[row][j] * d[row] * e[j]).abs());
                }
            }
            if cn > 0.0 {
                let f = 1.0 / cn.sqrt();
                for j in g.clone() {
                    e[j] *= f;
                }
            }
        }
    }
    (d, e)
}

/// Projection of the scaled iterate onto the cone, reusing eigenbases.
struct ConeProjector {
    cone: ConeSpec,
    warm: Vec<Option<ComplexMatrix>>,
}

impl ConeProjector {
    fn new(cone: &ConeSpec) -> Self {
        Self {
            cone: cone.clone(),
            warm: vec![None; cone.psd_blocks.len()],
        }
    }

    fn project(&mut self, v: &mut [f64], cold: bool) {
        let mut off = 0;
        for (b, &n) in self.cone.psd_blocks.iter().enumerate() {
            let seg = &mut v[off..off + n * n];
            let h = smat_raw(seg, n);
            let start = if cold { None } else { self.warm[b].as_ref() };
            let eig = herm_eig_from(&h, start);
            let projected = if eig.min_eigenvalue() >= 0.0 {
                None
            } else {
                Some(eig.map(|l| re(l.max(0.0))))
            };
            if let Some(p) = projected {
                let mut out = Vec::with_capacity(n * n);
                svec_into(p.as_slice(), n, &mut out);
                seg.copy_from_slice(&out);
            }
            self.warm[b] = Some(eig.eigenvectors);
            off += n * n;
        }
        for x in &mut v[off..off + self.cone.nonneg] {
            *x = x.max(0.0);
        }
    }
}

/// Type-II Anderson acceleration of the fixed-point map `w -> T(w)`.
struct Anderson {
    points: std::collections::VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    fn new() -> Self {
        Self {
            points: std::collections::VecDeque::with_capacity(ANDERSON_MEMORY + 1),
        }
    }

    fn reset(&mut self) {
        self.points.clear();
    }

    /// Records `(w, T(w))` and returns the extrapolated next point, if any.
    fn push(&mut self, w: &[f64], f: &[f64]) -> Option<Vec<f64>> {
        let g: Vec<f64> = f.iter().zip(w).map(|(a, b)| a - b).collect();
        if self.points.len() == ANDERSON_MEMORY + 1 {
            self.points.pop_front();
        }
        self.points.push_back((g, f.to_vec()));
        let m = self.points.len() - 1;
        if m == 0 {
            return None;
        }
        let dg: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let (a, b) = (&self.points[i + 1].0, &self.points[i].0);
                a.iter().zip(b).map(|(x, y)| x - y).collect()
            })
            .collect();
        let g_last = &self.points[m].0;
        let mut gram = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            for j in 0..=i {
                let v = dot(&dg[i], &dg[j]);
                gram[i][j] = v;
                gram[j][i] = v;
            }
            rhs[i] = dot(&dg[i], g_last);
        }
        let scale = (0..m).map(|i| gram[i][i]).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return None;
        }
        for (i, row) in gram.iter_mut().enumerate() {
            row[i] += ANDERSON_REGULARIZATION * scale;
        }
        let gamma = solve_spd(gram, rhs)?;
        let mut next = f.to_vec();
        for (i, gi) in gamma.iter().enumerate() {
            let (a, b) = (&self.points[i + 1].1, &self.points[i].1);
            for ((n, x), y) in next.iter_mut().zip(a).zip(b) {
                *n -= gi * (x - y);
            }
        }
        next.iter().all(|v| v.is_finite()).then_some(next)
    }
}

/// Cholesky solve of a small symmetric positive definite system.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for j in 0..m {
        let mut diag = a[j][j];
        for k in 0..j {
            diag -= a[j][k] * a[j][k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let l = diag.sqrt();
        a[j][j] = l;
        for i in j + 1..m {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / l;
        }
    }
    for i in 0..m {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..m).rev() {
        for k in i + 1..m {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Some(b)
}

/// Solves with the default over-relaxation and penalty.
pub fn solve(problem: &ConicProblem, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let n = problem.cone.dim();
    let m = problem.eq_matrix.len();
    let sign = match problem.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let c_min: Vec<f64> = problem.objective.iter().map(|x| sign * x).collect();
    let a = &problem.eq_matrix;
    let b = &problem.eq_rhs;

    let (d, e) = equilibrate(a, &problem.cone);
    let a_s: Vec<Vec<f64>> = (0..m)
        .map(|i| a[i].iter().zip(&e).map(|(x, s)| x * s * d[i]).collect())
        .collect();
    let b_s: Vec<f64> = b.iter().zip(&d).map(|(x, s)| x * s).collect();
    let c_s: Vec<f64> = c_min.iter().zip(&e).map(|(x, s)| x * s).collect();
    let affine = AffineProjector::new(&a_s, &b_s, n);
    let mut cone_proj = ConeProjector::new(&problem.cone);

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut scratch = Vec::new();

    let mut best: Option<ConicSolution> = None;
    let mut window_u_norm: Option<f64> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut penalty = PENALTY;
    let mut z_prev = vec![0.0; n];
    let mut anderson = Anderson::new();
    // Plain step and residual norm at the last base point, kept while an
    // extrapolated point is on trial.
    let mut fallback: Option<(Vec<f64>, f64)> = None;

    for it in 1..=max_iter.max(1) {
        iterations = it;
        // One ADMM step as the map w -> T(w), with (z, u) the Moreau split of w.
        z_prev.copy_from_slice(&z);
        z.copy_from_slice(&w);
        cone_proj.project(&mut z, it % COLD_RESTART_EVERY == 0);
        for j in 0..n {
            u[j] = w[j] - z[j];
            x[j] = z[j] - u[j] - c_s[j] / penalty;
        }
        affine.project(&mut x, &mut scratch);
        for j in 0..n {
            f[j] = OVER_RELAXATION * x[j] + (1.0 - OVER_RELAXATION) * z[j] + u[j];
        }
        let g_norm = (0..n).map(|j| (f[j] - w[j]).powi(2)).sum::<f64>().sqrt();
        if let Some((plain, base)) = fallback.take() {
            if !(g_norm <= base) {
                anderson.reset();
                w = plain;
                continue;
            }
        }

        if it % CHECK_EVERY == 0 || it == max_iter {
            let sol = assemble(problem, &c_min, sign, &affine, &d, &e, &z, &u, penalty, it);
            let (sol_prim, sol_dual) = (sol.primal_residual, sol.dual_residual);
            let done = sol.primal_residual <= tol && sol.dual_residual <= tol && sol.gap <= tol;
            let score = |s: &ConicSolution| s.primal_residual.max(s.dual_residual).max(s.gap);
            if best.as_ref().is_none_or(|b| score(&sol) <= score(b)) {
                best = Some(sol);
            }
            if done {
                status = SolveStatus::Solved;
                break;
            }
            if it % DIVERGENCE_WINDOW == 0 {
                let un = inf_norm(u.iter().copied());
                let stuck = best.as_ref().is_some_and(|b| b.primal_residual > tol.sqrt());
                if let Some(prev) = window_u_norm {
                    if stuck && un > 10.0 * prev.max(1.0) {
                        status = SolveStatus::InfeasibleSuspected;
                        break;
                    }
                }
                window_u_norm = Some(un);
            }
            // Residual balancing on the unscaled primal and dual residuals.
            let (r_prim, r_dual) = (sol_prim, sol_dual);
            let factor = if r_prim > PENALTY_IMBALANCE * r_dual {
                2.0
            } else if r_dual > PENALTY_IMBALANCE * r_prim {
                0.5
            } else {
                1.0
            };
            let next = (penalty * factor).clamp(PENALTY_RANGE.0, PENALTY_RANGE.1);
            if next != penalty {
                // Restart from the current split with the rescaled dual.
                for j in 0..n {
                    w[j] = z[j] + u[j] * penalty / next;
                }
                penalty = next;
                anderson.reset();
                continue;
            }
        }

        match anderson.push(&w, &f) {
            Some(accelerated) => {
                fallback = Some((f.clone(), g_norm));
                w = accelerated;
            }
            None => w.copy_from_slice(&f),
        }
    }

    let mut sol = if status == SolveStatus::Solved {
        best.expect("a checkpoint was recorded")
    } else {
        best.unwrap_or_else(|| assemble(problem, &c_min, sign, &affine, &d, &e, &z, &u, penalty, iterations))
    };
    sol.status = status;
    sol.iterations = iterations;
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    problem: &ConicProblem,
    c_min: &[f64],
    sign: f64,
    affine: &AffineProjector,
    d: &[f64],
    e: &[f64],
    z_s: &[f64],
    u_s: &[f64],
    penalty: f64,
    iterations: usize,
) -> ConicSolution {
    let n = z_s.len();
    let primal: Vec<f64> = z_s.iter().zip(e).map(|(z, s)| z * s).collect();
    let slack_s: Vec<f64> = u_s.iter().map(|u| -penalty * u).collect();
    let slack: Vec<f64> = slack_s.iter().zip(e).map(|(s, sc)| s / sc).collect();
    let c_s: Vec<f64> = c_min.iter().zip(e).map(|(x, s)| x * s).collect();
    let rhs: Vec<f64> = (0..n).map(|j| c_s[j] - slack_s[j]).collect();
    let y_s = affine.least_squares(&rhs);
    let y_min: Vec<f64> = y_s.iter().zip(d).map(|(y, s)| y * s).collect();

    let a = &problem.eq_matrix;
    let b = &problem.eq_rhs;
    let primal_residual = inf_norm(a.iter().zip(b).map(|(row, bi)| dot(row, &primal) - bi));
    let mut aty = slack.clone();
    for (row, yi) in a.iter().zip(&y_min) {
        axpy(*yi, row, &mut aty);
    }
    let dual_residual = inf_norm(aty.iter().zip(c_min).map(|(l, r)| l - r));
    let obj_min = dot(c_min, &primal);
    let dual_min = dot(b, &y_min);
    ConicSolution {
        objective_value: sign * obj_min,
        dual_value: sign * dual_min,
        dual: y_min.iter().map(|y| sign * y).collect(),
        primal,
        primal_residual,
        dual_residual,
        gap: (obj_min - dual_min).abs(),
        status: SolveStatus::MaxIter,
        iterations,
    }
}

/// Equality-constrained feasibility problem on one Hermitian block `C`:
/// `Tr[W_r C] = b_r` for each row.
#[derive(Clone, Debug)]
pub struct SlackConstraints {
    pub dim: usize,
    pub rows: Vec<(HermitianMatrix, f64)>,
}

#[derive(Clone, Debug)]
pub struct SlackSolution {
    /// Largest `x` with `C - x 1 >= 0` over the feasible `C`.
    pub slack: f64,
    pub point: HermitianMatrix,
    pub solution: ConicSolution,
}

/// Maximizes `x` subject to the equalities and `C >= x 1`, writing
/// `C = X + x 1` with `X` PSD and `x` free.
pub fn feasibility_max_slack(constraints: &SlackConstraints, tol: f64, max_iter: usize) -> Result<SlackSolution> {
    let n = constraints.dim;
    let cone = ConeSpec::new(vec![n], 0, 1)?;
    let mut builder = ConicProblem::builder(cone.clone(), Sense::Max).objective(&[Term::Scalar(Var::Free(0), 1.0)]);
    for (w, rhs) in &constraints.rows {
        if w.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix of size {} for a block of size {n}",
                w.dim()
            )));
        }
        let tr = w.trace().re;
        builder = builder.constraint(&[Term::Block(0, w), Term::Scalar(Var::Free(0), tr)], *rhs);
    }
    let problem = builder.build();
    let solution = solve(&problem, tol, max_iter)?;
    let slack = solution.scalar(&cone, Var::Free(0));
    let x_block = solution.block(&cone, 0);
    let point = x_block.add(&HermitianMatrix::identity(n).scale(slack));
    Ok(SlackSolution { slack, point, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{herm_eig, psd_project};
    use crate::random::random_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svec_is_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian(4, &mut rng);
        let b = random_hermitian(4, &mut rng);
        let lhs = dot(&svec(&a), &svec(&b));
        assert!((lhs - a.trace_with(&b)).abs() < 1e-12);
        let back = smat(&svec(&a), 4);
        assert!((&*back - &*a).max_abs() < 1e-15);
    }

    #[test]
    fn one_by_one_fixed_value() {
        let cone = ConeSpec::new(vec![1], 0, 0).unwrap();
        let one = HermitianMatrix::identity(1);
        let p = ConicProblem::builder(cone, Sense::Min)
            .objective(&[Term::Block(0, &one)])
            .constraint(&[Term::Block(0, &one)], 1.0)
            .build();
        let s = solve(&p, 1e-8, 10_000).unwrap();
        assert!(s.is_solved());
        assert!((s.objective_value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn rank_one_optimum() {
        let cone = ConeSpec::new(vec![2], 0, 0).unwrap();
        let id = HermitianMatrix::identity(2);
        let e00 = HermitianMatrix::from_diag(&[1.0, 0.0]);
        let p = ConicProblem::builder(cone.clone(), Sense::Min)
            .objective(&[Term::Block(0, &id)])
            .constraint(&[Term::Block(0, &e00)], 1.0)
            .build();
        let s = solve(&p, 1e-8, 50_000).unwrap();
        assert!(s.is_solved(), "{s:?}");
        assert!((s.objective_value - 1.0).abs() < 1e-7);
        let x = s.block(&cone, 0);
        assert!((&*x - &*e00).max_abs() < 1e-6);
        assert!(s.dual_value <= s.objective_value + 1e-7);
    }

    #[test]
    fn max_slack_of_fixed_scalar() {
        let cons = SlackConstraints {
            dim: 1,
            rows: vec![(HermitianMatrix::identity(1), 1.0)],
        };
        let s = feasibility_max_slack(&cons, 1e-8, 50_000).unwrap();
        assert!(s.solution.is_solved());
        assert!((s.slack - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonneg_and_free_scalars() {
        // min x0 + 2 x1 with x0 + x1 = 3, x0 - f = 1, x >= 0, f free
        let cone = ConeSpec::new(vec![], 2, 1).unwrap();
        let p = ConicProblem::builder(cone, Sense::Min)
            .objective(&[Term::Scalar(Var::Nonneg(0), 1.0), Term::Scalar(Var::Nonneg(1), 2.0)])
            .constraint(&[Term::Scalar(Var::Nonneg(0), 1.0), Term::Scalar(Var::Nonneg(1), 1.0)], 3.0)
            .constraint(&[Term::Scalar(Var::Nonneg(0), 1.0), Term::Scalar(Var::Free(0), -1.0)], 1.0)
            .build();
        let s = solve(&p, 1e-9, 50_000).unwrap();
        assert!(s.is_solved());
        assert!((s.objective_value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn psd_projection_matches_spectral_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 2, 3, 6] {
            let h = random_hermitian(n, &mut rng);
            let mut v = svec(&h);
            let cone = ConeSpec::new(vec![n], 0, 0).unwrap();
            ConeProjector::new(&cone).project(&mut v, true);
            let projected = smat(&v, n);
            let oracle = psd_project(&h).unwrap();
            assert!((&*projected - &*oracle).max_abs() < 1e-10);
            let mut again = v.clone();
            ConeProjector::new(&cone).project(&mut again, true);
            assert!(inf_norm(again.iter().zip(&v).map(|(a, b)| a - b)) < 1e-10);
            assert!(herm_eig(&projected).unwrap().min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_hermitian(3, &mut rng);
        let id = HermitianMatrix::identity(3);
        let cone = ConeSpec::new(vec![3], 0, 0).unwrap();
        let p = ConicProblem::builder(cone, Sense::Min)
            .objective(&[Term::Block(0, &g)])
            .constraint(&[Term::Block(0, &id)], 1.0)
            .build();
        let a = solve(&p, 1e-8, 3000).unwrap();
        let b = solve(&p, 1e-8, 3000).unwrap();
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.dual, b.dual);
        // min Tr[G X] over unit-trace PSD X is the smallest eigenvalue.
        let lmin = herm_eig(&g).unwrap().min_eigenvalue();
        assert!(a.is_solved());
        assert!((a.objective_value - lmin).abs() < 1e-6);
    }

    #[test]
    fn infeasible_problem_is_not_reported_solved() {
        // X >= 0 with Tr X = -1 has no solution.
        let cone = ConeSpec::new(vec![2], 0, 0).unwrap();
        let id = HermitianMatrix::identity(2);
        let p = ConicProblem::builder(cone, Sense::Min)
            .objective(&[Term::Block(0, &id)])
            .constraint(&[Term::Block(0, &id)], -1.0)
            .build();
        let s = solve(&p, 1e-8, 40_000).unwrap();
        assert_ne!(s.status, SolveStatus::Solved);
        assert!(s.clone().require_solved().is_err());
    }

    #[test]
    fn rejects_malformed_problem() {
        let cone = ConeSpec::new(vec![2], 0, 0).unwrap();
        let mut p = ConicProblem::builder(cone, Sense::Min).build();
        p.objective.pop();
        assert!(solve(&p, 1e-8, 10).is_err());
        assert!(ConeSpec::new(vec![0], 0, 0).is_err());
    }
}
