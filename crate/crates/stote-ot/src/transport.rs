//! Optimal transport over states over time.
//!
//! The transport cost of a cost matrix `K` between `rho` and `sigma` is the
//! minimum of `Tr[K (rho * J)]` over channels `J` sending `rho` to `sigma`.
//! Every SDP here is posed in the Choi matrix `C = J^{T_A}`, which is the PSD
//! variable of the solver: the objective becomes `Tr[T_A(K * rho) C]`, trace
//! preservation becomes `Tr_B C = 1` and the marginal condition becomes
//! `Tr_A[(rho^T (x) 1) C] = sigma`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conic::{
    solve, ConeSpec, ConicBuilder, ConicProblem, Sense, SolveStatus, Term, Var, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{
    c, embed, hermitian_basis, herm_eig, partial_trace, partial_transpose, permute_subsystems, re, swap_operator,
    tensor, BipartiteDims, ComplexMatrix, HermitianMatrix, Subsystem, C64,
};
use crate::random::{random_channel, random_density, random_unitary};
use crate::stote::{
    channel_apply, jordan_lift, ChoiMatrix, DensityMatrix, JamiolkowskiMatrix, STATE_TOL,
};

/// Comparison tolerance between SDP values and closed forms.
pub const SDP_COMPARE_TOL: f64 = 1e-5;
/// Values below `-FALSIFY_TOL` count as a negative-cost counterexample.
pub const FALSIFY_TOL: f64 = 1e-7;
/// Slack above `-MEMBERSHIP_TOL` counts as cone membership.
pub const MEMBERSHIP_TOL: f64 = 1e-6;
/// Spectra closer than this are treated as equal.
pub const ISOSPECTRAL_TOL: f64 = 1e-8;

/// Solver settings shared by every SDP-backed operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SdpOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Hermitian cost matrix on `H_A (x) H_B`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    pub dims: BipartiteDims,
    pub matrix: HermitianMatrix,
    /// `true` for the `1 - S/d` scaling of the unitary-invariant cost.
    pub normalized: bool,
}

impl CostMatrix {
    pub fn new(dims: BipartiteDims, matrix: HermitianMatrix) -> Result<Self> {
        if matrix.dim() != dims.total() {
            return Err(Error::DimensionMismatch(format!(
                "cost matrix of size {} for dims ({}, {})",
                matrix.dim(),
                dims.d_a,
                dims.d_b
            )));
        }
        Ok(Self {
            dims,
            matrix,
            normalized: false,
        })
    }

    pub fn zero(dims: BipartiteDims) -> Self {
        Self {
            dims,
            matrix: HermitianMatrix::zeros(dims.total()),
            normalized: false,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dims: self.dims,
            matrix: self.matrix.scale(s),
            normalized: false,
        }
    }

    /// `K1 (x) K2` regrouped onto `(A1 A2) (x) (B1 B2)`.
    pub fn tensor_product(k1: &CostMatrix, k2: &CostMatrix) -> Self {
        let m = tensor(&k1.matrix, &k2.matrix);
        regroup_pair(&m, k1.dims, k2.dims)
    }

    /// `K1 (x) 1 + 1 (x) K2` regrouped onto `(A1 A2) (x) (B1 B2)`.
    pub fn tensor_sum(k1: &CostMatrix, k2: &CostMatrix) -> Self {
        let id1 = ComplexMatrix::identity(k1.dims.total());
        let id2 = ComplexMatrix::identity(k2.dims.total());
        let m = &tensor(&k1.matrix, &id2) + &tensor(&id1, &k2.matrix);
        regroup_pair(&m, k1.dims, k2.dims)
    }
}

fn regroup_pair(m: &ComplexMatrix, d1: BipartiteDims, d2: BipartiteDims) -> CostMatrix {
    let slots = [d1.d_a, d1.d_b, d2.d_a, d2.d_b];
    let p = permute_subsystems(m, &slots, &[0, 2, 1, 3]).expect("slot dimensions are consistent");
    CostMatrix {
        dims: BipartiteDims {
            d_a: d1.d_a * d2.d_a,
            d_b: d1.d_b * d2.d_b,
        },
        matrix: HermitianMatrix::from_hermitian_part(&p),
        normalized: false,
    }
}

/// `rho_1 (x) rho_2`.
pub fn product_state(a: &DensityMatrix, b: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::new(HermitianMatrix::from_hermitian_part(&tensor(a, b))).expect("product of states is a state")
}

/// `K0 = d 1 - S`, or `1 - S/d` when `normalized`.
pub fn unitary_invariant_k(d: usize, normalized: bool) -> CostMatrix {
    let k = HermitianMatrix::identity(d * d).scale(d as f64).sub(&swap_operator(d));
    let matrix = if normalized { k.scale(1.0 / d as f64) } else { k };
    CostMatrix {
        dims: BipartiteDims { d_a: d, d_b: d },
        matrix,
        normalized,
    }
}

/// `Tr[K (rho * J)]`.
pub fn cost_of_plan(k: &CostMatrix, rho: &DensityMatrix, j: &JamiolkowskiMatrix) -> Result<f64> {
    if k.dims != j.dims() {
        return Err(Error::DimensionMismatch(format!(
            "cost dims {:?} differ from channel dims {:?}",
            k.dims,
            j.dims()
        )));
    }
    let q = jordan_lift(rho, j.matrix(), j.dims())?;
    Ok(k.matrix.trace_with(&q))
}

/// `T_A((K) * (rho (x) 1))`, the objective in the Choi variable.
fn choi_objective(k: &ComplexMatrix, rho: &DensityMatrix, dims: BipartiteDims) -> Result<HermitianMatrix> {
    let kr = jordan_lift(rho, k, dims)?;
    Ok(HermitianMatrix::from_hermitian_part(&partial_transpose(&kr, dims, Subsystem::A)?))
}

/// Eigenvalues at or below this are treated as zero when locating the face.
pub const KERNEL_TOL: f64 = 1e-10;

/// Face of the PSD cone containing every feasible Choi matrix.
///
/// `Tr_A[(rho^T (x) 1) C] = sigma` forces `C` to vanish on
/// `supp(rho^T) (x) ker(sigma)`, so feasible points are `V X V^*` with `V` an
/// isometry onto the complement. Solving for `X` keeps the problem strictly
/// feasible.
#[derive(Clone, Debug)]
struct Face {
    /// `None` when the face is the whole cone.
    v: Option<ComplexMatrix>,
    size: usize,
}

impl Face {
    fn whole(n: usize) -> Self {
        Self { v: None, size: n }
    }

    fn of_marginals(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Self> {
        let n = rho.dim() * sigma.dim();
        let supp_t = support_projector(&rho.transpose(), false)?;
        let ker = support_projector(sigma, true)?;
        if ker.max_abs() == 0.0 || supp_t.max_abs() == 0.0 {
            return Ok(Self::whole(n));
        }
        let excluded = HermitianMatrix::from_hermitian_part(&tensor(&supp_t, &ker));
        let eig = herm_eig(&excluded)?;
        let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] < 0.5).collect();
        let v = ComplexMatrix::from_fn(n, keep.len(), |i, k| eig.eigenvectors[(i, keep[k])]);
        Ok(Self {
            size: keep.len(),
            v: Some(v),
        })
    }

    fn reduce(&self, w: &HermitianMatrix) -> HermitianMatrix {
        match &self.v {
            None => w.clone(),
            Some(v) => HermitianMatrix::from_hermitian_part(&(&(&v.adjoint() * &**w) * v)),
        }
    }

    fn lift(&self, x: &HermitianMatrix) -> HermitianMatrix {
        match &self.v {
            None => x.clone(),
            Some(v) => HermitianMatrix::from_hermitian_part(&(&(v * &**x) * &v.adjoint())),
        }
    }
}

/// Projector onto the support (or, with `kernel`, the null space) of a state.
fn support_projector(rho: &HermitianMatrix, kernel: bool) -> Result<ComplexMatrix> {
    let eig = herm_eig(rho)?;
    let d = rho.dim();
    let mut p = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        if (eig.eigenvalues[k] <= KERNEL_TOL) == kernel {
            let v = eig.eigenvectors.column(k);
            p += &ComplexMatrix::outer(&v, &v);
        }
    }
    Ok(p)
}

/// Adds `Tr_B C = 1` (and `Tr_A[(rho^T (x) 1) C] = sigma` when given) on
/// block 0, restricted to `face`.
fn channel_constraints(
    mut builder: ConicBuilder,
    dims: BipartiteDims,
    marginals: Option<(&DensityMatrix, &DensityMatrix)>,
    face: &Face,
) -> ConicBuilder {
    let id_b = ComplexMatrix::identity(dims.d_b);
    for e in hermitian_basis(dims.d_a) {
        let w = HermitianMatrix::from_hermitian_part(&tensor(&e, &id_b));
        builder = builder.constraint(&[Term::Block(0, &face.reduce(&w))], e.trace().re);
    }
    if let Some((rho, sigma)) = marginals {
        let rho_t = rho.matrix().transpose();
        for e in hermitian_basis(dims.d_b) {
            let w = HermitianMatrix::from_hermitian_part(&tensor(&rho_t, &e));
            builder = builder.constraint(&[Term::Block(0, &face.reduce(&w))], e.trace_with(sigma));
        }
    }
    builder
}

fn combine(basis: &[HermitianMatrix], coeffs: &[f64]) -> HermitianMatrix {
    let n = basis.first().map_or(0, |b| b.dim());
    let mut acc = ComplexMatrix::zeros(n, n);
    for (b, y) in basis.iter().zip(coeffs) {
        acc += &b.scale_re(*y);
    }
    HermitianMatrix::from_hermitian_part(&acc)
}

fn check_marginals(k: &CostMatrix, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.dim() != k.dims.d_a || sigma.dim() != k.dims.d_b {
        return Err(Error::DimensionMismatch(format!(
            "states of dimensions ({}, {}) for cost dims ({}, {})",
            rho.dim(),
            sigma.dim(),
            k.dims.d_a,
            k.dims.d_b
        )));
    }
    Ok(())
}

/// Primal and dual solution of the transport SDP.
#[derive(Clone, Debug)]
pub struct TransportResult {
    pub value: f64,
    /// `Tr Y1 + Tr[sigma Y2]` at the returned multipliers.
    pub dual_value: f64,
    pub optimal_j: JamiolkowskiMatrix,
    pub optimal_choi: HermitianMatrix,
    pub dual_y1: HermitianMatrix,
    pub dual_y2: HermitianMatrix,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl TransportResult {
    pub fn require_solved(self) -> Result<Self> {
        if self.status == SolveStatus::Solved {
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

/// Minimizes `Tr[K (rho * J)]` over channels with `E(rho) = sigma`.
/// Non-converged solves are returned with their status for the caller to inspect.
pub fn transport_cost(k: &CostMatrix, rho: &DensityMatrix, sigma: &DensityMatrix, opts: SdpOptions) -> Result<TransportResult> {
    check_marginals(k, rho, sigma)?;
    let dims = k.dims;
    let face = Face::of_marginals(rho, sigma)?;
    let cone = ConeSpec::new(vec![face.size], 0, 0)?;
    let g = choi_objective(&k.matrix, rho, dims)?;
    let builder = ConicProblem::builder(cone.clone(), Sense::Min).objective(&[Term::Block(0, &face.reduce(&g))]);
    let problem = channel_constraints(builder, dims, Some((rho, sigma)), &face).build();
    let sol = solve(&problem, opts.tol, opts.max_iter)?;

    let choi = face.lift(&sol.block(&cone, 0));
    let j = HermitianMatrix::from_hermitian_part(&partial_transpose(&choi, dims, Subsystem::A)?);
    let na = dims.d_a * dims.d_a;
    let dual_y1 = combine(&hermitian_basis(dims.d_a), &sol.dual[..na]);
    let dual_y2 = combine(&hermitian_basis(dims.d_b), &sol.dual[na..]);
    Ok(TransportResult {
        value: sol.objective_value,
        dual_value: sol.dual_value,
        optimal_j: JamiolkowskiMatrix::new_unchecked(dims, j),
        optimal_choi: choi,
        dual_y1,
        dual_y2,
        gap: sol.gap,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Certified lower bound from the dual program
/// `max Tr Y1 + Tr[sigma Y2]` s.t. `Y1 (x) 1 + rho^T (x) Y2 <= T_A(K * rho)`.
#[derive(Clone, Debug)]
pub struct DualBound {
    /// Dual objective after shifting `Y1` to exact feasibility.
    pub value: f64,
    pub y1: HermitianMatrix,
    pub y2: HermitianMatrix,
    /// Dual objective of the unshifted multipliers.
    pub raw_value: f64,
    /// Smallest eigenvalue of the unshifted dual slack.
    pub slack_min_eigenvalue: f64,
    pub status: SolveStatus,
}

pub fn dual_bound(k: &CostMatrix, rho: &DensityMatrix, sigma: &DensityMatrix, opts: SdpOptions) -> Result<DualBound> {
    let res = transport_cost(k, rho, sigma, opts)?;
    dual_bound_from(k, rho, sigma, &res)
}

/// Repairs the multipliers of a solved transport SDP into a feasible dual point.
/// Feasibility is certified on the face of feasible Choi matrices; when
/// `sigma` is singular the slack on the full space is only approached as
/// `Y2` is pushed to `-infinity` on `ker(sigma)`, which leaves the value unchanged.
pub fn dual_bound_from(k: &CostMatrix, rho: &DensityMatrix, sigma: &DensityMatrix, res: &TransportResult) -> Result<DualBound> {
    let dims = k.dims;
    let g = choi_objective(&k.matrix, rho, dims)?;
    let lhs = &tensor(&res.dual_y1, &ComplexMatrix::identity(dims.d_b))
        + &tensor(&rho.matrix().transpose(), &res.dual_y2);
    let slack = HermitianMatrix::from_hermitian_part(&(&*g - &lhs));
    let face = Face::of_marginals(rho, sigma)?;
    let lmin = herm_eig(&face.reduce(&slack))?.min_eigenvalue();
    let shift = lmin.min(0.0);
    let y1 = res.dual_y1.add(&HermitianMatrix::identity(dims.d_a).scale(shift));
    let dual = |y1: &HermitianMatrix| y1.trace().re + res.dual_y2.trace_with(sigma);
    Ok(DualBound {
        value: dual(&y1),
        raw_value: dual(&res.dual_y1),
        y1,
        y2: res.dual_y2.clone(),
        slack_min_eigenvalue: lmin,
        status: res.status,
    })
}

/// `||Tr_B[S * K]||_F < 1e-10`: the identity channel has zero cost for every input.
pub fn is_zero_cost_identity(k: &CostMatrix) -> bool {
    identity_cost_residual(k).is_some_and(|r| r < 1e-10)
}

/// `||Tr_B[S * K]||_F`, or `None` when the two sides differ in dimension.
pub fn identity_cost_residual(k: &CostMatrix) -> Option<f64> {
    if k.dims.d_a != k.dims.d_b {
        return None;
    }
    let s = swap_operator(k.dims.d_a);
    let sk = crate::linalg::jordan_general(&s, &k.matrix).ok()?;
    Some(partial_trace(&sk, k.dims, Subsystem::B).ok()?.frobenius_norm())
}

/// The five equivalent expressions for `Tr[K~0 (rho * J)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UiCostForms {
    /// `1 - <Phi+|(rho^T (x) 1) * C|Phi+>/d`.
    pub choi_jordan: f64,
    /// `1 - Re<rho|C|Phi+>/d` with `|rho> = (rho^T (x) 1)|Phi+>`.
    pub choi_overlap: f64,
    /// `1 - sum_ij (p_i+p_j)/2 <i|E(|i><j|)|j> / d` in the eigenbasis of `rho`.
    pub pinched_sum: f64,
    /// `1 - sum_i p_i sum_j Re<i|E(|i><j|)|j> / d`.
    pub real_part_sum: f64,
    /// `1 - sum_k Re(Tr[E_k^*] Tr[E_k rho]) / d` for Kraus operators of `C`.
    pub kraus_trace: f64,
}

impl UiCostForms {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.choi_jordan,
            self.choi_overlap,
            self.pinched_sum,
            self.real_part_sum,
            self.kraus_trace,
        ]
    }

    pub fn max_deviation(&self) -> f64 {
        let v = self.as_array();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// `(rho^T (x) 1)|Phi+>`, with entry `(a, b)` equal to `rho_ba`.
pub fn vectorized_state(rho: &ComplexMatrix) -> Vec<C64> {
    let d = rho.rows();
    (0..d * d).map(|r| rho[(r % d, r / d)]).collect()
}

fn bra_ket(u: &[C64], m: &ComplexMatrix, v: &[C64]) -> C64 {
    u.iter().zip(m.mul_vec(v)).map(|(a, b)| a.conj() * b).sum()
}

pub fn ui_cost_forms(rho: &DensityMatrix, j: &JamiolkowskiMatrix) -> Result<UiCostForms> {
    let dims = j.dims();
    if dims.d_a != dims.d_b || rho.dim() != dims.d_a {
        return Err(Error::DimensionMismatch(format!(
            "cost forms need a square channel on the state space, got {:?} and dimension {}",
            dims,
            rho.dim()
        )));
    }
    let d = dims.d_a;
    let df = d as f64;
    let choi = j.choi();
    let phi = crate::linalg::max_entangled(d);

    let lifted_t = tensor(&rho.matrix().transpose(), &ComplexMatrix::identity(d));
    let jc = crate::linalg::jordan_general(&lifted_t, choi.matrix())?;
    let choi_jordan = 1.0 - bra_ket(&phi, &jc, &phi).re / df;

    let vr = vectorized_state(rho);
    let choi_overlap = 1.0 - bra_ket(&vr, choi.matrix(), &phi).re / df;

    let eig = rho.spectrum();
    let p = &eig.eigenvalues;
    let vecs: Vec<Vec<C64>> = (0..d).map(|i| eig.eigenvectors.column(i)).collect();
    let mut pinched = 0.0;
    let mut real_part = 0.0;
    for i in 0..d {
        for jj in 0..d {
            let input = ComplexMatrix::outer(&vecs[i], &vecs[jj]);
            let out = apply_general(j, &input)?;
            let amp = bra_ket(&vecs[i], &out, &vecs[jj]);
            pinched += 0.5 * (p[i] + p[jj]) * amp.re;
            real_part += p[i] * amp.re;
        }
    }
    let kraus = kraus_from_choi(&choi);
    Ok(UiCostForms {
        choi_jordan,
        choi_overlap,
        pinched_sum: 1.0 - pinched / df,
        real_part_sum: 1.0 - real_part / df,
        kraus_trace: kraus_cost(rho, &kraus, d)?,
    })
}

/// `E(x)` for a possibly non-Hermitian input.
fn apply_general(j: &JamiolkowskiMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dims = j.dims();
    let lifted = tensor(x, &ComplexMatrix::identity(dims.d_b));
    partial_trace(&(&lifted * &**j.matrix()), dims, Subsystem::A)
}

/// Kraus operators `E_k : C^{d_in} -> C^{d_out}`.
#[derive(Clone, Debug)]
pub struct KrausSet {
    pub operators: Vec<ComplexMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<ComplexMatrix>) -> Self {
        Self { operators }
    }

    /// `||sum_k E_k^* E_k - 1||_max`.
    pub fn completeness_error(&self) -> f64 {
        let Some(first) = self.operators.first() else {
            return f64::INFINITY;
        };
        let n = first.cols();
        let mut acc = ComplexMatrix::zeros(n, n);
        for e in &self.operators {
            acc += &(&e.adjoint() * e);
        }
        (&acc - &ComplexMatrix::identity(n)).max_abs()
    }

    /// `C = sum_k |E_k>><<E_k|` with `|E>>_{(i, m)} = E_{m i}`.
    pub fn choi(&self) -> ChoiMatrix {
        let e0 = &self.operators[0];
        let (d_out, d_in) = (e0.rows(), e0.cols());
        let n = d_in * d_out;
        let mut acc = ComplexMatrix::zeros(n, n);
        for e in &self.operators {
            let v: Vec<C64> = (0..n).map(|r| e[(r % d_out, r / d_out)]).collect();
            acc += &ComplexMatrix::outer(&v, &v);
        }
        ChoiMatrix::new_unchecked(
            BipartiteDims { d_a: d_in, d_b: d_out },
            HermitianMatrix::from_hermitian_part(&acc),
        )
    }

    pub fn jamiolkowski(&self) -> JamiolkowskiMatrix {
        self.choi().jamiolkowski()
    }

    /// `F_l = sum_k W_lk E_k` for a unitary `W`.
    pub fn remix(&self, w: &ComplexMatrix) -> KrausSet {
        let ops = (0..w.rows())
            .map(|l| {
                let e0 = &self.operators[0];
                let mut acc = ComplexMatrix::zeros(e0.rows(), e0.cols());
                for (k, e) in self.operators.iter().enumerate() {
                    acc += &e.scale(w[(l, k)]);
                }
                acc
            })
            .collect();
        KrausSet::new(ops)
    }
}

/// Kraus operators from the eigenpairs of a Choi matrix, dropping null directions.
pub fn kraus_from_choi(choi: &ChoiMatrix) -> KrausSet {
    let dims = choi.dims();
    let eig = herm_eig(choi.matrix()).expect("Choi matrix is finite");
    let scale = eig.max_eigenvalue().abs().max(1.0);
    let mut ops = Vec::new();
    for k in (0..eig.eigenvalues.len()).rev() {
        let lambda = eig.eigenvalues[k];
        if lambda <= 1e-14 * scale {
            continue;
        }
        let s = lambda.sqrt();
        ops.push(ComplexMatrix::from_fn(dims.d_b, dims.d_a, |m, i| {
            eig.eigenvectors[(i * dims.d_b + m, k)] * s
        }));
    }
    KrausSet::new(ops)
}

/// `1 - (1/d) sum_k Re(Tr[E_k^*] Tr[E_k rho])`.
pub fn kraus_cost(rho: &DensityMatrix, kraus: &KrausSet, d: usize) -> Result<f64> {
    let mut acc = 0.0;
    for e in &kraus.operators {
        if e.rows() != rho.dim() || e.cols() != rho.dim() {
            return Err(Error::DimensionMismatch("Kraus operator does not act on the state space".into()));
        }
        acc += (e.trace().conj() * e.trace_product(rho)).re;
    }
    Ok(1.0 - acc / d as f64)
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !(x.is_finite() && *x >= -STATE_TOL)) || (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("{name} is not a probability vector")));
    }
    Ok(())
}

/// Conditional distribution `p(j|i)` with its input and output marginals.
#[derive(Clone, Debug)]
pub struct ClassicalPlan {
    /// `p_given[j][i] = p(j|i)`; each column `i` sums to one.
    pub p_given: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl ClassicalPlan {
    /// Largest deviation of `sum_i p(j|i) p_i` from `q_j` or of a column sum from one.
    pub fn marginal_error(&self) -> f64 {
        let d = self.p.len();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            let col: f64 = (0..d).map(|j| self.p_given[j][i]).sum();
            worst = worst.max((col - 1.0).abs());
        }
        for j in 0..d {
            let out: f64 = (0..d).map(|i| self.p_given[j][i] * self.p[i]).sum();
            worst = worst.max((out - self.q[j]).abs());
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct CommutingCost {
    /// Normalized cost.
    pub value: f64,
    pub plan: ClassicalPlan,
    pub choi: ChoiMatrix,
}

/// `p(i|i) = min(1, q_i/p_i)`, with `p(i|i) = 1` when `p_i = 0`.
pub fn diagonal_retention(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi <= 0.0 { 1.0 } else { (qi / pi).min(1.0) })
        .collect()
}

/// Closed-form optimal cost for states diagonal in a common basis.
pub fn commuting_cost(p: &[f64], q: &[f64]) -> Result<CommutingCost> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::InvalidArgument("p and q must have the same positive length".into()));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let d = p.len();
    let keep = diagonal_retention(p, q);
    let n_sum: f64 = p.iter().zip(&keep).map(|(pi, k)| pi * k.sqrt()).sum();
    let m_sum: f64 = keep.iter().map(|k| k.sqrt()).sum();
    let value = 1.0 - n_sum * m_sum / d as f64;

    let demand: Vec<f64> = (0..d).map(|j| (q[j] - p[j] * keep[j]).max(0.0)).collect();
    let total: f64 = demand.iter().sum();
    let mut p_given = vec![vec![0.0; d]; d];
    for i in 0..d {
        p_given[i][i] = keep[i];
        let leftover = 1.0 - keep[i];
        if leftover > 0.0 && total > 0.0 {
            for j in 0..d {
                if j != i {
                    p_given[j][i] = leftover * demand[j] / total;
                }
            }
        }
    }

    let n = d * d;
    let mut choi = ComplexMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            choi[(i * d + i, j * d + j)] = re((keep[i] * keep[j]).sqrt());
        }
    }
    for i in 0..d {
        for j in 0..d {
            if i != j {
                choi[(i * d + j, i * d + j)] = re(p_given[j][i]);
            }
        }
    }
    let dims = BipartiteDims { d_a: d, d_b: d };
    Ok(CommutingCost {
        value,
        plan: ClassicalPlan {
            p_given,
            p: p.to_vec(),
            q: q.to_vec(),
        },
        choi: ChoiMatrix::new_unchecked(dims, HermitianMatrix::from_hermitian_part(&choi)),
    })
}

/// Total variation distance `sum |p_i - q_i| / 2`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Normalized cost restricted to classical channels: `1 - 1/d + TV(p, q)/d`.
pub fn classical_restricted_cost(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::InvalidArgument("p and q must have the same positive length".into()));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let d = p.len() as f64;
    Ok(1.0 - 1.0 / d + total_variation(p, q) / d)
}

#[derive(Clone, Debug)]
pub struct PureStateCost {
    /// Cost with `K0 = d 1 - S`.
    pub value: f64,
    /// Cost with `1 - S/d`.
    pub normalized: f64,
    pub unitary: ComplexMatrix,
}

/// Optimal cost between pure states with overlap `alpha = |<psi|phi>|`.
pub fn pure_state_cost(alpha: f64, d: usize) -> Result<PureStateCost> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("overlap {alpha} outside [0, 1]")));
    }
    if d < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    let value = (1.0 - alpha) * (d as f64 + 2.0 * alpha);
    let s = (1.0 - alpha * alpha).sqrt();
    let mut u = ComplexMatrix::identity(d);
    u[(0, 0)] = re(alpha);
    u[(0, 1)] = re(-s);
    u[(1, 0)] = re(s);
    u[(1, 1)] = re(alpha);
    Ok(PureStateCost {
        value,
        normalized: value / d as f64,
        unitary: u,
    })
}

/// `cos(theta)|0> + sin(theta)|1>` padded to dimension `d`, with `cos(theta) = alpha`.
pub fn pure_pair(alpha: f64, d: usize) -> Result<(DensityMatrix, DensityMatrix)> {
    let mut v0 = vec![C64::default(); d];
    v0[0] = re(1.0);
    let mut v1 = vec![C64::default(); d];
    v1[0] = re(alpha);
    v1[1] = re((1.0 - alpha * alpha).max(0.0).sqrt());
    Ok((DensityMatrix::pure(&v0)?, DensityMatrix::pure(&v1)?))
}

/// Groups sorted eigenvalues into runs closer than [`ISOSPECTRAL_TOL`].
fn degenerate_blocks(eigs: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for k in 1..=eigs.len() {
        if k == eigs.len() || eigs[k] - eigs[k - 1] > ISOSPECTRAL_TOL {
            blocks.push(start..k);
            start = k;
        }
    }
    blocks
}

fn restrict_to_blocks(m: &mut ComplexMatrix, blocks: &[std::ops::Range<usize>]) {
    let n = m.rows();
    let mut owner = vec![0; n];
    for (b, r) in blocks.iter().enumerate() {
        for i in r.clone() {
            owner[i] = b;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if owner[i] != owner[j] {
                m[(i, j)] = C64::default();
            }
        }
    }
}

/// `exp(t * omega)` for skew-Hermitian `omega`.
fn expm_skew(omega: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let h = HermitianMatrix::from_hermitian_part(&omega.scale(c(0.0, 1.0)));
    let eig = herm_eig(&h).expect("finite generator");
    eig.map(|l| C64::from_polar(1.0, -t * l))
}

const UNITARY_STARTS: usize = 32;
const UNITARY_STEPS: usize = 400;

/// Cost (with `K0`, unnormalized) of the best unitary channel mapping `rho`
/// to the isospectral `sigma`, found by multi-start Riemannian ascent over
/// the unitaries that commute with the spectrum.
pub fn unitary_restricted_cost(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    unitary_restricted_cost_seeded(rho, sigma, 0)
}

pub fn unitary_restricted_cost_seeded(rho: &DensityMatrix, sigma: &DensityMatrix, seed: u64) -> Result<f64> {
    let d = rho.dim();
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch("states differ in dimension".into()));
    }
    let er = rho.spectrum();
    let es = sigma.spectrum();
    let spread = er
        .eigenvalues
        .iter()
        .zip(&es.eigenvalues)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if spread > ISOSPECTRAL_TOL {
        return Err(Error::NotIsospectral(spread));
    }
    let v = &er.eigenvectors;
    let w = &es.eigenvectors;
    let m1 = &v.adjoint() * w;
    let m2 = &(&v.adjoint() * &**rho.matrix()) * w;
    let blocks = degenerate_blocks(&er.eigenvalues);

    // f(G) = Re(conj(Tr[G M1]) Tr[G M2]) with U = W G V^*.
    let objective = |g: &ComplexMatrix| -> (f64, C64, C64) {
        let a = g.trace_product(&m1);
        let b = g.trace_product(&m2);
        ((a.conj() * b).re, a, b)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for start in 0..UNITARY_STARTS {
        let mut g = if start == 0 {
            ComplexMatrix::identity(d)
        } else {
            let mut g = ComplexMatrix::zeros(d, d);
            for r in &blocks {
                let u = random_unitary(r.len(), &mut rng);
                for (bi, i) in r.clone().enumerate() {
                    for (bj, j) in r.clone().enumerate() {
                        g[(i, j)] = u[(bi, bj)];
                    }
                }
            }
            g
        };
        let (mut f, mut a, mut b) = objective(&g);
        let mut step = 1.0;
        for _ in 0..UNITARY_STEPS {
            // Euclidean gradient N^* with N = conj(b) M1 + conj(a) M2; tangent
            // direction G * Omega with Omega the skew part of (N G)^*.
            let n = &m1.scale(b.conj()) + &m2.scale(a.conj());
            let x = &n * &g;
            let mut omega = (&x.adjoint() - &x).scale_re(0.5);
            restrict_to_blocks(&mut omega, &blocks);
            let norm = omega.frobenius_norm();
            if norm < 1e-13 {
                break;
            }
            let mut improved = false;
            let mut t = step / norm;
            for _ in 0..40 {
                let cand = &g * &expm_skew(&omega, t);
                let (fc, ac, bc) = objective(&cand);
                if fc > f {
                    g = cand;
                    f = fc;
                    a = ac;
                    b = bc;
                    improved = true;
                    step = (t * norm * 2.0).min(4.0);
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(f);
    }
    Ok(d as f64 - best)
}

/// Pinching of `x` in the orthonormal basis given by the columns of `basis`.
pub fn pinch(x: &ComplexMatrix, basis: &ComplexMatrix) -> HermitianMatrix {
    let d = basis.cols();
    let mut acc = ComplexMatrix::zeros(x.rows(), x.rows());
    for i in 0..d {
        let v = basis.column(i);
        let weight = bra_ket(&v, x, &v);
        acc += &ComplexMatrix::outer(&v, &v).scale(weight);
    }
    HermitianMatrix::from_hermitian_part(&acc)
}

#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares the cost to `sigma` with the cost to `sigma` pinched in the
/// eigenbasis of `rho` (normalized cost `1 - S/d`).
pub fn pinching_bound_check(rho: &DensityMatrix, sigma: &DensityMatrix, opts: SdpOptions) -> Result<BoundCheck> {
    let d = rho.dim();
    let k = unitary_invariant_k(d, true);
    let basis = rho.spectrum().eigenvectors;
    let pinched = DensityMatrix::new(pinch(sigma, &basis))?;
    let lhs = transport_cost(&k, rho, sigma, opts)?.require_solved()?.value;
    let rhs = transport_cost(&k, rho, &pinched, opts)?.require_solved()?.value;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - 1e-6,
    })
}

/// Optimal normalized cost for states on an `n`-dimensional subspace of a
/// `d`-dimensional space, computed on the subspace alone.
pub fn embedded_cost(rho: &DensityMatrix, sigma: &DensityMatrix, d: usize, opts: SdpOptions) -> Result<f64> {
    let n = rho.dim();
    if sigma.dim() != n {
        return Err(Error::DimensionMismatch("states differ in dimension".into()));
    }
    if d < n {
        return Err(Error::InvalidArgument(format!("ambient dimension {d} below subspace dimension {n}")));
    }
    let dims = BipartiteDims { d_a: n, d_b: n };
    let d_perp = (d - n) as f64;
    let face = Face::of_marginals(rho, sigma)?;
    let phi = crate::linalg::max_entangled(n);
    let vr = vectorized_state(rho);
    // Re<rho|C|Phi> = Tr[C (|Phi><rho| + |rho><Phi|)/2]
    let overlap = face.reduce(&HermitianMatrix::from_hermitian_part(&ComplexMatrix::outer(&phi, &vr)));
    let proj_rho = face.reduce(&HermitianMatrix::projector(&vr));
    // On the face <rho|C|rho> can vanish identically, and then so does the
    // square-root term.
    let with_root = d_perp > 0.0 && proj_rho.max_abs() > KERNEL_TOL;
    let blocks = if with_root { vec![face.size, 2] } else { vec![face.size] };
    let cone = ConeSpec::new(blocks, 0, 0)?;

    let problem = if with_root {
        let corner = HermitianMatrix::from_diag(&[1.0, 0.0]);
        let far = HermitianMatrix::from_diag(&[0.0, 1.0]);
        let mut off_re = ComplexMatrix::zeros(2, 2);
        off_re[(0, 1)] = re(0.5);
        off_re[(1, 0)] = re(0.5);
        let off_re = HermitianMatrix::from_hermitian_part(&off_re);
        let off_im = hermitian_basis(2).pop().expect("2x2 basis has an imaginary element");
        let builder = ConicProblem::builder(cone, Sense::Max)
            .objective(&[Term::Block(0, &overlap), Term::Block(1, &off_re.scale(d_perp))]);
        channel_constraints(builder, dims, Some((rho, sigma)), &face)
            .constraint(&[Term::Block(0, &proj_rho), Term::Block(1, &corner.scale(-1.0))], 0.0)
            .constraint(&[Term::Block(1, &far)], 1.0)
            .constraint(&[Term::Block(1, &off_im)], 0.0)
            .build()
    } else {
        let builder = ConicProblem::builder(cone, Sense::Max).objective(&[Term::Block(0, &overlap)]);
        channel_constraints(builder, dims, Some((rho, sigma)), &face).build()
    };
    let sol = solve(&problem, opts.tol, opts.max_iter)?.require_solved()?;
    Ok(1.0 - sol.objective_value / d as f64)
}

/// `(1/d)(d - N (M + d - n))` for commuting states embedded in dimension `d`,
/// with `N = sum p_i sqrt(p(i|i))` and `M = sum sqrt(p(j|j))`.
pub fn commuting_embedded_cost(p: &[f64], q: &[f64], d: usize) -> Result<f64> {
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let n = p.len();
    let keep = diagonal_retention(p, q);
    let big_n: f64 = p.iter().zip(&keep).map(|(pi, k)| pi * k.sqrt()).sum();
    let big_m: f64 = keep.iter().map(|k| k.sqrt()).sum();
    let df = d as f64;
    Ok((df - big_n * (big_m + df - n as f64)) / df)
}

/// Large-dimension limit `1 - sqrt(max Tr[(rho (x) 1) S (rho (x) 1) J])`.
pub fn k_infinity(rho: &DensityMatrix, sigma: &DensityMatrix, opts: SdpOptions) -> Result<f64> {
    let n = rho.dim();
    if sigma.dim() != n {
        return Err(Error::DimensionMismatch("states differ in dimension".into()));
    }
    let dims = BipartiteDims { d_a: n, d_b: n };
    let lifted = tensor(rho, &ComplexMatrix::identity(n));
    let sandwiched = &(&lifted * &*swap_operator(n)) * &lifted;
    let g = HermitianMatrix::from_hermitian_part(&partial_transpose(&sandwiched, dims, Subsystem::A)?);
    let face = Face::of_marginals(rho, sigma)?;
    let cone = ConeSpec::new(vec![face.size], 0, 0)?;
    let builder = ConicProblem::builder(cone, Sense::Max).objective(&[Term::Block(0, &face.reduce(&g))]);
    let problem = channel_constraints(builder, dims, Some((rho, sigma)), &face).build();
    let sol = solve(&problem, opts.tol, opts.max_iter)?.require_solved()?;
    Ok(1.0 - sol.objective_value.max(0.0).sqrt())
}

/// `1 - sum_i p_i sqrt(p(i|i))`, the commuting-state limit.
pub fn commuting_k_infinity(p: &[f64], q: &[f64]) -> Result<f64> {
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let keep = diagonal_retention(p, q);
    Ok(1.0 - p.iter().zip(&keep).map(|(pi, k)| pi * k.sqrt()).sum::<f64>())
}

#[derive(Clone, Copy, Debug)]
pub struct SymmetryGap {
    pub forward: f64,
    pub backward: f64,
    pub gap: f64,
}

/// `K(rho, sigma) - K(sigma, rho)` for the same cost matrix.
pub fn symmetry_gap(k: &CostMatrix, rho: &DensityMatrix, sigma: &DensityMatrix, opts: SdpOptions) -> Result<SymmetryGap> {
    let forward = transport_cost(k, rho, sigma, opts)?.require_solved()?.value;
    let backward = transport_cost(k, sigma, rho, opts)?.require_solved()?.value;
    Ok(SymmetryGap {
        forward,
        backward,
        gap: forward - backward,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ConeVerdict {
    pub member: bool,
    /// Largest `x` with `T_A(K) - A (x) 1 >= x 1` over traceless Hermitian `A`.
    pub slack: f64,
    pub status: SolveStatus,
}

/// Decides whether `T_A(K) = omega + A (x) 1` with `omega >= 0` and `Tr A = 0`.
pub fn in_dual_choi_cone(k: &CostMatrix, opts: SdpOptions) -> Result<ConeVerdict> {
    let dims = k.dims;
    let n = dims.total();
    let na = dims.d_a * dims.d_a;
    let target = HermitianMatrix::from_hermitian_part(&partial_transpose(&k.matrix, dims, Subsystem::A)?);
    let basis_a = hermitian_basis(dims.d_a);
    let id_b = ComplexMatrix::identity(dims.d_b);
    let lifted: Vec<HermitianMatrix> = basis_a
        .iter()
        .map(|e| HermitianMatrix::from_hermitian_part(&tensor(e, &id_b)))
        .collect();
    // omega = X + x 1 with X >= 0; free scalars: x, then coordinates of A.
    let cone = ConeSpec::new(vec![n], 0, 1 + na)?;
    let mut builder = ConicProblem::builder(cone.clone(), Sense::Max).objective(&[Term::Scalar(Var::Free(0), 1.0)]);
    for w in hermitian_basis(n) {
        let mut terms = vec![Term::Block(0, &w), Term::Scalar(Var::Free(0), w.trace().re)];
        for (r, l) in lifted.iter().enumerate() {
            let coeff = w.trace_with(l);
            if coeff != 0.0 {
                terms.push(Term::Scalar(Var::Free(1 + r), coeff));
            }
        }
        builder = builder.constraint(&terms, w.trace_with(&target));
    }
    let trace_terms: Vec<Term> = basis_a
        .iter()
        .enumerate()
        .filter(|(_, e)| e.trace().re != 0.0)
        .map(|(r, e)| Term::Scalar(Var::Free(1 + r), e.trace().re))
        .collect();
    let problem = builder.constraint(&trace_terms, 0.0).build();
    let sol = solve(&problem, opts.tol, opts.max_iter)?;
    let slack = sol.scalar(&cone, Var::Free(0));
    Ok(ConeVerdict {
        member: sol.status == SolveStatus::Solved && slack >= -MEMBERSHIP_TOL,
        slack,
        status: sol.status,
    })
}

/// `K = T_A(omega) - Tr_B[S * T_A(omega)] (x) 1` for PSD `omega` orthogonal to `|Phi+>`.
pub fn jdual_izero_generate(omega: &HermitianMatrix, d: usize) -> Result<CostMatrix> {
    let dims = BipartiteDims::square(d)?;
    if omega.dim() != dims.total() {
        return Err(Error::DimensionMismatch(format!("omega of size {} for d = {d}", omega.dim())));
    }
    let min = herm_eig(omega)?.min_eigenvalue();
    if min < -1e-10 {
        return Err(Error::InvalidArgument(format!("omega is not PSD (min eigenvalue {min:e})")));
    }
    let phi = crate::linalg::max_entangled(d);
    let overlap = bra_ket(&phi, omega, &phi).re;
    if overlap.abs() >= 1e-10 {
        return Err(Error::InvalidArgument(format!("<Phi+|omega|Phi+> = {overlap:e} is not zero")));
    }
    let t = partial_transpose(omega, dims, Subsystem::A)?;
    let st = crate::linalg::jordan_general(&swap_operator(d), &t)?;
    let x = partial_trace(&st, dims, Subsystem::B)?;
    let k = &t - &tensor(&x, &ComplexMatrix::identity(d));
    CostMatrix::new(dims, HermitianMatrix::from_hermitian_part(&k))
}

/// Minimum of `Tr[K (rho * J)]` over all channels `J`, for fixed `rho`.
pub fn min_plan_cost(k: &CostMatrix, rho: &DensityMatrix, opts: SdpOptions) -> Result<(f64, JamiolkowskiMatrix)> {
    let dims = k.dims;
    let cone = ConeSpec::new(vec![dims.total()], 0, 0)?;
    let g = choi_objective(&k.matrix, rho, dims)?;
    let builder = ConicProblem::builder(cone.clone(), Sense::Min).objective(&[Term::Block(0, &g)]);
    let problem = channel_constraints(builder, dims, None, &Face::whole(dims.total())).build();
    let sol = solve(&problem, opts.tol, opts.max_iter)?.require_solved()?;
    let j = partial_transpose(&sol.block(&cone, 0), dims, Subsystem::A)?;
    Ok((
        sol.objective_value,
        JamiolkowskiMatrix::new_unchecked(dims, HermitianMatrix::from_hermitian_part(&j)),
    ))
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub sample: usize,
    pub rho: DensityMatrix,
    pub j: JamiolkowskiMatrix,
    pub value: f64,
}

/// Searches for a state and channel with negative cost. Finding none is not
/// a proof that `K` lies in the dual cone.
pub fn stote_dual_falsify(k: &CostMatrix, samples: usize, seed: u64, opts: SdpOptions) -> Result<Option<Counterexample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sample in 0..samples {
        let rho = random_density(k.dims.d_a, &mut rng);
        let (value, j) = min_plan_cost(k, &rho, opts)?;
        if value < -FALSIFY_TOL {
            return Ok(Some(Counterexample { sample, rho, j, value }));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug)]
pub struct DirectViolation {
    pub sample: usize,
    /// `K_AB + K_BC - K_AC` on the sampled triple (negative here).
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct TriangleReport {
    pub samples: usize,
    /// Smallest `Tr[K' (rho * ((J_AB (x) 1) * (1 (x) J_BC)))]` seen.
    pub min_witness_value: f64,
    /// Smallest direct margin `K_AB + K_BC - K_AC` seen.
    pub min_direct_margin: f64,
    pub direct_violations: Vec<DirectViolation>,
}

/// Samples three-time processes to probe the triangle inequality for the
/// given costs, both through the witness operator `K'` and by solving the
/// three transport problems directly.
pub fn triangle_witness_search(
    k_ab: &CostMatrix,
    k_bc: &CostMatrix,
    k_ac: &CostMatrix,
    samples: usize,
    seed: u64,
    opts: SdpOptions,
) -> Result<TriangleReport> {
    let (da, db, dc) = (k_ab.dims.d_a, k_ab.dims.d_b, k_bc.dims.d_b);
    if k_bc.dims.d_a != db || k_ac.dims != (BipartiteDims { d_a: da, d_b: dc }) {
        return Err(Error::DimensionMismatch("cost matrices do not chain A -> B -> C".into()));
    }
    let slots = [da, db, dc];
    let witness = &(&embed(&k_ab.matrix, &slots, &[0, 1])? + &embed(&k_bc.matrix, &slots, &[1, 2])?)
        - &embed(&k_ac.matrix, &slots, &[0, 2])?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = TriangleReport {
        samples,
        min_witness_value: f64::INFINITY,
        min_direct_margin: f64::INFINITY,
        direct_violations: Vec::new(),
    };
    for sample in 0..samples {
        let rho = random_density(da, &mut rng);
        let kraus_ab = rng.random_range(1..=da * db);
        let kraus_bc = rng.random_range(1..=db * dc);
        let j_ab = random_channel(da, db, kraus_ab.max(da.div_ceil(db)), &mut rng);
        let j_bc = random_channel(db, dc, kraus_bc.max(db.div_ceil(dc)), &mut rng);

        let link = crate::linalg::jordan_general(
            &embed(j_ab.matrix(), &slots, &[0, 1])?,
            &embed(j_bc.matrix(), &slots, &[1, 2])?,
        )?;
        let q3 = crate::linalg::jordan_general(&embed(&rho, &slots, &[0])?, &link)?;
        let w = witness.trace_product(&q3).re;
        report.min_witness_value = report.min_witness_value.min(w);

        let sigma = DensityMatrix::new(channel_apply(&j_ab, &rho)?)?;
        let tau = DensityMatrix::new(channel_apply(&j_bc, &sigma)?)?;
        let ab = transport_cost(k_ab, &rho, &sigma, opts)?.require_solved()?.value;
        let bc = transport_cost(k_bc, &sigma, &tau, opts)?.require_solved()?.value;
        let ac = transport_cost(k_ac, &rho, &tau, opts)?.require_solved()?.value;
        let margin = ab + bc - ac;
        report.min_direct_margin = report.min_direct_margin.min(margin);
        if margin < -1e-6 {
            report.direct_violations.push(DirectViolation { sample, margin });
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug)]
pub struct InequalityOutcome {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityOutcome {
    fn at_most(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + SDP_COMPARE_TOL,
        }
    }
}

/// `K(rho, sum_x p_x sigma_x) <= sum_x p_x K(rho, sigma_x)`.
pub fn subadditivity_check(
    k: &CostMatrix,
    rho: &DensityMatrix,
    ensemble: &[(f64, DensityMatrix)],
    opts: SdpOptions,
) -> Result<InequalityOutcome> {
    let d = k.dims.d_b;
    let mut mix = ComplexMatrix::zeros(d, d);
    let mut rhs = 0.0;
    for (p, s) in ensemble {
        mix += &s.scale_re(*p);
        rhs += p * transport_cost(k, rho, s, opts)?.require_solved()?.value;
    }
    let mixed = DensityMatrix::new(HermitianMatrix::from_hermitian_part(&mix))?;
    let lhs = transport_cost(k, rho, &mixed, opts)?.require_solved()?.value;
    Ok(InequalityOutcome::at_most(lhs, rhs))
}

#[derive(Clone, Copy, Debug)]
pub struct TensorOutcome {
    /// `K_{K1 (x) K2}` against `K_1 * K_2`.
    pub product: InequalityOutcome,
    /// `K_{K1 (x) 1 + 1 (x) K2}` against `K_1 + K_2`.
    pub sum: InequalityOutcome,
}

pub fn tensor_inequality_check(
    k1: &CostMatrix,
    k2: &CostMatrix,
    (rho1, sigma1): (&DensityMatrix, &DensityMatrix),
    (rho2, sigma2): (&DensityMatrix, &DensityMatrix),
    opts: SdpOptions,
) -> Result<TensorOutcome> {
    let c1 = transport_cost(k1, rho1, sigma1, opts)?.require_solved()?.value;
    let c2 = transport_cost(k2, rho2, sigma2, opts)?.require_solved()?.value;
    let rho = product_state(rho1, rho2);
    let sigma = product_state(sigma1, sigma2);
    let kp = CostMatrix::tensor_product(k1, k2);
    let ks = CostMatrix::tensor_sum(k1, k2);
    let joint_p = transport_cost(&kp, &rho, &sigma, opts)?.require_solved()?.value;
    let joint_s = transport_cost(&ks, &rho, &sigma, opts)?.require_solved()?.value;
    Ok(TensorOutcome {
        product: InequalityOutcome::at_most(joint_p, c1 * c2),
        sum: InequalityOutcome::at_most(joint_s, c1 + c2),
    })
}

/// Aggregate over one property battery.
#[derive(Clone, Debug, Default)]
pub struct PropertyTally {
    pub samples: usize,
    pub failures: usize,
    /// Largest `lhs - rhs` (for inequalities) or `|lhs - rhs|` (for equalities).
    pub worst: f64,
}

impl PropertyTally {
    fn record(&mut self, holds: bool, excess: f64) {
        self.samples += 1;
        if !holds {
            self.failures += 1;
        }
        self.worst = if self.samples == 1 { excess } else { self.worst.max(excess) };
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, Default)]
pub struct PropertyReport {
    pub subadditivity: PropertyTally,
    pub tensor_product: PropertyTally,
    pub tensor_sum: PropertyTally,
    pub pinching: PropertyTally,
    pub unitary_invariance: PropertyTally,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        [
            &self.subadditivity,
            &self.tensor_product,
            &self.tensor_sum,
            &self.pinching,
            &self.unitary_invariance,
        ]
        .iter()
        .all(|t| t.passed())
    }
}

/// Runs the property batteries on `instances` seeded random instances for a
/// square cost `k`: subadditivity and both tensor inequalities with `k`, the
/// pinching bound with the normalized unitary-invariant cost, and invariance
/// of the cost of `k` under joint unitary conjugation (meaningful for
/// unitary-invariant `k` only).
pub fn property_checks(k: &CostMatrix, instances: usize, seed: u64, opts: SdpOptions) -> Result<PropertyReport> {
    let d = k.dims.d_a;
    if k.dims.d_b != d {
        return Err(Error::DimensionMismatch("property checks need a square cost matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::default();
    for _ in 0..instances {
        let rho = random_density(d, &mut rng);
        let parts = rng.random_range(2..=3);
        let mut weights: Vec<f64> = (0..parts).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let ensemble: Vec<(f64, DensityMatrix)> = weights.into_iter().map(|w| (w, random_density(d, &mut rng))).collect();
        let sub = subadditivity_check(k, &rho, &ensemble, opts)?;
        report.subadditivity.record(sub.holds, sub.lhs - sub.rhs);

        let pair1 = (random_density(d, &mut rng), random_density(d, &mut rng));
        let pair2 = (random_density(d, &mut rng), random_density(d, &mut rng));
        let t = tensor_inequality_check(k, k, (&pair1.0, &pair1.1), (&pair2.0, &pair2.1), opts)?;
        report.tensor_product.record(t.product.holds, t.product.lhs - t.product.rhs);
        report.tensor_sum.record(t.sum.holds, t.sum.lhs - t.sum.rhs);

        let sigma = random_density(d, &mut rng);
        let pin = pinching_bound_check(&rho, &sigma, opts)?;
        report.pinching.record(pin.holds, pin.rhs - pin.lhs);

        let u = random_unitary(d, &mut rng);
        let base = transport_cost(k, &rho, &sigma, opts)?.require_solved()?.value;
        let rotated = transport_cost(k, &rho.conjugate_by(&u)?, &sigma.conjugate_by(&u)?, opts)?
            .require_solved()?
            .value;
        let dev = (base - rotated).abs();
        report.unitary_invariance.record(dev <= SDP_COMPARE_TOL, dev);
    }
    Ok(report)
}
