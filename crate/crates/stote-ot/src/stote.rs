//! States over time: construction `Q = (rho (x) 1) * J` with the Jordan
//! product, inversion back to `(rho, J)`, and sequential composition.

use std::fmt;

use crate::conic::{feasibility_max_slack, SlackConstraints, SolveStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::{
    embed, hermitian_basis, herm_eig, jordan_general, partial_trace, partial_trace_multi, partial_transpose,
    permute_subsystems, re, swap_operator, tensor, BipartiteDims, ComplexMatrix, EigenDecomposition,
    HermitianMatrix, Subsystem, C64,
};

/// Positivity and trace tolerance for density matrices.
pub const STATE_TOL: f64 = 1e-10;
/// Tolerance for Choi positivity and trace preservation.
pub const CHANNEL_TOL: f64 = 1e-8;
/// Smallest eigenvalue for which the closed-form inverse is used.
pub const FAITHFUL_THRESHOLD: f64 = 1e-9;
/// Max-slack values above `-SLACK_TOL` certify a completion.
pub const SLACK_TOL: f64 = 1e-6;

/// Unit-trace positive semi-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: HermitianMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = herm_eig(&matrix)?.min_eigenvalue();
        if min < -STATE_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:e} is negative")));
        }
        Ok(Self { matrix })
    }

    pub fn from_diag(p: &[f64]) -> Result<Self> {
        Self::new(HermitianMatrix::from_diag(p))
    }

    /// `|v><v|` for a normalized copy of `v`.
    pub fn pure(v: &[C64]) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("pure state vector has zero or non-finite norm".into()));
        }
        let unit: Vec<C64> = v.iter().map(|z| z / norm).collect();
        Self::new(HermitianMatrix::projector(&unit))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: HermitianMatrix::identity(d).scale(1.0 / d as f64),
        }
    }

    /// `(1 - p) rho + p 1/d`.
    pub fn depolarized(&self, p: f64) -> Result<Self> {
        let d = self.dim();
        Self::new(self.matrix.scale(1.0 - p).add(&HermitianMatrix::identity(d).scale(p / d as f64)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> EigenDecomposition {
        herm_eig(&self.matrix).expect("validated state is finite")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectrum().min_eigenvalue()
    }

    pub fn is_faithful(&self) -> bool {
        self.min_eigenvalue() > FAITHFUL_THRESHOLD
    }

    /// `U rho U^*`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        Self::new(self.matrix.conjugate_by(u))
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }
}

impl std::ops::Deref for DensityMatrix {
    type Target = HermitianMatrix;
    fn deref(&self) -> &HermitianMatrix {
        &self.matrix
    }
}

/// Which channel conditions a candidate Jamiolkowski matrix meets, and by how much.
#[derive(Clone, Debug, PartialEq)]
pub struct JamiolkowskiReport {
    /// Smallest eigenvalue of the Choi matrix `J^{T_A}`.
    pub choi_min_eigenvalue: f64,
    /// Largest entry of `Tr_B J - 1`.
    pub trace_preservation_error: f64,
}

impl JamiolkowskiReport {
    pub fn of(j: &ComplexMatrix, dims: BipartiteDims) -> Result<Self> {
        let choi = HermitianMatrix::from_hermitian_part(&partial_transpose(j, dims, Subsystem::A)?);
        let tb = partial_trace(j, dims, Subsystem::B)?;
        Ok(Self {
            choi_min_eigenvalue: herm_eig(&choi)?.min_eigenvalue(),
            trace_preservation_error: (&tb - &ComplexMatrix::identity(dims.d_a)).max_abs(),
        })
    }

    pub fn completely_positive(&self) -> bool {
        self.choi_min_eigenvalue >= -CHANNEL_TOL
    }

    pub fn trace_preserving(&self) -> bool {
        self.trace_preservation_error <= CHANNEL_TOL
    }

    pub fn is_valid(&self) -> bool {
        self.completely_positive() && self.trace_preserving()
    }
}

impl fmt::Display for JamiolkowskiReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.completely_positive() {
            parts.push(format!("Choi matrix has negative eigenvalue {:.6e}", self.choi_min_eigenvalue));
        }
        if !self.trace_preserving() {
            parts.push(format!("partial trace deviates from identity by {:.3e}", self.trace_preservation_error));
        }
        if parts.is_empty() {
            write!(f, "valid (min Choi eigenvalue {:.3e})", self.choi_min_eigenvalue)
        } else {
            write!(f, "{}", parts.join("; "))
        }
    }
}

/// Jamiolkowski matrix `J = (id (x) E)(S)` of a channel `A -> B`.
#[derive(Clone, Debug, PartialEq)]
pub struct JamiolkowskiMatrix {
    dims: BipartiteDims,
    matrix: HermitianMatrix,
}

impl JamiolkowskiMatrix {
    pub fn new(dims: BipartiteDims, matrix: HermitianMatrix) -> Result<Self> {
        let report = JamiolkowskiReport::of(&matrix, dims)?;
        if !report.is_valid() {
            return Err(Error::InvalidChannel(report));
        }
        Ok(Self { dims, matrix })
    }

    pub(crate) fn new_unchecked(dims: BipartiteDims, matrix: HermitianMatrix) -> Self {
        Self { dims, matrix }
    }

    pub fn from_choi(choi: &ChoiMatrix) -> Self {
        let m = partial_transpose(&choi.matrix, choi.dims, Subsystem::A).expect("choi dims are consistent");
        Self {
            dims: choi.dims,
            matrix: HermitianMatrix::from_hermitian_part(&m),
        }
    }

    /// Identity channel, `J = S`.
    pub fn identity(d: usize) -> Self {
        Self {
            dims: BipartiteDims { d_a: d, d_b: d },
            matrix: swap_operator(d),
        }
    }

    /// Replacement channel `x -> Tr[x] sigma`, `J = 1 (x) sigma`.
    pub fn replacement(d_in: usize, sigma: &DensityMatrix) -> Self {
        let m = tensor(&ComplexMatrix::identity(d_in), sigma.matrix());
        Self {
            dims: BipartiteDims {
                d_a: d_in,
                d_b: sigma.dim(),
            },
            matrix: HermitianMatrix::from_hermitian_part(&m),
        }
    }

    /// Unitary channel `x -> U x U^*`, `J = (1 (x) U) S (1 (x) U^*)`.
    pub fn unitary(u: &ComplexMatrix) -> Self {
        let d = u.rows();
        let lift = tensor(&ComplexMatrix::identity(d), u);
        Self {
            dims: BipartiteDims { d_a: d, d_b: d },
            matrix: swap_operator(d).conjugate_by(&lift),
        }
    }

    /// `x -> (1 - p) x + p Tr[x] 1/d`.
    pub fn depolarizing(d: usize, p: f64) -> Self {
        let s = swap_operator(d).scale(1.0 - p);
        let id = HermitianMatrix::identity(d * d).scale(p / d as f64);
        Self {
            dims: BipartiteDims { d_a: d, d_b: d },
            matrix: s.add(&id),
        }
    }

    /// Qubit dephasing `x -> p x + (1 - p) Z x Z`.
    pub fn dephasing(p: f64) -> Self {
        let mut m = ComplexMatrix::zeros(4, 4);
        m[(0, 0)] = re(1.0);
        m[(3, 3)] = re(1.0);
        m[(1, 2)] = re(2.0 * p - 1.0);
        m[(2, 1)] = re(2.0 * p - 1.0);
        Self {
            dims: BipartiteDims { d_a: 2, d_b: 2 },
            matrix: HermitianMatrix::from_hermitian_part(&m),
        }
    }

    pub fn dims(&self) -> BipartiteDims {
        self.dims
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn choi(&self) -> ChoiMatrix {
        let m = partial_transpose(&self.matrix, self.dims, Subsystem::A).expect("dims are consistent");
        ChoiMatrix {
            dims: self.dims,
            matrix: HermitianMatrix::from_hermitian_part(&m),
        }
    }

    pub fn report(&self) -> JamiolkowskiReport {
        JamiolkowskiReport::of(&self.matrix, self.dims).expect("dims are consistent")
    }
}

/// Choi matrix `C = J^{T_A}`, positive semi-definite for CP maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    dims: BipartiteDims,
    matrix: HermitianMatrix,
}

impl ChoiMatrix {
    pub fn new(dims: BipartiteDims, matrix: HermitianMatrix) -> Result<Self> {
        let j = partial_transpose(&matrix, dims, Subsystem::A)?;
        let report = JamiolkowskiReport::of(&j, dims)?;
        if !report.is_valid() {
            return Err(Error::InvalidChannel(report));
        }
        Ok(Self { dims, matrix })
    }

    pub(crate) fn new_unchecked(dims: BipartiteDims, matrix: HermitianMatrix) -> Self {
        Self { dims, matrix }
    }

    pub fn dims(&self) -> BipartiteDims {
        self.dims
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn jamiolkowski(&self) -> JamiolkowskiMatrix {
        JamiolkowskiMatrix::from_choi(self)
    }
}

/// State over time `Q = (rho (x) 1) * J`; need not be PSD.
#[derive(Clone, Debug)]
pub struct Stote {
    dims: BipartiteDims,
    matrix: HermitianMatrix,
    source: Option<(DensityMatrix, JamiolkowskiMatrix)>,
}

impl Stote {
    /// Wraps a matrix after checking unit trace and that both marginals are states.
    pub fn new(dims: BipartiteDims, matrix: HermitianMatrix) -> Result<Self> {
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > CHANNEL_TOL {
            return Err(Error::InvalidState(format!("stote trace {tr} differs from 1")));
        }
        for over in [Subsystem::B, Subsystem::A] {
            let marginal = partial_trace(&matrix, dims, over)?;
            let h = HermitianMatrix::from_hermitian_part(&marginal);
            let min = herm_eig(&h)?.min_eigenvalue();
            if min < -STATE_TOL {
                return Err(Error::InvalidMarginal(min));
            }
        }
        Ok(Self {
            dims,
            matrix,
            source: None,
        })
    }

    pub fn dims(&self) -> BipartiteDims {
        self.dims
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn source(&self) -> Option<&(DensityMatrix, JamiolkowskiMatrix)> {
        self.source.as_ref()
    }

    pub fn initial_state(&self) -> HermitianMatrix {
        let m = partial_trace(&self.matrix, self.dims, Subsystem::B).expect("dims are consistent");
        HermitianMatrix::from_hermitian_part(&m)
    }

    pub fn final_state(&self) -> HermitianMatrix {
        let m = partial_trace(&self.matrix, self.dims, Subsystem::A).expect("dims are consistent");
        HermitianMatrix::from_hermitian_part(&m)
    }

    /// The same operator read with the time direction reversed (`S Q S`).
    pub fn reversed(&self) -> HermitianMatrix {
        swap_subsystems(&self.matrix, self.dims)
    }
}

/// Exchanges the two tensor factors of a bipartite operator.
pub fn swap_subsystems(m: &HermitianMatrix, dims: BipartiteDims) -> HermitianMatrix {
    let p = permute_subsystems(m, &[dims.d_a, dims.d_b], &[1, 0]).expect("dims are consistent");
    HermitianMatrix::from_hermitian_part(&p)
}

/// `E(x) = Tr_A[(x (x) 1) J]`.
pub fn channel_apply(j: &JamiolkowskiMatrix, x: &HermitianMatrix) -> Result<HermitianMatrix> {
    channel_apply_raw(j.matrix(), j.dims(), x)
}

pub(crate) fn channel_apply_raw(j: &ComplexMatrix, dims: BipartiteDims, x: &ComplexMatrix) -> Result<HermitianMatrix> {
    if x.rows() != dims.d_a || x.cols() != dims.d_a {
        return Err(Error::DimensionMismatch(format!(
            "channel input has dimension {}, operator is {}x{}",
            dims.d_a,
            x.rows(),
            x.cols()
        )));
    }
    let lifted = tensor(x, &ComplexMatrix::identity(dims.d_b));
    let out = partial_trace(&(&lifted * j), dims, Subsystem::A)?;
    Ok(HermitianMatrix::from_hermitian_part(&out))
}

/// `(rho (x) 1) * J` as a raw Hermitian matrix.
pub(crate) fn jordan_lift(rho: &ComplexMatrix, j: &ComplexMatrix, dims: BipartiteDims) -> Result<HermitianMatrix> {
    if rho.rows() != dims.d_a || j.rows() != dims.total() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} with a {}x{} operator for dims ({}, {})",
            rho.rows(),
            j.rows(),
            j.cols(),
            dims.d_a,
            dims.d_b
        )));
    }
    let lifted = tensor(rho, &ComplexMatrix::identity(dims.d_b));
    Ok(HermitianMatrix::from_hermitian_part(&jordan_general(&lifted, j)?))
}

/// Builds the state over time of `rho` evolving under `J`.
pub fn make_stote(rho: &DensityMatrix, j: &JamiolkowskiMatrix) -> Result<Stote> {
    let matrix = jordan_lift(rho.matrix(), j.matrix(), j.dims())?;
    Ok(Stote {
        dims: j.dims(),
        matrix,
        source: Some((rho.clone(), j.clone())),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InversionMethod {
    /// Closed-form inverse in the eigenbasis of a faithful marginal.
    Formula,
    /// Max-slack completion SDP for a rank-deficient marginal.
    Sdp,
}

/// Result of recovering `(rho, J)` from a candidate state over time.
#[derive(Clone, Debug)]
pub struct Inversion {
    pub rho: DensityMatrix,
    pub dims: BipartiteDims,
    /// Recovered (or completed) Jamiolkowski candidate; may fail channel conditions.
    pub j: HermitianMatrix,
    pub report: JamiolkowskiReport,
    pub method: InversionMethod,
    /// Max-slack value `x` when the SDP path ran.
    pub slack: Option<f64>,
    pub solver_status: Option<SolveStatus>,
}

impl Inversion {
    pub fn is_valid(&self) -> bool {
        match self.method {
            InversionMethod::Formula => self.report.is_valid(),
            InversionMethod::Sdp => {
                self.solver_status == Some(SolveStatus::Solved)
                    && self.slack.is_some_and(|x| x >= -SLACK_TOL)
                    && self.report.trace_preservation_error <= SLACK_TOL
            }
        }
    }

    /// The recovered channel, or a not-a-stote error carrying the report.
    pub fn jamiolkowski(&self) -> Result<JamiolkowskiMatrix> {
        if self.is_valid() {
            Ok(JamiolkowskiMatrix::new_unchecked(self.dims, self.j.clone()))
        } else {
            Err(Error::NotAStote(self.report.clone()))
        }
    }
}

fn marginal_state(omega: &HermitianMatrix, dims: BipartiteDims) -> Result<DensityMatrix> {
    let rho = HermitianMatrix::from_hermitian_part(&partial_trace(omega, dims, Subsystem::B)?);
    let min = herm_eig(&rho)?.min_eigenvalue();
    if min < -STATE_TOL {
        return Err(Error::InvalidMarginal(min));
    }
    DensityMatrix::new(rho)
}

/// Recovers `(rho, J)` with `rho = Tr_B omega`. Faithful marginals use the
/// closed-form inverse; rank-deficient ones go through [`invert_stote_sdp`].
pub fn invert_stote(omega: &HermitianMatrix, dims: BipartiteDims) -> Result<Inversion> {
    let rho = marginal_state(omega, dims)?;
    if !rho.is_faithful() {
        return invert_stote_sdp(omega, dims, DEFAULT_TOL, DEFAULT_MAX_ITER);
    }
    let j = integral_inverse(omega, &rho)?;
    let report = JamiolkowskiReport::of(&j, dims)?;
    Ok(Inversion {
        rho,
        dims,
        j,
        report,
        method: InversionMethod::Formula,
        slack: None,
        solver_status: None,
    })
}

/// Completes `J` subject to `(rho (x) 1) * J = omega` and `Tr_B J = 1` while
/// maximizing the smallest eigenvalue of `J^{T_A}`.
pub fn invert_stote_sdp(omega: &HermitianMatrix, dims: BipartiteDims, tol: f64, max_iter: usize) -> Result<Inversion> {
    let rho = marginal_state(omega, dims)?;
    let n = dims.total();
    if omega.dim() != n {
        return Err(Error::DimensionMismatch(format!("omega is {0}x{0}, dims give {n}", omega.dim())));
    }
    let lifted = tensor(rho.matrix(), &ComplexMatrix::identity(dims.d_b));
    let mut rows = Vec::with_capacity(n * n + dims.d_a * dims.d_a);
    for w in hermitian_basis(n) {
        // Tr[W (rho * J)] = Tr[(rho * W) J] = Tr[T_A(rho * W) C]
        let lw = jordan_general(&lifted, &w)?;
        if lw.max_abs() == 0.0 {
            continue;
        }
        let coeff = HermitianMatrix::from_hermitian_part(&partial_transpose(&lw, dims, Subsystem::A)?);
        rows.push((coeff, w.trace_with(omega)));
    }
    for e in hermitian_basis(dims.d_a) {
        let lifted_e = HermitianMatrix::from_hermitian_part(&tensor(&e, &ComplexMatrix::identity(dims.d_b)));
        rows.push((lifted_e, e.trace().re));
    }
    let sol = feasibility_max_slack(&SlackConstraints { dim: n, rows }, tol, max_iter)?;
    let j = HermitianMatrix::from_hermitian_part(&partial_transpose(&sol.point, dims, Subsystem::A)?);
    let report = JamiolkowskiReport::of(&j, dims)?;
    Ok(Inversion {
        rho,
        dims,
        j,
        report,
        method: InversionMethod::Sdp,
        slack: Some(sol.slack),
        solver_status: Some(sol.solution.status),
    })
}

/// `int_0^inf e^{-t rho/2} omega e^{-t rho/2} dt` (with `rho` acting on the
/// first factor), evaluated entrywise in the eigenbasis of `rho` as
/// `2/(p_i + p_j) <ik|omega|jl>`.
pub fn integral_inverse(omega: &HermitianMatrix, rho: &DensityMatrix) -> Result<HermitianMatrix> {
    let d_a = rho.dim();
    if d_a == 0 || !omega.dim().is_multiple_of(d_a) {
        return Err(Error::DimensionMismatch(format!(
            "omega of dimension {} is not a multiple of {d_a}",
            omega.dim()
        )));
    }
    let d_b = omega.dim() / d_a;
    let eig = rho.spectrum();
    let min = eig.min_eigenvalue();
    if min <= FAITHFUL_THRESHOLD {
        return Err(Error::NotFaithful(min));
    }
    let v = tensor(&eig.eigenvectors, &ComplexMatrix::identity(d_b));
    let rotated = &(&v.adjoint() * omega.matrix()) * &v;
    let p = &eig.eigenvalues;
    let weighted = ComplexMatrix::from_fn(d_a * d_b, d_a * d_b, |r, s| {
        rotated[(r, s)] * (2.0 / (p[r / d_b] + p[s / d_b]))
    });
    Ok(HermitianMatrix::from_hermitian_part(&(&(&v * &weighted) * &v.adjoint())))
}

/// Jamiolkowski matrix of `E2 o E1`: `Tr_B[(J1 (x) 1) * (1 (x) J2)]`.
pub fn compose(j1: &JamiolkowskiMatrix, j2: &JamiolkowskiMatrix) -> Result<JamiolkowskiMatrix> {
    let (d1, d2) = (j1.dims(), j2.dims());
    if d1.d_b != d2.d_a {
        return Err(Error::DimensionMismatch(format!(
            "first channel outputs dimension {}, second expects {}",
            d1.d_b, d2.d_a
        )));
    }
    let slots = [d1.d_a, d1.d_b, d2.d_b];
    let left = embed(j1.matrix(), &slots, &[0, 1])?;
    let right = embed(j2.matrix(), &slots, &[1, 2])?;
    let linked = partial_trace_multi(&jordan_general(&left, &right)?, &slots, &[1])?;
    let dims = BipartiteDims::new(d1.d_a, d2.d_b)?;
    Ok(JamiolkowskiMatrix::new_unchecked(dims, HermitianMatrix::from_hermitian_part(&linked)))
}

/// State over several times, with one tensor slot per time.
#[derive(Clone, Debug)]
pub struct MultiTimeStote {
    pub dims: Vec<usize>,
    pub matrix: HermitianMatrix,
}

/// `Q_{0..n} = (Q_{0..n-1} (x) 1) * (1 (x) J_n)`, starting from `rho`.
pub fn multi_time_stote(rho: &DensityMatrix, chain: &[JamiolkowskiMatrix]) -> Result<MultiTimeStote> {
    let mut dims = vec![rho.dim()];
    let mut q: ComplexMatrix = rho.matrix().matrix().clone();
    for (step, j) in chain.iter().enumerate() {
        let last = *dims.last().expect("dims is never empty");
        if j.dims().d_a != last {
            return Err(Error::DimensionMismatch(format!(
                "channel {step} expects input dimension {}, previous slot has {last}",
                j.dims().d_a
            )));
        }
        dims.push(j.dims().d_b);
        let k = dims.len();
        let padded_q = embed(&q, &dims, &(0..k - 1).collect::<Vec<_>>())?;
        let padded_j = embed(j.matrix(), &dims, &[k - 2, k - 1])?;
        q = jordan_general(&padded_q, &padded_j)?;
    }
    Ok(MultiTimeStote {
        dims,
        matrix: HermitianMatrix::from_hermitian_part(&q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_channel, random_density, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qubit(d: usize) -> BipartiteDims {
        BipartiteDims::square(d).unwrap()
    }

    fn dist(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).frobenius_norm()
    }

    fn plus() -> Vec<C64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        vec![re(h), re(h)]
    }

    #[test]
    fn identity_channel_is_transparent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_hermitian(3, &mut rng);
        let out = channel_apply(&JamiolkowskiMatrix::identity(3), &x).unwrap();
        assert!(dist(&out, &x) < 1e-12);
    }

    #[test]
    fn replacement_outputs_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = random_density(2, &mut rng);
        let j = JamiolkowskiMatrix::replacement(3, &sigma);
        let x = random_density(3, &mut rng);
        assert!(dist(&channel_apply(&j, &x).unwrap(), &sigma) < 1e-12);
    }

    #[test]
    fn channel_apply_matches_unrolled_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let j = random_channel(2, 3, 2, &mut rng);
        let rho = random_density(2, &mut rng);
        // sum_{ij} rho_ij <j|_A J |i>_A
        let dims = j.dims();
        let oracle = ComplexMatrix::from_fn(3, 3, |k, l| {
            let mut acc = C64::default();
            for i in 0..2 {
                for jj in 0..2 {
                    acc += rho[(i, jj)] * j.matrix()[(jj * dims.d_b + k, i * dims.d_b + l)];
                }
            }
            acc
        });
        let out = channel_apply(&j, &rho).unwrap();
        assert!(dist(&out, &oracle) < 1e-12);
        assert!((out.trace().re - 1.0).abs() < 1e-10);
        assert!(channel_apply(&j, &random_density(3, &mut rng)).is_err());
    }

    #[test]
    fn replacement_stote_is_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density(2, &mut rng);
        let sigma = random_density(3, &mut rng);
        let q = make_stote(&rho, &JamiolkowskiMatrix::replacement(2, &sigma)).unwrap();
        assert!(dist(q.matrix(), &tensor(&rho, &sigma)) < 1e-12);
    }

    #[test]
    fn identity_stote_in_eigenbasis() {
        let p = 0.3;
        let rho = DensityMatrix::from_diag(&[p, 1.0 - p]).unwrap();
        let q = make_stote(&rho, &JamiolkowskiMatrix::identity(2)).unwrap();
        let want = ComplexMatrix::from_real_rows(&[
            &[p, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.5, 0.0],
            &[0.0, 0.5, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0 - p],
        ]);
        assert!(dist(q.matrix(), &want) < 1e-14);
        let tr_a = partial_trace(q.matrix(), qubit(2), Subsystem::A).unwrap();
        assert!(dist(&tr_a, &rho) < 1e-14);
    }

    #[test]
    fn dephasing_stote_of_plus_state() {
        let p = 0.3;
        let rho = DensityMatrix::pure(&plus()).unwrap();
        let q = make_stote(&rho, &JamiolkowskiMatrix::dephasing(p)).unwrap();
        // (rho (x) 1) J and its adjoint, averaged, written out entrywise.
        let a = 2.0 * p - 1.0;
        let want = ComplexMatrix::from_real_rows(&[
            &[2.0, a, 1.0, 0.0],
            &[a, 0.0, 2.0 * a, 1.0],
            &[1.0, 2.0 * a, 0.0, a],
            &[0.0, 1.0, a, 2.0],
        ])
        .scale_re(0.25);
        assert!(dist(q.matrix(), &want) < 1e-14, "{:?}", q.matrix());
    }

    #[test]
    fn product_stote_inverts_to_replacement() {
        let rho = DensityMatrix::from_diag(&[0.2, 0.3, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = random_density(2, &mut rng);
        let omega = HermitianMatrix::from_hermitian_part(&tensor(&rho, &sigma));
        let inv = invert_stote(&omega, BipartiteDims::new(3, 2).unwrap()).unwrap();
        assert_eq!(inv.method, InversionMethod::Formula);
        let want = tensor(&ComplexMatrix::identity(3), &sigma);
        assert!(dist(&inv.j, &want) < 1e-12);
        assert!(inv.is_valid());
    }

    #[test]
    fn bayes_rule_from_classical_joint() {
        // joint p_ij on a 2x3 grid
        let joint = [[0.10, 0.25, 0.05], [0.30, 0.05, 0.25]];
        let diag: Vec<f64> = joint.iter().flatten().copied().collect();
        let q = HermitianMatrix::from_diag(&diag);
        let dims = BipartiteDims::new(2, 3).unwrap();
        let reversed = swap_subsystems(&q, dims);
        let inv = invert_stote(&reversed, dims.swapped()).unwrap();
        assert!(inv.is_valid());
        let p_j: Vec<f64> = (0..3).map(|j| joint[0][j] + joint[1][j]).collect();
        for j in 0..3 {
            for i in 0..2 {
                let got = inv.j[(j * 2 + i, j * 2 + i)].re;
                assert!((got - joint[i][j] / p_j[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depolarising_reverse_is_not_a_stote() {
        for p in [0.25, 0.5, 0.75] {
            let rho = DensityMatrix::from_diag(&[1.0, 0.0]).unwrap();
            let q = make_stote(&rho, &JamiolkowskiMatrix::depolarizing(2, p)).unwrap();
            let want = ComplexMatrix::from_real_rows(&[
                &[2.0 - p, 0.0, 0.0, 0.0],
                &[0.0, p, 1.0 - p, 0.0],
                &[0.0, 1.0 - p, 0.0, 0.0],
                &[0.0, 0.0, 0.0, 0.0],
            ])
            .scale_re(0.5);
            assert!(dist(q.matrix(), &want) < 1e-14);
            let inv = invert_stote(&q.reversed(), qubit(2)).unwrap();
            assert!(!inv.is_valid());
            // {1,4} minor [[1, 1-p], [1-p, 0]] has eigenvalue (1 - sqrt(1 + 4(1-p)^2))/2.
            let minor_eig = (1.0 - (1.0 + 4.0 * (1.0 - p) * (1.0 - p)).sqrt()) / 2.0;
            assert!((inv.report.choi_min_eigenvalue - minor_eig).abs() < 1e-10);
            assert!(inv.jamiolkowski().is_err());
        }
        // p = 1 is the replacement channel and reverses fine.
        let rho = DensityMatrix::from_diag(&[1.0, 0.0]).unwrap();
        let q = make_stote(&rho, &JamiolkowskiMatrix::depolarizing(2, 1.0)).unwrap();
        assert!(invert_stote(&q.reversed(), qubit(2)).unwrap().is_valid());
    }

    #[test]
    fn dephasing_reverse_is_not_a_stote() {
        let rho = DensityMatrix::pure(&plus()).unwrap();
        let q = make_stote(&rho, &JamiolkowskiMatrix::dephasing(0.5)).unwrap();
        let inv = invert_stote(&q.reversed(), qubit(2)).unwrap();
        assert_eq!(inv.method, InversionMethod::Formula);
        assert!(!inv.is_valid());
        let want = (1.0 - 2f64.sqrt()) / 2.0;
        assert!((inv.report.choi_min_eigenvalue - want).abs() < 1e-10, "{}", inv.report);
    }

    #[test]
    fn measure_prepare_reverse_is_a_stote() {
        let p = 0.3;
        let rho = DensityMatrix::from_diag(&[p, 1.0 - p]).unwrap();
        let mut j = ComplexMatrix::zeros(4, 4);
        j[(0, 0)] = re(1.0);
        for (r, s) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            j[(r, s)] = re(0.5);
        }
        let j = JamiolkowskiMatrix::new(qubit(2), HermitianMatrix::new(j).unwrap()).unwrap();
        let q = make_stote(&rho, &j).unwrap();
        let want = ComplexMatrix::from_real_rows(&[
            &[2.0 * p, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0 - p, 1.0 - p],
            &[0.0, 0.0, 1.0 - p, 1.0 - p],
        ])
        .scale_re(0.5);
        assert!(dist(q.matrix(), &want) < 1e-14);
        let inv = invert_stote(&q.reversed(), qubit(2)).unwrap();
        assert!(inv.is_valid(), "{}", inv.report);
        let sdp = invert_stote_sdp(&q.reversed(), qubit(2), 1e-8, DEFAULT_MAX_ITER).unwrap();
        assert!(sdp.is_valid(), "slack {:?}", sdp.slack);
    }

    #[test]
    fn pure_replacement_completion_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sigma = random_density(2, &mut rng);
        let rho = DensityMatrix::from_diag(&[1.0, 0.0]).unwrap();
        let omega = HermitianMatrix::from_hermitian_part(&tensor(&rho, &sigma));
        let inv = invert_stote(&omega, qubit(2)).unwrap();
        assert_eq!(inv.method, InversionMethod::Sdp);
        assert!(inv.is_valid(), "slack {:?} status {:?}", inv.slack, inv.solver_status);
        // Determined block: <0k|J|0l> = sigma_kl.
        for k in 0..2 {
            for l in 0..2 {
                assert!((inv.j[(k, l)] - sigma[(k, l)]).norm() < 1e-6);
            }
        }
        let back = jordan_lift(&rho, &inv.j, qubit(2)).unwrap();
        assert!(dist(&back, &omega) < 1e-6);
    }

    #[test]
    fn forward_dephasing_from_pure_state_is_feasible() {
        let rho = DensityMatrix::pure(&plus()).unwrap();
        let q = make_stote(&rho, &JamiolkowskiMatrix::dephasing(0.3)).unwrap();
        let inv = invert_stote(q.matrix(), qubit(2)).unwrap();
        assert_eq!(inv.method, InversionMethod::Sdp);
        assert!(inv.is_valid(), "slack {:?}", inv.slack);
    }

    #[test]
    fn non_psd_marginal_is_rejected() {
        let omega = HermitianMatrix::from_diag(&[1.5, 0.0, -0.5, 0.0]);
        assert!(matches!(invert_stote(&omega, qubit(2)), Err(Error::InvalidMarginal(_))));
    }

    #[test]
    fn integral_inverse_of_maximally_mixed_scales_by_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let omega = random_hermitian(6, &mut rng);
        let j = integral_inverse(&omega, &DensityMatrix::maximally_mixed(3)).unwrap();
        assert!(dist(&j, &omega.scale(3.0)) < 1e-12);
        let pure = DensityMatrix::from_diag(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(integral_inverse(&omega, &pure), Err(Error::NotFaithful(_))));
    }

    #[test]
    fn compose_identity_and_replacement() {
        let s = JamiolkowskiMatrix::identity(2);
        assert!(dist(compose(&s, &s).unwrap().matrix(), s.matrix()) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma = random_density(2, &mut rng);
        let rep = JamiolkowskiMatrix::replacement(3, &sigma);
        let any = random_channel(2, 3, 2, &mut rng);
        let composed = compose(&any, &rep).unwrap();
        assert!(dist(composed.matrix(), JamiolkowskiMatrix::replacement(2, &sigma).matrix()) < 1e-12);
        assert!(compose(&rep, &rep).is_err());
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let j1 = random_channel(2, 3, 3, &mut rng);
            let j2 = random_channel(3, 2, 2, &mut rng);
            let jc = compose(&j1, &j2).unwrap();
            assert!(jc.report().is_valid());
            let rho = random_density(2, &mut rng);
            let seq = channel_apply(&j2, &channel_apply(&j1, &rho).unwrap()).unwrap();
            assert!(dist(&channel_apply(&jc, &rho).unwrap(), &seq) < 1e-10);
        }
    }

    #[test]
    fn multi_time_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rho = random_density(2, &mut rng);
        let id = JamiolkowskiMatrix::identity(2);
        let one = multi_time_stote(&rho, std::slice::from_ref(&id)).unwrap();
        assert!(dist(&one.matrix, make_stote(&rho, &id).unwrap().matrix()) < 1e-14);

        let two = multi_time_stote(&rho, &[id.clone(), id.clone()]).unwrap();
        let reduced = partial_trace_multi(&two.matrix, &two.dims, &[1]).unwrap();
        assert!(dist(&reduced, make_stote(&rho, &id).unwrap().matrix()) < 1e-12);

        let sigma = random_density(2, &mut rng);
        let rep = JamiolkowskiMatrix::replacement(2, &sigma);
        let chain = multi_time_stote(&rho, &[id, rep]).unwrap();
        let outer = partial_trace_multi(&chain.matrix, &chain.dims, &[1]).unwrap();
        assert!(dist(&outer, &tensor(&rho, &sigma)) < 1e-12);

        let bad = JamiolkowskiMatrix::identity(3);
        assert!(multi_time_stote(&rho, &[bad]).is_err());
    }

    #[test]
    fn multi_time_interior_trace_is_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random_density(2, &mut rng);
        let j1 = random_channel(2, 2, 2, &mut rng);
        let j2 = random_channel(2, 3, 2, &mut rng);
        let j3 = random_channel(3, 2, 2, &mut rng);
        let q = multi_time_stote(&rho, &[j1.clone(), j2.clone(), j3.clone()]).unwrap();
        let reduced = partial_trace_multi(&q.matrix, &q.dims, &[2]).unwrap();
        let via = multi_time_stote(&rho, &[j1, compose(&j2, &j3).unwrap()]).unwrap();
        assert!(dist(&reduced, &via.matrix) < 1e-8);
    }

    #[test]
    fn roundtrip_small_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in [2, 3] {
            let rho = random_density(d, &mut rng);
            let j = random_channel(d, d, 2, &mut rng);
            let q = make_stote(&rho, &j).unwrap();
            let inv = invert_stote(q.matrix(), j.dims()).unwrap();
            assert!(dist(&inv.j, j.matrix()) < 1e-8);
            assert!(dist(&inv.rho, &rho) < 1e-12);
            assert!(inv.is_valid());
        }
    }
}
