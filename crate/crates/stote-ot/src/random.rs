//! Seeded random generators for states, unitaries and channels.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, ComplexMatrix, HermitianMatrix, C64};
use crate::stote::{DensityMatrix, JamiolkowskiMatrix};
use crate::transport::KrausSet;

fn gaussian(rng: &mut impl Rng) -> C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    c(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ginibre matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::from_hermitian_part(&random_matrix(n, n, rng))
}

/// Haar-distributed unitary from Gram-Schmidt on a Ginibre matrix.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    orthonormalize_columns(&random_matrix(n, n, rng))
}

/// Modified Gram-Schmidt on the columns of `m`.
pub fn orthonormalize_columns(m: &ComplexMatrix) -> ComplexMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = m.column(j);
        for u in &q {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= proj * ui;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for vi in &mut v {
            *vi /= norm;
        }
        q.push(v);
    }
    ComplexMatrix::from_fn(rows, cols, |i, j| q[j][i])
}

/// Full-rank density matrix `W W^* / Tr[W W^*]` with `W` Ginibre.
pub fn random_density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    random_density_rank(d, d, rng)
}

/// Density matrix of rank at most `rank`.
pub fn random_density_rank(d: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let w = random_matrix(d, rank, rng);
    let ww = &w * &w.adjoint();
    let tr = ww.trace().re;
    DensityMatrix::new(HermitianMatrix::from_hermitian_part(&ww.scale_re(1.0 / tr)))
        .expect("Ginibre construction yields a state")
}

pub fn random_pure_vector(d: usize, rng: &mut impl Rng) -> Vec<C64> {
    let v = random_matrix(d, 1, rng).into_vec();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn random_pure(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    DensityMatrix::new(HermitianMatrix::projector(&random_pure_vector(d, rng)))
        .expect("projector onto a unit vector is a state")
}

/// Kraus operators of a random channel from a Haar isometry
/// `C^{d_in} -> C^{d_out} (x) C^{kraus}`.
pub fn random_kraus(d_in: usize, d_out: usize, kraus: usize, rng: &mut impl Rng) -> KrausSet {
    let v = orthonormalize_columns(&random_matrix(d_out * kraus, d_in, rng));
    let ops = (0..kraus)
        .map(|k| ComplexMatrix::from_fn(d_out, d_in, |m, i| v[(m * kraus + k, i)]))
        .collect();
    KrausSet::new(ops)
}

/// Random channel with `kraus` Kraus operators.
pub fn random_channel(d_in: usize, d_out: usize, kraus: usize, rng: &mut impl Rng) -> JamiolkowskiMatrix {
    random_kraus(d_in, d_out, kraus, rng).jamiolkowski()
}
