//! MatrixFile JSON, built-in state constructors and output sinks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use stote_ot::conic::SolveStatus;
use stote_ot::linalg::{BipartiteDims, ComplexMatrix, HermitianMatrix, C64};
use stote_ot::stote::DensityMatrix;
use stote_ot::transport::pure_pair;

/// Hermiticity tolerance for parsed inputs.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// A dense complex matrix split into real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexMatrix, dims: Option<BipartiteDims>) -> Self {
        let n = m.rows();
        let rows = |f: fn(C64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(m[(i, j)])).collect()).collect()
        };
        Self {
            dim: n,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
            dims: dims.map(|d| [d.d_a, d.d_b]),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.dim;
        ensure!(n > 0, "dim must be positive");
        for (name, part) in [("re", &self.re), ("im", &self.im)] {
            ensure!(part.len() == n, "{name} has {} rows, expected {n}", part.len());
            for (i, row) in part.iter().enumerate() {
                ensure!(row.len() == n, "{name} row {i} has {} entries, expected {n}", row.len());
            }
        }
        let m = ComplexMatrix::from_fn(n, n, |i, j| C64::new(self.re[i][j], self.im[i][j]));
        ensure!(m.is_finite(), "matrix has non-finite entries");
        Ok(m)
    }

    pub fn to_hermitian(&self) -> Result<HermitianMatrix> {
        let m = self.to_matrix()?;
        let err = m.hermiticity_error();
        ensure!(err <= HERMITIAN_TOL, "matrix is not Hermitian (deviation {err:e})");
        Ok(HermitianMatrix::from_hermitian_part(&m))
    }

    pub fn bipartite_dims(&self, flag: Option<&[usize]>) -> Result<BipartiteDims> {
        let (a, b) = match (flag, self.dims) {
            (Some(&[a, b]), _) => (a, b),
            (Some(other), _) => bail!("--dims takes two values, got {}", other.len()),
            (None, Some([a, b])) => (a, b),
            (None, None) => {
                let d = (self.dim as f64).sqrt().round() as usize;
                ensure!(d * d == self.dim, "dimension {} is not a square; pass --dims", self.dim);
                (d, d)
            }
        };
        ensure!(a * b == self.dim, "dims {a}x{b} do not match matrix dimension {}", self.dim);
        Ok(BipartiteDims::new(a, b)?)
    }
}

/// Which side of a transport problem a state spec describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Source,
    Target,
}

/// Parses `diag=p1,...`, `pure-alpha=a`, `depolarized=p` or a MatrixFile path.
pub fn parse_state(spec: &str, dim: usize, role: Role) -> Result<DensityMatrix> {
    if let Some(list) = spec.strip_prefix("diag=") {
        let p = parse_list(list)?;
        return Ok(DensityMatrix::from_diag(&p)?);
    }
    if let Some(a) = spec.strip_prefix("pure-alpha=") {
        let alpha: f64 = a.trim().parse().with_context(|| format!("bad overlap {a:?}"))?;
        let (rho, sigma) = pure_pair(alpha, dim)?;
        return Ok(if role == Role::Source { rho } else { sigma });
    }
    if let Some(p) = spec.strip_prefix("depolarized=") {
        let p: f64 = p.trim().parse().with_context(|| format!("bad mixing weight {p:?}"))?;
        return Ok(basis_state(dim)?.depolarized(p)?);
    }
    let h = MatrixFile::read(&PathBuf::from(spec))?.to_hermitian()?;
    Ok(DensityMatrix::new(h)?)
}

/// `|0><0|` in dimension `d`.
pub fn basis_state(d: usize) -> Result<DensityMatrix> {
    ensure!(d > 0, "dimension must be positive");
    let mut p = vec![0.0; d];
    p[0] = 1.0;
    Ok(DensityMatrix::from_diag(&p)?)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?}")))
        .collect()
}

/// Writes to the `--output` file or stdout.
pub fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Solved => "solved",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::InfeasibleSuspected => "infeasible_suspected",
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let m = ComplexMatrix::from_fn(3, 3, |i, j| C64::new(0.1 * i as f64 + 1.0 / 3.0, (j as f64).sqrt() - 0.7));
        let f = MatrixFile::from_matrix(&m, Some(BipartiteDims::new(3, 1).unwrap()));
        let text = serde_json::to_string(&f).unwrap();
        let back: MatrixFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_matrix().unwrap(), m);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let f = MatrixFile {
            dim: 2,
            re: vec![vec![1.0, 0.0], vec![0.0]],
            im: vec![vec![0.0; 2]; 2],
            dims: None,
        };
        assert!(f.to_matrix().is_err());
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let f = MatrixFile {
            dim: 2,
            re: vec![vec![1.0, 0.5], vec![0.0, 0.0]],
            im: vec![vec![0.0; 2]; 2],
            dims: None,
        };
        assert!(f.to_hermitian().is_err());
    }

    #[test]
    fn builtin_states() {
        let rho = parse_state("diag=0.25,0.75", 2, Role::Source).unwrap();
        assert!((rho.matrix()[(1, 1)].re - 0.75).abs() < 1e-15);
        let mixed = parse_state("depolarized=1", 3, Role::Source).unwrap();
        assert!((mixed.matrix()[(2, 2)].re - 1.0 / 3.0).abs() < 1e-15);
        let (a, b) = pure_pair(0.5, 2).unwrap();
        assert_eq!(parse_state("pure-alpha=0.5", 2, Role::Source).unwrap().matrix(), a.matrix());
        assert_eq!(parse_state("pure-alpha=0.5", 2, Role::Target).unwrap().matrix(), b.matrix());
        assert!(parse_state("diag=0.5,x", 2, Role::Source).is_err());
    }

    #[test]
    fn seventeen_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }
}
