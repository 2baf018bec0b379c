//! Parameter sweeps that fan grid points out to a worker pool and emit CSV.

use anyhow::{ensure, Result};
use rayon::prelude::*;

use stote_ot::conic::SolveStatus;
use stote_ot::stote::DensityMatrix;
use stote_ot::transport::{
    embedded_cost, k_infinity, pure_pair, transport_cost, unitary_invariant_k, unitary_restricted_cost_seeded,
    SdpOptions,
};

use crate::io::{basis_state, fmt_f64, status_name};

/// One finished sweep: CSV text plus whether any solve hit the iteration cap.
pub struct SweepOutput {
    pub csv: String,
    pub hit_max_iter: bool,
}

struct Row {
    cells: Vec<String>,
    status: SolveStatus,
}

fn worst(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    if a == SolveStatus::Solved {
        b
    } else {
        a
    }
}

/// Header row plus one line per grid point, with an optional status column.
fn render(header: &[&str], rows: Vec<Result<Row>>, with_status: bool) -> Result<SweepOutput> {
    let mut csv = header.join(",");
    if with_status {
        csv.push_str(",status");
    }
    csv.push('\n');
    let mut hit_max_iter = false;
    for row in rows {
        let row = row?;
        hit_max_iter |= row.status != SolveStatus::Solved;
        csv.push_str(&row.cells.join(","));
        if with_status {
            csv.push(',');
            csv.push_str(status_name(row.status));
        }
        csv.push('\n');
    }
    Ok(SweepOutput { csv, hit_max_iter })
}

fn grid_points(grid: usize) -> Result<Vec<f64>> {
    ensure!(grid >= 2, "grid must have at least 2 points, got {grid}");
    Ok((0..grid).map(|i| i as f64 / (grid - 1) as f64).collect())
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    ensure!((0.0..=1.0).contains(&x), "{name} must lie in [0, 1], got {x}");
    Ok(())
}

/// `p |0><0| + (1 - p) 1/d`.
fn mixed_basis_state(d: usize, p: f64) -> Result<DensityMatrix> {
    Ok(basis_state(d)?.depolarized(1.0 - p)?)
}

/// Forward and backward costs between `rho` and `(1 - p) rho + p 1/d` over `p` in `[0, 1]`.
pub fn symmetry_gap(d: usize, grid: usize, p_rho: f64, normalized: bool, opts: SdpOptions) -> Result<SweepOutput> {
    check_unit("p-rho", p_rho)?;
    let rho = mixed_basis_state(d, p_rho)?;
    let k = unitary_invariant_k(d, normalized);
    let rows = grid_points(grid)?
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            let sigma = rho.depolarized(p)?;
            let fwd = transport_cost(&k, &rho, &sigma, opts)?;
            let bwd = transport_cost(&k, &sigma, &rho, opts)?;
            Ok(Row {
                cells: vec![
                    i.to_string(),
                    fmt_f64(p),
                    fmt_f64(fwd.value),
                    fmt_f64(bwd.value),
                    fmt_f64(fwd.value - bwd.value),
                    fmt_f64(fwd.gap),
                    fmt_f64(bwd.gap),
                ],
                status: worst(fwd.status, bwd.status),
            })
        })
        .collect();
    render(
        &["index", "p_sigma", "forward", "backward", "difference", "forward_dual_gap", "backward_dual_gap"],
        rows,
        true,
    )
}

/// Optimal versus best-unitary cost between isospectral states built from a
/// pure pair with overlap `alpha`, each mixed to purity weight `p_rho`.
pub fn unitary_vs_optimal(
    d: usize,
    grid: usize,
    p_rho: f64,
    normalized: bool,
    seed: u64,
    opts: SdpOptions,
) -> Result<SweepOutput> {
    check_unit("p-rho", p_rho)?;
    let k = unitary_invariant_k(d, normalized);
    let scale = if normalized { 1.0 / d as f64 } else { 1.0 };
    let rows = grid_points(grid)?
        .into_par_iter()
        .enumerate()
        .map(|(i, alpha)| {
            let (a, b) = pure_pair(alpha, d)?;
            let rho = a.depolarized(1.0 - p_rho)?;
            let sigma = b.depolarized(1.0 - p_rho)?;
            let opt = transport_cost(&k, &rho, &sigma, opts)?;
            let unitary = scale * unitary_restricted_cost_seeded(&rho, &sigma, seed)?;
            Ok(Row {
                cells: vec![
                    i.to_string(),
                    fmt_f64(alpha),
                    fmt_f64(opt.value),
                    fmt_f64(unitary),
                    fmt_f64(unitary - opt.value),
                    fmt_f64(opt.gap),
                ],
                status: opt.status,
            })
        })
        .collect();
    render(&["index", "alpha", "optimal", "unitary", "difference", "dual_gap"], rows, true)
}

/// Normalized cost of the commuting pair `diag(p)`, `diag(q)` embedded in
/// growing dimensions, beside the infinite-dimensional limit.
pub fn embed_limit(p: &[f64], q: &[f64], dims: &[usize], opts: SdpOptions) -> Result<SweepOutput> {
    ensure!(p.len() == q.len(), "p and q differ in length");
    ensure!(dims.len() >= 2, "need at least 2 embedding dimensions");
    for &x in p.iter().chain(q) {
        check_unit("probability", x)?;
    }
    let rho = DensityMatrix::from_diag(p)?;
    let sigma = DensityMatrix::from_diag(q)?;
    let limit = k_infinity(&rho, &sigma, opts)?;
    let rows = dims
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            ensure!(d >= p.len(), "embedding dimension {d} is below the state dimension {}", p.len());
            let value = embedded_cost(&rho, &sigma, d, opts)?;
            Ok(Row {
                cells: vec![i.to_string(), d.to_string(), fmt_f64(limit), fmt_f64(value)],
                status: SolveStatus::Solved,
            })
        })
        .collect();
    // embedded_cost only returns solved values, so no status column.
    render(&["index", "d", "k_infinity", "embedded_cost"], rows, false)
}
