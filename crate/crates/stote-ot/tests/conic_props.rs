use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stote_ot::conic::{solve, ConeSpec, ConicProblem, Sense, SolveStatus, Term, Var};
use stote_ot::linalg::{herm_eig, HermitianMatrix};
use stote_ot::random::{random_density, random_hermitian};

/// `min/max Tr[G X] + c s` with `Tr X = 1`, `Tr[W X] - s = w0`, `X >= 0`, `s >= 0`.
fn random_problem(seed: u64, n: usize, sense: Sense) -> ConicProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_hermitian(n, &mut rng);
    let w = random_density(n, &mut rng);
    let cost: f64 = rng.random_range(0.1..2.0);
    let cone = ConeSpec::new(vec![n], 1, 0).unwrap();
    let shift = w.trace_with(&random_density(n, &mut rng)) - rng.random_range(0.0..0.5) * 0.1;
    ConicProblem::builder(cone, sense)
        .objective(&[Term::Block(0, &g), Term::Scalar(Var::Nonneg(0), if sense == Sense::Min { cost } else { -cost })])
        .constraint(&[Term::Block(0, &HermitianMatrix::identity(n))], 1.0)
        .constraint(&[Term::Block(0, &w), Term::Scalar(Var::Nonneg(0), -1.0)], shift.max(0.0))
        .build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weak_duality_holds(seed in any::<u64>(), n in 2usize..=4) {
        for sense in [Sense::Min, Sense::Max] {
            let problem = random_problem(seed, n, sense);
            let sol = solve(&problem, 1e-8, 50_000).unwrap();
            prop_assume!(sol.status == SolveStatus::Solved);
            let slack = match sense {
                Sense::Min => sol.dual_value - sol.objective_value,
                Sense::Max => sol.objective_value - sol.dual_value,
            };
            prop_assert!(slack <= sol.gap + 1e-12);
            prop_assert!(sol.gap <= 1e-8);
        }
    }

    #[test]
    fn smallest_eigenvalue_by_sdp(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_hermitian(n, &mut rng);
        let cone = ConeSpec::new(vec![n], 0, 0).unwrap();
        let problem = ConicProblem::builder(cone.clone(), Sense::Min)
            .objective(&[Term::Block(0, &g)])
            .constraint(&[Term::Block(0, &HermitianMatrix::identity(n))], 1.0)
            .build();
        let sol = solve(&problem, 1e-9, 100_000).unwrap();
        let lmin = herm_eig(&g).unwrap().min_eigenvalue();
        prop_assert!((sol.objective_value - lmin).abs() < 1e-6);
        prop_assert!(herm_eig(&sol.block(&cone, 0)).unwrap().min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn solver_is_bitwise_deterministic(seed in any::<u64>(), n in 2usize..=3, iters in 1usize..400) {
        let problem = random_problem(seed, n, Sense::Min);
        let a = solve(&problem, 1e-12, iters).unwrap();
        let b = solve(&problem, 1e-12, iters).unwrap();
        prop_assert_eq!(a.primal.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.primal.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.dual.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.dual.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.iterations, b.iterations);
    }
}
