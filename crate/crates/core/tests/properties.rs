use decprox::linalg::{dist_sq, norm, norm_sq, AgentMatrix};
use decprox::metrics::{consensus_error, merit, pairwise_consensus, MeritParams};
use decprox::oracles::{generate_heterogeneous_quadratic, ProblemInstance, ProblemKind};
use decprox::proximal::{eta, gradient_mapping, ProxOperator};
use decprox::topology::{
    build_complete, build_random_connected, build_ring, chebyshev_mix, mix, varrho, MixingMatrix,
};
use proptest::prelude::*;

fn vec_strategy(d: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, d)
}

fn op_strategy() -> impl Strategy<Value = ProxOperator> {
    prop_oneof![
        Just(ProxOperator::Zero),
        (0.0..2.0f64).prop_map(|l| ProxOperator::l1(l).unwrap()),
        (-2.0..0.0f64, 0.0..2.0f64).prop_map(|(lo, hi)| ProxOperator::uniform_box(lo, hi).unwrap()),
        (0.1..3.0f64).prop_map(|r| ProxOperator::l2_ball(r).unwrap()),
    ]
}

fn graph_strategy() -> impl Strategy<Value = MixingMatrix> {
    prop_oneof![
        (1usize..20, 0.05..0.95f64).prop_map(|(n, s)| build_ring(n, s).unwrap()),
        (1usize..12).prop_map(|n| build_complete(n).unwrap()),
        (2usize..14, 0.2..1.0f64, any::<u64>())
            .prop_map(|(n, p, seed)| build_random_connected(n, p, seed).unwrap()),
    ]
}

fn matrix_for(n: usize, d: usize) -> impl Strategy<Value = AgentMatrix> {
    prop::collection::vec(-5.0..5.0f64, n * d)
        .prop_map(move |data| AgentMatrix::from_col_major(d, n, data).unwrap())
}

fn graph_and_matrix() -> impl Strategy<Value = (MixingMatrix, AgentMatrix)> {
    (graph_strategy(), 1usize..5).prop_flat_map(|(w, d)| {
        let n = w.n();
        (Just(w), matrix_for(n, d))
    })
}

fn deviation(m: &AgentMatrix) -> f64 {
    m.deviation_sq().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn built_matrices_are_valid(w in graph_strategy()) {
        let n = w.n();
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                prop_assert!(w.weight(i, j) >= 0.0);
                prop_assert!((w.weight(i, j) - w.weight(j, i)).abs() <= 1e-12);
                row += w.weight(i, j);
                col += w.weight(j, i);
            }
            prop_assert!((row - 1.0).abs() <= 1e-12 && (col - 1.0).abs() <= 1e-12);
        }
        prop_assert!(w.rho() >= 0.0 && w.rho() < 1.0);
    }

    #[test]
    fn mixing_preserves_means_and_contracts((w, a) in graph_and_matrix(), m in 1usize..6) {
        let out = mix(&a, &w, m).unwrap();
        let scale = 1.0 + a.frobenius_sq().sqrt();
        for (p, q) in out.mean_column().iter().zip(a.mean_column()) {
            prop_assert!((p - q).abs() <= 1e-12 * scale);
        }
        let bound = w.rho().powi(m as i32) * deviation(&a);
        prop_assert!(deviation(&out) <= bound + 1e-12 * scale);
    }

    #[test]
    fn chebyshev_contracts((w, a) in graph_and_matrix(), m in 1usize..11) {
        let out = chebyshev_mix(&a, &w, m).unwrap();
        let scale = 1.0 + a.frobenius_sq().sqrt();
        for (p, q) in out.mean_column().iter().zip(a.mean_column()) {
            prop_assert!((p - q).abs() <= 1e-10 * scale);
        }
        let bound = 2.0 * (1.0 - (1.0 - w.rho()).sqrt()).powi(m as i32) * deviation(&a);
        prop_assert!(deviation(&out) <= bound + 1e-10 * scale);
    }

    #[test]
    fn prox_is_non_expansive(op in op_strategy(), a in vec_strategy(4, 5.0), b in vec_strategy(4, 5.0), gamma in 0.01..3.0f64) {
        let pa = op.prox(gamma, &a).unwrap();
        let pb = op.prox(gamma, &b).unwrap();
        prop_assert!(dist_sq(&pa, &pb) <= dist_sq(&a, &b) * (1.0 + 1e-12) + 1e-24);
    }

    #[test]
    fn prox_point_minimizes_the_eta_objective(
        op in op_strategy(),
        x in vec_strategy(3, 2.0),
        z in vec_strategy(3, 2.0),
        gamma in 0.05..2.0f64,
        deltas in prop::collection::vec(vec_strategy(3, 0.5), 100),
    ) {
        let shifted: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - gamma * b).collect();
        let y = op.prox(gamma, &shifted).unwrap();
        let objective = |p: &[f64]| {
            let diff: Vec<f64> = p.iter().zip(&x).map(|(a, b)| a - b).collect();
            diff.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + norm_sq(&diff) / (2.0 * gamma) + op.value(p)
        };
        let best = objective(&y);
        prop_assert!((best - eta(&x, &z, gamma, &op).unwrap()).abs() <= 1e-10 * (1.0 + best.abs()));
        for delta in &deltas {
            let p: Vec<f64> = y.iter().zip(delta).map(|(a, b)| a + b).collect();
            if op.value(&p).is_finite() {
                prop_assert!(best <= objective(&p) + 1e-12 * (1.0 + best.abs()));
            }
        }
    }

    #[test]
    fn eta_gap_dominates_gradient_mapping(op in op_strategy(), x0 in vec_strategy(5, 3.0), z in vec_strategy(5, 3.0), gamma in 0.01..3.0f64) {
        let x = op.prox(1.0, &x0).unwrap();
        let gap = op.value(&x) - eta(&x, &z, gamma, &op).unwrap();
        let g = gradient_mapping(&x, &z, gamma, &op).unwrap();
        prop_assert!(gap >= 0.5 * gamma * norm_sq(&g) - 1e-10 * (1.0 + gap.abs()));
    }

    #[test]
    fn zero_regularizer_mapping_is_z(x in vec_strategy(6, 10.0), z in vec_strategy(6, 10.0), gamma in 1e-3..10.0f64) {
        prop_assert_eq!(gradient_mapping(&x, &z, gamma, &ProxOperator::Zero).unwrap(), z);
    }

    #[test]
    fn consensus_error_matches_raw_moments(m in (1usize..9, 1usize..5).prop_flat_map(|(n, d)| matrix_for(n, d))) {
        let n = m.agents() as f64;
        let raw = m.frobenius_sq() / n - norm_sq(&m.mean_column());
        let ce = consensus_error(&m);
        prop_assert!((ce - raw).abs() <= 1e-12 * (1.0 + m.frobenius_sq() / n));
        let pairs: f64 = (0..m.agents())
            .flat_map(|i| (0..m.agents()).map(move |j| (i, j)))
            .map(|(i, j)| dist_sq(m.col(i), m.col(j)))
            .sum();
        prop_assert!((ce - pairs / (2.0 * n * n)).abs() <= 1e-12 * (1.0 + ce));
    }

    #[test]
    fn complete_graph_pairwise_identity(m in (1usize..9, 1usize..5).prop_flat_map(|(n, d)| matrix_for(n, d))) {
        let n = m.agents();
        let w = build_complete(n).unwrap();
        let g = pairwise_consensus(&m, &w).unwrap();
        let f = consensus_error(&m);
        prop_assert!((g - (n * n) as f64 * f).abs() <= 1e-10 * (1.0 + g));
    }

    #[test]
    fn gradient_mapping_lipschitz_bridge(
        op in op_strategy(),
        seed in any::<u64>(),
        a in vec_strategy(3, 3.0),
        b in vec_strategy(3, 3.0),
        gamma in 0.05..3.0f64,
    ) {
        let inst = generate_heterogeneous_quadratic(3, 4, 2.0, 0.0, seed).unwrap();
        let l = inst.smoothness_bound();
        let ga = gradient_mapping(&a, &inst.true_mean_gradient(&a).unwrap(), gamma, &op).unwrap();
        let gb = gradient_mapping(&b, &inst.true_mean_gradient(&b).unwrap(), gamma, &op).unwrap();
        let lhs = dist_sq(&ga, &gb).sqrt();
        let rhs = (2.0 + gamma * l) / gamma * dist_sq(&a, &b).sqrt();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn merit_is_nonnegative(
        op in op_strategy(),
        seed in any::<u64>(),
        x0 in vec_strategy(3, 3.0),
        z in vec_strategy(3, 3.0),
        gamma in 0.05..3.0f64,
    ) {
        let inst = generate_heterogeneous_quadratic(3, 5, 1.5, 0.2, seed).unwrap();
        let x = op.prox(1.0, &x0).unwrap();
        let params = MeritParams::default_for(gamma, inst.smoothness_bound(), inst.objective_lower_bound()).unwrap();
        prop_assert!(merit(&x, &z, &params, &inst, &op).unwrap() >= 0.0);
    }

    #[test]
    fn heterogeneity_bound_is_exact(seed in any::<u64>(), n in 2usize..10, h in 0.0..5.0f64) {
        let inst = generate_heterogeneous_quadratic(4, n, h, 0.0, seed).unwrap();
        let x = [0.3, -0.1, 0.7, 0.0];
        let full = inst.true_mean_gradient(&x).unwrap();
        let direct = (0..n)
            .map(|i| {
                let g = inst.true_gradient(i, &x).unwrap();
                norm(&g.iter().zip(&full).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max);
        let ProblemKind::HeterogeneousQuadratic { centers, mean_center } = inst.kind() else {
            panic!("quadratic instance")
        };
        let from_centers = centers
            .columns()
            .map(|c| dist_sq(c, mean_center).sqrt())
            .fold(0.0, f64::max);
        prop_assert_eq!(inst.heterogeneity_bound(), from_centers);
        prop_assert!((inst.heterogeneity_bound() - direct).abs() <= 1e-12 * (1.0 + direct));
    }
}

#[test]
fn merit_vanishes_at_the_optimum() {
    for seed in 0..20 {
        let inst = generate_heterogeneous_quadratic(4, 6, 2.0, 0.0, seed).unwrap();
        let ProblemKind::HeterogeneousQuadratic { mean_center, .. } = inst.kind() else {
            panic!("quadratic instance")
        };
        let grad = inst.true_mean_gradient(mean_center).unwrap();
        let params = MeritParams::default_for(1.0, 1.0, inst.objective_lower_bound()).unwrap();
        let w = merit(mean_center, &grad, &params, &inst, &ProxOperator::Zero).unwrap();
        assert!(w.abs() <= 1e-9, "merit {w} at the optimum");
    }
}

#[test]
fn varrho_grid() {
    for r in 1..=9 {
        let rho = r as f64 / 10.0;
        let first = varrho(rho, 1).unwrap();
        for m in 1..=10 {
            let v = varrho(rho, m).unwrap();
            assert!(v <= first + 1e-15, "rho={rho} m={m}");
            let p = rho.powi(2 * m as i32);
            assert_eq!(v <= 1.0, p <= 1.0 / 3.0, "rho={rho} m={m} varrho={v}");
        }
    }
}

#[test]
fn homogeneous_quadratic_has_zero_heterogeneity() {
    let inst = ProblemInstance::quadratic_from_centers(&vec![vec![1.0, 2.0]; 5], 0.0).unwrap();
    assert_eq!(inst.heterogeneity_bound(), 0.0);
}
