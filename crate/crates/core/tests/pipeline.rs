use flowlab::expansiveness::{
    circle_samples, expansiveness_scan, orbit_samples, replay_witness, ScanConfig, ScanMode, Verdict, Witness,
};
use flowlab::field::estimate_lipschitz;
use flowlab::hyperbolicity::{estimate_normal_splitting, rebalance_sequence, SplittingOptions};
use flowlab::poincare::SectionOptions;
use flowlab::sequence::{assemble_sequence_system, random_sequence, solve_fixed_point, AssemblyOptions};
use flowlab::{flow_point, Domain, OrbitSegment, VectorFieldSpec};
use nalgebra::DVector;

fn assembly_options(epsilon: f64, lipschitz: f64, tol: f64) -> AssemblyOptions {
    AssemblyOptions {
        epsilon,
        section: SectionOptions::new(lipschitz, tol),
        lipschitz_pairs: 200,
        derivative_samples: 20,
        seed: 5,
    }
}

#[test]
fn linear_model_assembles_with_zero_perturbation() {
    let field = VectorFieldSpec::diagonal(&[-3.0, -1.0, 2.0], 1e8);
    let x = DVector::from_vec(vec![0.0, 0.0, 1e-3]);
    let block_time = 1.0;
    let orbit = OrbitSegment::uniform(&field, &x, block_time, 4, 1e-12, true).unwrap();
    let splitting = estimate_normal_splitting(&field, &orbit, &SplittingOptions::new(1, 1e-12)).unwrap();
    let norms = splitting.block_norms(&field).unwrap();
    let eta = 0.5;
    let rebalance = rebalance_sequence(&norms, eta, -2, None, None).unwrap();
    let lipschitz = 3.0;
    let (system, report) =
        assemble_sequence_system(&field, &splitting, &rebalance, &assembly_options(5e-6, lipschitz, 1e-12)).unwrap();
    assert!(report.feasible, "{report:?}");
    assert!(report.off_diagonal < 1e-8);
    assert!(report.measured_xi < 1e-3, "{report:?}");
    for (k, blk) in system.blocks.iter().enumerate().take(system.len() - 1) {
        let c = rebalance.c[k].1;
        assert!((blk.a[(0, 0)].abs() / (c * (-3.0 * block_time).exp()) - 1.0).abs() < 1e-6);
        assert!((blk.d[(0, 0)].abs() / (c * (-block_time).exp()) - 1.0).abs() < 1e-6);
    }
    let start = random_sequence(&system, 1e-9, 3);
    let rep = solve_fixed_point(&system, &start, 200, 1e-20).unwrap();
    assert!(rep.converged && rep.final_norm < 1e-15);
}

#[test]
fn lorenz_pipeline_solves_to_zero() {
    let field = VectorFieldSpec::lorenz_standard();
    let region = Domain::new(vec![-20.0, -25.0, 5.0], vec![20.0, 25.0, 45.0]).unwrap();
    let lipschitz = estimate_lipschitz(&field, &region, 4096, 11).unwrap();
    let start = flow_point(&field, &DVector::from_vec(vec![1.0, 1.0, 20.0]), 15.0, 1e-10).unwrap();
    let block_time = 0.1;
    let orbit = OrbitSegment::uniform(&field, &start, block_time, 8, 1e-12, true).unwrap();
    let splitting = estimate_normal_splitting(&field, &orbit, &SplittingOptions::new(1, 1e-12)).unwrap();
    assert!(splitting.gap_ratio > 1.05);
    let norms = splitting.block_norms(&field).unwrap();
    let rebalance = rebalance_sequence(&norms, 0.9, -4, None, None).unwrap();
    let r1 = flowlab::poincare::r1_for(lipschitz, block_time);
    let mut options = assembly_options(r1 / 4.0, lipschitz, 1e-12);
    // finite differences at 1e-5 |X| would dwarf a bump this small
    options.section = options.section.variational();
    let (system, report) = assemble_sequence_system(&field, &splitting, &rebalance, &options).unwrap();
    assert!(report.feasible, "{report:?}");
    let v0 = random_sequence(&system, 1e-3 * r1, 4);
    let rep = solve_fixed_point(&system, &v0, 500, 1e-14).unwrap();
    assert!(rep.converged && rep.final_norm <= 1e-10, "{:?}", (rep.iterations, rep.final_norm));
}

fn rotation_config() -> ScanConfig {
    ScanConfig {
        samples: circle_samples(1.0, 4),
        horizon: 7.0,
        two_sided: false,
        epsilons: vec![0.05, 0.01],
        deltas: vec![0.2],
        delta_ratios: vec![1.0 / 3.0],
        lattice: 30,
        grid: 40,
        budget: 16,
        seed: 2,
        tol: 1e-10,
        lipschitz: 1.05,
    }
}

#[test]
fn komuro_witnesses_are_bowen_walters_witnesses() {
    let field = VectorFieldSpec::rotation(3.0);
    let rep = expansiveness_scan(&field, &rotation_config(), ScanMode::Komuro).unwrap();
    assert!(rep.violations().count() > 0);
    for w in rep.violations() {
        let as_bw = Witness {
            mode: ScanMode::BowenWalters,
            ..w.clone()
        };
        assert!(replay_witness(&as_bw).unwrap().reproduced);
    }
}

#[test]
fn larger_budget_keeps_violations() {
    let field = VectorFieldSpec::rotation(3.0);
    let mut config = rotation_config();
    let mut previous: Vec<Verdict> = Vec::new();
    for budget in [1, 4, 16] {
        config.budget = budget;
        let rep = expansiveness_scan(&field, &config, ScanMode::Rescaled).unwrap();
        let verdicts: Vec<Verdict> = rep.entries.iter().map(|e| e.verdict).collect();
        for (old, new) in previous.iter().zip(&verdicts) {
            if *old == Verdict::Violation {
                assert_eq!(*new, Verdict::Violation);
            }
        }
        for w in rep.violations() {
            assert!(replay_witness(w).unwrap().reproduced);
        }
        previous = verdicts;
    }
}

#[test]
fn orbit_shifts_never_violate() {
    let field = VectorFieldSpec::lorenz_standard();
    let region = Domain::new(vec![-20.0, -25.0, 5.0], vec![20.0, 25.0, 45.0]).unwrap();
    let lipschitz = estimate_lipschitz(&field, &region, 4096, 11).unwrap();
    let samples = orbit_samples(&field, &DVector::from_vec(vec![1.0, 1.0, 20.0]), 10.0, 3, 0.9, 1e-10).unwrap();
    let eps = 0.01;
    for x in &samples {
        for s in [-eps, -0.3 * eps, 0.5 * eps, eps] {
            let y = flow_point(&field, x, s, 1e-12).unwrap();
            let config = ScanConfig {
                samples: vec![x.clone(), y],
                horizon: 10.0,
                two_sided: false,
                epsilons: vec![eps],
                deltas: vec![eps / 3.0, eps],
                delta_ratios: vec![],
                lattice: 30,
                grid: 40,
                budget: 8,
                seed: 3,
                tol: 1e-11,
                lipschitz,
            };
            for mode in ScanMode::ALL {
                let rep = expansiveness_scan(&field, &config, mode).unwrap();
                assert!(rep.violations().next().is_none(), "{mode:?} s = {s} {:?}", rep.violations().next().map(|w| (&w.failure, w.shadow_sup, w.delta)));
            }
        }
    }
}

