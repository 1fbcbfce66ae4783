use nalgebra::DVector;
use proptest::prelude::*;

use pdsim::engine::{Simulation, RunOptions};
use pdsim::problem::{reference_solution, DEFAULT_ORACLE_ITERS};
use pdsim::{run, CompressorSpec, Feedback, Graph, HyperParams, QcqpInstance, QcqpParams, StepSize};

fn instance(sigma: f64) -> QcqpInstance {
    let graph = Graph::erdos_renyi(6, 0.6, 4).unwrap();
    QcqpInstance::generate(&graph, &QcqpParams { d: 4, noise_sigma: sigma, ..QcqpParams::paper(4) }).unwrap()
}

fn hyper(feedback: Feedback, horizon: usize) -> HyperParams {
    HyperParams { step: StepSize::Fixed(1e-2), delta: 10.0, horizon, zeta: 1e-3, feedback }
}

fn relabel(inst: &QcqpInstance, perm: &[usize]) -> QcqpInstance {
    let n = inst.node_count();
    let mut inverse = vec![0; n];
    for (old, &new) in perm.iter().enumerate() {
        inverse[new] = old;
    }
    let edges: Vec<(usize, usize)> = inst.graph().edges().iter().map(|&(i, j)| (perm[i], perm[j])).collect();
    let graph = Graph::from_edges(n, edges).unwrap();
    let offsets: Vec<f64> =
        graph.edges().iter().map(|&(i, j)| inst.offset(inverse[i], inverse[j]).unwrap()).collect();
    let a = (0..n).map(|i| inst.quadratic(inverse[i]).clone()).collect();
    let b = (0..n).map(|i| inst.linear(inverse[i]).clone()).collect();
    QcqpInstance::from_edge_data(graph, a, b, &offsets, inst.radius(), inst.interior_radius(), inst.noise_sigma())
        .unwrap()
}

#[test]
fn relabeling_nodes_permutes_the_trajectory() {
    let inst = instance(0.0);
    let perm = [3, 0, 5, 1, 4, 2];
    let other = relabel(&inst, &perm);
    let start: Vec<DVector<f64>> = (0..6).map(|i| DVector::from_element(4, 0.1 * i as f64 - 0.2)).collect();
    let mut moved = vec![DVector::zeros(4); 6];
    for (old, &new) in perm.iter().enumerate() {
        moved[new] = start[old].clone();
    }
    for spec in [CompressorSpec::Identity, CompressorSpec::TopK { k: 2 }, CompressorSpec::SignScaled] {
        let mut a = Simulation::with_initial(&inst, spec.clone(), hyper(Feedback::Sample, 300), 1, Some(&start)).unwrap();
        let mut b = Simulation::with_initial(&other, spec.clone(), hyper(Feedback::Sample, 300), 9, Some(&moved)).unwrap();
        for _ in 0..300 {
            a.advance().unwrap();
            b.advance().unwrap();
        }
        assert_eq!(a.total_bits(), b.total_bits());
        let (xa, xb) = (a.running_averages(), b.running_averages());
        for (old, &new) in perm.iter().enumerate() {
            assert!((&xa[old] - &xb[new]).norm() <= 1e-9 * (1.0 + xa[old].norm()), "{spec} node {old}");
        }
    }
}

#[test]
fn run_accepts_explicit_start() {
    let inst = instance(0.0);
    let reference = reference_solution(&inst, DEFAULT_ORACLE_ITERS).unwrap();
    let start = vec![DVector::zeros(4); 6];
    let opts = RunOptions { initial: Some(start), record_every: 10, ..RunOptions::default() };
    let a = run(&inst, &CompressorSpec::Identity, &hyper(Feedback::Sample, 40), &reference, 1, &opts).unwrap();
    let b = run(&inst, &CompressorSpec::Identity, &hyper(Feedback::Sample, 40), &reference, 2, &opts).unwrap();
    // noise-free sample feedback from the same start does not depend on the seed
    assert_eq!(a.to_csv(), b.to_csv());
}

fn spec_strategy() -> impl Strategy<Value = CompressorSpec> {
    prop_oneof![
        Just(CompressorSpec::Identity),
        (1usize..=4).prop_map(|k| CompressorSpec::TopK { k }),
        Just(CompressorSpec::SignScaled),
        (1usize..=4).prop_map(|k| CompressorSpec::SignTopK { k }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn update_order_does_not_matter(
        spec in spec_strategy(),
        bandit in any::<bool>(),
        seed in 0u64..1000,
        order in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let inst = instance(0.2);
        let fb = if bandit { Feedback::Bandit } else { Feedback::Sample };
        let mut a = Simulation::new(&inst, spec.clone(), hyper(fb, 30), seed).unwrap();
        let mut b = Simulation::new(&inst, spec, hyper(fb, 30), seed).unwrap();
        for _ in 0..30 {
            a.exchange_round().unwrap();
            b.exchange_round().unwrap();
            a.step().unwrap();
            b.step_in_order(&order).unwrap();
        }
        prop_assert_eq!(a.lambda(), b.lambda());
        for (x, y) in a.nodes().iter().zip(b.nodes()) {
            prop_assert_eq!(&x.raw, &y.raw);
        }
    }

    #[test]
    fn same_seed_same_run(spec in spec_strategy(), bandit in any::<bool>(), seed in 0u64..1000) {
        let inst = instance(0.2);
        let fb = if bandit { Feedback::Bandit } else { Feedback::Sample };
        let mut a = Simulation::new(&inst, spec.clone(), hyper(fb, 25), seed).unwrap();
        let mut b = Simulation::new(&inst, spec, hyper(fb, 25), seed).unwrap();
        for _ in 0..25 {
            prop_assert_eq!(a.advance().unwrap(), b.advance().unwrap());
        }
        prop_assert_eq!(a.running_averages(), b.running_averages());
        prop_assert!(a.invariants().all_held());
    }
}
