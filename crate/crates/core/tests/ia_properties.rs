use specgraph::eval::{simulate_csd, tuned_config};
use specgraph::ia::{ia_learn, IAConfig, IAProblem};
use specgraph::spectral::estimate_csd_replicates;
use specgraph::synth::{generate_replicates, reference_ia_partition, reference_structure, Band, BandStructure, SemEdge};
use specgraph::FrequencyPartition;

fn small_instance() -> specgraph::CsdTensor {
    let s = BandStructure {
        n: 3,
        bands: vec![Band { start_k: 0, end_k: 32, edges: vec![SemEdge { from: 0, to: 1, coef: 0.9, lag: 1 }] }],
    };
    let panels = generate_replicates(&s, 128, 5, 2).unwrap();
    estimate_csd_replicates(&panels, 3).unwrap()
}

#[test]
fn vanishing_trust_radius_pins_the_csd() {
    let csd = small_instance();
    let part = FrequencyPartition::equal(2, csd.m()).unwrap();
    let eta = 1e-12;
    let cfg = IAConfig { eta, lambda: 0.2, ..Default::default() };
    let problem = IAProblem::new(&csd, &part, &cfg).unwrap();
    let mut state = problem.init().unwrap();
    for _ in 0..40 {
        state = problem.step(&state).unwrap().0;
        for (k, v) in state.vars.iter().enumerate() {
            let d = (&v.f - problem.ftilde(k)).norm();
            assert!(d <= eta.sqrt() + 1e-8, "t = {} k = {k}: {d}", state.t);
        }
    }
}

#[test]
fn ia_on_a_small_instance_returns_hermitian_pd_slices() {
    let csd = small_instance();
    let part = FrequencyPartition::equal(2, csd.m()).unwrap();
    let out = ia_learn(&csd, &part, &IAConfig { lambda: 0.2, max_iters: 300, ..Default::default() }).unwrap();
    assert_eq!(out.trace.len(), out.iterations);
    for s in out.inverse.slices() {
        assert!((s - s.adjoint()).norm() < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(s.clone()).eigenvalues;
        assert!(eig.min() > 0.0);
    }
}

#[test]
fn objective_at_the_cap_is_below_its_early_value() {
    let csd = simulate_csd(&reference_structure(), 1024, 99, 5, 16).unwrap();
    let cfg = tuned_config(true, 5);
    assert_eq!(cfg.max_iters, 2000);
    let problem = IAProblem::new(&csd, &reference_ia_partition(), &cfg).unwrap();
    let mut state = problem.init().unwrap();
    let mut early = None;
    while state.t < cfg.max_iters {
        state = problem.step(&state).unwrap().0;
        if state.t == 10 {
            early = Some(problem.objective(&state));
        }
    }
    let early = early.unwrap();
    let late = problem.objective(&state);
    assert!(late < early, "objective {late} at t = {} vs {early} at t = 10", state.t);
}
