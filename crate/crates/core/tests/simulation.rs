use latent_mbl::simulate::{
    latent_design, shared_curvature_design, shared_curvature_truth, simulate_general, simulate_shared_curvature,
    SubjectGroup, TimeGrid,
};
use latent_mbl::{MblDataset, ModelSpec, ParamVector};

#[test]
fn shared_curvature_layout() {
    let ds = simulate_shared_curvature(1);
    assert_eq!(ds.n_subjects(), 200);
    assert_eq!(ds.n_obs(), 50 * (5 + 6 + 7 + 8));
    assert_eq!(ds.n_responses, 3);
    for (i, s) in ds.subjects.iter().enumerate() {
        assert_eq!(s.times.len(), 5 + i / 50);
        assert_eq!(s.duration, 1.0);
        assert_eq!(*s.times.last().unwrap(), 1.0);
    }
}

#[test]
fn shared_curvature_frequencies_match_the_generating_curves() {
    let truth = shared_curvature_truth();
    let mut events = [0.0f64; 3];
    let mut expected = [0.0f64; 3];
    for seed in 0..40 {
        let ds = simulate_shared_curvature(seed);
        for (_, t, y) in ds.observations() {
            for k in 0..3 {
                events[k] += y[k] as f64;
                expected[k] += truth.probability(t, k);
            }
        }
    }
    let n = 40.0 * 1300.0;
    for k in 0..3 {
        // binomial standard error of the pooled rate is below 0.0025
        assert!(((events[k] - expected[k]) / n).abs() < 0.01, "response {k}");
    }
}

#[test]
fn seeds_reproduce_and_differ() {
    assert_eq!(simulate_shared_curvature(9), simulate_shared_curvature(9));
    assert_ne!(simulate_shared_curvature(9), simulate_shared_curvature(10));
}

#[test]
fn subject_streams_are_independent_of_design_size() {
    let spec = ModelSpec::new(0, 0, vec![1]).unwrap();
    let params = ParamVector::from_flat(&spec, &[0.4, 0.6, -0.5, 2.0]).unwrap();
    let small = vec![SubjectGroup { subjects: 10, observations: 4, duration: 3.0 }];
    let mut large = small.clone();
    large.push(SubjectGroup { subjects: 25, observations: 7, duration: 5.0 });
    let a = simulate_general(&latent_design(small, &spec, &params, 77)).unwrap();
    let b = simulate_general(&latent_design(large, &spec, &params, 77)).unwrap();
    assert_eq!(a.subjects[..], b.subjects[..10]);
}

#[test]
fn interior_grid_avoids_endpoints() {
    let ds = simulate_general(&shared_curvature_design(2, TimeGrid::Interior)).unwrap();
    assert!(ds.observations().all(|(_, t, _)| t > 0.0 && t < 1.0));
}

#[test]
fn simulated_data_survive_a_csv_roundtrip() {
    let ds = simulate_shared_curvature(3);
    assert_eq!(MblDataset::parse(&ds.to_csv_string()).unwrap(), ds);
}
