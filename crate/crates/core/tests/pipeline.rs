//! End-to-end FCP runs on generated data.

use fcp_core::als::{cp_als, AlsOptions};
use fcp_core::fcp::{error_ordering_check, first_artifacts, fcp_low_rank, fcp_rank_one, FcpOptions};
use fcp_core::synth::{generate, sae, SynthSpec};
use fcp_core::Exec;

fn opts(rule: &str) -> FcpOptions {
    FcpOptions::new(rule.parse().unwrap()).with_exec(Exec::Sequential)
}

#[test]
fn exact_input_lossless_split_matches_stage2_residual() {
    let d = generate(&SynthSpec::new(vec![6, 5, 4, 5, 4], 3, vec![0.3, 0.5, 0.5, 0.6, 0.6], f64::INFINITY, 9)).unwrap();
    let mut o = opts("1,(2,3),(4,5)");
    o.tau = 1.0;
    o.j_max = usize::MAX;
    o.keep_artifacts = true;
    let (k, trace) = fcp_low_rank(&d.noisy, 3, &o).unwrap();
    let ch = error_ordering_check(&d.noisy, first_artifacts(&trace).unwrap()).unwrap();
    let scale = d.noisy.norm_sq();
    assert!((ch.split_full - ch.unfolded).abs() <= 1e-8 * scale, "{ch:?}");
    let s = sae(&d.truth, &k).unwrap();
    assert!(s.msae_db > 60.0, "{}", s.msae_db);
}

#[test]
fn rank_one_components_make_both_paths_agree() {
    // noiseless, so every reshaped component is exactly rank one
    let d = generate(&SynthSpec::new(vec![5, 4, 4, 3, 3], 2, vec![0.2, 0.4, 0.4, 0.4, 0.4], f64::INFINITY, 4)).unwrap();
    let (a, ta) = fcp_low_rank(&d.noisy, 2, &opts("1,(2,3),(4,5)")).unwrap();
    let (b, _) = fcp_rank_one(&d.noisy, 2, &opts("1,(2,3),(4,5)")).unwrap();
    assert!(ta.runs.iter().all(|r| !r.structured));
    let diff = a.to_dense().distance(&b.to_dense()).unwrap();
    assert!(diff <= 1e-10 * d.noisy.norm(), "{diff}");
}

#[test]
fn refinement_does_not_raise_the_error() {
    for seed in 0..3 {
        let d = generate(&SynthSpec::new(vec![6; 4], 3, vec![0.2, 0.8, 0.8, 0.5], 5.0, seed)).unwrap();
        let mut o = opts("1,(2,3),4");
        o.refine = true;
        let (k, trace) = fcp_low_rank(&d.noisy, 3, &o).unwrap();
        assert_eq!(k.shape(), vec![6; 4]);
        assert!(trace.fit.relative_error <= trace.unrefined_error * (1.0 + 1e-12), "{trace:?}");
    }
}

#[test]
fn fcp_is_close_to_dense_als_on_a_well_posed_problem() {
    let d = generate(&SynthSpec::new(vec![8; 5], 4, vec![0.1, 0.6, 0.6, 0.6, 0.6], 20.0, 3)).unwrap();
    let (k, trace) = fcp_low_rank(&d.noisy, 4, &opts("1,(2,3),(4,5)")).unwrap();
    let (a, fit) = cp_als(&d.noisy, 4, &AlsOptions { exec: Exec::Sequential, ..AlsOptions::default() }).unwrap();
    assert!(trace.fit.relative_error <= fit.relative_error * 1.01);
    let gap = sae(&d.truth, &a).unwrap().msae_db - sae(&d.truth, &k).unwrap().msae_db;
    assert!(gap < 1.0, "{gap}");
}
