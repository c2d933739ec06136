use lme_core::rgchain::{run_flow, RgParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rotations_are_exact(log2n in 6u32..10, b in 0.05f64..1.0, seed in 0u64..1000) {
        let n = 1usize << log2n;
        let mut p = RgParams::new(n, b);
        p.n_max = n / 4;
        p.seed = seed;
        let r = run_flow(&p).unwrap();
        prop_assert!(r.max_norm_error <= 1e-12);
        prop_assert!(r.max_gap_error <= 1e-12);
        prop_assert!(r.max_disjoint_ipr_error <= 1e-12);
        prop_assert!(r.max_orthogonality_error <= 1e-12);
        for s in &r.scales {
            prop_assert!(s.selected <= s.resonant && s.resonant <= s.pairs);
        }
    }
}

#[test]
fn overlap_fraction_falls_with_coupling() {
    let ov: Vec<f64> = [1.0, 0.3, 0.1]
        .iter()
        .map(|&b| {
            let mut p = RgParams::new(1024, b);
            p.n_max = 64;
            let r = run_flow(&p).unwrap();
            r.scales.iter().map(|s| s.overlap_fraction).sum::<f64>() / r.scales.len() as f64
        })
        .collect();
    assert!(ov.windows(2).all(|w| w[1] < w[0]), "{ov:?}");
}

#[test]
fn replicas_are_thread_independent() {
    let mut p = RgParams::new(256, 0.3);
    p.n_max = 32;
    p.replicas = 3;
    let a = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_flow(&p).unwrap());
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_flow(&p).unwrap());
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(x.mean_ln_p, y.mean_ln_p);
    }
    assert_eq!(a.rotations, b.rotations);
}
