use lme_core::brw::{explicit_tree_cascade, run_brw, BrwMode, BrwParams, BrwPool, BETA_C};
use lme_core::rng::derive_stream;
use lme_core::stats::mean_se;

#[test]
fn martingale_mean_below_criticality() {
    for beta in [0.0, 0.5 * BETA_C] {
        let p = BrwParams {
            beta,
            depth: 40,
            replicas: 200_000,
            seed: 5,
        };
        for r in run_brw(&p, BrwMode::Cascade).unwrap() {
            assert!(
                (r.mean.value - 1.0).abs() <= 5.0 * r.mean.se + 1e-12,
                "beta={beta} n={} {:?}",
                r.n,
                r.mean
            );
        }
    }
}

#[test]
fn frozen_median_decays() {
    let p = BrwParams {
        beta: 1.2 * BETA_C,
        depth: 40,
        replicas: 100_000,
        seed: 6,
    };
    let rec = run_brw(&p, BrwMode::Cascade).unwrap();
    let med: Vec<f64> = [10, 20, 30, 40].iter().map(|&n| rec[n].median).collect();
    assert!(med.windows(2).all(|w| w[1] < w[0]), "{med:?}");
}

#[test]
fn pool_matches_explicit_trees() {
    let beta = 0.5 * BETA_C;
    let mut pool = BrwPool::new(BrwMode::Cascade, 200_000);
    for _ in 0..10 {
        pool.step(beta, 7);
    }
    let m2 = pool.estimate(|x| x * x);
    let tail = pool.estimate(|x| if x > 2.0 { 1.0 } else { 0.0 });
    let mut rng = derive_stream(8, &[]);
    let trees: Vec<f64> = (0..4000)
        .map(|_| explicit_tree_cascade(beta, 10, &mut rng).unwrap())
        .collect();
    let (t_m2, t_m2_se) = mean_se(&trees.iter().map(|x| x * x).collect::<Vec<_>>());
    let (t_tail, t_tail_se) = mean_se(
        &trees
            .iter()
            .map(|&x| if x > 2.0 { 1.0 } else { 0.0 })
            .collect::<Vec<_>>(),
    );
    let z2 = (m2.value - t_m2) / (m2.se.powi(2) + t_m2_se.powi(2)).sqrt();
    let zt = (tail.value - t_tail) / (tail.se.powi(2) + t_tail_se.powi(2)).sqrt();
    assert!(z2.abs() <= 3.0 && zt.abs() <= 3.0, "z(M²)={z2} z(tail)={zt}");
}
