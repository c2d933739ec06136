use lme_core::analytics::p_star;
use lme_core::lme::{run, LmeParams};

fn params(q: f64, b: f64, pool: usize) -> LmeParams {
    let mut p = LmeParams::new(q, b);
    p.pool_size = pool;
    p
}

#[test]
fn mean_preserved_at_every_checkpoint() {
    let mut p = params(0.75, 0.5, 20_000);
    p.n_max = 2000;
    let tr = run::<f64>(&p).unwrap();
    for c in &tr.checkpoints {
        assert!(
            (c.mean.value - 1.0).abs() <= 5.0 * c.mean.se + 1e-12,
            "n={} mean {:?}",
            c.n,
            c.mean
        );
    }
}

#[test]
fn limit_is_b_independent() {
    let a = run::<f64>(&params(0.75, 0.25, 20_000)).unwrap();
    let mut pb = params(0.75, 1.0, 20_000);
    pb.seed = 2;
    let b = run::<f64>(&pb).unwrap();
    let (x, y) = (&a.last().moments[0], &b.last().moments[0]);
    let joint = (x.se * x.se + y.se * y.se).sqrt();
    assert!((x.value - y.value).abs() <= 3.0 * joint, "{x:?} vs {y:?}");
}

#[test]
fn moments_beyond_p_star_diverge() {
    let q = 1.5;
    let pw = 1.5 * p_star(q).unwrap().finite().unwrap();
    let mut p = params(q, 0.5, 20_000);
    p.track_powers = vec![pw];
    p.checkpoints = Some(vec![100, 10_000]);
    let tr = run::<f64>(&p).unwrap();
    let (lo, hi) = (tr.checkpoints[0].moments[0].value, tr.last().moments[0].value);
    assert!(hi >= 2.0 * lo, "p={pw}: {lo} -> {hi}");
}

#[test]
fn identical_inputs_identical_trajectory() {
    let mut p = params(0.9, 0.5, 5_000);
    p.n_max = 300;
    let a = run::<f64>(&p).unwrap();
    let b = run::<f64>(&p).unwrap();
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(x.log_z.to_bits(), y.log_z.to_bits());
        for (u, v) in x.moments.iter().zip(&y.moments) {
            assert_eq!(u.value.to_bits(), v.value.to_bits());
            assert_eq!(u.se.to_bits(), v.se.to_bits());
        }
    }
}
