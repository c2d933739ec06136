use lme_core::linalg::symmetric_eig;
use lme_core::prbm::{build_matrix, estimate_dq, ipr};
use lme_core::rng::{derive_stream, std_normal};
use proptest::prelude::*;

proptest! {
    #[test]
    fn ipr_power_mean_bounds(seed in 0u64..10_000, n in 2usize..200, q in 0.55f64..4.0) {
        let mut rng = derive_stream(seed, &[n as u64]);
        let v: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        let p = ipr(&v, q);
        if q > 1.0 {
            prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
        } else {
            prop_assert!(p >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn eigen_contracts(seed in 0u64..1000, n in 8usize..96, b in 0.05f64..2.0) {
        let mut rng = derive_stream(seed, &[]);
        let h = build_matrix(n, b, &mut rng).unwrap();
        let e = symmetric_eig(&h).unwrap();
        prop_assert!(e.reconstruction_error(&h) / (h.max_abs() * n as f64) <= 1e-9);
        prop_assert!(e.orthonormality_error() <= 1e-10);
    }
}

#[test]
fn d_of_one_is_zero() {
    let (fits, _) = estimate_dq(0.1, &[64, 96, 128], 4, 3, &[1.0, 2.0]).unwrap();
    assert_eq!(fits[0].d, 0.0);
    assert!(fits[1].d > 0.0 && fits[1].d < 1.0);
}
