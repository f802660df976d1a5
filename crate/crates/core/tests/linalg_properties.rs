mod common;

use common::{random_hermitian, random_pd, random_unitary};
use proptest::prelude::*;
use toepcov::linalg::{format_matrix, parse_matrix};
use toepcov::linalg::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_are_unitarily_invariant(m in 1usize..9, seed in any::<u64>()) {
        let a = random_hermitian(m, 2.0, seed);
        let u = random_unitary(m, seed ^ 0xfeed);
        let b = HermitianMatrix::new(&(&u * a.as_ref()) * u.adjoint()).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            prop_assert!((x - y).abs() <= 1e-9 * a.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn inverse_and_root_reconstruct(m in 1usize..9, seed in any::<u64>()) {
        let a = random_pd(m, 0.1, seed);
        let inv = pd_inverse(&a).unwrap();
        prop_assert!(inv.is_hermitian(1e-10));
        let prod = &a * &inv;
        let eye = identity_mat(m);
        prop_assert!((&prod - &eye).norm_l2() <= 1e-8 * (m as f64).sqrt());
        prop_assert!(pd_inverse(&inv).unwrap().distance(&a) <= 1e-7 * a.frobenius_norm());
        let root = psd_sqrt(&a).unwrap();
        let sq = HermitianMatrix::hermitian_part((&root * &root).as_ref());
        prop_assert!(sq.distance(&a) <= 1e-9 * a.frobenius_norm());
        prop_assert!(root.min_eigenvalue() >= 0.0);
        let f = cholesky_or_sqrt_factor(&a).unwrap();
        let ffh = HermitianMatrix::hermitian_part((&f * f.adjoint()).as_ref());
        prop_assert!(ffh.distance(&a) <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn text_format_round_trips(m in 1usize..7, seed in any::<u64>()) {
        let a = random_hermitian(m, 1e3, seed);
        let back = parse_matrix(&format_matrix(a.as_ref())).unwrap();
        prop_assert!(back.distance(&a) <= 1e-15 * a.frobenius_norm());
    }
}

#[test]
fn rank_one_factor_reconstructs() {
    let v: Vec<_> = (0..4).map(|k| num_complex::Complex64::new(k as f64, 1.0 - k as f64)).collect();
    let a = HermitianMatrix::outer(&v);
    let f = cholesky_or_sqrt_factor(&a).unwrap();
    let ffh = HermitianMatrix::hermitian_part((&f * f.adjoint()).as_ref());
    assert!(ffh.distance(&a) < 1e-10 * a.frobenius_norm());
}
