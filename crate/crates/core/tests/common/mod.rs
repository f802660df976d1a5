#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toepcov::linalg::HermitianMatrix;
use toepcov::projections::StructureSpec;
use toepcov::scenarios::toeplitz_from_frequencies;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hermitian matrix with entries uniform in [-scale, scale] (real and imaginary).
pub fn random_hermitian(m: usize, scale: f64, seed: u64) -> HermitianMatrix {
    let mut r = rng(seed);
    HermitianMatrix::from_upper_fn(m, |i, j| {
        let re = r.gen_range(-scale..scale);
        let im = if i == j { 0.0 } else { r.gen_range(-scale..scale) };
        Complex64::new(re, im)
    })
}

/// `A A^H / m + shift I` for a random `A`.
pub fn random_pd(m: usize, shift: f64, seed: u64) -> HermitianMatrix {
    let a = random_hermitian(m, 1.0, seed);
    HermitianMatrix::hermitian_part((&a * &a).as_ref()).scaled(1.0 / m as f64).shifted(shift)
}

/// Well-conditioned PD Toeplitz matrix from a few seeded frequencies.
pub fn random_pd_toeplitz(m: usize, seed: u64) -> HermitianMatrix {
    let mut r = rng(seed);
    let k = m.min(3);
    let freqs: Vec<f64> = (0..k).map(|i| (i as f64 * 2.1 + r.gen_range(0.0..1.5)) % 6.2).collect();
    let powers: Vec<f64> = (0..k).map(|_| r.gen_range(0.2..2.0)).collect();
    toeplitz_from_frequencies(m, &freqs, &powers).unwrap().shifted(r.gen_range(0.1..0.5))
}

/// Random unitary from the eigenvectors of a random Hermitian matrix.
pub fn random_unitary(m: usize, seed: u64) -> faer::Mat<Complex64> {
    toepcov::linalg::hermitian_evd(&random_hermitian(m, 1.0, seed)).unwrap().eigenvectors
}

/// Every structure kind that is valid for dimension `m`.
pub fn structures_for(m: usize) -> Vec<StructureSpec> {
    let mut out = vec![StructureSpec::Toeplitz, StructureSpec::BandedToeplitz { bandwidth: m / 2 }];
    for l in 2..m {
        if m % l == 0 {
            out.push(StructureSpec::Tbt {
                blocks: m / l,
                block_size: l,
            });
            break;
        }
    }
    out.push(StructureSpec::ToeplitzCondNum { kappa: 20.0 });
    if m >= 2 {
        out.push(StructureSpec::LowRankPlusScalar { rank: (m - 1).min(2) });
    }
    out
}
