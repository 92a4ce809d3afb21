//! Seeded random matrices and a low-discrepancy point sequence.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed).
pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, d, d).qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// `Q diag(λ) Qᵀ` with eigenvalues drawn log-uniformly from `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, d);
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| {
        (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
    }));
    let m = &q * lam * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// `Q₁ diag(σ) Q₂` with singular values in `[lo, hi]`: invertible with bounded condition.
pub fn random_invertible<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q1 = random_orthogonal(rng, d);
    let q2 = random_orthogonal(rng, d);
    let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| {
        lo + rng.gen::<f64>() * (hi - lo)
    }));
    q1 * sig * q2
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut inv = 1.0 / base as f64;
    let mut acc = 0.0;
    while i > 0 {
        acc += (i % b) as f64 * inv;
        i /= b;
        inv /= base as f64;
    }
    acc
}

/// Halton points in `[0,1)^dim`, shifted by a seeded Cranley–Patterson rotation.
pub fn halton(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton dimension {dim} unsupported");
    let mut r = rng(seed);
    let shift: Vec<f64> = (0..dim).map(|_| r.gen::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|k| {
                    let u = radical_inverse(i, PRIMES[k]) + shift[k];
                    u - u.floor()
                })
                .collect()
        })
        .collect()
}

/// Map unit-cube points into the box `[lower, upper]`.
pub fn into_box(points: &[Vec<f64>], lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|u| {
            u.iter()
                .zip(lower.iter().zip(upper))
                .map(|(&t, (&a, &b))| a + t * (b - a))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut r = rng(3);
        let q = random_orthogonal(&mut r, 5);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).amax() < 1e-13);
    }

    #[test]
    fn spd_spectrum_within_bounds() {
        let mut r = rng(4);
        let m = random_spd(&mut r, 4, 0.5, 3.0);
        let ev = m.symmetric_eigenvalues();
        assert!(ev.iter().all(|&l| (0.5 - 1e-12..=3.0 + 1e-12).contains(&l)));
    }

    #[test]
    fn halton_is_deterministic_and_in_cube() {
        let a = halton(3, 50, 9);
        assert_eq!(a, halton(3, 50, 9));
        assert_ne!(a, halton(3, 50, 10));
        assert!(a.iter().flatten().all(|&u| (0.0..1.0).contains(&u)));
        assert!((radical_inverse(3, 2) - 0.75).abs() < 1e-15);
    }
}
