//! Deterministic sample sets and seeded random generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

/// Generator for sample `index` of a run seeded with `seed`. Each sample
/// gets an independent stream so ensembles can run in parallel and still
/// be reproducible.
pub fn sample_rng(seed: u64, index: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Van der Corput radical inverse in base 2.
pub fn van_der_corput(mut k: u64) -> f64 {
    let mut q = 0.0;
    let mut bk = 0.5;
    while k > 0 {
        if k & 1 == 1 {
            q += bk;
        }
        k >>= 1;
        bk *= 0.5;
    }
    q
}

/// Smallest sampled abscissa of the geometric cluster toward 0.
pub const GEOMETRIC_FLOOR: f64 = 1e-10;
/// Boundary between the geometric and uniform sample families.
pub const GEOMETRIC_CEIL: f64 = 0.1;

/// Hypothesis sample set on (0, 1]: half geometric on [1e-10, 0.1], half
/// uniform on [0.1, 1], both drawn from a low-discrepancy sequence so that
/// sets for increasing `n` are nested. `x = 0.1` and `x = 1` are always
/// included. Returned sorted ascending.
pub fn hypothesis_samples(n: usize) -> Vec<f64> {
    let n_geo = n / 2;
    let n_uni = n - n_geo;
    let lg_lo = GEOMETRIC_FLOOR.log10();
    let lg_hi = GEOMETRIC_CEIL.log10();
    let mut xs = vec![GEOMETRIC_CEIL, 1.0];
    for k in 0..n_geo as u64 {
        let u = van_der_corput(k + 1);
        xs.push(10f64.powf(lg_lo + (lg_hi - lg_lo) * u));
    }
    for k in 0..n_uni as u64 {
        let u = van_der_corput(k + 1);
        xs.push(GEOMETRIC_CEIL + (1.0 - GEOMETRIC_CEIL) * u);
    }
    xs.push(GEOMETRIC_FLOOR);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    xs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_nested() {
        let small = hypothesis_samples(20);
        let large = hypothesis_samples(64);
        for x in &small {
            assert!(large.iter().any(|y| y == x), "{x} missing");
        }
    }

    #[test]
    fn samples_cover_range() {
        let xs = hypothesis_samples(32);
        assert_eq!(*xs.first().unwrap(), GEOMETRIC_FLOOR);
        assert_eq!(*xs.last().unwrap(), 1.0);
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rng_streams_reproducible() {
        use rand::Rng;
        let a: f64 = sample_rng(7, 3).random();
        let b: f64 = sample_rng(7, 3).random();
        let c: f64 = sample_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
