use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Real;

/// Mean squared error over masked-in entries; masked-out entries are
/// excluded from both sum and count. Zero when nothing is masked in.
pub fn loss_pretrain<T: Real>(pred: &[Vec<T>], targets: &[Vec<T>], mask: &[bool]) -> T {
    let mut sum = T::zero();
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(targets) {
        for ((&a, &b), &on) in p.iter().zip(t).zip(mask) {
            if on {
                sum += (a - b) * (a - b);
                count += 1;
            }
        }
    }
    if count == 0 {
        T::zero()
    } else {
        sum / T::lit(count as f64)
    }
}

/// One draw from `N(μ, σ²)`, clamped at zero from below. Exactly `μ`
/// (not clamped) when `σ = 0`.
pub fn draw_target<T: Real, R: Rng + ?Sized>(mean: T, sigma: T, rng: &mut R) -> T {
    if sigma <= T::zero() {
        return mean;
    }
    let n = Normal::new(mean.as_f64(), sigma.as_f64()).expect("finite positive sigma");
    T::lit(n.sample(rng).max(0.0))
}

/// [`loss_pretrain`] against targets drawn afresh from `N(mean, sigma²)`.
pub fn loss_finetune<T: Real, R: Rng + ?Sized>(
    pred: &[Vec<T>],
    mean: &[Vec<T>],
    sigma: &[Vec<T>],
    mask: &[bool],
    rng: &mut R,
) -> T {
    let drawn: Vec<Vec<T>> = mean
        .iter()
        .zip(sigma)
        .map(|(m, s)| {
            m.iter()
                .zip(s)
                .zip(mask)
                .map(|((&mu, &sd), &on)| if on { draw_target(mu, sd, rng) } else { mu })
                .collect()
        })
        .collect();
    loss_pretrain(pred, &drawn, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pretrain_definition() {
        assert_eq!(loss_pretrain(&[vec![3.0]], &[vec![1.0]], &[true]), 4.0);
        let p = vec![vec![1.0, 2.0, 9.0], vec![0.5, 0.5, 9.0]];
        let t = vec![vec![1.0, 2.0, 0.0], vec![0.5, 0.5, 0.0]];
        assert_eq!(loss_pretrain(&p, &t, &[true, true, false]), 0.0);
        let off = vec![vec![2.0, 2.0, 0.0], vec![0.5, 1.5, 0.0]];
        assert_eq!(loss_pretrain(&off, &t, &[true, true, false]), 0.5);
    }

    #[test]
    fn degenerate_gaussian_is_plain_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = vec![vec![0.2, 0.4]];
        let m = vec![vec![0.1, 0.7]];
        let s = vec![vec![0.0, 0.0]];
        assert_eq!(
            loss_finetune(&p, &m, &s, &[true, true], &mut rng),
            loss_pretrain(&p, &m, &[true, true])
        );
        assert_eq!(loss_finetune(&m, &m, &s, &[true, true], &mut rng), 0.0);
    }

    #[test]
    fn same_seed_same_draws() {
        let p = vec![vec![0.2, 0.4]];
        let m = vec![vec![0.3, 0.5]];
        let s = vec![vec![0.05, 0.1]];
        let a = loss_finetune(&p, &m, &s, &[true, true], &mut ChaCha8Rng::seed_from_u64(3));
        let b = loss_finetune(&p, &m, &s, &[true, true], &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn draws_are_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(draw_target(0.0, 1.0, &mut rng) >= 0.0);
        }
    }
}
