//! Total variation distance and KL divergence on finite distributions.

use crate::{Error, Result};

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "distributions have different support sizes: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Config("probabilities must be finite and >= 0".into()));
    }
    Ok(())
}

/// Total variation distance `0.5 * sum |p - q|`.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// KL divergence `sum p log(p/q)` with `0 log(0/q) := 0`. Returns
/// `f64::INFINITY` when `p` puts mass where `q` has none.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_distributions_have_zero_distance() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_point_masses_have_tvd_one() {
        assert_eq!(tvd(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn kl_signals_infinity_on_missing_support() {
        assert_eq!(kl(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        // 0 log(0/q) := 0 on the other side.
        assert!(kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap().is_finite());
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(tvd(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        assert!(kl(&[0.5, 0.5], &[-0.2, 1.2]).is_err());
    }

    #[test]
    fn pinsker_inequality_holds_on_random_pairs() {
        let mut rng = crate::seeds::rng(55);
        for _ in 0..1000 {
            let n = rng.random_range(2..=8);
            let p = crate::envs::random_stochastic_rows(1, n, &mut rng);
            let q = crate::envs::random_stochastic_rows(1, n, &mut rng);
            let t = tvd(&p, &q).unwrap();
            let k = kl(&p, &q).unwrap();
            assert!(
                t <= (k / 2.0).sqrt() + 1e-12,
                "TVD {t} exceeds sqrt(KL/2) {}",
                (k / 2.0).sqrt()
            );
        }
    }
}
