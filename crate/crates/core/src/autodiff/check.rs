use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nll::forward_nll;
use crate::corpus::Corpus;
use crate::error::Result;
use crate::model::TppModel;

/// Coordinates probed per check; smaller parameter vectors are checked in
/// full.
pub const GRAD_CHECK_SAMPLES: usize = 200;

const SUBSAMPLE_SEED: u64 = 0x6772_6164;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Worst relative error between `grad` and central differences of `f`
/// around `theta` over a seeded subsample of coordinates.
pub fn grad_check_fn<F>(mut f: F, theta: &[f64], grad: &[f64], epsilon: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = theta.len();
    let coords: Vec<usize> = if n <= GRAD_CHECK_SAMPLES {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        let mut c = sample(&mut rng, n, GRAD_CHECK_SAMPLES).into_vec();
        c.sort_unstable();
        c
    };
    let mut x = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        x[i] = theta[i] + epsilon;
        let up = f(&x)?;
        x[i] = theta[i] - epsilon;
        let down = f(&x)?;
        x[i] = theta[i];
        let fd = (up - down) / (2.0 * epsilon);
        worst = worst.max(rel_err(grad[i], fd));
    }
    Ok(worst)
}

/// Compares the reverse-mode gradient of the mean NLL against central
/// differences of the tape-free NLL.
pub fn grad_check(model: &TppModel, corpus: &Corpus, batch: &[usize], epsilon: f64) -> Result<f64> {
    let (_, rec) = forward_nll(model, corpus, batch)?;
    let grad = rec.backward()?;
    let mut probe = model.clone();
    grad_check_fn(
        |theta| {
            probe.flat_mut().copy_from_slice(theta);
            probe.nll(corpus, batch)
        },
        model.flat(),
        &grad,
        epsilon,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let theta = [1.0, -2.0, 0.5];
        let grad: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let err = grad_check_fn(|x| Ok(x.iter().map(|v| v * v).sum()), &theta, &grad, 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn empty_parameter_vector() {
        assert_eq!(grad_check_fn(|_| Ok(1.0), &[], &[], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let err = grad_check_fn(|x| Ok(x[0] * x[0]), &[1.0], &[3.0], 1e-5).unwrap();
        assert!(err > 0.3);
    }
}
