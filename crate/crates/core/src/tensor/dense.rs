use rand::Rng;

use super::{check_len, Matrix, TensorError};

/// Numerically stable softmax (max subtracted before exponentiating).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Sparse categorical cross-entropy on softmax probabilities.
///
/// Returns `-ln p[label]` and the gradient with respect to the logits that
/// produced `probs`, which is `probs - onehot(label)`.
pub fn sparse_ce(probs: &[f64], label: usize) -> Result<(f64, Vec<f64>), TensorError> {
    if label >= probs.len() {
        return Err(TensorError::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// `W x + b`.
pub fn dense_forward(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>, TensorError> {
    check_len("dense_forward input", w.cols(), x.len())?;
    check_len("dense_forward bias", w.rows(), b.len())?;
    let mut out = b.to_vec();
    w.matvec_acc(x, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn dense_backward(x: &[f64], w: &Matrix, grad_out: &[f64]) -> Result<DenseGrads, TensorError> {
    check_len("dense_backward input", w.cols(), x.len())?;
    check_len("dense_backward upstream", w.rows(), grad_out.len())?;
    let mut gw = Matrix::zeros(w.rows(), w.cols());
    gw.add_outer(grad_out, x);
    let mut gx = vec![0.0; w.cols()];
    w.matvec_t_acc(grad_out, &mut gx);
    Ok(DenseGrads {
        w: gw,
        b: grad_out.to_vec(),
        x: gx,
    })
}

/// Keep pattern of one inverted-dropout application.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    /// Factor applied to survivors, `1 / (1 - rate)`.
    pub scale: f64,
}

impl DropoutMask {
    pub fn identity(len: usize) -> Self {
        DropoutMask {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Self {
        if rate <= 0.0 {
            return Self::identity(len);
        }
        DropoutMask {
            keep: (0..len).map(|_| rng.gen::<f64>() >= rate).collect(),
            scale: 1.0 / (1.0 - rate),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.keep.iter().all(|&k| k)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v * self.scale } else { 0.0 })
            .collect()
    }

    /// Dropout is linear, so the backward pass is the same masking.
    pub fn backward(&self, grad: &[f64]) -> Vec<f64> {
        self.apply(grad)
    }
}

/// Inverted dropout. With `training == false` or `rate == 0` this is the identity.
pub fn dropout_apply<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    rng: &mut R,
    training: bool,
) -> (Vec<f64>, DropoutMask) {
    let mask = if training {
        DropoutMask::sample(x.len(), rate, rng)
    } else {
        DropoutMask::identity(x.len())
    };
    (mask.apply(x), mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[2f64.ln(), 0.0, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] < 1e-300);
    }

    #[test]
    fn sparse_ce_examples() {
        let uniform = vec![1.0 / 7.0; 7];
        for label in 0..7 {
            let (loss, _) = sparse_ce(&uniform, label).unwrap();
            assert!((loss - 7f64.ln()).abs() < 1e-12);
            assert!((loss - 1.945910).abs() < 1e-6);
        }
        let mut onehot = vec![0.0; 7];
        onehot[3] = 1.0;
        let (loss, grad) = sparse_ce(&onehot, 3).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        assert!(matches!(
            sparse_ce(&uniform, 7),
            Err(TensorError::LabelOutOfRange { label: 7, classes: 7 })
        ));
    }

    #[test]
    fn dense_identity_and_bias_grad() {
        let x = vec![0.3, -1.2, 4.0];
        assert_eq!(dense_forward(&x, &Matrix::identity(3), &[0.0; 3]).unwrap(), x);
        let up = vec![0.5, -0.25];
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let g = dense_backward(&x, &w, &up).unwrap();
        assert_eq!(g.b, up);
        assert!(dense_forward(&[1.0], &w, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn dropout_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let (y, mask) = dropout_apply(&x, 0.0, &mut rng, true);
        assert_eq!(y, x);
        assert!(mask.keep.iter().all(|&k| k));
        let (y, mask) = dropout_apply(&x, 0.9, &mut rng, false);
        assert_eq!(y, x);
        assert!(mask.is_identity());
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2020);
        let x = vec![1.0; 10_000];
        let (y, mask) = dropout_apply(&x, 0.5, &mut rng, true);
        let kept = mask.keep.iter().filter(|&&k| k).count() as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&kept), "survivor fraction {kept}");
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.06, "mean {mean}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
