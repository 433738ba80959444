use super::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient `(p - onehot) / B`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let (b, k) = (logits.shape[0], logits.shape[1]);
    assert_eq!(labels.len(), b, "one label per row");
    let mut grad = Tensor::zeros(&logits.shape);
    let mut loss = 0.0;
    for (i, (row, g)) in logits
        .data
        .chunks(k)
        .zip(grad.data.chunks_mut(k))
        .enumerate()
    {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp();
            z += *gj;
        }
        let label = labels[i];
        assert!(label < k, "label {label} out of range");
        loss += z.ln() - (row[label] - max);
        for gj in g.iter_mut() {
            *gj /= z;
        }
        g[label] -= 1.0;
        for gj in g.iter_mut() {
            *gj /= b as f64;
        }
    }
    (loss / b as f64, grad)
}

/// Row-wise softmax.
pub(crate) fn softmax_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    let k = logits.shape[1];
    logits
        .data
        .chunks(k)
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln4() {
        for label in 0..4 {
            let (l, _) = softmax_xent(&Tensor::from_vec(&[1, 4], vec![3.0; 4]), &[label]);
            assert!((l - 4f64.ln()).abs() < 1e-12);
        }
        assert!((4f64.ln() - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn saturated_correct_logit() {
        let (l, _) = softmax_xent(
            &Tensor::from_vec(&[1, 4], vec![10.0, -10.0, -10.0, -10.0]),
            &[0],
        );
        assert!(l < 1e-8);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Tensor::from_vec(
            &[3, 4],
            vec![
                0.3, -1.2, 4.0, 0.0, 1e3, 999.0, -5.0, 2.0, 0.1, 0.2, 0.3, 0.4,
            ],
        );
        let (l, g) = softmax_xent(&logits, &[2, 1, 3]);
        assert!(l.is_finite());
        for row in g.data.chunks(4) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let logits = Tensor::from_vec(&[2, 4], vec![0.5, -0.3, 1.1, 0.0, -2.0, 0.7, 0.2, 0.9]);
        let labels = [1, 3];
        let (_, g) = softmax_xent(&logits, &labels);
        let h = 1e-6;
        for j in 0..8 {
            let mut up = logits.clone();
            up.data[j] += h;
            let mut down = logits.clone();
            down.data[j] -= h;
            let fd = (softmax_xent(&up, &labels).0 - softmax_xent(&down, &labels).0) / (2.0 * h);
            assert!((fd - g.data[j]).abs() < 1e-8);
        }
    }
}
