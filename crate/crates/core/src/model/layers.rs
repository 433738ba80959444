//! Layer kernels over NCHW tensors, forward and backward.

use super::{ModelError, Tensor};

/// `C = alpha * A(m x k) * B(k x n) + beta * C`, all row-major, with optional
/// transposition expressed through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: slices are sized by the callers to cover the strided extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.in_h + 2 * self.pad - self.k) / self.stride + 1,
            (self.in_w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }
}

/// Unfolds one image (`C x H x W`) into `(C*K*K) x (Ho*Wo)` columns.
fn im2col(img: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    for c in 0..g.in_c {
        let plane = &img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image gradient.
fn col2im(cols: &[f64], g: &ConvGeometry, img: &mut [f64]) {
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    for c in 0..g.in_c {
        let plane = &mut img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_geometry(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry, ModelError> {
    let (_, c, h, wd) = x.dims4();
    let [o, wc, kh, kw] = w.shape[..] else {
        return Err(ModelError::ShapeMismatch(format!(
            "kernel shape {:?} is not 4-D",
            w.shape
        )));
    };
    if wc != c || kh != kw {
        return Err(ModelError::ShapeMismatch(format!(
            "kernel {:?} does not fit input with {c} channels",
            w.shape
        )));
    }
    if stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw || o == 0 {
        return Err(ModelError::ShapeMismatch(format!(
            "kernel {kh}x{kw} stride {stride} pad {pad} does not fit {h}x{wd}"
        )));
    }
    Ok(ConvGeometry {
        in_c: c,
        in_h: h,
        in_w: wd,
        k: kh,
        stride,
        pad,
    })
}

/// Cross-correlation with zero padding.
pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, ModelError> {
    let g = conv_geometry(x, w, stride, pad)?;
    let o = w.shape[0];
    if b.shape != [o] {
        return Err(ModelError::ShapeMismatch(format!(
            "bias {:?} for {o} filters",
            b.shape
        )));
    }
    let n = x.shape[0];
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    let ckk = g.in_c * g.k * g.k;
    let in_size = g.in_c * g.in_h * g.in_w;
    let mut out = Tensor::zeros(&[n, o, oh, ow]);
    let mut cols = vec![0.0; ckk * p];
    for i in 0..n {
        im2col(&x.data[i * in_size..(i + 1) * in_size], &g, &mut cols);
        let y = &mut out.data[i * o * p..(i + 1) * o * p];
        for (oc, chunk) in y.chunks_mut(p).enumerate() {
            chunk.fill(b.data[oc]);
        }
        gemm(o, ckk, p, &w.data, false, &cols, false, y, 1.0);
    }
    Ok(out)
}

/// Gradients of a convolution. `dw` and `db` are accumulated into.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    stride: usize,
    pad: usize,
    dw: &mut Tensor,
    db: &mut Tensor,
    want_dx: bool,
) -> Result<Option<Tensor>, ModelError> {
    let g = conv_geometry(x, w, stride, pad)?;
    let o = w.shape[0];
    let n = x.shape[0];
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    if dout.shape != [n, o, oh, ow] {
        return Err(ModelError::ShapeMismatch(format!(
            "output gradient {:?}, expected {:?}",
            dout.shape,
            [n, o, oh, ow]
        )));
    }
    let ckk = g.in_c * g.k * g.k;
    let in_size = g.in_c * g.in_h * g.in_w;
    let mut cols = vec![0.0; ckk * p];
    let mut dcols = vec![0.0; ckk * p];
    let mut dx = want_dx.then(|| Tensor::zeros(&x.shape));
    for i in 0..n {
        let dy = &dout.data[i * o * p..(i + 1) * o * p];
        for (oc, chunk) in dy.chunks(p).enumerate() {
            db.data[oc] += chunk.iter().sum::<f64>();
        }
        im2col(&x.data[i * in_size..(i + 1) * in_size], &g, &mut cols);
        // dW (o x ckk) += dY (o x p) * cols^T (p x ckk)
        gemm(o, p, ckk, dy, false, &cols, true, &mut dw.data, 1.0);
        if let Some(dx) = dx.as_mut() {
            // dcols (ckk x p) = W^T (ckk x o) * dY (o x p)
            gemm(ckk, o, p, &w.data, true, dy, false, &mut dcols, 0.0);
            col2im(&dcols, &g, &mut dx.data[i * in_size..(i + 1) * in_size]);
        }
    }
    Ok(dx)
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Passes the gradient where the pre-activation was positive.
pub fn relu_backward(pre: &Tensor, dout: &Tensor) -> Tensor {
    Tensor {
        shape: dout.shape.clone(),
        data: pre
            .data
            .iter()
            .zip(&dout.data)
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// Max pooling; returns the output and the flat input index of every max.
pub fn maxpool_forward(x: &Tensor, k: usize, stride: usize, pad: usize) -> (Tensor, Vec<usize>) {
    let (n, c, h, w) = x.dims4();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut arg = vec![0usize; out.len()];
    let mut idx = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = base;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let at = base + iy as usize * w + ix as usize;
                        if x.data[at] > best {
                            best = x.data[at];
                            best_at = at;
                        }
                    }
                }
                out.data[idx] = best;
                arg[idx] = best_at;
                idx += 1;
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(input_shape: &[usize], arg: &[usize], dout: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&at, &g) in arg.iter().zip(&dout.data) {
        dx.data[at] += g;
    }
    dx
}

/// `N x C x H x W` to `N x C` channel means.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let area = (h * w) as f64;
    Tensor::from_vec(
        &[n, c],
        x.data
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / area)
            .collect(),
    )
}

pub fn global_avg_pool_backward(input_shape: &[usize], dout: &Tensor) -> Tensor {
    let (h, w) = (input_shape[2], input_shape[3]);
    let area = (h * w) as f64;
    let mut data = Vec::with_capacity(input_shape.iter().product());
    for &g in &dout.data {
        data.extend(std::iter::repeat(g / area).take(h * w));
    }
    Tensor::from_vec(input_shape, data)
}

/// `x (N x I) * W^T (I x O) + b`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, i) = (x.shape[0], x.shape[1]);
    let o = w.shape[0];
    let mut y = Tensor::zeros(&[n, o]);
    for row in y.data.chunks_mut(o) {
        row.copy_from_slice(&b.data);
    }
    gemm(n, i, o, &x.data, false, &w.data, true, &mut y.data, 1.0);
    y
}

/// Accumulates `dw`, `db`; returns `dx`.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    let (n, i) = (x.shape[0], x.shape[1]);
    let o = w.shape[0];
    for row in dout.data.chunks(o) {
        for (a, g) in db.data.iter_mut().zip(row) {
            *a += g;
        }
    }
    // dW (o x i) += dY^T (o x n) * X (n x i)
    gemm(o, n, i, &dout.data, true, &x.data, false, &mut dw.data, 1.0);
    let mut dx = Tensor::zeros(&[n, i]);
    gemm(
        n,
        o,
        i,
        &dout.data,
        false,
        &w.data,
        false,
        &mut dx.data,
        0.0,
    );
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Six nested loops, straight from the definition.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, c, h, wd) = x.dims4();
        let (o, _, k, _) = w.dims4();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut y = Tensor::zeros(&[n, o, oh, ow]);
        for i in 0..n {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data[oc];
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data
                                        [((i * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data[((oc * c + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                        y.data[((i * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn one_by_one_kernel() {
        let x = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]);
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y.shape, vec![1, 1, 3, 3]);
        assert!(y.data.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn full_sum_kernel() {
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(f64::from).collect());
        let w = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y.data, vec![45.0]);
    }

    #[test]
    fn matches_naive_reference() {
        let x = random(&[2, 3, 8, 8], 1);
        let w = random(&[4, 3, 3, 3], 2);
        let b = random(&[4], 3);
        for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)] {
            let fast = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
            let slow = naive_conv(&x, &w, &b, stride, pad);
            assert_eq!(fast.shape, slow.shape);
            for (a, e) in fast.data.iter().zip(&slow.data) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let x = random(&[1, 2, 5, 5], 1);
        let w = random(&[4, 3, 3, 3], 2);
        assert!(matches!(
            conv2d_forward(&x, &w, &Tensor::zeros(&[4]), 1, 1),
            Err(ModelError::ShapeMismatch(_))
        ));
        let w = random(&[4, 2, 3, 3], 2);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[3]), 1, 1).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeometry {
            in_c: 2,
            in_h: 7,
            in_w: 6,
            k: 3,
            stride: 2,
            pad: 1,
        };
        let (oh, ow) = g.out_hw();
        let x = random(&[2 * 7 * 6], 4).data;
        let y = random(&[2 * 9 * oh * ow], 5).data;
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]);
        let (y, arg) = maxpool_forward(&x, 2, 2, 0);
        assert_eq!(y.data, vec![5.0]);
        let dx = maxpool_backward(&x.shape, &arg, &Tensor::from_vec(&[1, 1, 1, 1], vec![7.0]));
        assert_eq!(dx.data, vec![0.0, 7.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_layer() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 0.5, 0.5, 0.5]);
        let b = Tensor::from_vec(&[2], vec![0.1, 0.2]);
        let y = linear_forward(&x, &w, &b);
        assert_eq!(y.data, vec![1.1, 3.2, -0.9, 0.2]);
    }
}
