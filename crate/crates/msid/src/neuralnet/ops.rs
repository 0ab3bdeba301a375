//! Forward and backward kernels for every layer type.
//!
//! Convolutions are 3x3, stride 1, zero-padded to preserve spatial size;
//! pooling is 2x2, stride 2, with floor semantics on odd dimensions. The
//! convolution kernels lower to matrix products over im2col patch matrices.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const K: usize = 3;
const PAD: usize = 1;

fn view2(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("contiguous reshape")
}

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref s => Err(Error::invalid(format!("{what} must be 4-d, got {s:?}"))),
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        ref s => Err(Error::invalid(format!("{what} must be 2-d, got {s:?}"))),
    }
}

/// Gathers the 3x3 zero-padded patches of one [C,H,W] item into a
/// [C*9, H*W] column matrix.
fn im2col(x: &[f64], c: usize, h: usize, w: usize) -> Array2<f64> {
    let mut col = Array2::zeros((c * K * K, h * w));
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..K {
            for kx in 0..K {
                let row_idx = (ch * K + ky) * K + kx;
                let row = col.row_mut(row_idx).into_slice().expect("row-major row");
                let (xo_start, xo_end) = match kx {
                    0 => (PAD, w),
                    2 => (0, w - PAD),
                    _ => (0, w),
                };
                let ix_start = xo_start + kx - PAD;
                let run = xo_end - xo_start;
                for yo in 0..h {
                    let iy = yo + ky;
                    if iy < PAD || iy >= h + PAD {
                        continue;
                    }
                    let iy = iy - PAD;
                    row[yo * w + xo_start..yo * w + xo_start + run]
                        .copy_from_slice(&plane[iy * w + ix_start..iy * w + ix_start + run]);
                }
            }
        }
    }
    col
}

/// Scatter-adds a [C*9, H*W] column-gradient matrix back onto one [C,H,W]
/// input gradient, reversing `im2col`.
fn col2im_add(col: &Array2<f64>, dx: &mut [f64], c: usize, h: usize, w: usize) {
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for ky in 0..K {
            for kx in 0..K {
                let row_idx = (ch * K + ky) * K + kx;
                let row = col.row(row_idx);
                let row = row.as_slice().expect("row-major row");
                let (xo_start, xo_end) = match kx {
                    0 => (PAD, w),
                    2 => (0, w - PAD),
                    _ => (0, w),
                };
                let ix_start = xo_start + kx - PAD;
                let run = xo_end - xo_start;
                for yo in 0..h {
                    let iy = yo + ky;
                    if iy < PAD || iy >= h + PAD {
                        continue;
                    }
                    let iy = iy - PAD;
                    let src = &row[yo * w + xo_start..yo * w + xo_start + run];
                    let dst = &mut plane[iy * w + ix_start..iy * w + ix_start + run];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn check_conv_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (bs, c, h, wd) = dims4(x, "conv input")?;
    let (f, wc, kh, kw) = dims4(w, "conv weight")?;
    if wc != c || kh != K || kw != K {
        return Err(Error::invalid(format!(
            "conv weight {:?} incompatible with input channels {c}",
            w.shape()
        )));
    }
    if b.shape() != [f] {
        return Err(Error::invalid(format!(
            "conv bias {:?} must be [{f}]",
            b.shape()
        )));
    }
    Ok((bs, c, h, wd, f))
}

/// Same-size 3x3 convolution: x [B,C,H,W], w [F,C,3,3], b [F] -> [B,F,H,W].
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (bs, c, h, wd, f) = check_conv_shapes(x, w, b)?;
    let plane = h * wd;
    let wmat = view2(w.data(), f, c * K * K);
    let mut out = Tensor::zeros(&[bs, f, h, wd]);
    for bi in 0..bs {
        let col = im2col(&x.data()[bi * c * plane..(bi + 1) * c * plane], c, h, wd);
        let y = wmat.dot(&col);
        let y = y.as_slice().expect("row-major result");
        let dst = &mut out.data_mut()[bi * f * plane..(bi + 1) * f * plane];
        for fi in 0..f {
            let bias = b.data()[fi];
            for (d, s) in dst[fi * plane..(fi + 1) * plane]
                .iter_mut()
                .zip(&y[fi * plane..(fi + 1) * plane])
            {
                *d = s + bias;
            }
        }
    }
    Ok(out)
}

/// Gradients of the same-size 3x3 convolution: returns (dx, dw, db).
pub fn conv2d_backward(x: &Tensor, w: &Tensor, b: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (bs, c, h, wd, f) = check_conv_shapes(x, w, b)?;
    if dy.shape() != [bs, f, h, wd] {
        return Err(Error::invalid(format!(
            "conv output gradient {:?} must be [{bs}, {f}, {h}, {wd}]",
            dy.shape()
        )));
    }
    let plane = h * wd;
    let wmat = view2(w.data(), f, c * K * K);
    let mut dx = Tensor::zeros(x.shape());
    let mut dw_mat = Array2::<f64>::zeros((f, c * K * K));
    let mut db = Tensor::zeros(&[f]);
    for bi in 0..bs {
        let col = im2col(&x.data()[bi * c * plane..(bi + 1) * c * plane], c, h, wd);
        let dy_mat = view2(&dy.data()[bi * f * plane..(bi + 1) * f * plane], f, plane);
        dw_mat += &dy_mat.dot(&col.t());
        for fi in 0..f {
            db.data_mut()[fi] += dy_mat.row(fi).sum();
        }
        let dcol = wmat.t().dot(&dy_mat);
        col2im_add(&dcol, &mut dx.data_mut()[bi * c * plane..(bi + 1) * c * plane], c, h, wd);
    }
    let dw = Tensor::from_vec(w.shape(), dw_mat.into_raw_vec_and_offset().0)?;
    Ok((dx, dw, db))
}

/// 2x2 max pooling with stride 2 and floor semantics. Returns the pooled
/// tensor and, per output element, the flat index of its source element.
pub fn maxpool2_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (bs, c, h, w) = dims4(x, "pool input")?;
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!(
            "pool input spatial size {h}x{w} must be at least 2x2"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[bs, c, oh, ow]);
    let mut argmax = vec![0usize; out.len()];
    let xd = x.data();
    let od = out.data_mut();
    for bc in 0..bs * c {
        let base = bc * h * w;
        let obase = bc * oh * ow;
        for yo in 0..oh {
            for xo in 0..ow {
                let i00 = base + 2 * yo * w + 2 * xo;
                let candidates = [i00, i00 + 1, i00 + w, i00 + w + 1];
                let mut best = candidates[0];
                for &i in &candidates[1..] {
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                od[obase + yo * ow + xo] = xd[best];
                argmax[obase + yo * ow + xo] = best;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes pooled gradients back to the winning input positions.
pub fn maxpool2_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Result<Tensor> {
    if dy.len() != argmax.len() {
        return Err(Error::invalid("pool gradient does not match recorded argmax"));
    }
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&src, &g) in argmax.iter().zip(dy.data()) {
        dxd[src] += g;
    }
    Ok(dx)
}

/// Fully connected layer: x [B,In], w [Out,In], b [Out] -> [B,Out].
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (bs, input) = dims2(x, "dense input")?;
    let (out, winput) = dims2(w, "dense weight")?;
    if winput != input || b.shape() != [out] {
        return Err(Error::invalid(format!(
            "dense shapes incompatible: x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let y = view2(x.data(), bs, input).dot(&view2(w.data(), out, input).t());
    let mut t = Tensor::from_vec(&[bs, out], y.into_raw_vec_and_offset().0)?;
    for row in 0..bs {
        for (v, bias) in t.data_mut()[row * out..(row + 1) * out].iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    Ok(t)
}

/// Gradients of the fully connected layer: returns (dx, dw, db).
pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (bs, input) = dims2(x, "dense input")?;
    let (out, _) = dims2(w, "dense weight")?;
    if dy.shape() != [bs, out] {
        return Err(Error::invalid(format!(
            "dense output gradient {:?} must be [{bs}, {out}]",
            dy.shape()
        )));
    }
    let xv = view2(x.data(), bs, input);
    let wv = view2(w.data(), out, input);
    let dyv = view2(dy.data(), bs, out);
    let dx = Tensor::from_vec(&[bs, input], dyv.dot(&wv).into_raw_vec_and_offset().0)?;
    let dw = Tensor::from_vec(&[out, input], dyv.t().dot(&xv).into_raw_vec_and_offset().0)?;
    let mut db = Tensor::zeros(&[out]);
    for row in 0..bs {
        for (d, g) in db.data_mut().iter_mut().zip(&dy.data()[row * out..(row + 1) * out]) {
            *d += g;
        }
    }
    Ok((dx, dw, db))
}

/// Elementwise rectifier.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// Rectifier gradient: passes dy where the forward input was positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(Error::invalid("rectifier gradient shape mismatch"));
    }
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(dx)
}

/// Inverted dropout: keeps each element with probability 1-rate and scales
/// survivors by 1/(1-rate), so inference needs no rescaling. Returns the
/// dropped tensor and the applied mask.
pub fn dropout_forward(x: &Tensor, rate: f64, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} must be in [0, 1)")));
    }
    let keep = 1.0 - rate;
    let mut mask = Tensor::zeros(x.shape());
    for m in mask.data_mut() {
        if rng.gen::<f64>() < keep {
            *m = 1.0 / keep;
        }
    }
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    Ok((y, mask))
}

/// Dropout gradient: the same mask applied to dy.
pub fn dropout_backward(mask: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if mask.shape() != dy.shape() {
        return Err(Error::invalid("dropout gradient shape mismatch"));
    }
    let mut dx = dy.clone();
    for (d, m) in dx.data_mut().iter_mut().zip(mask.data()) {
        *d *= m;
    }
    Ok(dx)
}

/// Row-wise softmax with max subtraction for stability.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (bs, k) = dims2(logits, "logits")?;
    let mut p = logits.clone();
    for row in 0..bs {
        let r = &mut p.data_mut()[row * k..(row + 1) * k];
        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in r.iter_mut() {
            *v /= sum;
        }
    }
    Ok(p)
}

/// Mean categorical cross-entropy of softmax probabilities against integer
/// labels.
pub fn cross_entropy(probabilities: &Tensor, labels: &[usize]) -> Result<f64> {
    let (bs, k) = dims2(probabilities, "probabilities")?;
    if labels.len() != bs {
        return Err(Error::invalid(format!(
            "{} labels for a batch of {bs}",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    for (row, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::invalid(format!("label {y} out of range for {k} classes")));
        }
        loss -= probabilities.data()[row * k + y].max(f64::MIN_POSITIVE).ln();
    }
    Ok(loss / bs as f64)
}

/// Gradient of mean cross-entropy with respect to the logits:
/// (p - onehot) / B.
pub fn softmax_cross_entropy_backward(probabilities: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (bs, k) = dims2(probabilities, "probabilities")?;
    if labels.len() != bs {
        return Err(Error::invalid(format!(
            "{} labels for a batch of {bs}",
            labels.len()
        )));
    }
    let mut d = probabilities.clone();
    for (row, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::invalid(format!("label {y} out of range for {k} classes")));
        }
        d.data_mut()[row * k + y] -= 1.0;
    }
    for v in d.data_mut() {
        *v /= bs as f64;
    }
    Ok(d)
}
