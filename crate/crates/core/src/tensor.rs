//! Dense row-major tensors of 64-bit reals, plus the numeric kernels the
//! differentiation graph dispatches to.

use crate::error::{Error, Result};

/// A dense array: a shape and row-major `f64` storage.
///
/// The invariant `shape.iter().product() == data.len()` holds for every
/// constructed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    /// Identity matrix scaled by `gamma`.
    pub fn scaled_eye(n: usize, gamma: f64) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = gamma;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `self += alpha * other`, shapes must agree.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }
}

/// Numerically stable `log(cosh(x))`.
///
/// For large |x| this is evaluated through the identity
/// `|x| - log 2 + log(1 + exp(-2|x|))`, which keeps the large-argument
/// branch exact to roundoff instead of overflowing `cosh`.
pub fn logcosh(x: f64) -> f64 {
    let a = x.abs();
    if a > 20.0 {
        a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
    } else {
        a.cosh().ln()
    }
}

// ---- kernels written into preallocated outputs -------------------------
//
// The graph reuses value buffers across forward passes, so every kernel
// writes into `out` instead of allocating.

pub fn add_into(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    for ((o, x), y) in out.data.iter_mut().zip(&a.data).zip(&b.data) {
        *o = x + y;
    }
}

pub fn sub_into(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    for ((o, x), y) in out.data.iter_mut().zip(&a.data).zip(&b.data) {
        *o = x - y;
    }
}

pub fn scale_into(a: &Tensor, alpha: f64, out: &mut Tensor) {
    for (o, x) in out.data.iter_mut().zip(&a.data) {
        *o = alpha * x;
    }
}

pub fn mul_into(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    for ((o, x), y) in out.data.iter_mut().zip(&a.data).zip(&b.data) {
        *o = x * y;
    }
}

pub fn tanh_into(a: &Tensor, out: &mut Tensor) {
    for (o, x) in out.data.iter_mut().zip(&a.data) {
        *o = x.tanh();
    }
}

pub fn logcosh_into(a: &Tensor, out: &mut Tensor) {
    for (o, x) in out.data.iter_mut().zip(&a.data) {
        *o = logcosh(*x);
    }
}

/// `out = m v` for `m: [r, c]`, `v: [c]`.
pub fn matvec_into(m: &Tensor, v: &Tensor, out: &mut Tensor) {
    let (r, c) = (m.shape[0], m.shape[1]);
    for i in 0..r {
        let row = &m.data[i * c..(i + 1) * c];
        out.data[i] = row.iter().zip(&v.data).map(|(a, b)| a * b).sum();
    }
}

/// `out = mᵀ v` for `m: [r, c]`, `v: [r]`.
pub fn matvec_t_into(m: &Tensor, v: &Tensor, out: &mut Tensor) {
    let (r, c) = (m.shape[0], m.shape[1]);
    out.fill(0.0);
    for i in 0..r {
        let row = &m.data[i * c..(i + 1) * c];
        let vi = v.data[i];
        for (o, a) in out.data.iter_mut().zip(row) {
            *o += vi * a;
        }
    }
}

/// `out = a b` for `a: [r, k]`, `b: [k, c]`.
pub fn matmat_into(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (r, k) = (a.shape[0], a.shape[1]);
    let c = b.shape[1];
    out.fill(0.0);
    for i in 0..r {
        for l in 0..k {
            let ail = a.data[i * k + l];
            let brow = &b.data[l * c..(l + 1) * c];
            let orow = &mut out.data[i * c..(i + 1) * c];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += ail * bv;
            }
        }
    }
}

/// `dm += g ⊗ v` (rank-one update), `g: [r]`, `v: [c]`, `dm: [r, c]`.
pub fn outer_acc(g: &Tensor, v: &Tensor, dm: &mut Tensor) {
    let (r, c) = (dm.shape[0], dm.shape[1]);
    for i in 0..r {
        let gi = g.data[i];
        let row = &mut dm.data[i * c..(i + 1) * c];
        for (o, vv) in row.iter_mut().zip(&v.data[..c]) {
            *o += gi * vv;
        }
    }
}

/// Zero-padded 2-D cross-correlation: `img: [ci, h, w]`,
/// `stencil: [co, ci, kh, kw]` (odd kh, kw) -> `out: [co, h, w]`.
pub fn conv2d_into(stencil: &Tensor, img: &Tensor, out: &mut Tensor) {
    let (co, ci, kh, kw) = (
        stencil.shape[0],
        stencil.shape[1],
        stencil.shape[2],
        stencil.shape[3],
    );
    let (h, w) = (img.shape[1], img.shape[2]);
    let (oh, ow) = ((kh / 2) as isize, (kw / 2) as isize);
    out.fill(0.0);
    for o in 0..co {
        for c in 0..ci {
            let ker = &stencil.data[(o * ci + c) * kh * kw..(o * ci + c + 1) * kh * kw];
            let plane = &img.data[c * h * w..(c + 1) * h * w];
            let oplane = &mut out.data[o * h * w..(o + 1) * h * w];
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0;
                    for dy in 0..kh as isize {
                        let sy = y + dy - oh;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw as isize {
                            let sx = x + dx - ow;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += ker[(dy * kw as isize + dx) as usize]
                                * plane[(sy * w as isize + sx) as usize];
                        }
                    }
                    oplane[(y * w as isize + x) as usize] += acc;
                }
            }
        }
    }
}

/// Adjoint of [`conv2d_into`] with respect to the image:
/// `v: [co, h, w]` -> `out: [ci, h, w]`.
pub fn conv2d_adj_into(stencil: &Tensor, v: &Tensor, out: &mut Tensor) {
    let (co, ci, kh, kw) = (
        stencil.shape[0],
        stencil.shape[1],
        stencil.shape[2],
        stencil.shape[3],
    );
    let (h, w) = (v.shape[1], v.shape[2]);
    let (oh, ow) = ((kh / 2) as isize, (kw / 2) as isize);
    out.fill(0.0);
    for o in 0..co {
        for c in 0..ci {
            let ker = &stencil.data[(o * ci + c) * kh * kw..(o * ci + c + 1) * kh * kw];
            let vplane = &v.data[o * h * w..(o + 1) * h * w];
            let oplane = &mut out.data[c * h * w..(c + 1) * h * w];
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let gv = vplane[(y * w as isize + x) as usize];
                    if gv == 0.0 {
                        continue;
                    }
                    for dy in 0..kh as isize {
                        let sy = y + dy - oh;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw as isize {
                            let sx = x + dx - ow;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            oplane[(sy * w as isize + sx) as usize] +=
                                ker[(dy * kw as isize + dx) as usize] * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Stencil gradient of [`conv2d_into`]: accumulates into
/// `dstencil: [co, ci, kh, kw]` given the input image and the output
/// cotangent `g: [co, h, w]`.
pub fn conv2d_stencil_grad_acc(img: &Tensor, g: &Tensor, dstencil: &mut Tensor) {
    let (co, ci, kh, kw) = (
        dstencil.shape[0],
        dstencil.shape[1],
        dstencil.shape[2],
        dstencil.shape[3],
    );
    let (h, w) = (img.shape[1], img.shape[2]);
    let (oh, ow) = ((kh / 2) as isize, (kw / 2) as isize);
    for o in 0..co {
        for c in 0..ci {
            let plane = &img.data[c * h * w..(c + 1) * h * w];
            let gplane = &g.data[o * h * w..(o + 1) * h * w];
            let dker =
                &mut dstencil.data[(o * ci + c) * kh * kw..(o * ci + c + 1) * kh * kw];
            for dy in 0..kh as isize {
                for dx in 0..kw as isize {
                    let mut acc = 0.0;
                    for y in 0..h as isize {
                        let sy = y + dy - oh;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w as isize {
                            let sx = x + dx - ow;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += gplane[(y * w as isize + x) as usize]
                                * plane[(sy * w as isize + sx) as usize];
                        }
                    }
                    dker[(dy * kw as isize + dx) as usize] += acc;
                }
            }
        }
    }
}

/// Channel mix: `out[h,w] = Σ_c w_c img[c,h,w]`; the per-pixel action of a
/// 1x1 channel-reducing map.
pub fn chanmix_into(wts: &Tensor, img: &Tensor, out: &mut Tensor) {
    let c = wts.data.len();
    let hw = out.data.len();
    out.fill(0.0);
    for ch in 0..c {
        let wv = wts.data[ch];
        let plane = &img.data[ch * hw..(ch + 1) * hw];
        for (o, p) in out.data.iter_mut().zip(plane) {
            *o += wv * p;
        }
    }
}

/// Adjoint of [`chanmix_into`]: broadcast `img[h,w]` into each channel
/// scaled by `w_c`.
pub fn chanmix_t_into(wts: &Tensor, img: &Tensor, out: &mut Tensor) {
    let c = wts.data.len();
    let hw = img.data.len();
    for ch in 0..c {
        let wv = wts.data[ch];
        let plane = &mut out.data[ch * hw..(ch + 1) * hw];
        for (o, p) in plane.iter_mut().zip(&img.data) {
            *o = wv * p;
        }
    }
}

/// `dw_c += Σ_{h,w} a[c,h,w] b[h,w]`, the weight gradient shared by the
/// channel-mix pair.
pub fn chandot_acc(a: &Tensor, b: &Tensor, dw: &mut Tensor) {
    let c = dw.data.len();
    let hw = b.data.len();
    for ch in 0..c {
        let plane = &a.data[ch * hw..(ch + 1) * hw];
        dw.data[ch] += plane.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logcosh_reference_values() {
        assert_eq!(logcosh(0.0), 0.0);
        // High-precision oracle: log(cosh(1)) evaluated at 40 digits.
        assert_relative_eq!(logcosh(1.0), 0.4337808304830272, max_relative = 1e-15);
        // Asymptotic identity, |x| - log 2 for large arguments.
        assert!((logcosh(30.0) - (30.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((logcosh(1e8) - (1e8 - std::f64::consts::LN_2)).abs() < 1e-7);
    }

    #[test]
    fn logcosh_even_and_bounded() {
        for i in 0..200 {
            let x = -10.0 + 0.1 * i as f64;
            assert_eq!(logcosh(x), logcosh(-x));
            let gap = logcosh(x) - (x.abs() - std::f64::consts::LN_2);
            assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&gap));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matvec_and_transpose() {
        let m = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let v = Tensor::from_vec(&[3], vec![1.0, 0.0, -1.0]).unwrap();
        let mut out = Tensor::zeros(&[2]);
        matvec_into(&m, &v, &mut out);
        assert_eq!(out.data(), &[-2.0, -2.0]);

        let u = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let mut out_t = Tensor::zeros(&[3]);
        matvec_t_into(&m, &u, &mut out_t);
        assert_eq!(out_t.data(), &[-3.0, -3.0, -3.0]);
    }

    #[test]
    fn matmat_matches_manual() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let mut out = Tensor::zeros(&[2, 2]);
        matmat_into(&a, &b, &mut out);
        assert_eq!(out.data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let img = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut st = Tensor::zeros(&[1, 1, 3, 3]);
        st.data_mut()[4] = 1.0; // center tap
        let mut out = Tensor::zeros(&[1, 2, 2]);
        conv2d_into(&st, &img, &mut out);
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn conv2d_adjoint_identity() {
        // <conv(s, x), y> == <x, conv_adj(s, y)> with zero padding.
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state as f64 / u64::MAX as f64) - 0.5
        };
        let st = Tensor::from_vec(&[2, 3, 3, 3], (0..54).map(|_| next()).collect()).unwrap();
        let x = Tensor::from_vec(&[3, 5, 5], (0..75).map(|_| next()).collect()).unwrap();
        let y = Tensor::from_vec(&[2, 5, 5], (0..50).map(|_| next()).collect()).unwrap();
        let mut ax = Tensor::zeros(&[2, 5, 5]);
        conv2d_into(&st, &x, &mut ax);
        let mut aty = Tensor::zeros(&[3, 5, 5]);
        conv2d_adj_into(&st, &y, &mut aty);
        assert_relative_eq!(ax.dot(&y), x.dot(&aty), max_relative = 1e-12);
    }

    #[test]
    fn chanmix_pair_is_adjoint() {
        let w = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let z = Tensor::from_vec(&[3, 2, 2], (0..12).map(|i| i as f64).collect()).unwrap();
        let r = Tensor::from_vec(&[2, 2], vec![1.0, -1.0, 2.0, 0.5]).unwrap();
        let mut mz = Tensor::zeros(&[2, 2]);
        chanmix_into(&w, &z, &mut mz);
        let mut mtr = Tensor::zeros(&[3, 2, 2]);
        chanmix_t_into(&w, &r, &mut mtr);
        assert_relative_eq!(mz.dot(&r), z.dot(&mtr), max_relative = 1e-13);
    }
}
