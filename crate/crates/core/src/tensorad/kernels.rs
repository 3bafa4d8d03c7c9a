//! Slice-level kernels behind the tape operations. Image buffers are NCHW.

use super::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Columns `[j_lo, j_hi)` of an output row whose source column `j + shift`
/// lies inside `0..w`.
fn valid_cols(w: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).clamp(0, w as isize) as usize;
    let hi = (w as isize - shift).clamp(0, w as isize) as usize;
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], d: Dims, k: usize, cols: &mut [T]) {
    let p = k as isize / 2;
    let hw = d.plane();
    for c in 0..d.c {
        let xc = &x[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut cols[((c * k + ki) * k + kj) * hw..][..hw];
                let shift = kj as isize - p;
                let (lo, hi) = valid_cols(d.w, shift);
                for i in 0..d.h {
                    let si = i as isize + ki as isize - p;
                    let out = &mut row[i * d.w..(i + 1) * d.w];
                    if si < 0 || si >= d.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &xc[si as usize * d.w..(si as usize + 1) * d.w];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    let s0 = (lo as isize + shift) as usize;
                    out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], d: Dims, k: usize, dx: &mut [T]) {
    let p = k as isize / 2;
    let hw = d.plane();
    for c in 0..d.c {
        let dxc = &mut dx[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &cols[((c * k + ki) * k + kj) * hw..][..hw];
                let shift = kj as isize - p;
                let (lo, hi) = valid_cols(d.w, shift);
                for i in 0..d.h {
                    let si = i as isize + ki as isize - p;
                    if si < 0 || si >= d.h as isize {
                        continue;
                    }
                    let dst = &mut dxc[si as usize * d.w..(si as usize + 1) * d.w];
                    let s0 = (lo as isize + shift) as usize;
                    for (a, &b) in dst[s0..s0 + (hi - lo)].iter_mut().zip(&row[i * d.w + lo..i * d.w + hi]) {
                        *a += b;
                    }
                }
            }
        }
    }
}

/// Same-padded cross-correlation; `wt` is (o, c, k, k).
pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    d: Dims,
    wt: &[T],
    o: usize,
    k: usize,
    bias: Option<&[T]>,
    y: &mut [T],
) {
    let hw = d.plane();
    let ckk = d.c * k * k;
    let mut cols = vec![T::zero(); if k == 1 { 0 } else { ckk * hw }];
    for n in 0..d.n {
        let xn = &x[n * d.sample()..(n + 1) * d.sample()];
        let yn = &mut y[n * o * hw..(n + 1) * o * hw];
        let b: &[T] = if k == 1 {
            xn
        } else {
            im2col(xn, d, k, &mut cols);
            &cols
        };
        match bias {
            Some(bias) => {
                for (oc, row) in yn.chunks_exact_mut(hw).enumerate() {
                    row.fill(bias[oc]);
                }
            }
            None => yn.fill(T::zero()),
        }
        T::gemm(o, ckk, hw, T::one(), wt, (ckk, 1), b, (hw, 1), T::one(), yn, (hw, 1));
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    d: Dims,
    wt: &[T],
    o: usize,
    k: usize,
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let hw = d.plane();
    let ckk = d.c * k * k;
    let mut cols = vec![T::zero(); if k == 1 { 0 } else { ckk * hw }];
    let mut dcols = vec![T::zero(); if k == 1 || dx.is_none() { 0 } else { ckk * hw }];
    for n in 0..d.n {
        let xn = &x[n * d.sample()..(n + 1) * d.sample()];
        let dyn_ = &dy[n * o * hw..(n + 1) * o * hw];
        if let Some(db) = db.as_deref_mut() {
            for (oc, row) in dyn_.chunks_exact(hw).enumerate() {
                db[oc] += row.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let b: &[T] = if k == 1 {
                xn
            } else {
                im2col(xn, d, k, &mut cols);
                &cols
            };
            T::gemm(o, hw, ckk, T::one(), dyn_, (hw, 1), b, (1, hw), T::one(), dw, (ckk, 1));
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * d.sample()..(n + 1) * d.sample()];
            if k == 1 {
                T::gemm(ckk, o, hw, T::one(), wt, (1, ckk), dyn_, (hw, 1), T::one(), dxn, (hw, 1));
            } else {
                T::gemm(ckk, o, hw, T::one(), wt, (1, ckk), dyn_, (hw, 1), T::zero(), &mut dcols, (hw, 1));
                col2im_add(&dcols, d, k, dxn);
            }
        }
    }
}

/// Stride-2, kernel-2 transposed convolution; `wt` is (c, o, 2, 2).
pub(crate) fn conv_t_forward<T: Scalar>(
    x: &[T],
    d: Dims,
    wt: &[T],
    o: usize,
    bias: Option<&[T]>,
    y: &mut [T],
) {
    let hw = d.plane();
    let (h2, w2) = (2 * d.h, 2 * d.w);
    let mut z = vec![T::zero(); 4 * o * hw];
    for n in 0..d.n {
        let xn = &x[n * d.sample()..(n + 1) * d.sample()];
        T::gemm(4 * o, d.c, hw, T::one(), wt, (1, 4 * o), xn, (hw, 1), T::zero(), &mut z, (hw, 1));
        let yn = &mut y[n * o * h2 * w2..(n + 1) * o * h2 * w2];
        for oc in 0..o {
            let b = bias.map_or(T::zero(), |b| b[oc]);
            for a in 0..2 {
                for bb in 0..2 {
                    let zrow = &z[(oc * 4 + a * 2 + bb) * hw..][..hw];
                    for i in 0..d.h {
                        let dst = &mut yn[oc * h2 * w2 + (2 * i + a) * w2..][..w2];
                        for j in 0..d.w {
                            dst[2 * j + bb] = zrow[i * d.w + j] + b;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_t_backward<T: Scalar>(
    x: &[T],
    d: Dims,
    wt: &[T],
    o: usize,
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let hw = d.plane();
    let (h2, w2) = (2 * d.h, 2 * d.w);
    let mut dz = vec![T::zero(); 4 * o * hw];
    for n in 0..d.n {
        let dyn_ = &dy[n * o * h2 * w2..(n + 1) * o * h2 * w2];
        for oc in 0..o {
            if let Some(db) = db.as_deref_mut() {
                db[oc] += dyn_[oc * h2 * w2..(oc + 1) * h2 * w2].iter().copied().sum::<T>();
            }
            for a in 0..2 {
                for bb in 0..2 {
                    let zrow = &mut dz[(oc * 4 + a * 2 + bb) * hw..][..hw];
                    for i in 0..d.h {
                        let src = &dyn_[oc * h2 * w2 + (2 * i + a) * w2..][..w2];
                        for j in 0..d.w {
                            zrow[i * d.w + j] = src[2 * j + bb];
                        }
                    }
                }
            }
        }
        let xn = &x[n * d.sample()..(n + 1) * d.sample()];
        if let Some(dw) = dw.as_deref_mut() {
            T::gemm(d.c, hw, 4 * o, T::one(), xn, (hw, 1), &dz, (1, hw), T::one(), dw, (4 * o, 1));
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * d.sample()..(n + 1) * d.sample()];
            T::gemm(d.c, 4 * o, hw, T::one(), wt, (4 * o, 1), &dz, (hw, 1), T::one(), dxn, (hw, 1));
        }
    }
}

/// 2×2 max pooling; returns the flat input index of each maximum, the first
/// one in row-major window order on ties.
pub(crate) fn maxpool2_forward<T: Scalar>(x: &[T], d: Dims, y: &mut [T]) -> Vec<u32> {
    let (ho, wo) = (d.h / 2, d.w / 2);
    let mut arg = vec![0u32; d.n * d.c * ho * wo];
    for nc in 0..d.n * d.c {
        let base = nc * d.plane();
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * d.w + 2 * j;
                for (a, b) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + a) * d.w + 2 * j + b;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let out = nc * ho * wo + i * wo + j;
                y[out] = x[best];
                arg[out] = best as u32;
            }
        }
    }
    arg
}
