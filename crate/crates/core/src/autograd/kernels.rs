//! Convolution, pooling and normalization kernels with their adjoints.

use super::tensor::Tensor;

/// Boundary handling for 1-D padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample; folds repeatedly when the pad
    /// exceeds the signal length.
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub pad_mode: PadMode,
}

impl Conv1dSpec {
    /// Stride 1, symmetric zero padding that keeps the length for odd kernels.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel - 1);
        Self {
            stride: 1,
            dilation,
            groups: 1,
            pad_left: total / 2,
            pad_right: total - total / 2,
            pad_mode: PadMode::Zero,
        }
    }

    pub fn pointwise() -> Self {
        Self::same(1, 1)
    }

    pub fn output_len(&self, len: usize, kernel: usize) -> usize {
        let padded = len + self.pad_left + self.pad_right;
        let span = self.dilation * (kernel - 1) + 1;
        assert!(
            padded >= span,
            "padded length {padded} shorter than kernel span {span}"
        );
        (padded - span) / self.stride + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    /// (top, bottom, left, right), zero padding.
    pub pad: (usize, usize, usize, usize),
}

/// Map a padded coordinate back to the source index, or `None` for zero padding.
pub fn source_index(i: isize, len: usize, mode: PadMode) -> Option<usize> {
    if i >= 0 && (i as usize) < len {
        return Some(i as usize);
    }
    match mode {
        PadMode::Zero => None,
        PadMode::Reflect => {
            if len == 1 {
                return Some(0);
            }
            let period = 2 * (len as isize - 1);
            let mut j = i.rem_euclid(period);
            if j >= len as isize {
                j = period - j;
            }
            Some(j as usize)
        }
    }
}

fn pad_rows(x: &[f64], rows: usize, len: usize, left: usize, right: usize, mode: PadMode) -> Vec<f64> {
    let lp = len + left + right;
    let mut out = vec![0.0; rows * lp];
    for r in 0..rows {
        let src = &x[r * len..(r + 1) * len];
        let dst = &mut out[r * lp..(r + 1) * lp];
        for (j, d) in dst.iter_mut().enumerate() {
            if let Some(s) = source_index(j as isize - left as isize, len, mode) {
                *d = src[s];
            }
        }
    }
    out
}

fn unpad_rows_add(gp: &[f64], rows: usize, len: usize, left: usize, right: usize, mode: PadMode) -> Vec<f64> {
    let lp = len + left + right;
    let mut out = vec![0.0; rows * len];
    for r in 0..rows {
        let src = &gp[r * lp..(r + 1) * lp];
        let dst = &mut out[r * len..(r + 1) * len];
        for (j, &g) in src.iter().enumerate() {
            if let Some(s) = source_index(j as isize - left as isize, len, mode) {
                dst[s] += g;
            }
        }
    }
    out
}

/// `C = alpha * A * B + beta * C` over strided views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        debug_assert!((m - 1) * rsa + (k - 1) * csa < a.len());
        debug_assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    }
    debug_assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

const COL_BUDGET: usize = 1 << 21;

struct Conv1dGeom {
    batch: usize,
    cin: usize,
    len: usize,
    lp: usize,
    cout: usize,
    cin_g: usize,
    cout_g: usize,
    k: usize,
    lout: usize,
}

fn conv1d_geom(x: &Tensor, w: &Tensor, spec: &Conv1dSpec) -> Conv1dGeom {
    assert_eq!(x.ndim(), 3, "conv1d input must be [batch, channels, time]");
    assert_eq!(w.ndim(), 3, "conv1d weight must be [out, in/groups, kernel]");
    let (batch, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, cin_g, k) = (w.dim(0), w.dim(1), w.dim(2));
    let g = spec.groups;
    assert!(g > 0 && cin == cin_g * g, "conv1d: {cin} input channels vs {cin_g}x{g}");
    assert_eq!(cout % g, 0, "conv1d: {cout} output channels not divisible by {g} groups");
    let lout = spec.output_len(len, k);
    Conv1dGeom {
        batch,
        cin,
        len,
        lp: len + spec.pad_left + spec.pad_right,
        cout,
        cin_g,
        cout_g: cout / g,
        k,
        lout,
    }
}

fn fill_col(col: &mut [f64], xp_group: &[f64], geo: &Conv1dGeom, spec: &Conv1dSpec, t0: usize, tn: usize) {
    for ci in 0..geo.cin_g {
        let row = &xp_group[ci * geo.lp..(ci + 1) * geo.lp];
        for kk in 0..geo.k {
            let dst = &mut col[(ci * geo.k + kk) * tn..(ci * geo.k + kk + 1) * tn];
            let off = kk * spec.dilation;
            if spec.stride == 1 {
                dst.copy_from_slice(&row[t0 + off..t0 + off + tn]);
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = row[(t0 + j) * spec.stride + off];
                }
            }
        }
    }
}

fn chunk_len(rows: usize, lout: usize) -> usize {
    (COL_BUDGET / rows.max(1)).max(64).min(lout.max(1))
}

pub fn conv1d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: &Conv1dSpec) -> Tensor {
    let geo = conv1d_geom(x, w, spec);
    let xp = pad_rows(x.data(), geo.batch * geo.cin, geo.len, spec.pad_left, spec.pad_right, spec.pad_mode);
    let mut out = vec![0.0; geo.batch * geo.cout * geo.lout];
    let rows = geo.cin_g * geo.k;
    let direct = geo.k == 1 && spec.stride == 1;
    let tc = chunk_len(rows, geo.lout);
    let mut col = if direct { Vec::new() } else { vec![0.0; rows * tc] };
    let wd = w.data();
    for bi in 0..geo.batch {
        for grp in 0..spec.groups {
            let xg = &xp[(bi * geo.cin + grp * geo.cin_g) * geo.lp..(bi * geo.cin + (grp + 1) * geo.cin_g) * geo.lp];
            let wg = &wd[grp * geo.cout_g * rows..(grp + 1) * geo.cout_g * rows];
            let ob = (bi * geo.cout + grp * geo.cout_g) * geo.lout;
            if direct {
                gemm(
                    geo.cout_g, geo.cin_g, geo.lout, wg, rows, 1, xg, geo.lp, 1, 0.0,
                    &mut out[ob..], geo.lout, 1,
                );
                continue;
            }
            let mut t0 = 0;
            while t0 < geo.lout {
                let tn = tc.min(geo.lout - t0);
                fill_col(&mut col[..rows * tn], xg, &geo, spec, t0, tn);
                gemm(
                    geo.cout_g, rows, tn, wg, rows, 1, &col[..rows * tn], tn, 1, 0.0,
                    &mut out[ob + t0..], geo.lout, 1,
                );
                t0 += tn;
            }
        }
    }
    if let Some(b) = b {
        assert_eq!(b.shape(), &[geo.cout]);
        for bi in 0..geo.batch {
            for (co, &bv) in b.data().iter().enumerate() {
                let o = (bi * geo.cout + co) * geo.lout;
                out[o..o + geo.lout].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(vec![geo.batch, geo.cout, geo.lout], out)
}

/// Gradients of a 1-D convolution with respect to input, weight and bias.
pub struct Conv1dGrads {
    pub input: Option<Tensor>,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    has_bias: bool,
    spec: &Conv1dSpec,
    gout: &Tensor,
    need_input: bool,
    need_weight: bool,
) -> Conv1dGrads {
    let geo = conv1d_geom(x, w, spec);
    assert_eq!(gout.shape(), &[geo.batch, geo.cout, geo.lout]);
    let god = gout.data();
    let rows = geo.cin_g * geo.k;
    let direct = geo.k == 1 && spec.stride == 1;
    let xp = if need_weight {
        pad_rows(x.data(), geo.batch * geo.cin, geo.len, spec.pad_left, spec.pad_right, spec.pad_mode)
    } else {
        Vec::new()
    };
    let mut gxp = if need_input { vec![0.0; geo.batch * geo.cin * geo.lp] } else { Vec::new() };
    let mut gw = if need_weight { vec![0.0; w.numel()] } else { Vec::new() };
    let tc = chunk_len(rows, geo.lout);
    let mut col = vec![0.0; if direct { 0 } else { rows * tc }];
    let mut dcol = vec![0.0; if direct { 0 } else { rows * tc }];
    let wd = w.data();
    for bi in 0..geo.batch {
        for grp in 0..spec.groups {
            let xoff = (bi * geo.cin + grp * geo.cin_g) * geo.lp;
            let xend = xoff + geo.cin_g * geo.lp;
            let wg = &wd[grp * geo.cout_g * rows..(grp + 1) * geo.cout_g * rows];
            let ob = (bi * geo.cout + grp * geo.cout_g) * geo.lout;
            let go = &god[ob..ob + geo.cout_g * geo.lout];
            if direct {
                if need_weight {
                    gemm(
                        geo.cout_g, geo.lout, geo.cin_g, go, geo.lout, 1, &xp[xoff..xend], 1, geo.lp, 1.0,
                        &mut gw[grp * geo.cout_g * rows..], rows, 1,
                    );
                }
                if need_input {
                    gemm(
                        geo.cin_g, geo.cout_g, geo.lout, wg, 1, rows, go, geo.lout, 1, 1.0,
                        &mut gxp[xoff..xend], geo.lp, 1,
                    );
                }
                continue;
            }
            let mut t0 = 0;
            while t0 < geo.lout {
                let tn = tc.min(geo.lout - t0);
                if need_weight {
                    fill_col(&mut col[..rows * tn], &xp[xoff..xend], &geo, spec, t0, tn);
                    gemm(
                        geo.cout_g, tn, rows, &go[t0..], geo.lout, 1, &col[..rows * tn], 1, tn, 1.0,
                        &mut gw[grp * geo.cout_g * rows..], rows, 1,
                    );
                }
                if need_input {
                    let dc = &mut dcol[..rows * tn];
                    gemm(geo.cin_g * geo.k, geo.cout_g, tn, wg, 1, rows, &go[t0..], geo.lout, 1, 0.0, dc, tn, 1);
                    let gg = &mut gxp[xoff..xend];
                    for ci in 0..geo.cin_g {
                        for kk in 0..geo.k {
                            let src = &dc[(ci * geo.k + kk) * tn..(ci * geo.k + kk + 1) * tn];
                            let base = ci * geo.lp + kk * spec.dilation;
                            if spec.stride == 1 {
                                let dst = &mut gg[base + t0..base + t0 + tn];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += s;
                                }
                            } else {
                                for (j, s) in src.iter().enumerate() {
                                    gg[base + (t0 + j) * spec.stride] += s;
                                }
                            }
                        }
                    }
                }
                t0 += tn;
            }
        }
    }
    let bias = has_bias.then(|| {
        let mut gb = vec![0.0; geo.cout];
        for bi in 0..geo.batch {
            for (co, g) in gb.iter_mut().enumerate() {
                let o = (bi * geo.cout + co) * geo.lout;
                *g += god[o..o + geo.lout].iter().sum::<f64>();
            }
        }
        Tensor::new(vec![geo.cout], gb)
    });
    Conv1dGrads {
        input: need_input.then(|| {
            let g = unpad_rows_add(&gxp, geo.batch * geo.cin, geo.len, spec.pad_left, spec.pad_right, spec.pad_mode);
            Tensor::new(x.shape().to_vec(), g)
        }),
        weight: need_weight.then(|| Tensor::new(w.shape().to_vec(), gw)),
        bias,
    }
}

struct Conv2dGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    hout: usize,
    wout: usize,
}

fn conv2d_geom(x: &Tensor, w: &Tensor, spec: &Conv2dSpec) -> Conv2dGeom {
    assert_eq!(x.ndim(), 4, "conv2d input must be [batch, channels, height, width]");
    assert_eq!(w.ndim(), 4, "conv2d weight must be [out, in, kh, kw]");
    assert_eq!(x.dim(1), w.dim(1), "conv2d channel mismatch");
    let (h, wd) = (x.dim(2), x.dim(3));
    let (kh, kw) = (w.dim(2), w.dim(3));
    let (pt, pb, pl, pr) = spec.pad;
    let (sh, sw) = spec.stride;
    assert!(h + pt + pb >= kh && wd + pl + pr >= kw, "conv2d input smaller than kernel");
    Conv2dGeom {
        batch: x.dim(0),
        cin: x.dim(1),
        h,
        w: wd,
        cout: w.dim(0),
        kh,
        kw,
        hout: (h + pt + pb - kh) / sh + 1,
        wout: (wd + pl + pr - kw) / sw + 1,
    }
}

/// Build the [cin*kh*kw, positions] patch matrix for positions p0..p0+pn.
fn fill_col2d(col: &mut [f64], xb: &[f64], geo: &Conv2dGeom, spec: &Conv2dSpec, p0: usize, pn: usize) {
    let (pt, _, pl, _) = spec.pad;
    let (sh, sw) = spec.stride;
    for ci in 0..geo.cin {
        for a in 0..geo.kh {
            for bb in 0..geo.kw {
                let r = (ci * geo.kh + a) * geo.kw + bb;
                let dst = &mut col[r * pn..(r + 1) * pn];
                for (j, d) in dst.iter_mut().enumerate() {
                    let p = p0 + j;
                    let (oh, ow) = (p / geo.wout, p % geo.wout);
                    let ih = (oh * sh + a) as isize - pt as isize;
                    let iw = (ow * sw + bb) as isize - pl as isize;
                    *d = if ih >= 0 && iw >= 0 && (ih as usize) < geo.h && (iw as usize) < geo.w {
                        xb[(ci * geo.h + ih as usize) * geo.w + iw as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}

pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: &Conv2dSpec) -> Tensor {
    let geo = conv2d_geom(x, w, spec);
    let rows = geo.cin * geo.kh * geo.kw;
    let npos = geo.hout * geo.wout;
    let pc = chunk_len(rows, npos);
    let mut col = vec![0.0; rows * pc];
    let mut out = vec![0.0; geo.batch * geo.cout * npos];
    let xs = geo.cin * geo.h * geo.w;
    for bi in 0..geo.batch {
        let xb = &x.data()[bi * xs..(bi + 1) * xs];
        let mut p0 = 0;
        while p0 < npos {
            let pn = pc.min(npos - p0);
            fill_col2d(&mut col[..rows * pn], xb, &geo, spec, p0, pn);
            gemm(
                geo.cout, rows, pn, w.data(), rows, 1, &col[..rows * pn], pn, 1, 0.0,
                &mut out[bi * geo.cout * npos + p0..], npos, 1,
            );
            p0 += pn;
        }
        if let Some(b) = b {
            for (co, &bv) in b.data().iter().enumerate() {
                let o = (bi * geo.cout + co) * npos;
                out[o..o + npos].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(vec![geo.batch, geo.cout, geo.hout, geo.wout], out)
}

pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    has_bias: bool,
    spec: &Conv2dSpec,
    gout: &Tensor,
    need_input: bool,
    need_weight: bool,
) -> Conv1dGrads {
    let geo = conv2d_geom(x, w, spec);
    let rows = geo.cin * geo.kh * geo.kw;
    let npos = geo.hout * geo.wout;
    let pc = chunk_len(rows, npos);
    let mut col = vec![0.0; rows * pc];
    let mut dcol = vec![0.0; rows * pc];
    let xs = geo.cin * geo.h * geo.w;
    let mut gx = if need_input { vec![0.0; x.numel()] } else { Vec::new() };
    let mut gw = if need_weight { vec![0.0; w.numel()] } else { Vec::new() };
    let (pt, _, pl, _) = spec.pad;
    let (sh, sw) = spec.stride;
    let god = gout.data();
    for bi in 0..geo.batch {
        let xb = &x.data()[bi * xs..(bi + 1) * xs];
        let go = &god[bi * geo.cout * npos..(bi + 1) * geo.cout * npos];
        let mut p0 = 0;
        while p0 < npos {
            let pn = pc.min(npos - p0);
            if need_weight {
                fill_col2d(&mut col[..rows * pn], xb, &geo, spec, p0, pn);
                gemm(geo.cout, pn, rows, &go[p0..], npos, 1, &col[..rows * pn], 1, pn, 1.0, &mut gw, rows, 1);
            }
            if need_input {
                let dc = &mut dcol[..rows * pn];
                gemm(rows, geo.cout, pn, w.data(), 1, rows, &go[p0..], npos, 1, 0.0, dc, pn, 1);
                let gxb = &mut gx[bi * xs..(bi + 1) * xs];
                for ci in 0..geo.cin {
                    for a in 0..geo.kh {
                        for bb in 0..geo.kw {
                            let r = (ci * geo.kh + a) * geo.kw + bb;
                            for (j, &g) in dc[r * pn..(r + 1) * pn].iter().enumerate() {
                                let p = p0 + j;
                                let (oh, ow) = (p / geo.wout, p % geo.wout);
                                let ih = (oh * sh + a) as isize - pt as isize;
                                let iw = (ow * sw + bb) as isize - pl as isize;
                                if ih >= 0 && iw >= 0 && (ih as usize) < geo.h && (iw as usize) < geo.w {
                                    gxb[(ci * geo.h + ih as usize) * geo.w + iw as usize] += g;
                                }
                            }
                        }
                    }
                }
            }
            p0 += pn;
        }
    }
    let bias = has_bias.then(|| {
        let mut gb = vec![0.0; geo.cout];
        for bi in 0..geo.batch {
            for (co, g) in gb.iter_mut().enumerate() {
                let o = (bi * geo.cout + co) * npos;
                *g += god[o..o + npos].iter().sum::<f64>();
            }
        }
        Tensor::new(vec![geo.cout], gb)
    });
    Conv1dGrads {
        input: need_input.then(|| Tensor::new(x.shape().to_vec(), gx)),
        weight: need_weight.then(|| Tensor::new(w.shape().to_vec(), gw)),
        bias,
    }
}

/// Average pooling over the last axis with reflection padding.
pub fn avg_pool1d(x: &[f64], len: usize, kernel: usize, stride: usize, pad: usize) -> Vec<f64> {
    let rows = x.len() / len;
    let xp = pad_rows(x, rows, len, pad, pad, PadMode::Reflect);
    let lp = len + 2 * pad;
    let lout = (lp - kernel) / stride + 1;
    let inv = 1.0 / kernel as f64;
    let mut out = vec![0.0; rows * lout];
    for r in 0..rows {
        let src = &xp[r * lp..(r + 1) * lp];
        for t in 0..lout {
            out[r * lout + t] = src[t * stride..t * stride + kernel].iter().sum::<f64>() * inv;
        }
    }
    out
}

pub fn avg_pool1d_backward(g: &[f64], len: usize, kernel: usize, stride: usize, pad: usize) -> Vec<f64> {
    let lp = len + 2 * pad;
    let lout = (lp - kernel) / stride + 1;
    let rows = g.len() / lout;
    let inv = 1.0 / kernel as f64;
    let mut gp = vec![0.0; rows * lp];
    for r in 0..rows {
        for t in 0..lout {
            let v = g[r * lout + t] * inv;
            for d in &mut gp[r * lp + t * stride..r * lp + t * stride + kernel] {
                *d += v;
            }
        }
    }
    unpad_rows_add(&gp, rows, len, pad, pad, PadMode::Reflect)
}

/// Per-channel (axis 1) standardization using the statistics of the batch.
pub fn batch_norm_forward(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let (b, c) = (x.dim(0), x.dim(1));
    let inner: usize = x.shape()[2..].iter().product();
    let n = (b * inner) as f64;
    let xd = x.data();
    let mut out = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let slices = (0..b).map(|bi| (bi * c + ch) * inner);
        let mean = slices.clone().map(|o| xd[o..o + inner].iter().sum::<f64>()).sum::<f64>() / n;
        let var = slices
            .clone()
            .map(|o| xd[o..o + inner].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
            .sum::<f64>()
            / n;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[ch] = is;
        for o in slices {
            for i in o..o + inner {
                out[i] = (xd[i] - mean) * is;
            }
        }
    }
    (Tensor::new(x.shape().to_vec(), out), inv_std)
}

pub fn batch_norm_backward(xhat: &Tensor, inv_std: &[f64], g: &Tensor) -> Tensor {
    let (b, c) = (xhat.dim(0), xhat.dim(1));
    let inner: usize = xhat.shape()[2..].iter().product();
    let n = (b * inner) as f64;
    let (xh, gd) = (xhat.data(), g.data());
    let mut out = vec![0.0; xhat.numel()];
    for ch in 0..c {
        let slices = (0..b).map(|bi| (bi * c + ch) * inner);
        let mut sg = 0.0;
        let mut sgx = 0.0;
        for o in slices.clone() {
            for i in o..o + inner {
                sg += gd[i];
                sgx += gd[i] * xh[i];
            }
        }
        for o in slices {
            for i in o..o + inner {
                out[i] = inv_std[ch] / n * (n * gd[i] - sg - xh[i] * sgx);
            }
        }
    }
    Tensor::new(xhat.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv1d(x: &Tensor, w: &Tensor, spec: &Conv1dSpec) -> Tensor {
        let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, cin_g, k) = (w.dim(0), w.dim(1), w.dim(2));
        let cout_g = cout / spec.groups;
        let lout = spec.output_len(len, k);
        let mut out = vec![0.0; b * cout * lout];
        for bi in 0..b {
            for co in 0..cout {
                let grp = co / cout_g;
                for t in 0..lout {
                    let mut acc = 0.0;
                    for ci in 0..cin_g {
                        for kk in 0..k {
                            let pos = (t * spec.stride + kk * spec.dilation) as isize - spec.pad_left as isize;
                            if let Some(s) = source_index(pos, len, spec.pad_mode) {
                                acc += w.data()[(co * cin_g + ci) * k + kk]
                                    * x.data()[(bi * cin + grp * cin_g + ci) * len + s];
                            }
                        }
                    }
                    out[(bi * cout + co) * lout + t] = acc;
                }
            }
        }
        Tensor::new(vec![b, cout, lout], out)
    }

    fn lcg_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut s = seed;
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Tensor::new(shape.to_vec(), data)
    }

    #[test]
    fn reflect_index_folds() {
        let idx: Vec<_> = (-5..9).map(|i| source_index(i, 4, PadMode::Reflect).unwrap()).collect();
        assert_eq!(idx, vec![1, 2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(source_index(-3, 1, PadMode::Reflect), Some(0));
        assert_eq!(source_index(-1, 4, PadMode::Zero), None);
    }

    #[test]
    fn conv1d_matches_naive_over_geometries() {
        let cases = [
            (1, 2, 2, 3, 1, 1, 1, 1, PadMode::Zero, 17),
            (2, 4, 8, 5, 2, 3, 4, 4, PadMode::Reflect, 33),
            (1, 3, 6, 41, 4, 1, 3, 20, PadMode::Reflect, 90),
            (2, 2, 4, 1, 1, 1, 1, 0, PadMode::Zero, 10),
            (1, 4, 4, 3, 1, 4, 2, 4, PadMode::Zero, 25),
        ];
        for (i, &(b, cin, cout, k, stride, dil, groups, pad, mode, len)) in cases.iter().enumerate() {
            let spec = Conv1dSpec { stride, dilation: dil, groups, pad_left: pad, pad_right: pad, pad_mode: mode };
            let x = lcg_tensor(&[b, cin, len], i as u64);
            let w = lcg_tensor(&[cout, cin / groups, k], 100 + i as u64);
            let got = conv1d_forward(&x, &w, None, &spec);
            let want = naive_conv1d(&x, &w, &spec);
            assert_eq!(got.shape(), want.shape());
            for (a, e) in got.data().iter().zip(want.data()) {
                assert!((a - e).abs() < 1e-12, "case {i}");
            }
        }
    }

    #[test]
    fn conv1d_adjoint_identity() {
        // <conv(x), g> must equal <x, conv^T(g)> and <w, dW(g)>.
        let spec = Conv1dSpec { stride: 2, dilation: 2, groups: 2, pad_left: 3, pad_right: 2, pad_mode: PadMode::Reflect };
        let x = lcg_tensor(&[2, 4, 23], 1);
        let w = lcg_tensor(&[6, 2, 3], 2);
        let y = conv1d_forward(&x, &w, None, &spec);
        let g = lcg_tensor(y.shape(), 3);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let grads = conv1d_backward(&x, &w, false, &spec, &g, true, true);
        let via_x: f64 = x.data().iter().zip(grads.input.unwrap().data()).map(|(a, b)| a * b).sum();
        let via_w: f64 = w.data().iter().zip(grads.weight.unwrap().data()).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-10);
        assert!((lhs - via_w).abs() < 1e-10);
    }

    #[test]
    fn conv2d_adjoint_identity() {
        let spec = Conv2dSpec { stride: (1, 2), pad: (1, 1, 3, 4) };
        let x = lcg_tensor(&[2, 3, 7, 12], 4);
        let w = lcg_tensor(&[4, 3, 3, 8], 5);
        let y = conv2d_forward(&x, &w, None, &spec);
        assert_eq!(y.shape(), &[2, 4, 7, 6]);
        let g = lcg_tensor(y.shape(), 6);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let grads = conv2d_backward(&x, &w, false, &spec, &g, true, true);
        let via_x: f64 = x.data().iter().zip(grads.input.unwrap().data()).map(|(a, b)| a * b).sum();
        let via_w: f64 = w.data().iter().zip(grads.weight.unwrap().data()).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-10);
        assert!((lhs - via_w).abs() < 1e-10);
    }

    #[test]
    fn avg_pool_adjoint() {
        let x = lcg_tensor(&[3, 17], 9);
        let y = avg_pool1d(x.data(), 17, 4, 2, 1);
        assert_eq!(y.len(), 3 * 8);
        let g = lcg_tensor(&[3, 8], 10);
        let lhs: f64 = y.iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let gx = avg_pool1d_backward(g.data(), 17, 4, 2, 1);
        let rhs: f64 = x.data().iter().zip(&gx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
