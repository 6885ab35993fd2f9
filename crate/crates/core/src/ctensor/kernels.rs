//! Dense complex kernels shared by the graph's forward and backward passes.
//!
//! All kernels take split real/imaginary planes. Backward kernels accumulate
//! into gradient buffers laid out as `(dL/dRe, dL/dIm)` pairs, which for a
//! real loss is `2·dL/dz̄`; holomorphic ops therefore propagate by
//! multiplying with the conjugate of their derivative.

/// Geometry of a 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Output positions `o` whose input index `o*stride + k - padding` lies in `0..len`.
    fn valid(&self, k: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let s = self.stride as isize;
        let off = k as isize - self.padding as isize;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest o with o*s + off <= len-1
        let hi_incl = (len as isize - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, out_len as isize);
        let lo = lo.clamp(0, hi);
        lo as usize..hi as usize
    }
}

pub struct Planes<'a> {
    pub re: &'a [f64],
    pub im: &'a [f64],
}

pub struct PlanesMut<'a> {
    pub re: &'a mut [f64],
    pub im: &'a mut [f64],
}

/// Output columns `ow` for which every tap `ow*stride + kw - padding` lies in `0..in_w`.
fn interior(g: &ConvGeom, in_len: usize, out_len: usize) -> std::ops::Range<usize> {
    let first = g.valid(0, in_len, out_len);
    let last = g.valid(g.kernel - 1, in_len, out_len);
    let lo = first.start.max(last.start);
    let hi = first.end.min(last.end).max(lo);
    lo..hi
}

/// `y[ow] += Σ_kw w[kw]·x[ow*stride + kw - padding]` along one row.
#[allow(clippy::too_many_arguments)]
fn row_forward(
    g: &ConvGeom,
    inner: &std::ops::Range<usize>,
    wr: &[f64],
    wi: &[f64],
    xr: &[f64],
    xi: &[f64],
    yr: &mut [f64],
    yi: &mut [f64],
) {
    let (s, p, k) = (g.stride, g.padding, g.kernel);
    let edge = |ow: usize, yr: &mut [f64], yi: &mut [f64]| {
        for kw in 0..k {
            let j = (ow * s + kw) as isize - p as isize;
            if j >= 0 && (j as usize) < xr.len() {
                let (a, b) = (xr[j as usize], xi[j as usize]);
                yr[ow] += wr[kw] * a - wi[kw] * b;
                yi[ow] += wr[kw] * b + wi[kw] * a;
            }
        }
    };
    for ow in 0..inner.start {
        edge(ow, yr, yi);
    }
    if k == 3 {
        let (w0r, w1r, w2r, w0i, w1i, w2i) = (wr[0], wr[1], wr[2], wi[0], wi[1], wi[2]);
        for ow in inner.clone() {
            let j = ow * s - p;
            let (a0, a1, a2) = (xr[j], xr[j + 1], xr[j + 2]);
            let (b0, b1, b2) = (xi[j], xi[j + 1], xi[j + 2]);
            yr[ow] += w0r * a0 - w0i * b0 + w1r * a1 - w1i * b1 + w2r * a2 - w2i * b2;
            yi[ow] += w0r * b0 + w0i * a0 + w1r * b1 + w1i * a1 + w2r * b2 + w2i * a2;
        }
    } else {
        for ow in inner.clone() {
            let j = ow * s - p;
            let (mut ar, mut ai) = (0.0, 0.0);
            for kw in 0..k {
                let (a, b) = (xr[j + kw], xi[j + kw]);
                ar += wr[kw] * a - wi[kw] * b;
                ai += wr[kw] * b + wi[kw] * a;
            }
            yr[ow] += ar;
            yi[ow] += ai;
        }
    }
    for ow in inner.end..yr.len() {
        edge(ow, yr, yi);
    }
}

pub fn conv2d_forward(
    g: &ConvGeom,
    x: Planes,
    w: Planes,
    bias: Option<Planes>,
    out: PlanesMut,
) {
    let (oh_n, ow_n) = (g.out_h(), g.out_w());
    let k = g.kernel;
    let in_plane = g.in_h * g.in_w;
    let out_plane = oh_n * ow_n;
    let inner = interior(g, g.in_w, ow_n);
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            let ob = (b * g.out_ch + o) * out_plane;
            let (yr, yi) = (
                &mut out.re[ob..ob + out_plane],
                &mut out.im[ob..ob + out_plane],
            );
            match &bias {
                Some(bs) => {
                    yr.fill(bs.re[o]);
                    yi.fill(bs.im[o]);
                }
                None => {
                    yr.fill(0.0);
                    yi.fill(0.0);
                }
            }
            for c in 0..g.in_ch {
                let xb = (b * g.in_ch + c) * in_plane;
                for kh in 0..k {
                    let wix = ((o * g.in_ch + c) * k + kh) * k;
                    let (wr, wi) = (&w.re[wix..wix + k], &w.im[wix..wix + k]);
                    for oh in g.valid(kh, g.in_h, oh_n) {
                        let xrow = xb + (oh * g.stride + kh - g.padding) * g.in_w;
                        let yrow = oh * ow_n;
                        row_forward(
                            g,
                            &inner,
                            wr,
                            wi,
                            &x.re[xrow..xrow + g.in_w],
                            &x.im[xrow..xrow + g.in_w],
                            &mut yr[yrow..yrow + ow_n],
                            &mut yi[yrow..yrow + ow_n],
                        );
                    }
                }
            }
        }
    }
}

/// Row-level backward: `gw[kw] += Σ g·conj(x)`, `gx += g·conj(w)`.
#[allow(clippy::too_many_arguments)]
fn row_backward(
    g: &ConvGeom,
    inner: &std::ops::Range<usize>,
    wr: &[f64],
    wi: &[f64],
    xr: &[f64],
    xi: &[f64],
    dr: &[f64],
    di: &[f64],
    acc: &mut [(f64, f64)],
    mut gx: Option<(&mut [f64], &mut [f64])>,
) {
    let (s, p, k) = (g.stride, g.padding, g.kernel);
    let edge = |ow: usize, acc: &mut [(f64, f64)], gx: &mut Option<(&mut [f64], &mut [f64])>| {
        let (gr, gi) = (dr[ow], di[ow]);
        for kw in 0..k {
            let j = (ow * s + kw) as isize - p as isize;
            if j >= 0 && (j as usize) < xr.len() {
                let j = j as usize;
                acc[kw].0 += gr * xr[j] + gi * xi[j];
                acc[kw].1 += gi * xr[j] - gr * xi[j];
                if let Some((xr_g, xi_g)) = gx.as_mut() {
                    xr_g[j] += gr * wr[kw] + gi * wi[kw];
                    xi_g[j] += gi * wr[kw] - gr * wi[kw];
                }
            }
        }
    };
    for ow in 0..inner.start {
        edge(ow, acc, &mut gx);
    }
    for ow in inner.end..dr.len() {
        edge(ow, acc, &mut gx);
    }
    if k == 3 {
        let (mut a0r, mut a0i, mut a1r, mut a1i, mut a2r, mut a2i) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for ow in inner.clone() {
            let j = ow * s - p;
            let (gr, gi) = (dr[ow], di[ow]);
            let (x0r, x1r, x2r) = (xr[j], xr[j + 1], xr[j + 2]);
            let (x0i, x1i, x2i) = (xi[j], xi[j + 1], xi[j + 2]);
            a0r += gr * x0r + gi * x0i;
            a0i += gi * x0r - gr * x0i;
            a1r += gr * x1r + gi * x1i;
            a1i += gi * x1r - gr * x1i;
            a2r += gr * x2r + gi * x2i;
            a2i += gi * x2r - gr * x2i;
        }
        acc[0].0 += a0r;
        acc[0].1 += a0i;
        acc[1].0 += a1r;
        acc[1].1 += a1i;
        acc[2].0 += a2r;
        acc[2].1 += a2i;
        if let Some((gxr, gxi)) = gx {
            for ow in inner.clone() {
                let j = ow * s - p;
                let (gr, gi) = (dr[ow], di[ow]);
                gxr[j] += gr * wr[0] + gi * wi[0];
                gxi[j] += gi * wr[0] - gr * wi[0];
                gxr[j + 1] += gr * wr[1] + gi * wi[1];
                gxi[j + 1] += gi * wr[1] - gr * wi[1];
                gxr[j + 2] += gr * wr[2] + gi * wi[2];
                gxi[j + 2] += gi * wr[2] - gr * wi[2];
            }
        }
    } else {
        for ow in inner.clone() {
            let j = ow * s - p;
            let (gr, gi) = (dr[ow], di[ow]);
            for kw in 0..k {
                acc[kw].0 += gr * xr[j + kw] + gi * xi[j + kw];
                acc[kw].1 += gi * xr[j + kw] - gr * xi[j + kw];
            }
        }
        if let Some((gxr, gxi)) = gx {
            for ow in inner.clone() {
                let j = ow * s - p;
                let (gr, gi) = (dr[ow], di[ow]);
                for kw in 0..k {
                    gxr[j + kw] += gr * wr[kw] + gi * wi[kw];
                    gxi[j + kw] += gi * wr[kw] - gr * wi[kw];
                }
            }
        }
    }
}

/// Accumulates gradients of a conv2d into whichever of `gx`, `gw`, `gb` are present.
pub fn conv2d_backward(
    g: &ConvGeom,
    x: Planes,
    w: Planes,
    gy: Planes,
    mut gx: Option<PlanesMut>,
    mut gw: Option<PlanesMut>,
    mut gb: Option<PlanesMut>,
) {
    let (oh_n, ow_n) = (g.out_h(), g.out_w());
    let k = g.kernel;
    let in_plane = g.in_h * g.in_w;
    let out_plane = oh_n * ow_n;
    let inner = interior(g, g.in_w, ow_n);
    let mut acc = vec![(0.0, 0.0); k];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            let ob = (b * g.out_ch + o) * out_plane;
            let (dr, di) = (&gy.re[ob..ob + out_plane], &gy.im[ob..ob + out_plane]);
            if let Some(gb) = gb.as_mut() {
                gb.re[o] += dr.iter().sum::<f64>();
                gb.im[o] += di.iter().sum::<f64>();
            }
            for c in 0..g.in_ch {
                let xb = (b * g.in_ch + c) * in_plane;
                for kh in 0..k {
                    let wix = ((o * g.in_ch + c) * k + kh) * k;
                    let (wr, wi) = (&w.re[wix..wix + k], &w.im[wix..wix + k]);
                    acc.fill((0.0, 0.0));
                    for oh in g.valid(kh, g.in_h, oh_n) {
                        let xrow = xb + (oh * g.stride + kh - g.padding) * g.in_w;
                        let yrow = oh * ow_n;
                        let gx_row = gx
                            .as_mut()
                            .map(|p| (&mut p.re[xrow..xrow + g.in_w], &mut p.im[xrow..xrow + g.in_w]));
                        row_backward(
                            g,
                            &inner,
                            wr,
                            wi,
                            &x.re[xrow..xrow + g.in_w],
                            &x.im[xrow..xrow + g.in_w],
                            &dr[yrow..yrow + ow_n],
                            &di[yrow..yrow + ow_n],
                            &mut acc,
                            gx_row,
                        );
                    }
                    if let Some(gw) = gw.as_mut() {
                        for kw in 0..k {
                            gw.re[wix + kw] += acc[kw].0;
                            gw.im[wix + kw] += acc[kw].1;
                        }
                    }
                }
            }
        }
    }
}

/// Position-wise linear map over the middle axis of `[B, D, T]`: `y[b,o,t] = Σ_d W[o,d]·x[b,d,t] + bias[o]`.
pub fn linear_time_forward(
    (batch, din, dout, t_len): (usize, usize, usize, usize),
    x: Planes,
    w: Planes,
    bias: Option<Planes>,
    out: PlanesMut,
) {
    for b in 0..batch {
        for o in 0..dout {
            let ob = (b * dout + o) * t_len;
            let (yr, yi) = (&mut out.re[ob..ob + t_len], &mut out.im[ob..ob + t_len]);
            match &bias {
                Some(bs) => {
                    yr.fill(bs.re[o]);
                    yi.fill(bs.im[o]);
                }
                None => {
                    yr.fill(0.0);
                    yi.fill(0.0);
                }
            }
            for d in 0..din {
                let (wr, wi) = (w.re[o * din + d], w.im[o * din + d]);
                let xb = (b * din + d) * t_len;
                let (xr, xi) = (&x.re[xb..xb + t_len], &x.im[xb..xb + t_len]);
                for t in 0..t_len {
                    yr[t] += wr * xr[t] - wi * xi[t];
                    yi[t] += wr * xi[t] + wi * xr[t];
                }
            }
        }
    }
}

pub fn linear_time_backward(
    (batch, din, dout, t_len): (usize, usize, usize, usize),
    x: Planes,
    w: Planes,
    gy: Planes,
    mut gx: Option<PlanesMut>,
    mut gw: Option<PlanesMut>,
    mut gb: Option<PlanesMut>,
) {
    for b in 0..batch {
        for o in 0..dout {
            let ob = (b * dout + o) * t_len;
            let (dr, di) = (&gy.re[ob..ob + t_len], &gy.im[ob..ob + t_len]);
            if let Some(gb) = gb.as_mut() {
                gb.re[o] += dr.iter().sum::<f64>();
                gb.im[o] += di.iter().sum::<f64>();
            }
            for d in 0..din {
                let wix = o * din + d;
                let (wr, wi) = (w.re[wix], w.im[wix]);
                let xb = (b * din + d) * t_len;
                let (xr, xi) = (&x.re[xb..xb + t_len], &x.im[xb..xb + t_len]);
                if let Some(gw) = gw.as_mut() {
                    let (mut ar, mut ai) = (0.0, 0.0);
                    for t in 0..t_len {
                        ar += dr[t] * xr[t] + di[t] * xi[t];
                        ai += di[t] * xr[t] - dr[t] * xi[t];
                    }
                    gw.re[wix] += ar;
                    gw.im[wix] += ai;
                }
                if let Some(gx) = gx.as_mut() {
                    let (gxr, gxi) = (&mut gx.re[xb..xb + t_len], &mut gx.im[xb..xb + t_len]);
                    for t in 0..t_len {
                        gxr[t] += dr[t] * wr + di[t] * wi;
                        gxi[t] += di[t] * wr - dr[t] * wi;
                    }
                }
            }
        }
    }
}

/// `[m,k] × [k,n]` complex matrix product.
pub fn matmul_forward(m: usize, k: usize, n: usize, a: Planes, b: Planes, out: PlanesMut) {
    out.re.fill(0.0);
    out.im.fill(0.0);
    for i in 0..m {
        for p in 0..k {
            let (ar, ai) = (a.re[i * k + p], a.im[i * k + p]);
            let (br, bi) = (&b.re[p * n..(p + 1) * n], &b.im[p * n..(p + 1) * n]);
            let (yr, yi) = (
                &mut out.re[i * n..(i + 1) * n],
                &mut out.im[i * n..(i + 1) * n],
            );
            for j in 0..n {
                yr[j] += ar * br[j] - ai * bi[j];
                yi[j] += ar * bi[j] + ai * br[j];
            }
        }
    }
}

/// `gA += gC·Bᴴ`, `gB += Aᴴ·gC`.
pub fn matmul_backward(
    m: usize,
    k: usize,
    n: usize,
    a: Planes,
    b: Planes,
    gc: Planes,
    mut ga: Option<PlanesMut>,
    mut gb: Option<PlanesMut>,
) {
    for i in 0..m {
        for p in 0..k {
            let (ar, ai) = (a.re[i * k + p], a.im[i * k + p]);
            let (mut sr, mut si) = (0.0, 0.0);
            for j in 0..n {
                let (gr, gi) = (gc.re[i * n + j], gc.im[i * n + j]);
                let (br, bi) = (b.re[p * n + j], b.im[p * n + j]);
                sr += gr * br + gi * bi;
                si += gi * br - gr * bi;
                if let Some(gb) = gb.as_mut() {
                    gb.re[p * n + j] += ar * gr + ai * gi;
                    gb.im[p * n + j] += ar * gi - ai * gr;
                }
            }
            if let Some(ga) = ga.as_mut() {
                ga.re[i * k + p] += sr;
                ga.im[i * k + p] += si;
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vals(n: usize, seed: u64) -> Vec<f64> {
        (0..n).map(|i| (((i as u64 + 1) * (seed * 2 + 7919)) % 1013) as f64 / 506.5 - 1.0).collect()
    }

    proptest! {
        #[test]
        fn row_kernels_match_direct_loops(
            batch in 1usize..3, in_ch in 1usize..3, out_ch in 1usize..3,
            in_h in 1usize..9, in_w in 1usize..12, kernel in 1usize..5,
            stride in 1usize..4, padding in 0usize..3, seed in 0u64..100,
        ) {
            prop_assume!(in_h + 2 * padding >= kernel && in_w + 2 * padding >= kernel);
            let g = ConvGeom { batch, in_ch, out_ch, in_h, in_w, kernel, stride, padding };
            let nx = batch * in_ch * in_h * in_w;
            let nw = out_ch * in_ch * kernel * kernel;
            let ny = batch * out_ch * g.out_h() * g.out_w();
            let (xr, xi, wr, wi) = (vals(nx, seed), vals(nx, seed + 1), vals(nw, seed + 2), vals(nw, seed + 3));
            let (br, bi) = (vals(out_ch, seed + 4), vals(out_ch, seed + 5));
            let (gr, gi) = (vals(ny, seed + 6), vals(ny, seed + 7));
            let p = |r: &'_ [f64], i: &'_ [f64]| -> (Vec<f64>, Vec<f64>) { (r.to_vec(), i.to_vec()) };
            let mut fast = (vec![0.0; ny], vec![0.0; ny]);
            let mut slow = p(&fast.0, &fast.1);
            conv2d_forward(&g, Planes { re: &xr, im: &xi }, Planes { re: &wr, im: &wi }, Some(Planes { re: &br, im: &bi }), PlanesMut { re: &mut fast.0, im: &mut fast.1 });
            reference::conv2d_forward_direct(&g, Planes { re: &xr, im: &xi }, Planes { re: &wr, im: &wi }, Some(Planes { re: &br, im: &bi }), PlanesMut { re: &mut slow.0, im: &mut slow.1 });
            for (a, b) in fast.0.iter().chain(&fast.1).zip(slow.0.iter().chain(&slow.1)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let mut f = [(vec![0.0; nx], vec![0.0; nx]), (vec![0.0; nw], vec![0.0; nw]), (vec![0.0; out_ch], vec![0.0; out_ch])];
            let mut s = f.clone();
            for (bufs, direct) in [(&mut f, false), (&mut s, true)] {
                let [gx, gw, gb] = bufs;
                let args = (
                    Planes { re: &xr, im: &xi },
                    Planes { re: &wr, im: &wi },
                    Planes { re: &gr, im: &gi },
                    Some(PlanesMut { re: &mut gx.0, im: &mut gx.1 }),
                    Some(PlanesMut { re: &mut gw.0, im: &mut gw.1 }),
                    Some(PlanesMut { re: &mut gb.0, im: &mut gb.1 }),
                );
                if direct {
                    reference::conv2d_backward_direct(&g, args.0, args.1, args.2, args.3, args.4, args.5);
                } else {
                    conv2d_backward(&g, args.0, args.1, args.2, args.3, args.4, args.5);
                }
            }
            for (a, b) in f.iter().zip(&s) {
                for (u, v) in a.0.iter().chain(&a.1).zip(b.0.iter().chain(&b.1)) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
