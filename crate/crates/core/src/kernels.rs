//! Compute kernels behind the tensor ops.
//!
//! Every kernel has a sequential implementation in [`seq`]; the `parallel`
//! feature adds rayon versions in [`par`] that split work over independent
//! output rows only. Each row is produced by the same worker function in
//! both modes, so sequential and parallel results are bit-identical. The
//! top-level functions dispatch on the feature flag and input size.

use crate::scalar::Scalar;

/// Work threshold (multiply-accumulate count) below which the dispatchers
/// stay sequential even when the `parallel` feature is enabled.
pub const PAR_MIN_WORK: usize = 32 * 1024;

#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Dot product with a fixed four-accumulator reduction order.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (F::zero(), F::zero(), F::zero(), F::zero());
    for c in 0..chunks {
        let i = c * 4;
        s0 = s0 + a[i] * b[i];
        s1 = s1 + a[i + 1] * b[i + 1];
        s2 = s2 + a[i + 2] * b[i + 2];
        s3 = s3 + a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in chunks * 4..n {
        s = s + a[i] * b[i];
    }
    s
}

/// Sum of all elements in a fixed sequential order.
pub fn sum_all<F: Scalar>(x: &[F]) -> F {
    let mut s = F::zero();
    for &v in x {
        s = s + v;
    }
    s
}

/// Column sums of an `[m, n]` matrix, accumulated row by row.
pub fn col_sums<F: Scalar>(x: &[F], m: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(out.len(), n);
    for i in 0..m {
        axpy(F::one(), &x[i * n..(i + 1) * n], out);
    }
}

// ---------------------------------------------------------------------------
// Row workers shared by the sequential and parallel paths.
// ---------------------------------------------------------------------------

#[inline]
fn mm_nn_row<F: Scalar>(a_row: &[F], b: &[F], k: usize, n: usize, out_row: &mut [F]) {
    for l in 0..k {
        axpy(a_row[l], &b[l * n..(l + 1) * n], out_row);
    }
}

#[inline]
fn mm_nt_row<F: Scalar>(a_row: &[F], b: &[F], k: usize, n: usize, out_row: &mut [F]) {
    for (j, o) in out_row.iter_mut().enumerate().take(n) {
        *o = *o + dot(a_row, &b[j * k..(j + 1) * k]);
    }
}

#[inline]
fn mm_tn_row<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, l: usize, out_row: &mut [F]) {
    for i in 0..m {
        axpy(a[i * k + l], &b[i * n..(i + 1) * n], out_row);
    }
}

#[inline]
fn gelu_val<F: Scalar>(x: F) -> F {
    // tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))
    let c = F::from_f64(0.797_884_560_802_865_4);
    let k = F::from_f64(0.044_715);
    let half = F::from_f64(0.5);
    half * x * (F::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
fn gelu_grad_val<F: Scalar>(x: F) -> F {
    let c = F::from_f64(0.797_884_560_802_865_4);
    let k = F::from_f64(0.044_715);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * x * sech2 * c * (F::one() + three * k * x * x)
}

#[inline]
fn softmax_row<F: Scalar>(x_row: &[F], group: usize, out_row: &mut [F]) {
    for (xg, og) in x_row.chunks(group).zip(out_row.chunks_mut(group)) {
        let mut mx = xg[0];
        for &v in &xg[1..] {
            if v > mx {
                mx = v;
            }
        }
        let mut s = F::zero();
        for (o, &v) in og.iter_mut().zip(xg) {
            let e = (v - mx).exp();
            *o = e;
            s = s + e;
        }
        let inv = F::one() / s;
        for o in og.iter_mut() {
            *o = *o * inv;
        }
    }
}

#[inline]
fn softmax_grad_row<F: Scalar>(p_row: &[F], g_row: &[F], group: usize, out_row: &mut [F]) {
    for ((pg, gg), og) in p_row
        .chunks(group)
        .zip(g_row.chunks(group))
        .zip(out_row.chunks_mut(group))
    {
        let s = dot(pg, gg);
        for ((o, &p), &g) in og.iter_mut().zip(pg).zip(gg) {
            *o = *o + p * (g - s);
        }
    }
}

#[inline]
fn layer_norm_row<F: Scalar>(x_row: &[F], gain: &[F], bias: &[F], eps: F, out_row: &mut [F]) {
    let n = F::from_f64(x_row.len() as f64);
    let mean = sum_all(x_row) / n;
    let mut var = F::zero();
    for &v in x_row {
        let d = v - mean;
        var = var + d * d;
    }
    var = var / n;
    let inv = F::one() / (var + eps).sqrt();
    for ((o, &v), (&g, &b)) in out_row.iter_mut().zip(x_row).zip(gain.iter().zip(bias)) {
        *o = (v - mean) * inv * g + b;
    }
}

/// Accumulates dL/dx for one layer-norm row into `dx_row`; returns the
/// per-row normalized values so gain/bias grads can reuse them.
#[inline]
fn layer_norm_grad_row<F: Scalar>(
    x_row: &[F],
    gain: &[F],
    g_row: &[F],
    eps: F,
    dx_row: &mut [F],
    dgain: &mut [F],
    dbias: &mut [F],
) {
    let nf = F::from_f64(x_row.len() as f64);
    let mean = sum_all(x_row) / nf;
    let mut var = F::zero();
    for &v in x_row {
        let d = v - mean;
        var = var + d * d;
    }
    var = var / nf;
    let inv = F::one() / (var + eps).sqrt();

    // dxh_i = g_i * gain_i ; dx = inv * (dxh - mean(dxh) - xh * mean(dxh * xh))
    let mut mean_dxh = F::zero();
    let mut mean_dxh_xh = F::zero();
    for i in 0..x_row.len() {
        let xh = (x_row[i] - mean) * inv;
        let dxh = g_row[i] * gain[i];
        mean_dxh = mean_dxh + dxh;
        mean_dxh_xh = mean_dxh_xh + dxh * xh;
    }
    mean_dxh = mean_dxh / nf;
    mean_dxh_xh = mean_dxh_xh / nf;
    for i in 0..x_row.len() {
        let xh = (x_row[i] - mean) * inv;
        let dxh = g_row[i] * gain[i];
        dx_row[i] = dx_row[i] + inv * (dxh - mean_dxh - xh * mean_dxh_xh);
        dgain[i] = dgain[i] + g_row[i] * xh;
        dbias[i] = dbias[i] + g_row[i];
    }
}

/// Grouped 1-D convolution over time for one output row (one time step).
/// Input is `[t_len, channels]` row-major, weight is `[groups, opg, ipg, k]`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn conv1d_row<F: Scalar>(
    input: &[F],
    weight: &[F],
    bias: &[F],
    t_len: usize,
    channels: usize,
    groups: usize,
    k: usize,
    pad_left: usize,
    t: usize,
    out_row: &mut [F],
) {
    let opg = channels / groups;
    let ipg = channels / groups;
    for g in 0..groups {
        for o in 0..opg {
            let ch = g * opg + o;
            let w_base = (g * opg + o) * ipg * k;
            let mut acc = bias[ch];
            for ic in 0..ipg {
                let cin = g * ipg + ic;
                let w_off = w_base + ic * k;
                for kk in 0..k {
                    let ti = t as isize + kk as isize - pad_left as isize;
                    if ti >= 0 && (ti as usize) < t_len {
                        acc = acc + weight[w_off + kk] * input[ti as usize * channels + cin];
                    }
                }
            }
            out_row[ch] = acc;
        }
    }
}

/// dL/dinput for one input row of the grouped convolution.
#[inline]
#[allow(clippy::too_many_arguments)]
fn conv1d_grad_input_row<F: Scalar>(
    gout: &[F],
    weight: &[F],
    t_len: usize,
    channels: usize,
    groups: usize,
    k: usize,
    pad_left: usize,
    tin: usize,
    dx_row: &mut [F],
) {
    let opg = channels / groups;
    let ipg = channels / groups;
    for g in 0..groups {
        for ic in 0..ipg {
            let cin = g * ipg + ic;
            let mut acc = F::zero();
            for kk in 0..k {
                let t = tin as isize - kk as isize + pad_left as isize;
                if t >= 0 && (t as usize) < t_len {
                    let gr = &gout[t as usize * channels..];
                    for o in 0..opg {
                        acc = acc + weight[((g * opg + o) * ipg + ic) * k + kk] * gr[g * opg + o];
                    }
                }
            }
            dx_row[cin] = dx_row[cin] + acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Sequential implementations.
// ---------------------------------------------------------------------------

pub mod seq {
    use super::*;

    pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
        for (i, out_row) in out.chunks_mut(n).enumerate().take(m) {
            mm_nn_row(&a[i * k..(i + 1) * k], b, k, n, out_row);
        }
    }

    pub fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
        for (i, out_row) in out.chunks_mut(n).enumerate().take(m) {
            mm_nt_row(&a[i * k..(i + 1) * k], b, k, n, out_row);
        }
    }

    pub fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
        for (l, out_row) in out.chunks_mut(n).enumerate().take(k) {
            mm_tn_row(a, b, m, k, n, l, out_row);
        }
    }

    pub fn gelu<F: Scalar>(x: &[F], out: &mut [F]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = gelu_val(v);
        }
    }

    pub fn gelu_grad<F: Scalar>(x: &[F], g: &[F], out: &mut [F]) {
        for ((o, &v), &gv) in out.iter_mut().zip(x).zip(g) {
            *o = *o + gelu_grad_val(v) * gv;
        }
    }

    pub fn softmax_groups<F: Scalar>(x: &[F], rows: usize, cols: usize, group: usize, out: &mut [F]) {
        for (xr, or) in x.chunks(cols).zip(out.chunks_mut(cols)).take(rows) {
            softmax_row(xr, group, or);
        }
    }

    pub fn softmax_groups_grad<F: Scalar>(
        p: &[F],
        g: &[F],
        rows: usize,
        cols: usize,
        group: usize,
        out: &mut [F],
    ) {
        for ((pr, gr), or) in p
            .chunks(cols)
            .zip(g.chunks(cols))
            .zip(out.chunks_mut(cols))
            .take(rows)
        {
            softmax_grad_row(pr, gr, group, or);
        }
    }

    pub fn layer_norm<F: Scalar>(
        x: &[F],
        gain: &[F],
        bias: &[F],
        rows: usize,
        cols: usize,
        eps: F,
        out: &mut [F],
    ) {
        for (xr, or) in x.chunks(cols).zip(out.chunks_mut(cols)).take(rows) {
            layer_norm_row(xr, gain, bias, eps, or);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn layer_norm_grad<F: Scalar>(
        x: &[F],
        gain: &[F],
        g: &[F],
        rows: usize,
        cols: usize,
        eps: F,
        dx: &mut [F],
        dgain: &mut [F],
        dbias: &mut [F],
    ) {
        for i in 0..rows {
            layer_norm_grad_row(
                &x[i * cols..(i + 1) * cols],
                gain,
                &g[i * cols..(i + 1) * cols],
                eps,
                &mut dx[i * cols..(i + 1) * cols],
                dgain,
                dbias,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv1d<F: Scalar>(
        input: &[F],
        weight: &[F],
        bias: &[F],
        t_len: usize,
        channels: usize,
        groups: usize,
        k: usize,
        pad_left: usize,
        out: &mut [F],
    ) {
        for (t, out_row) in out.chunks_mut(channels).enumerate().take(t_len) {
            conv1d_row(input, weight, bias, t_len, channels, groups, k, pad_left, t, out_row);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv1d_grad_input<F: Scalar>(
        gout: &[F],
        weight: &[F],
        t_len: usize,
        channels: usize,
        groups: usize,
        k: usize,
        pad_left: usize,
        dx: &mut [F],
    ) {
        for (tin, dx_row) in dx.chunks_mut(channels).enumerate().take(t_len) {
            conv1d_grad_input_row(gout, weight, t_len, channels, groups, k, pad_left, tin, dx_row);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv1d_grad_weight<F: Scalar>(
        gout: &[F],
        input: &[F],
        t_len: usize,
        channels: usize,
        groups: usize,
        k: usize,
        pad_left: usize,
        dw: &mut [F],
    ) {
        let opg = channels / groups;
        let ipg = channels / groups;
        for g in 0..groups {
            for o in 0..opg {
                let ch = g * opg + o;
                for ic in 0..ipg {
                    let cin = g * ipg + ic;
                    for kk in 0..k {
                        let mut acc = F::zero();
                        for t in 0..t_len {
                            let ti = t as isize + kk as isize - pad_left as isize;
                            if ti >= 0 && (ti as usize) < t_len {
                                acc = acc
                                    + gout[t * channels + ch] * input[ti as usize * channels + cin];
                            }
                        }
                        let idx = ((g * opg + o) * ipg + ic) * k + kk;
                        dw[idx] = dw[idx] + acc;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parallel implementations (rayon over independent output rows).
// ---------------------------------------------------------------------------

#[cfg(feature = "parallel")]
pub mod par {
    use super::*;
    use rayon::prelude::*;

    pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
        out.par_chunks_mut(n)
            .enumerate()
            .take(m)
            .for_each(|(i, out_row)| mm_nn_row(&a[i * k..(i + 1) * k], b, k, n, out_row));
    }

    pub fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
        out.par_chunks_mut(n)
            .enumerate()
            .take(m)
            .for_each(|(i, out_row)| mm_nt_row(&a[i * k..(i + 1) * k], b, k, n, out_row));
    }

    pub fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
        out.par_chunks_mut(n)
            .enumerate()
            .take(k)
            .for_each(|(l, out_row)| mm_tn_row(a, b, m, k, n, l, out_row));
    }

    pub fn gelu<F: Scalar>(x: &[F], out: &mut [F]) {
        out.par_chunks_mut(4096)
            .zip(x.par_chunks(4096))
            .for_each(|(oc, xc)| super::seq::gelu(xc, oc));
    }

    pub fn softmax_groups<F: Scalar>(x: &[F], rows: usize, cols: usize, group: usize, out: &mut [F]) {
        out.par_chunks_mut(cols)
            .zip(x.par_chunks(cols))
            .take(rows)
            .for_each(|(or, xr)| softmax_row(xr, group, or));
    }

    pub fn layer_norm<F: Scalar>(
        x: &[F],
        gain: &[F],
        bias: &[F],
        rows: usize,
        cols: usize,
        eps: F,
        out: &mut [F],
    ) {
        out.par_chunks_mut(cols)
            .zip(x.par_chunks(cols))
            .take(rows)
            .for_each(|(or, xr)| layer_norm_row(xr, gain, bias, eps, or));
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv1d<F: Scalar>(
        input: &[F],
        weight: &[F],
        bias: &[F],
        t_len: usize,
        channels: usize,
        groups: usize,
        k: usize,
        pad_left: usize,
        out: &mut [F],
    ) {
        out.par_chunks_mut(channels)
            .enumerate()
            .take(t_len)
            .for_each(|(t, out_row)| {
                conv1d_row(input, weight, bias, t_len, channels, groups, k, pad_left, t, out_row)
            });
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv1d_grad_input<F: Scalar>(
        gout: &[F],
        weight: &[F],
        t_len: usize,
        channels: usize,
        groups: usize,
        k: usize,
        pad_left: usize,
        dx: &mut [F],
    ) {
        dx.par_chunks_mut(channels)
            .enumerate()
            .take(t_len)
            .for_each(|(tin, dx_row)| {
                conv1d_grad_input_row(gout, weight, t_len, channels, groups, k, pad_left, tin, dx_row)
            });
    }
}

// ---------------------------------------------------------------------------
// Dispatchers used by the ops layer.
// ---------------------------------------------------------------------------

macro_rules! dispatch {
    ($work:expr, $par:expr, $seq:expr) => {{
        #[cfg(feature = "parallel")]
        {
            if $work >= PAR_MIN_WORK {
                return $par;
            }
        }
        let _ = $work;
        $seq
    }};
}

pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    dispatch!(
        m * k * n,
        par::matmul_nn(a, b, m, k, n, out),
        seq::matmul_nn(a, b, m, k, n, out)
    )
}

pub fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    dispatch!(
        m * k * n,
        par::matmul_nt(a, b, m, k, n, out),
        seq::matmul_nt(a, b, m, k, n, out)
    )
}

pub fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    dispatch!(
        m * k * n,
        par::matmul_tn(a, b, m, k, n, out),
        seq::matmul_tn(a, b, m, k, n, out)
    )
}

pub fn gelu<F: Scalar>(x: &[F], out: &mut [F]) {
    dispatch!(x.len(), par::gelu(x, out), seq::gelu(x, out))
}

pub fn gelu_grad<F: Scalar>(x: &[F], g: &[F], out: &mut [F]) {
    seq::gelu_grad(x, g, out)
}

pub fn softmax_groups<F: Scalar>(x: &[F], rows: usize, cols: usize, group: usize, out: &mut [F]) {
    dispatch!(
        rows * cols,
        par::softmax_groups(x, rows, cols, group, out),
        seq::softmax_groups(x, rows, cols, group, out)
    )
}

pub fn softmax_groups_grad<F: Scalar>(
    p: &[F],
    g: &[F],
    rows: usize,
    cols: usize,
    group: usize,
    out: &mut [F],
) {
    seq::softmax_groups_grad(p, g, rows, cols, group, out)
}

pub fn layer_norm<F: Scalar>(
    x: &[F],
    gain: &[F],
    bias: &[F],
    rows: usize,
    cols: usize,
    eps: F,
    out: &mut [F],
) {
    dispatch!(
        rows * cols,
        par::layer_norm(x, gain, bias, rows, cols, eps, out),
        seq::layer_norm(x, gain, bias, rows, cols, eps, out)
    )
}

#[allow(clippy::too_many_arguments)]
pub fn layer_norm_grad<F: Scalar>(
    x: &[F],
    gain: &[F],
    g: &[F],
    rows: usize,
    cols: usize,
    eps: F,
    dx: &mut [F],
    dgain: &mut [F],
    dbias: &mut [F],
) {
    seq::layer_norm_grad(x, gain, g, rows, cols, eps, dx, dgain, dbias)
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d<F: Scalar>(
    input: &[F],
    weight: &[F],
    bias: &[F],
    t_len: usize,
    channels: usize,
    groups: usize,
    k: usize,
    pad_left: usize,
    out: &mut [F],
) {
    dispatch!(
        t_len * channels * k / groups.max(1),
        par::conv1d(input, weight, bias, t_len, channels, groups, k, pad_left, out),
        seq::conv1d(input, weight, bias, t_len, channels, groups, k, pad_left, out)
    )
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_grad_input<F: Scalar>(
    gout: &[F],
    weight: &[F],
    t_len: usize,
    channels: usize,
    groups: usize,
    k: usize,
    pad_left: usize,
    dx: &mut [F],
) {
    dispatch!(
        t_len * channels * k / groups.max(1),
        par::conv1d_grad_input(gout, weight, t_len, channels, groups, k, pad_left, dx),
        seq::conv1d_grad_input(gout, weight, t_len, channels, groups, k, pad_left, dx)
    )
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_grad_weight<F: Scalar>(
    gout: &[F],
    input: &[F],
    t_len: usize,
    channels: usize,
    groups: usize,
    k: usize,
    pad_left: usize,
    dw: &mut [F],
) {
    seq::conv1d_grad_weight(gout, input, t_len, channels, groups, k, pad_left, dw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(n: usize, seed: u64) -> Vec<f32> {
        // small deterministic pseudo-random values
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 11) as f64 / (1u64 << 53) as f64) as f32 - 0.5
            })
            .collect()
    }

    #[test]
    fn matmul_nn_matches_naive() {
        let (m, k, n) = (7, 5, 9);
        let a = filled(m * k, 1);
        let b = filled(k * n, 2);
        let mut out = vec![0.0f32; m * n];
        seq::matmul_nn(&a, &b, m, k, n, &mut out);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for l in 0..k {
                    acc += a[i * k + l] as f64 * b[l * n + j] as f64;
                }
                assert!((out[i * n + j] as f64 - acc).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn matmul_variants_consistent() {
        let (m, k, n) = (6, 8, 4);
        let a = filled(m * k, 3);
        let b = filled(k * n, 4);
        let mut nn = vec![0.0f32; m * n];
        seq::matmul_nn(&a, &b, m, k, n, &mut nn);

        // nt: build b_t [n, k] and check a · b_t^T == a · b
        let mut bt = vec![0.0f32; n * k];
        for r in 0..k {
            for c in 0..n {
                bt[c * k + r] = b[r * n + c];
            }
        }
        let mut nt = vec![0.0f32; m * n];
        seq::matmul_nt(&a, &bt, m, k, n, &mut nt);
        for (x, y) in nn.iter().zip(&nt) {
            assert!((x - y).abs() < 1e-5);
        }

        // tn: a_t^T · b with a_t [k, m] equals a · b ... use transpose of a
        let mut at = vec![0.0f32; k * m];
        for r in 0..m {
            for c in 0..k {
                at[c * m + r] = a[r * k + c];
            }
        }
        let mut tn = vec![0.0f32; m * n];
        seq::matmul_tn(&at, &b, k, m, n, &mut tn);
        for (x, y) in nn.iter().zip(&tn) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential_bitwise() {
        let (m, k, n) = (33, 47, 29);
        let a = filled(m * k, 7);
        let b = filled(k * n, 8);
        let mut s = vec![0.0f32; m * n];
        let mut p = vec![0.0f32; m * n];
        seq::matmul_nn(&a, &b, m, k, n, &mut s);
        par::matmul_nn(&a, &b, m, k, n, &mut p);
        assert_eq!(s, p, "matmul_nn parallel result differs bitwise");

        let bt = filled(n * k, 9);
        s.fill(0.0);
        p.fill(0.0);
        seq::matmul_nt(&a, &bt, m, k, n, &mut s);
        par::matmul_nt(&a, &bt, m, k, n, &mut p);
        assert_eq!(s, p, "matmul_nt parallel result differs bitwise");

        let x = filled(64 * 80, 10);
        let mut so = vec![0.0f32; x.len()];
        let mut po = vec![0.0f32; x.len()];
        seq::softmax_groups(&x, 64, 80, 16, &mut so);
        par::softmax_groups(&x, 64, 80, 16, &mut po);
        assert_eq!(so, po, "softmax parallel result differs bitwise");

        let (t_len, ch, groups, kk) = (50, 16, 4, 7);
        let inp = filled(t_len * ch, 11);
        let w = filled(groups * (ch / groups) * (ch / groups) * kk, 12);
        let bias = filled(ch, 13);
        let mut sc = vec![0.0f32; t_len * ch];
        let mut pc = vec![0.0f32; t_len * ch];
        seq::conv1d(&inp, &w, &bias, t_len, ch, groups, kk, 3, &mut sc);
        par::conv1d(&inp, &w, &bias, t_len, ch, groups, kk, 3, &mut pc);
        assert_eq!(sc, pc, "conv1d parallel result differs bitwise");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = filled(12 * 20, 5);
        let mut out = vec![0.0f32; x.len()];
        seq::softmax_groups(&x, 12, 20, 5, &mut out);
        for row in out.chunks(20) {
            for grp in row.chunks(5) {
                let s: f32 = grp.iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }
}
