//! Differentiable operations on [`Tensor`] handles.
//!
//! Shape mismatches and cross-graph mixing are programming errors and
//! panic; recoverable failures (non-scalar backward root, non-finite
//! gradients) surface as `Result` from the call sites that own them.

use std::rc::Rc;

use crate::array::Array;
use crate::graph::Tensor;
use crate::kernels;
use crate::scalar::Scalar;

impl<F: Scalar> Tensor<F> {
    fn assert_same_shape(&self, other: &Tensor<F>, op: &str) {
        assert_eq!(
            self.shape(),
            other.shape(),
            "{op}: shape {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Tensor<F>) -> Tensor<F> {
        self.assert_same_shape(other, "add");
        let mut out = (*self.value).clone();
        kernels::axpy(F::one(), other.value.data(), out.data_mut());
        let (pa, pb) = (self.id, other.id);
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self, other], || {
            Box::new(move |g, sink| {
                sink.accumulate(pa, g);
                sink.accumulate(pb, g);
                let _ = &shape;
            })
        })
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &Tensor<F>) -> Tensor<F> {
        self.assert_same_shape(other, "sub");
        let mut out = (*self.value).clone();
        kernels::axpy(-F::one(), other.value.data(), out.data_mut());
        let (pa, pb) = (self.id, other.id);
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self, other], || {
            Box::new(move |g, sink| {
                sink.accumulate(pa, g);
                let slot = sink.slot(pb, &shape);
                kernels::axpy(-F::one(), g.data(), slot.data_mut());
            })
        })
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<F>) -> Tensor<F> {
        self.assert_same_shape(other, "mul");
        let out = Array::new(
            self.shape().to_vec(),
            self.value
                .data()
                .iter()
                .zip(other.value.data())
                .map(|(&a, &b)| a * b)
                .collect(),
        );
        let (pa, pb) = (self.id, other.id);
        let (va, vb) = (self.value_rc(), other.value_rc());
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self, other], || {
            Box::new(move |g, sink| {
                {
                    let slot = sink.slot(pa, &shape);
                    for ((d, &gv), &bv) in slot.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *d = *d + gv * bv;
                    }
                }
                {
                    let slot = sink.slot(pb, &shape);
                    for ((d, &gv), &av) in slot.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *d = *d + gv * av;
                    }
                }
            })
        })
    }

    /// `[m, n] + [n]` broadcast over rows.
    pub fn add_row(&self, bias: &Tensor<F>) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        assert_eq!(bias.shape(), &[n], "add_row: bias shape {:?}", bias.shape());
        let mut out = (*self.value).clone();
        for r in 0..m {
            kernels::axpy(F::one(), bias.value.data(), &mut out.data_mut()[r * n..(r + 1) * n]);
        }
        let (pa, pb) = (self.id, bias.id);
        self.graph.op(out, &[self, bias], || {
            Box::new(move |g, sink| {
                sink.accumulate(pa, g);
                let slot = sink.slot(pb, &[n]);
                kernels::col_sums(g.data(), g.rows(), n, slot.data_mut());
            })
        })
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&self, c: f64) -> Tensor<F> {
        let cf = F::from_f64(c);
        let out = self.value.map(|x| x * cf);
        let pa = self.id;
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &shape);
                kernels::axpy(cf, g.data(), slot.data_mut());
            })
        })
    }

    /// Adds a constant to every element.
    pub fn add_scalar(&self, c: f64) -> Tensor<F> {
        let cf = F::from_f64(c);
        let out = self.value.map(|x| x + cf);
        let pa = self.id;
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| sink.accumulate(pa, g))
        })
    }

    /// Matrix product `[m, k] x [k, n]`.
    pub fn matmul(&self, other: &Tensor<F>) -> Tensor<F> {
        let (m, k) = (self.value.rows(), self.value.cols());
        let (k2, n) = (other.value.rows(), other.value.cols());
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = Array::zeros(vec![m, n]);
        kernels::matmul_nn(self.value.data(), other.value.data(), m, k, n, out.data_mut());
        let (pa, pb) = (self.id, other.id);
        let (va, vb) = (self.value_rc(), other.value_rc());
        self.graph.op(out, &[self, other], || {
            Box::new(move |g, sink| {
                {
                    // dA += g . B^T
                    let slot = sink.slot(pa, &[m, k]);
                    kernels::matmul_nt(g.data(), vb.data(), m, n, k, slot.data_mut());
                }
                {
                    // dB += A^T . g
                    let slot = sink.slot(pb, &[k, n]);
                    kernels::matmul_tn(va.data(), g.data(), m, k, n, slot.data_mut());
                }
            })
        })
    }

    /// `[m, k] x [n, k]^T`, the attention-score product.
    pub fn matmul_nt(&self, other: &Tensor<F>) -> Tensor<F> {
        let (m, k) = (self.value.rows(), self.value.cols());
        let (n, k2) = (other.value.rows(), other.value.cols());
        assert_eq!(k, k2, "matmul_nt: inner dims {k} vs {k2}");
        let mut out = Array::zeros(vec![m, n]);
        kernels::matmul_nt(self.value.data(), other.value.data(), m, k, n, out.data_mut());
        let (pa, pb) = (self.id, other.id);
        let (va, vb) = (self.value_rc(), other.value_rc());
        self.graph.op(out, &[self, other], || {
            Box::new(move |g, sink| {
                {
                    // dA += g . B
                    let slot = sink.slot(pa, &[m, k]);
                    kernels::matmul_nn(g.data(), vb.data(), m, n, k, slot.data_mut());
                }
                {
                    // dB += g^T . A
                    let slot = sink.slot(pb, &[n, k]);
                    kernels::matmul_tn(g.data(), va.data(), m, n, k, slot.data_mut());
                }
            })
        })
    }

    pub fn gelu(&self) -> Tensor<F> {
        let mut out = Array::zeros(self.shape().to_vec());
        kernels::gelu(self.value.data(), out.data_mut());
        let pa = self.id;
        let va = self.value_rc();
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &shape);
                kernels::gelu_grad(va.data(), g.data(), slot.data_mut());
            })
        })
    }

    pub fn exp(&self) -> Tensor<F> {
        let out = self.value.map(|x| x.exp());
        let pa = self.id;
        let shape = self.shape().to_vec();
        let out_rc = Rc::new(out);
        let captured = out_rc.clone();
        let t = self.graph.op((*out_rc).clone(), &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &shape);
                for ((d, &gv), &ev) in slot
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(captured.data())
                {
                    *d = *d + gv * ev;
                }
            })
        });
        t
    }

    /// Elementwise absolute value with subgradient 0 at the origin.
    pub fn abs(&self) -> Tensor<F> {
        let out = self.value.map(|x| x.abs());
        let pa = self.id;
        let va = self.value_rc();
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &shape);
                for ((d, &gv), &xv) in slot.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                    let s = if xv > F::zero() {
                        F::one()
                    } else if xv < F::zero() {
                        -F::one()
                    } else {
                        F::zero()
                    };
                    *d = *d + gv * s;
                }
            })
        })
    }

    /// Elementwise `x ln x`, continued by 0 at `x <= 0` (the entropy
    /// convention `0 ln 0 = 0`); derivative treated as 0 there as well.
    pub fn xlogx(&self) -> Tensor<F> {
        let out = self.value.map(|x| {
            if x > F::zero() {
                x * x.ln()
            } else {
                F::zero()
            }
        });
        let pa = self.id;
        let va = self.value_rc();
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &shape);
                for ((d, &gv), &xv) in slot.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                    if xv > F::zero() {
                        *d = *d + gv * (xv.ln() + F::one());
                    }
                }
            })
        })
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Tensor<F> {
        let out = Array::scalar(kernels::sum_all(self.value.data()));
        let pa = self.id;
        let shape = self.shape().to_vec();
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let gv = g.scalar_value();
                let slot = sink.slot(pa, &shape);
                for d in slot.data_mut() {
                    *d = *d + gv;
                }
            })
        })
    }

    /// Mean of all elements.
    pub fn mean(&self) -> Tensor<F> {
        let n = self.value.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Column means of an `[m, n]` matrix, returned as `[1, n]`.
    pub fn mean_rows(&self) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        let mut sums = Array::zeros(vec![1, n]);
        kernels::col_sums(self.value.data(), m, n, sums.data_mut());
        let inv = F::from_f64(1.0 / m as f64);
        for v in sums.data_mut() {
            *v = *v * inv;
        }
        let pa = self.id;
        self.graph.op(sums, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &[m, n]);
                for r in 0..m {
                    kernels::axpy(inv, g.data(), &mut slot.data_mut()[r * n..(r + 1) * n]);
                }
            })
        })
    }

    /// Softmax over consecutive column groups of size `group` within each
    /// row, with max-subtraction for stability. `group == cols` is a plain
    /// row softmax.
    pub fn softmax_groups(&self, group: usize) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        assert!(group > 0 && n % group == 0, "softmax group {group} vs cols {n}");
        let mut out = Array::zeros(vec![m, n]);
        kernels::softmax_groups(self.value.data(), m, n, group, out.data_mut());
        let pa = self.id;
        let out_rc = Rc::new(out);
        let p = out_rc.clone();
        self.graph.op((*out_rc).clone(), &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &[m, n]);
                kernels::softmax_groups_grad(p.data(), g.data(), m, n, group, slot.data_mut());
            })
        })
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&self, gain: &Tensor<F>, bias: &Tensor<F>, eps: f64) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        assert_eq!(gain.shape(), &[n], "layer_norm gain shape");
        assert_eq!(bias.shape(), &[n], "layer_norm bias shape");
        let epsf = F::from_f64(eps);
        let mut out = Array::zeros(vec![m, n]);
        kernels::layer_norm(
            self.value.data(),
            gain.value.data(),
            bias.value.data(),
            m,
            n,
            epsf,
            out.data_mut(),
        );
        let (px, pg, pb) = (self.id, gain.id, bias.id);
        let (vx, vg) = (self.value_rc(), gain.value_rc());
        self.graph.op(out, &[self, gain, bias], || {
            Box::new(move |g, sink| {
                let mut dx = Array::zeros(vec![m, n]);
                let mut dgain = Array::zeros(vec![n]);
                let mut dbias = Array::zeros(vec![n]);
                kernels::layer_norm_grad(
                    vx.data(),
                    vg.data(),
                    g.data(),
                    m,
                    n,
                    epsf,
                    dx.data_mut(),
                    dgain.data_mut(),
                    dbias.data_mut(),
                );
                sink.accumulate(px, &dx);
                sink.accumulate(pg, &dgain);
                sink.accumulate(pb, &dbias);
            })
        })
    }

    /// Grouped 1-D convolution over time with zero padding. Input is
    /// `[t, channels]`, weight `[groups, out_per_g, in_per_g, k]`, bias
    /// `[channels]`; output length equals input length.
    pub fn conv1d(&self, weight: &Tensor<F>, bias: &Tensor<F>, pad_left: usize) -> Tensor<F> {
        let (t_len, channels) = (self.value.rows(), self.value.cols());
        let wshape = weight.shape().to_vec();
        assert_eq!(wshape.len(), 4, "conv1d weight must be 4-d, got {wshape:?}");
        let (groups, opg, ipg, k) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        assert_eq!(groups * opg, channels, "conv1d output channels");
        assert_eq!(groups * ipg, channels, "conv1d input channels");
        assert_eq!(bias.shape(), &[channels], "conv1d bias shape");
        let mut out = Array::zeros(vec![t_len, channels]);
        kernels::conv1d(
            self.value.data(),
            weight.value.data(),
            bias.value.data(),
            t_len,
            channels,
            groups,
            k,
            pad_left,
            out.data_mut(),
        );
        let (px, pw, pb) = (self.id, weight.id, bias.id);
        let (vx, vw) = (self.value_rc(), weight.value_rc());
        self.graph.op(out, &[self, weight, bias], || {
            Box::new(move |g, sink| {
                {
                    let slot = sink.slot(px, &[t_len, channels]);
                    kernels::conv1d_grad_input(
                        g.data(),
                        vw.data(),
                        t_len,
                        channels,
                        groups,
                        k,
                        pad_left,
                        slot.data_mut(),
                    );
                }
                {
                    let slot = sink.slot(pw, &wshape);
                    kernels::conv1d_grad_weight(
                        g.data(),
                        vx.data(),
                        t_len,
                        channels,
                        groups,
                        k,
                        pad_left,
                        slot.data_mut(),
                    );
                }
                {
                    let slot = sink.slot(pb, &[channels]);
                    kernels::col_sums(g.data(), t_len, channels, slot.data_mut());
                }
            })
        })
    }

    /// Copies columns `[start, start+len)` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        assert!(start + len <= n, "slice_cols {start}+{len} > {n}");
        let mut out = Array::zeros(vec![m, len]);
        for r in 0..m {
            out.data_mut()[r * len..(r + 1) * len]
                .copy_from_slice(&self.value.data()[r * n + start..r * n + start + len]);
        }
        let pa = self.id;
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &[m, n]);
                for r in 0..m {
                    kernels::axpy(
                        F::one(),
                        &g.data()[r * len..(r + 1) * len],
                        &mut slot.data_mut()[r * n + start..r * n + start + len],
                    );
                }
            })
        })
    }

    /// Copies the given rows of a 2-D tensor (duplicates allowed).
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        let idx: Vec<usize> = indices.to_vec();
        for &i in &idx {
            assert!(i < m, "gather_rows index {i} out of {m}");
        }
        let mut out = Array::zeros(vec![idx.len(), n]);
        for (pos, &i) in idx.iter().enumerate() {
            out.data_mut()[pos * n..(pos + 1) * n]
                .copy_from_slice(&self.value.data()[i * n..(i + 1) * n]);
        }
        let pa = self.id;
        self.graph.op(out, &[self], || {
            Box::new(move |g, sink| {
                let slot = sink.slot(pa, &[m, n]);
                for (pos, &i) in idx.iter().enumerate() {
                    kernels::axpy(
                        F::one(),
                        &g.data()[pos * n..(pos + 1) * n],
                        &mut slot.data_mut()[i * n..(i + 1) * n],
                    );
                }
            })
        })
    }

    /// Output equals the input except that each listed row is replaced by
    /// the broadcast `row` vector. Gradient flows into `row` from every
    /// replaced position and into the input elsewhere.
    pub fn replace_rows(&self, row: &Tensor<F>, indices: &[usize]) -> Tensor<F> {
        let (m, n) = (self.value.rows(), self.value.cols());
        assert_eq!(row.shape(), &[n], "replace_rows: row shape {:?}", row.shape());
        let mut masked = vec![false; m];
        for &i in indices {
            assert!(i < m, "replace_rows index {i} out of {m}");
            masked[i] = true;
        }
        let mut out = (*self.value).clone();
        for (r, &is_masked) in masked.iter().enumerate() {
            if is_masked {
                out.data_mut()[r * n..(r + 1) * n].copy_from_slice(row.value.data());
            }
        }
        let (pa, pr) = (self.id, row.id);
        self.graph.op(out, &[self, row], || {
            Box::new(move |g, sink| {
                {
                    let slot = sink.slot(pa, &[m, n]);
                    for (r, &is_masked) in masked.iter().enumerate() {
                        if !is_masked {
                            kernels::axpy(
                                F::one(),
                                &g.data()[r * n..(r + 1) * n],
                                &mut slot.data_mut()[r * n..(r + 1) * n],
                            );
                        }
                    }
                }
                {
                    let slot = sink.slot(pr, &[n]);
                    for (r, &is_masked) in masked.iter().enumerate() {
                        if is_masked {
                            kernels::axpy(
                                F::one(),
                                &g.data()[r * n..(r + 1) * n],
                                slot.data_mut(),
                            );
                        }
                    }
                }
            })
        })
    }

    /// Cuts the tensor out of the gradient flow.
    pub fn detach(&self) -> Tensor<F> {
        self.graph.push((*self.value).clone(), false, None)
    }

    /// Straight-through estimator: the forward value is `hard` (same
    /// shape), the backward pass routes the incoming gradient unchanged
    /// into this tensor.
    pub fn straight_through(&self, hard: Array<F>) -> Tensor<F> {
        assert_eq!(hard.shape(), self.shape(), "straight_through shape");
        let pa = self.id;
        self.graph.op(hard, &[self], || {
            Box::new(move |g, sink| sink.accumulate(pa, g))
        })
    }
}

/// Concatenates 2-D tensors along columns.
pub fn concat_cols<F: Scalar>(parts: &[&Tensor<F>]) -> Tensor<F> {
    assert!(!parts.is_empty(), "concat_cols of nothing");
    let graph = parts[0].graph().clone();
    let m = parts[0].value().rows();
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| {
            assert_eq!(p.value().rows(), m, "concat_cols row mismatch");
            p.value().cols()
        })
        .collect();
    let n: usize = widths.iter().sum();
    let mut out = Array::zeros(vec![m, n]);
    {
        let data = out.data_mut();
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            for r in 0..m {
                data[r * n + off..r * n + off + w]
                    .copy_from_slice(&p.value().data()[r * w..(r + 1) * w]);
            }
            off += w;
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    graph.op(out, parts, || {
        Box::new(move |g, sink| {
            let mut off = 0;
            for (&pid, &w) in ids.iter().zip(&widths) {
                let slot = sink.slot(pid, &[m, w]);
                for r in 0..m {
                    kernels::axpy(
                        F::one(),
                        &g.data()[r * n + off..r * n + off + w],
                        &mut slot.data_mut()[r * w..(r + 1) * w],
                    );
                }
                off += w;
            }
        })
    })
}

/// Concatenates 2-D tensors along rows.
pub fn concat_rows<F: Scalar>(parts: &[&Tensor<F>]) -> Tensor<F> {
    assert!(!parts.is_empty(), "concat_rows of nothing");
    let graph = parts[0].graph().clone();
    let n = parts[0].value().cols();
    let heights: Vec<usize> = parts
        .iter()
        .map(|p| {
            assert_eq!(p.value().cols(), n, "concat_rows col mismatch");
            p.value().rows()
        })
        .collect();
    let m: usize = heights.iter().sum();
    let mut out = Array::zeros(vec![m, n]);
    {
        let data = out.data_mut();
        let mut off = 0;
        for (p, &h) in parts.iter().zip(&heights) {
            data[off * n..(off + h) * n].copy_from_slice(p.value().data());
            off += h;
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    graph.op(out, parts, || {
        Box::new(move |g, sink| {
            let mut off = 0;
            for (&pid, &h) in ids.iter().zip(&heights) {
                let slot = sink.slot(pid, &[h, n]);
                kernels::axpy(
                    F::one(),
                    &g.data()[off * n..(off + h) * n],
                    slot.data_mut(),
                );
                off += h;
            }
        })
    })
}
