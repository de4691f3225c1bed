//! Finite-difference verification of every differentiable op, on several
//! random small shapes each, plus engine-level invariants.

use decoar_core::array::Array;
use decoar_core::gradcheck::{check_gradients, DEFAULT_TOLERANCE};
use decoar_core::graph::{Graph, Param};
use decoar_core::ops::{concat_cols, concat_rows};
use decoar_core::rng::{named_stream, uniform_array};

fn rand_arr(seed: u64, shape: Vec<usize>) -> Array<f64> {
    let mut rng = named_stream(seed, &[0xA11CE]);
    uniform_array(&mut rng, shape, -0.9, 0.9)
}

fn assert_ok<B>(name: &str, inputs: &[Array<f64>], build: B)
where
    B: Fn(&decoar_core::Graph<f64>, &[decoar_core::Tensor<f64>]) -> decoar_core::Tensor<f64>,
{
    let out = check_gradients(name, inputs, build);
    assert!(
        out.passed(DEFAULT_TOLERANCE),
        "{name}: max rel err {} over {} coords",
        out.max_rel_err,
        out.coords
    );
}

#[test]
fn elementwise_ops_gradients() {
    for seed in 0..5u64 {
        let m = 2 + (seed as usize % 3);
        let n = 3 + (seed as usize % 2);
        let a = rand_arr(seed, vec![m, n]);
        let b = rand_arr(seed + 100, vec![m, n]);
        assert_ok("add", &[a.clone(), b.clone()], |_, t| t[0].add(&t[1]).sum());
        assert_ok("sub", &[a.clone(), b.clone()], |_, t| t[0].sub(&t[1]).sum());
        assert_ok("mul", &[a.clone(), b.clone()], |_, t| {
            t[0].mul(&t[1]).sum()
        });
        assert_ok("scale+add_scalar", &[a.clone()], |_, t| {
            t[0].scale(1.7).add_scalar(0.3).mul(&t[0]).sum()
        });
        assert_ok("gelu", &[a.clone()], |_, t| t[0].gelu().sum());
        assert_ok("exp", &[a.clone()], |_, t| t[0].exp().sum());
        // keep abs away from the origin where the subgradient kink sits
        let shifted = a.map(|x| x + if x >= 0.0 { 0.05 } else { -0.05 });
        assert_ok("abs", &[shifted], |_, t| t[0].abs().sum());
        let positive = a.map(|x| 0.2 + x.abs());
        assert_ok("xlogx", &[positive], |_, t| t[0].xlogx().sum());
    }
}

#[test]
fn matmul_gradients() {
    for seed in 0..5u64 {
        let (m, k, n) = (2 + seed as usize % 3, 3, 2 + seed as usize % 2);
        let a = rand_arr(seed, vec![m, k]);
        let b = rand_arr(seed + 7, vec![k, n]);
        assert_ok("matmul", &[a.clone(), b.clone()], |_, t| {
            t[0].matmul(&t[1]).mul(&t[0].matmul(&t[1])).sum()
        });
        let c = rand_arr(seed + 13, vec![n, k]);
        assert_ok("matmul_nt", &[a, c], |_, t| {
            t[0].matmul_nt(&t[1]).sum()
        });
    }
}

#[test]
fn bias_and_reduction_gradients() {
    for seed in 0..5u64 {
        let (m, n) = (3 + seed as usize % 2, 4);
        let x = rand_arr(seed, vec![m, n]);
        let b = rand_arr(seed + 3, vec![n]);
        assert_ok("add_row", &[x.clone(), b], |_, t| {
            t[0].add_row(&t[1]).mul(&t[0].add_row(&t[1])).sum()
        });
        assert_ok("mean", &[x.clone()], |_, t| t[0].mul(&t[0]).mean());
        assert_ok("mean_rows", &[x], |_, t| {
            let mr = t[0].mean_rows();
            mr.mul(&mr).sum()
        });
    }
}

#[test]
fn softmax_and_layer_norm_gradients() {
    for seed in 0..5u64 {
        let (m, n) = (2 + seed as usize % 3, 6);
        let x = rand_arr(seed, vec![m, n]);
        // weight the probabilities so the gradient is nontrivial
        let w = rand_arr(seed + 21, vec![m, n]);
        assert_ok("softmax_rows", &[x.clone(), w.clone()], |_, t| {
            t[0].softmax_groups(6).mul(&t[1]).sum()
        });
        assert_ok("softmax_groups", &[x.clone(), w.clone()], |_, t| {
            t[0].softmax_groups(3).mul(&t[1]).sum()
        });
        let gain = rand_arr(seed + 31, vec![n]).map(|v| 1.0 + 0.3 * v);
        let bias = rand_arr(seed + 37, vec![n]);
        assert_ok("layer_norm", &[x.clone(), gain, bias, w], |_, t| {
            t[0].layer_norm(&t[1], &t[2], 1e-5).mul(&t[3]).sum()
        });
    }
}

#[test]
fn conv1d_gradients() {
    for seed in 0..5u64 {
        let t_len = 6 + seed as usize % 3;
        let channels = 4;
        let groups = 2;
        let k = 3;
        let x = rand_arr(seed, vec![t_len, channels]);
        let w = rand_arr(seed + 41, vec![groups, 2, 2, k]);
        let b = rand_arr(seed + 43, vec![channels]);
        assert_ok("conv1d", &[x, w, b], |_, t| {
            let y = t[0].conv1d(&t[1], &t[2], k / 2);
            y.mul(&y).sum()
        });
    }
}

#[test]
fn structural_ops_gradients() {
    for seed in 0..5u64 {
        let (m, n) = (4, 6);
        let x = rand_arr(seed, vec![m, n]);
        assert_ok("slice_cols", &[x.clone()], |_, t| {
            let s = t[0].slice_cols(1, 3);
            s.mul(&s).sum()
        });
        assert_ok("gather_rows", &[x.clone()], |_, t| {
            let s = t[0].gather_rows(&[0, 2, 2, 3]);
            s.mul(&s).sum()
        });
        let row = rand_arr(seed + 51, vec![n]);
        assert_ok("replace_rows", &[x.clone(), row], |_, t| {
            let y = t[0].replace_rows(&t[1], &[1, 2]);
            y.mul(&y).sum()
        });
        let a = rand_arr(seed + 61, vec![m, 2]);
        let b = rand_arr(seed + 67, vec![m, 3]);
        assert_ok("concat_cols", &[a.clone(), b.clone()], |_, t| {
            let c = concat_cols(&[&t[0], &t[1]]);
            c.mul(&c).sum()
        });
        let d = rand_arr(seed + 71, vec![2, n]);
        assert_ok("concat_rows", &[x.clone(), d], |_, t| {
            let c = concat_rows(&[&t[0], &t[1]]);
            c.mul(&c).sum()
        });
        assert_ok("straight_through", &[x.clone()], |_, t| {
            let hard = t[0].value().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let st = t[0].softmax_groups(n).straight_through(hard);
            st.mul(&t[0]).sum()
        });
    }
}

#[test]
fn random_layer_composition_gradient() {
    // three stacked ops drawn from the toolkit, checked against central
    // differences as an end-to-end composition
    for seed in 0..5u64 {
        let (m, k, n) = (3, 4, 5);
        let x = rand_arr(seed, vec![m, k]);
        let w1 = rand_arr(seed + 1, vec![k, n]);
        let b1 = rand_arr(seed + 2, vec![n]);
        let w2 = rand_arr(seed + 3, vec![n, k]);
        assert_ok("3-layer composition", &[x, w1, b1, w2], |_, t| {
            let h = t[0].matmul(&t[1]).add_row(&t[2]).gelu();
            let y = h.matmul(&t[3]).softmax_groups(k);
            y.mul(&y).sum()
        });
    }
}

#[test]
fn detach_blocks_gradient() {
    let g = Graph::<f64>::new();
    let w = Param::new("w", Array::scalar(2.0));
    let wt = g.param(&w);
    let y = wt.detach().mul(&wt); // d/dw = detach(w) = 2
    let grads = g.backward(&y).unwrap();
    assert_eq!(grads.of_param(&w).unwrap().scalar_value(), 2.0);
}

#[test]
fn graph_reuse_of_subexpression_accumulates() {
    let g = Graph::<f64>::new();
    let w = Param::new("w", Array::scalar(3.0));
    let wt = g.param(&w);
    let sq = wt.mul(&wt);
    let total = sq.add(&sq); // 2 w^2, gradient 4w = 12
    let grads = g.backward(&total).unwrap();
    assert_eq!(grads.of_param(&w).unwrap().scalar_value(), 12.0);
}
