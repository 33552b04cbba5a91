//! Finite-difference checks of every differentiable graph op on random inputs.

use glass::autodiff::{Graph, Var};
use glass::gradcheck::{grad_check, Evaluation, GradCheckOptions};
use glass::kernels::AttnMask;
use glass::{Result, Tensor};
use proptest::prelude::*;

const TOL: f64 = 1e-5;

/// Checks `sum(w ⊙ build(inputs))` for fixed pseudo-random weights `w`.
fn max_error(inputs: &[Tensor], build: impl Fn(&mut Graph<'_>, &[Var]) -> Result<Var>) -> f64 {
    let dims: Vec<Vec<usize>> = inputs.iter().map(|t| t.dims().to_vec()).collect();
    let x: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let unflatten = |x: &[f64]| -> Vec<Tensor> {
        let mut off = 0;
        dims.iter()
            .map(|d| {
                let n: usize = d.iter().product();
                off += n;
                Tensor::new(d.clone(), x[off - n..off].to_vec()).unwrap()
            })
            .collect()
    };
    let forward = |g: &mut Graph<'_>, x: &[f64]| -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = unflatten(x).into_iter().map(|t| g.variable(t)).collect();
        let out = build(g, &vars)?;
        let n = g.value(out).len();
        let w = Tensor::new(
            g.value(out).dims().to_vec(),
            (0..n).map(|i| ((i as f64 + 1.0) * 0.7).sin()).collect(),
        )?;
        let w = g.constant(w);
        let weighted = g.mul(out, w)?;
        Ok((g.sum(weighted), vars))
    };
    let mut g = Graph::new();
    let (loss, vars) = forward(&mut g, &x).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<f64> = vars
        .iter()
        .flat_map(|&v| grads.wrt(v).expect("every input reaches the loss").data().to_vec())
        .collect();
    let f = |x: &[f64]| -> Result<Evaluation> {
        let mut g = Graph::new();
        let (loss, _) = forward(&mut g, x)?;
        Ok(Evaluation::smooth(g.value(loss).item()))
    };
    let coords: Vec<usize> = (0..x.len()).collect();
    let opts = GradCheckOptions {
        step: 1e-5,
        tol: TOL,
        floor: 1e-4,
    };
    grad_check(f, &x, &analytic, &coords, opts).unwrap().max_rel_error
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_bias(a in matrix(2, 3), b in matrix(3, 4), bias in matrix(1, 4)) {
        let e = max_error(&[a, b, bias], |g, v| {
            let m = g.matmul(v[0], v[1])?;
            g.add_bias(m, v[2])
        });
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn elementwise(a in matrix(3, 3), b in matrix(3, 3)) {
        let e = max_error(&[a, b], |g, v| {
            let s = g.sub(v[0], v[1])?;
            let t = g.tanh(s);
            let u = g.gelu(v[1]);
            let p = g.mul(t, u)?;
            let q = g.sigmoid(v[0]);
            let r = g.affine(q, 1.5, -0.2);
            g.add(p, r)
        });
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn layer_norm(x in matrix(3, 4), gain in matrix(1, 4), offset in matrix(1, 4)) {
        let e = max_error(&[x, gain, offset], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5));
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn batch_norm(x in matrix(5, 3), gamma in matrix(1, 3), beta in matrix(1, 3)) {
        let e = max_error(&[x, gamma, beta], |g, v| Ok(g.batch_norm(v[0], v[1], v[2], 1e-5, None)?.0));
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn causal_attention(q in matrix(3, 4), k in matrix(3, 4), val in matrix(3, 4)) {
        let e = max_error(&[q, k, val], |g, v| g.attention(v[0], v[1], v[2], 2, &AttnMask::Causal));
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn rope(x in matrix(3, 8)) {
        let e = max_error(&[x], |g, v| g.rope(v[0], 4, &[0, 3, 7], 10_000.0));
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn dilated_unfold(x in matrix(5, 2)) {
        let e = max_error(&[x], |g, v| g.unfold(v[0], 3, 2, 2));
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn row_ops(x in matrix(4, 3), y in matrix(2, 3)) {
        let e = max_error(&[x, y], |g, v| {
            let d = g.row_diff(v[0])?;
            let c = g.concat_rows(&[d, v[1]])?;
            let s = g.slice_rows(c, 1, 3)?;
            let m = g.mean_rows(s);
            let r = g.reshape(s, vec![9])?;
            let r = g.mean(r);
            let r = g.reshape(r, vec![1, 1])?;
            let m2 = g.mul(m, m)?;
            let t = g.sum(m2);
            let t = g.reshape(t, vec![1, 1])?;
            g.add(t, r)
        });
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn cross_entropy(logits in matrix(1, 3), class in 0usize..3) {
        let e = max_error(&[logits], |g, v| g.softmax_cross_entropy(v[0], class));
        prop_assert!(e < TOL, "max rel error {e}");
    }

    #[test]
    fn huber_and_abs_off_the_kinks(x in prop::collection::vec(prop_oneof![-3.0f64..-1.2, -0.8f64..-0.1, 0.1f64..0.8, 1.2f64..3.0], 6)) {
        let t = Tensor::matrix(2, 3, x).unwrap();
        let e = max_error(&[t], |g, v| {
            let h = g.huber(v[0], 1.0);
            let a = g.abs(v[0]);
            let r = g.relu(v[0]);
            let s = g.add(h, a)?;
            g.add(s, r)
        });
        prop_assert!(e < TOL, "max rel error {e}");
    }
}
