//! Finite-difference gradient checking.
//!
//! Runs a graph builder twice per perturbed component and compares centered
//! differences against the reverse-mode gradients. Always in f64.

use crate::error::Result;
use crate::num::graph::{Graph, Var};
use crate::num::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-4;

/// Max relative error |a - n| / max(1, |a|, |n|) between reverse-mode and
/// centered finite-difference gradients, over every component of every input.
/// The builder must be deterministic (capture any masks it needs).
pub fn grad_check<B>(build: B, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    B: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let loss = build(&mut graph, &vars)?;
    graph.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| graph.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |work: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vs: Vec<Var> = work.iter().map(|t| g.constant(t.clone())).collect();
        let l = build(&mut g, &vs)?;
        Ok(g.value(l).item())
    };

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..work.len() {
        for e in 0..work[i].len() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[e] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i].data()[e];
            let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::RngTree;
    use rand::Rng;

    fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = RngTree::new(seed).rng();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn matmul_grad_is_exact() {
        let a = randn(&[3, 4], 1);
        let b = randn(&[4, 2], 2);
        let err = grad_check(
            |g, vars| {
                let m = g.matmul(vars[0], vars[1])?;
                let t = g.tanh(m);
                let r = g.mean_axis(t, 0)?;
                let r2 = g.mean_axis(r, 1)?;
                Ok(r2)
            },
            &[a, b],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn softmax_cross_entropy_grad() {
        let x = randn(&[4, 7], 3);
        let err = grad_check(
            |g, vars| g.cross_entropy(vars[0], &[0, 3, 6, 2]),
            &[x],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-5, "rel err {err}");
    }

    #[test]
    fn masked_softmax_grad() {
        let x = randn(&[2, 5], 4);
        let mask = Tensor::from_vec(&[2, 5], vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let w = randn(&[5, 1], 5);
        let err = grad_check(
            |g, vars| {
                let mk = mask.clone();
                let s = g.softmax_rows(vars[0], Some(mk))?;
                let p = g.matmul(s, vars[1])?;
                let r = g.mean_axis(p, 0)?;
                g.mean_axis(r, 1)
            },
            &[x, w],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn gather_scale_concat_slice_grads() {
        let table = randn(&[6, 3], 6);
        let s = randn(&[4], 7);
        let err = grad_check(
            |g, vars| {
                let rows = g.gather(vars[0], &[0, 2, 2, 5])?;
                let scaled = g.scale_rows(rows, vars[1])?;
                let both = g.concat_cols(&[scaled, rows])?;
                let cut = g.slice_cols(both, 1, 5)?;
                let rcut = g.slice_rows(cut, 0, 3)?;
                let t = g.transpose(rcut);
                let m = g.mean_axis(t, 0)?;
                g.mean_axis(m, 1)
            },
            &[table, s],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }
}
