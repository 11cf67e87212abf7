//! Reverse-mode gradients against central differences on a small
//! expression built from the tape primitives.

use spatial_dit::numerics::{grad_check_many, Graph, Tensor};

fn main() -> spatial_dit::Result<()> {
    let w = Tensor::matrix(3, 2, vec![0.2, -0.4, 0.7, 0.1, -0.3, 0.5])?;
    let x = Tensor::matrix(2, 3, vec![1.0, 0.5, -1.0, 0.3, -0.2, 0.8])?;
    let err = grad_check_many(
        |g: &mut Graph, v| {
            let h = g.matmul(v[1], v[0])?;
            let h = g.gelu(h);
            let s = g.softmax_rows(h);
            let sq = g.mul(s, h)?;
            Ok(g.sum_all(sq))
        },
        &[w, x],
        1e-5,
    )?;
    println!("max relative error {err:.2e}");
    Ok(())
}
