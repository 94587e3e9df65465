//! A single ReLU layer on `[x ⊙ m̄, m]` reproduces a mask-multiplication
//! layer up to a constant per unit, on bounded inputs.

use neumiss::network::{mask_layer, relu_layer_from_neumann};
use neumiss::{Matrix, RngStream};

fn main() -> neumiss::Result<()> {
    let mut rng = RngStream::new(5, 0);
    let d = 4;
    let mut w = Matrix::zeros(d, d);
    w.as_mut_slice().iter_mut().for_each(|v| *v = rng.standard_normal());
    let mu = rng.normal_vec(d);
    let layer = relu_layer_from_neumann(&w, &mu, 2.0)?;
    println!("per-unit constants {:?}", layer.constants);

    for _ in 0..4 {
        let x: Vec<f64> = (0..d).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let m: Vec<f64> = (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
        let relu = layer.forward(&x, &m)?;
        let target = mask_layer(&w, &mu, &x, &m);
        let shifted: Vec<String> = (0..d)
            .map(|k| format!("{:.1e}", (relu[k] - m[k] * layer.constants[k] - target[k]).abs()))
            .collect();
        println!("mask {m:?}: abs(relu - constants - target) = [{}]", shifted.join(", "));
    }
    Ok(())
}
