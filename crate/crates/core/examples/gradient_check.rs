//! Compares autograd gradients with central differences for the fusion and
//! projection losses.
//!
//!     cargo run --release --example gradient_check

use cdfi::autograd::{Graph, Var};
use cdfi::gff::adain;
use cdfi::gradcheck::{central_difference, relative_error};
use cdfi::qfc::proj_loss;
use cdfi::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Loss = fn(&mut Graph, Var, Var, &Tensor) -> Var;

fn weighted_adain(g: &mut Graph, x: Var, y: Var, w: &Tensor) -> Var {
    let out = adain(g, x, y).unwrap();
    let wv = g.input(w.clone());
    let p = g.mul(out, wv).unwrap();
    g.sum_all(p)
}

fn projection(g: &mut Graph, x: Var, y: Var, _: &Tensor) -> Var {
    proj_loss(g, x, y).unwrap()
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0, 1.0)?;
    let inputs = [
        Tensor::from_fn(&[2, 3, 4, 4], |_| normal.sample(&mut rng)),
        Tensor::from_fn(&[2, 3, 4, 4], |_| 2.0 * normal.sample(&mut rng)),
    ];
    let w = Tensor::from_fn(&[2, 3, 4, 4], |_| normal.sample(&mut rng));

    let cases: [(&str, Loss); 2] = [("adain", weighted_adain), ("proj_loss", projection)];
    for (name, loss) in cases {
        let value = |t: &[Tensor]| {
            let mut g = Graph::new();
            let (x, y) = (g.input(t[0].clone()), g.input(t[1].clone()));
            let out = loss(&mut g, x, y, &w);
            g.value(out).item()
        };
        let mut g = Graph::new();
        let (x, y) = (g.input(inputs[0].clone()), g.input(inputs[1].clone()));
        let out = loss(&mut g, x, y, &w);
        let grads = g.backward(out)?;
        for (slot, v) in [x, y].into_iter().enumerate() {
            let analytic = grads
                .get(v)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| vec![0.0; inputs[slot].len()]);
            let numeric = central_difference(&inputs, slot, 1e-5, value);
            println!(
                "{name} input {slot}: relative error {:.2e} over {} coordinates",
                relative_error(&analytic, &numeric),
                numeric.len()
            );
        }
    }
    Ok(())
}
