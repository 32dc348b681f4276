//! Evaluates the quadruplet feature-consistency losses on a toy feature
//! quadruplet and on configurations with known values.
//!
//!     cargo run --release --example qfc_losses

use cdfi::autograd::Graph;
use cdfi::model::FeatureQuad;
use cdfi::params::ParamStore;
use cdfi::qfc::{
    distance_loss, distance_loss_from_embeddings, feature_loss, proj_loss, Discriminator, DiscriminatorSpec,
    EmbeddingHeads,
};
use cdfi::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.0)?;
    let shape = [4, 8, 6, 6];
    let base = Tensor::from_fn(&shape, |_| normal.sample(&mut rng));
    let noisy = |rng: &mut ChaCha8Rng, s: f64| Tensor::from_fn(&shape, |i| base.data()[i] + s * normal.sample(rng));

    let disc = Discriminator::new("adv", DiscriminatorSpec { input_dim: 8, hidden: vec![16] })?;
    let heads = EmbeddingHeads::new("qfc", 8, 16, 8);
    let mut store = ParamStore::new();
    disc.init(&mut store, &mut rng);
    heads.init(&mut store, &mut rng);

    for spread in [0.0, 0.5, 2.0] {
        let mut g = Graph::new();
        let quad = FeatureQuad {
            z_cc: g.input(base.clone()),
            z_ac: g.input(noisy(&mut rng, spread)),
            z_ca: g.input(noisy(&mut rng, spread)),
            z_aa: g.input(noisy(&mut rng, spread)),
        };
        let proj = proj_loss(&mut g, quad.z_ac, quad.z_cc)?;
        let l_f = feature_loss(&mut g, &store, &quad, &disc, 1.0)?;
        let l_d = distance_loss(&mut g, &store, &quad, &heads, 100.0)?;
        println!(
            "spread {spread:.1}: proj {:.4}  L_f {:.4}  L_d {:.4}",
            g.value(proj).item(),
            g.value(l_f).item(),
            g.value(l_d).item()
        );
    }

    let mut g = Graph::new();
    let e = g.input(Tensor::from_fn(&[2, 8], |_| normal.sample(&mut rng)));
    let collapsed = distance_loss_from_embeddings(&mut g, [e, e, e, e], 100.0)?;
    println!("identical embeddings, margin 100: L_d = {}", g.value(collapsed).item());
    Ok(())
}
