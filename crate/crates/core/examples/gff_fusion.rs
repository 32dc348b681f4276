//! Shows adaptive instance normalisation and the gated fusion between a
//! feature map and the artifact-artifact feature.
//!
//!     cargo run --release --example gff_fusion

use cdfi::autograd::Graph;
use cdfi::gff::{adain, gated_fuse, gated_fuse_with_gate, stats_concat, ChannelStats, GateNetwork, GateNetworkSpec};
use cdfi::params::ParamStore;
use cdfi::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0)?;
    let z = Tensor::from_fn(&[1, 4, 16, 16], |_| normal.sample(&mut rng));
    let z_aa = Tensor::from_fn(&[1, 4, 16, 16], |i| 3.0 + 0.5 * (1 + i / 256) as f64 * normal.sample(&mut rng));

    let mut g = Graph::new();
    let (zv, av) = (g.input(z.clone()), g.input(z_aa.clone()));
    let styled = adain(&mut g, zv, av)?;
    let show = |name: &str, t: &Tensor| -> anyhow::Result<()> {
        let s = ChannelStats::of(t)?;
        println!("{name:>8}: mu {:.3?}  sigma {:.3?}", s.mu.data(), s.sigma.data());
        Ok(())
    };
    show("z", &z)?;
    show("z_aa", &z_aa)?;
    show("adain", g.value(styled))?;

    for level in [0.0, 0.25, 1.0] {
        let gate = g.input(Tensor::from_fn(&[1, 4], |_| level));
        let fused = gated_fuse_with_gate(&mut g, zv, av, gate)?;
        show(&format!("gate {level}"), g.value(fused))?;
    }

    let net = GateNetwork::new("gff", GateNetworkSpec { channels: 4, hidden: 8 })?;
    let mut store = ParamStore::new();
    net.init(&mut store, &mut rng);
    let gate = stats_concat(&mut g, &store, &net, av)?;
    let fused = gated_fuse(&mut g, &store, &net, zv, av)?;
    println!("learned gate at init: {:.3?}", g.value(gate).data());
    show("fused", g.value(fused))?;
    Ok(())
}
