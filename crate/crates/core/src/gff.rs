//! Guided feature fusion: per-channel statistics of the artifact feature
//! drive a learned gate that mixes an AdaIN-stylised content feature with
//! the raw artifact feature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::Mlp;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const STD_EPS: f64 = 1e-5;

/// Per-sample, per-channel mean and standard deviation, each `[N, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl ChannelStats {
    /// Plain evaluation of [`channel_stats`].
    pub fn of(z: &Tensor) -> Result<Self> {
        let (n, c, h, w) = z.dims4()?;
        let hw = (h * w) as f64;
        let mut mu = Tensor::zeros(&[n, c]);
        let mut sigma = Tensor::zeros(&[n, c]);
        for (k, plane) in z.data().chunks(h * w).enumerate() {
            let m = plane.iter().sum::<f64>() / hw;
            let var = plane.iter().map(|v| (v - m).powi(2)).sum::<f64>() / hw;
            mu.data_mut()[k] = m;
            sigma.data_mut()[k] = (var + STD_EPS).sqrt();
        }
        Ok(Self { mu, sigma })
    }
}

/// `mu = mean_hw z`, `sigma = sqrt(mean_hw (z - mu)^2 + eps)`, as graph nodes.
pub fn channel_stats(g: &mut Graph, z: Var) -> Result<(Var, Var)> {
    let (_, _, h, w) = g.value(z).dims4()?;
    let mu = g.spatial_mean(z)?;
    let mu_map = g.expand_spatial(mu, h, w)?;
    let centred = g.sub(z, mu_map)?;
    let sq = g.square(centred);
    let var = g.spatial_mean(sq)?;
    let var = g.offset(var, STD_EPS);
    let sigma = g.sqrt(var);
    Ok((mu, sigma))
}

/// `sigma(y) * (x - mu(x)) / sigma(x) + mu(y)`, per sample and channel.
/// Spatial sizes of `x` and `y` may differ; the output has `x`'s shape.
pub fn adain(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
    let (nx, cx, h, w) = g.value(x).dims4()?;
    let (ny, cy, _, _) = g.value(y).dims4()?;
    if (nx, cx) != (ny, cy) {
        return Err(Error::Shape(format!(
            "adain: content {:?} vs style {:?}",
            g.shape(x),
            g.shape(y)
        )));
    }
    let (mu_x, sig_x) = channel_stats(g, x)?;
    let (mu_y, sig_y) = channel_stats(g, y)?;
    let mu_x = g.expand_spatial(mu_x, h, w)?;
    let sig_x = g.expand_spatial(sig_x, h, w)?;
    let mu_y = g.expand_spatial(mu_y, h, w)?;
    let sig_y = g.expand_spatial(sig_y, h, w)?;
    let centred = g.sub(x, mu_x)?;
    let normed = g.div(centred, sig_x)?;
    let scaled = g.mul(normed, sig_y)?;
    g.add(scaled, mu_y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateNetworkSpec {
    pub channels: usize,
    pub hidden: usize,
}

/// Maps the concatenated `(mu, sigma)` of the artifact feature to a
/// per-channel weight in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateNetwork {
    spec: GateNetworkSpec,
    mlp: Mlp,
}

impl GateNetwork {
    pub fn new(prefix: &str, spec: GateNetworkSpec) -> Result<Self> {
        if spec.channels == 0 || spec.hidden == 0 {
            return Err(Error::InvalidParameter(format!("degenerate gate {spec:?}")));
        }
        Ok(Self {
            mlp: Mlp::new(&format!("{prefix}/gate"), &[2 * spec.channels, spec.hidden, spec.channels]),
            spec,
        })
    }

    pub fn spec(&self) -> &GateNetworkSpec {
        &self.spec
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.mlp.init(store, rng);
    }
}

/// Gate vector `[N, C]` from the statistics of `z_aa`.
pub fn stats_concat(g: &mut Graph, store: &ParamStore, gate: &GateNetwork, z_aa: Var) -> Result<Var> {
    let (_, c, _, _) = g.value(z_aa).dims4()?;
    if c != gate.spec.channels {
        return Err(Error::Shape(format!(
            "gate expects {} channels, got {c}",
            gate.spec.channels
        )));
    }
    let (mu, sigma) = channel_stats(g, z_aa)?;
    let stats = g.concat(mu, sigma)?;
    let logits = gate.mlp.forward(g, store, stats)?;
    Ok(g.sigmoid(logits))
}

/// `gate * adain(z, z_aa) + (1 - gate) * z_aa` with a given `[N, C]` gate.
pub fn gated_fuse_with_gate(g: &mut Graph, z: Var, z_aa: Var, gate: Var) -> Result<Var> {
    if g.shape(z) != g.shape(z_aa) {
        return Err(Error::Shape(format!(
            "fusion inputs differ: {:?} vs {:?}",
            g.shape(z),
            g.shape(z_aa)
        )));
    }
    let (_, _, h, w) = g.value(z).dims4()?;
    let styled = adain(g, z, z_aa)?;
    let gmap = g.expand_spatial(gate, h, w)?;
    let delta = g.sub(styled, z_aa)?;
    let mixed = g.mul(gmap, delta)?;
    g.add(z_aa, mixed)
}

pub fn gated_fuse(
    g: &mut Graph,
    store: &ParamStore,
    gate: &GateNetwork,
    z: Var,
    z_aa: Var,
) -> Result<Var> {
    let weights = stats_concat(g, store, gate, z_aa)?;
    gated_fuse_with_gate(g, z, z_aa, weights)
}
