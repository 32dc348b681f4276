//! Encoders, the feature quad and the shared single-scale detection head.
//!
//! Both encoders are plain strided convolution stacks. The clean encoder
//! uses more, gentler stages than the artifact encoder; both end at the same
//! `C × h × w` shape so their features can be fused channel by channel.

mod head;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub use head::{
    decode_boxes, detection_loss, detection_loss_value, encode_target_grid, kmeans_anchors,
    BoxPrediction, DetectionGrid, DetectionHead, HeadSpec, LossTargets, IGNORE_IOU,
};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderRole {
    CleanEncoder,
    ArtifactEncoder,
}

impl EncoderRole {
    pub fn prefix(self) -> &'static str {
        match self {
            EncoderRole::CleanEncoder => "encoder_c",
            EncoderRole::ArtifactEncoder => "encoder_a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub role: EncoderRole,
    pub stage_count: usize,
    pub channels_out: usize,
    pub downsample_factor: usize,
    /// Width of the first stage; later stages double up to `channels_out`.
    pub stem_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    name: String,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

/// A stack of strided convolutions with leaky-ReLU between stages; the last
/// stage is linear so features may take either sign.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    spec: EncoderSpec,
    stages: Vec<Stage>,
}

impl Encoder {
    pub fn new(spec: EncoderSpec) -> Result<Self> {
        if spec.stage_count == 0 || spec.channels_out == 0 {
            return Err(Error::InvalidParameter(format!("degenerate encoder {spec:?}")));
        }
        let stride = integer_root(spec.downsample_factor, spec.stage_count).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "downsample factor {} is not a perfect {}-th power",
                spec.downsample_factor, spec.stage_count
            ))
        })?;
        let kernel = if stride % 2 == 0 { stride + 1 } else { stride.max(3) };
        let mut stages = Vec::with_capacity(spec.stage_count);
        let mut cin = 3;
        for i in 0..spec.stage_count {
            let cout = if i + 1 == spec.stage_count {
                spec.channels_out
            } else {
                (spec.stem_channels << i).min(spec.channels_out)
            };
            stages.push(Stage {
                name: format!("{}/stage{i}", spec.role.prefix()),
                cin,
                cout,
                kernel,
                stride,
                pad: (kernel - 1) / 2,
            });
            cin = cout;
        }
        Ok(Self { spec, stages })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for s in &self.stages {
            store.init_conv(rng, &s.name, s.cin, s.cout, s.kernel);
        }
    }

    /// Spatial size of the output for a square input of side `input`.
    pub fn output_size(&self, input: usize) -> usize {
        self.stages
            .iter()
            .fold(input, |h, s| (h + 2 * s.pad - s.kernel) / s.stride + 1)
    }

    /// `x: [N, 3, H, W] -> [N, C, h, w]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, s) in self.stages.iter().enumerate() {
            let w = g.param(store, &format!("{}/weight", s.name))?;
            let b = g.param(store, &format!("{}/bias", s.name))?;
            h = g.conv2d(h, w, b, s.stride, s.pad)?;
            if i + 1 < self.stages.len() {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        Ok(h)
    }
}

fn integer_root(value: usize, n: usize) -> Option<usize> {
    (1..=value).find(|r| r.checked_pow(n as u32) == Some(value))
}

/// The four feature maps obtained by applying both encoders to a clean and
/// an artifact input: `z_cc = E_C(x_c)`, `z_ac = E_A(x_c)`,
/// `z_ca = E_C(x_a)`, `z_aa = E_A(x_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureQuad {
    pub z_cc: Var,
    pub z_ac: Var,
    pub z_ca: Var,
    pub z_aa: Var,
}

pub fn encode_quad(
    g: &mut Graph,
    store: &ParamStore,
    x_c: Var,
    x_a: Var,
    clean_encoder: &Encoder,
    artifact_encoder: &Encoder,
) -> Result<FeatureQuad> {
    if g.shape(x_c) != g.shape(x_a) {
        return Err(Error::Shape(format!(
            "clean batch {:?} vs artifact batch {:?}",
            g.shape(x_c),
            g.shape(x_a)
        )));
    }
    let quad = FeatureQuad {
        z_cc: clean_encoder.forward(g, store, x_c)?,
        z_ac: artifact_encoder.forward(g, store, x_c)?,
        z_ca: clean_encoder.forward(g, store, x_a)?,
        z_aa: artifact_encoder.forward(g, store, x_a)?,
    };
    let shape = g.shape(quad.z_cc).to_vec();
    for z in [quad.z_ac, quad.z_ca, quad.z_aa] {
        if g.shape(z) != shape.as_slice() {
            return Err(Error::Shape(format!(
                "encoder outputs differ: {shape:?} vs {:?}",
                g.shape(z)
            )));
        }
    }
    Ok(quad)
}

/// Fully connected stack with leaky-ReLU between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(String, usize, usize)>,
}

impl Mlp {
    pub fn new(prefix: &str, dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| (format!("{prefix}/l{i}"), w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.1)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.2)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for (name, din, dout) in &self.layers {
            store.init_linear(rng, name, *din, *dout);
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (_, d) = g.value(x).dims2()?;
        if d != self.input_dim() {
            return Err(Error::Shape(format!(
                "mlp expects {} inputs, got {d}",
                self.input_dim()
            )));
        }
        let mut h = x;
        for (i, (name, _, _)) in self.layers.iter().enumerate() {
            let w = g.param(store, &format!("{name}/weight"))?;
            let b = g.param(store, &format!("{name}/bias"))?;
            h = g.linear(h, w, b)?;
            if i + 1 < self.layers.len() {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        Ok(h)
    }
}
