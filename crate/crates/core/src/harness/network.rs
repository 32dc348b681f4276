use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Alignment, Arm, ArmToggles, Branches, Fusion, LossWeights, QfcMode, RunConfig};
use crate::autograd::{Graph, Var};
use crate::baselines::{adain_only_arm, coral_loss, dann_arm, median_bandwidth, mmd_loss, vanilla_triplet_loss};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::gff::{gated_fuse, GateNetwork, GateNetworkSpec};
use crate::model::{
    detection_loss, encode_quad, DetectionHead, Encoder, EncoderRole, EncoderSpec, FeatureQuad,
    HeadSpec,
};
use crate::params::ParamStore;
use crate::qfc::{
    feature_loss, qfc_loss, Discriminator, DiscriminatorSpec, EmbeddingHeads,
};

/// The modules one arm trains. Optional parts are absent from arms that do
/// not use them, so their parameters never enter the checkpoint.
#[derive(Debug, Clone)]
pub struct Network {
    pub arm: Arm,
    pub toggles: ArmToggles,
    pub clean_encoder: Encoder,
    pub artifact_encoder: Option<Encoder>,
    pub head: DetectionHead,
    pub disc: Option<Discriminator>,
    pub embed: Option<EmbeddingHeads>,
    pub gate: Option<GateNetwork>,
    pub margin: f64,
    pub grl_lambda: f64,
    pub weights: LossWeights,
    pub baseline_weight: f64,
    pub triplet_margin: f64,
}

impl Network {
    pub fn new(cfg: &RunConfig, anchors: Vec<(f64, f64)>) -> Result<Self> {
        cfg.validate()?;
        let m = &cfg.model;
        let toggles = cfg.arm.toggles();
        let encoder = |role, stages| {
            Encoder::new(EncoderSpec {
                role,
                stage_count: stages,
                channels_out: m.channels,
                downsample_factor: m.downsample,
                stem_channels: m.stem_channels,
            })
        };
        let clean_encoder = encoder(EncoderRole::CleanEncoder, m.clean_stages)?;
        let artifact_encoder = if toggles.needs_artifact_encoder() {
            Some(encoder(EncoderRole::ArtifactEncoder, m.artifact_stages)?)
        } else {
            None
        };
        let head = DetectionHead::new(HeadSpec {
            channels_in: m.channels,
            hidden: m.head_hidden,
            anchors,
            stride: m.downsample,
        })?;
        let disc_spec = DiscriminatorSpec {
            input_dim: m.channels,
            hidden: vec![m.disc_hidden],
        };
        let disc = match (toggles.qfc, toggles.alignment) {
            (QfcMode::Full | QfcMode::FeatureOnly, _) => Some(Discriminator::new("adv", disc_spec)?),
            (_, Alignment::Dann) => Some(Discriminator::new("adv", disc_spec)?),
            _ => None,
        };
        let embed = (toggles.qfc == QfcMode::Full)
            .then(|| EmbeddingHeads::new("qfc", m.channels, m.embed_hidden, m.embed_dim));
        let gate = if toggles.fusion == Fusion::Gated {
            Some(GateNetwork::new(
                "gff",
                GateNetworkSpec {
                    channels: m.channels,
                    hidden: m.gate_hidden,
                },
            )?)
        } else {
            None
        };
        Ok(Self {
            arm: cfg.arm,
            toggles,
            clean_encoder,
            artifact_encoder,
            head,
            disc,
            embed,
            gate,
            margin: cfg.margin,
            grl_lambda: m.grl_lambda,
            weights: cfg.weights,
            baseline_weight: cfg.baseline.weight,
            triplet_margin: cfg.baseline.triplet_margin,
        })
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.clean_encoder.init(store, rng);
        if let Some(e) = &self.artifact_encoder {
            e.init(store, rng);
        }
        self.head.init(store, rng);
        if let Some(d) = &self.disc {
            d.init(store, rng);
        }
        if let Some(e) = &self.embed {
            e.init(store, rng);
        }
        if let Some(gt) = &self.gate {
            gt.init(store, rng);
        }
    }

    fn artifact_encoder(&self) -> Result<&Encoder> {
        self.artifact_encoder
            .as_ref()
            .ok_or_else(|| Error::Config(format!("arm {} has no artifact encoder", self.arm)))
    }

    /// Single-image inference path: `D(E_C(x))`.
    pub fn detect(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let z = self.clean_encoder.forward(g, store, x)?;
        self.head.forward(g, store, z)
    }

    /// `z ⊕ z_aa` for the arm's fusion mode.
    pub fn fuse(&self, g: &mut Graph, store: &ParamStore, z: Var, z_aa: Var) -> Result<Var> {
        match (self.toggles.fusion, &self.gate) {
            (Fusion::Gated, Some(gate)) => gated_fuse(g, store, gate, z, z_aa),
            (Fusion::Plain, _) => adain_only_arm(g, z, z_aa),
            _ => Err(Error::Config(format!("arm {} does not fuse features", self.arm))),
        }
    }
}

/// Outputs of the four-branch forward pass.
#[derive(Debug, Clone, Copy)]
pub struct CdfiOutputs {
    /// `[y_c, y_ca, y_a, y_aa]`.
    pub grids: [Var; 4],
    pub quad: FeatureQuad,
    /// `[z_cc ⊕ z_aa, z_ca ⊕ z_aa]`.
    pub fused: [Var; 2],
}

/// `y_c = D(z_cc)`, `y_ca = D(z_cc ⊕ z_aa)`, `y_a = D(z_ca)`,
/// `y_aa = D(z_ca ⊕ z_aa)` with one shared head.
pub fn forward_cdfi(g: &mut Graph, store: &ParamStore, net: &Network, x_c: Var, x_a: Var) -> Result<CdfiOutputs> {
    if g.shape(x_c)[0] != g.shape(x_a)[0] {
        return Err(Error::Shape(format!(
            "unpaired batch: {} clean vs {} artifact images",
            g.shape(x_c)[0],
            g.shape(x_a)[0]
        )));
    }
    let quad = encode_quad(g, store, x_c, x_a, &net.clean_encoder, net.artifact_encoder()?)?;
    let f_ca = net.fuse(g, store, quad.z_cc, quad.z_aa)?;
    let f_aa = net.fuse(g, store, quad.z_ca, quad.z_aa)?;
    let grids = [
        net.head.forward(g, store, quad.z_cc)?,
        net.head.forward(g, store, f_ca)?,
        net.head.forward(g, store, quad.z_ca)?,
        net.head.forward(g, store, f_aa)?,
    ];
    Ok(CdfiOutputs {
        grids,
        quad,
        fused: [f_ca, f_aa],
    })
}

/// Scalar losses of one step: the four branch losses, the cross-domain term
/// and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_c: f64,
    pub l_ca: f64,
    pub l_a: f64,
    pub l_aa: f64,
    pub l_q: f64,
    /// Feature and distance parts of `l_q`; 0 when the arm has no QFC term.
    pub l_f: f64,
    pub l_d: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn compose(l_c: f64, l_ca: f64, l_a: f64, l_aa: f64, l_q: f64, w: &LossWeights) -> Self {
        Self {
            l_c,
            l_ca,
            l_a,
            l_aa,
            l_q,
            l_f: 0.0,
            l_d: 0.0,
            total: w.w1 * l_c + w.w2 * l_ca + w.w3 * l_a + w.w4 * l_aa + w.wq * l_q,
        }
    }
}

/// Graph node of the weighted total, plus the evaluated bundle.
#[derive(Debug, Clone, Copy)]
pub struct StepLoss {
    pub total: Var,
    pub bundle: LossBundle,
}

/// Weighted sum of whichever terms are present; absent terms count as 0.
pub fn total_loss(g: &mut Graph, terms: [Option<Var>; 5], w: &LossWeights) -> Result<StepLoss> {
    let weights = [w.w1, w.w2, w.w3, w.w4, w.wq];
    let mut vals = [0.0; 5];
    let mut acc: Option<Var> = None;
    for (i, (t, wt)) in terms.iter().zip(weights).enumerate() {
        if let Some(v) = *t {
            vals[i] = g.value(v).item();
            let s = g.scale(v, wt);
            acc = Some(match acc {
                Some(a) => g.add(a, s)?,
                None => s,
            });
        }
    }
    let total = acc.ok_or_else(|| Error::InvalidParameter("no loss terms".into()))?;
    let bundle = LossBundle {
        total: g.value(total).item(),
        ..LossBundle::compose(vals[0], vals[1], vals[2], vals[3], vals[4], w)
    };
    Ok(StepLoss { total, bundle })
}

/// Loss of a single-stream step (`x` mixed or single domain).
pub fn single_step_loss(
    g: &mut Graph,
    store: &ParamStore,
    net: &Network,
    x: Var,
    gts: &[Vec<BBox>],
) -> Result<StepLoss> {
    let grid = net.detect(g, store, x)?;
    let l = detection_loss(g, grid, &net.head.spec, gts)?;
    total_loss(g, [Some(l), None, None, None, None], &net.weights)
}

/// Loss of a paired step for every arm that sees clean and artifact inputs
/// side by side. For the alignment baselines the cross-domain slot holds
/// the baseline term and is weighted by the baseline weight.
pub fn paired_step_loss(
    g: &mut Graph,
    store: &ParamStore,
    net: &Network,
    x_c: Var,
    x_a: Var,
    gt_c: &[Vec<BBox>],
    gt_a: &[Vec<BBox>],
) -> Result<StepLoss> {
    let spec = &net.head.spec;
    let t = net.toggles;
    let mut terms: [Option<Var>; 5] = [None; 5];
    let quad = match t.branches {
        Branches::Quad => {
            let out = forward_cdfi(g, store, net, x_c, x_a)?;
            terms[0] = Some(detection_loss(g, out.grids[0], spec, gt_c)?);
            terms[1] = Some(detection_loss(g, out.grids[1], spec, gt_c)?);
            terms[2] = Some(detection_loss(g, out.grids[2], spec, gt_a)?);
            terms[3] = Some(detection_loss(g, out.grids[3], spec, gt_a)?);
            Some(out.quad)
        }
        Branches::Pair => {
            let (z_cc, z_ca, quad) = if t.needs_artifact_encoder() {
                let q = encode_quad(g, store, x_c, x_a, &net.clean_encoder, net.artifact_encoder()?)?;
                (q.z_cc, q.z_ca, Some(q))
            } else {
                let z_cc = net.clean_encoder.forward(g, store, x_c)?;
                let z_ca = net.clean_encoder.forward(g, store, x_a)?;
                (z_cc, z_ca, None)
            };
            let y_c = net.head.forward(g, store, z_cc)?;
            let y_a = net.head.forward(g, store, z_ca)?;
            terms[0] = Some(detection_loss(g, y_c, spec, gt_c)?);
            terms[2] = Some(detection_loss(g, y_a, spec, gt_a)?);
            terms[4] = alignment_term(g, store, net, z_cc, z_ca, quad.as_ref())?;
            quad
        }
        Branches::Single => {
            return Err(Error::Config(format!("arm {} is not a paired arm", net.arm)));
        }
    };
    let mut parts = (0.0, 0.0);
    if let Some(q) = quad {
        let disc = net.disc.as_ref();
        match (t.qfc, disc) {
            (QfcMode::Full, Some(d)) => {
                let embed = net.embed.as_ref().ok_or_else(|| Error::Config("missing embedding heads".into()))?;
                let terms_q = qfc_loss(g, store, &q, d, embed, net.margin, net.grl_lambda)?;
                let v = terms_q.values(g, net.margin);
                parts = (v.l_f, v.l_d);
                terms[4] = Some(terms_q.l_q);
            }
            (QfcMode::FeatureOnly, Some(d)) => {
                let l_f = feature_loss(g, store, &q, d, net.grl_lambda)?;
                parts.0 = g.value(l_f).item();
                terms[4] = Some(l_f);
            }
            _ => {}
        }
    }
    let mut w = net.weights;
    if t.alignment != Alignment::None {
        w.wq = net.baseline_weight;
    }
    let mut step = total_loss(g, terms, &w)?;
    (step.bundle.l_f, step.bundle.l_d) = parts;
    Ok(step)
}

fn alignment_term(
    g: &mut Graph,
    store: &ParamStore,
    net: &Network,
    z_cc: Var,
    z_ca: Var,
    quad: Option<&FeatureQuad>,
) -> Result<Option<Var>> {
    let align = net.toggles.alignment;
    if align == Alignment::None {
        return Ok(None);
    }
    let u = g.spatial_mean(z_cc)?;
    let v = g.spatial_mean(z_ca)?;
    let term = match align {
        Alignment::Coral => coral_loss(g, u, v)?,
        Alignment::Mmd => {
            let bw = median_bandwidth(g.value(u), g.value(v))?;
            mmd_loss(g, u, v, bw)?
        }
        Alignment::Triplet => {
            let q = quad.ok_or_else(|| Error::Config("triplet needs the artifact encoder".into()))?;
            let n = g.spatial_mean(q.z_ac)?;
            vanilla_triplet_loss(g, u, v, n, net.triplet_margin)?
        }
        Alignment::Dann => {
            let d = net.disc.as_ref().ok_or_else(|| Error::Config("missing discriminator".into()))?;
            dann_arm(g, store, d, z_cc, z_ca, net.grl_lambda)?
        }
        Alignment::None => unreachable!(),
    };
    Ok(Some(term))
}
