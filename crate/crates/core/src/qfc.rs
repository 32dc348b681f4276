//! Quadruple feature constraints: an orthogonality penalty between the two
//! encoders' features, adversarial domain confusion on the clean encoder,
//! and a margin constraint on per-role embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::{FeatureQuad, Mlp};
use crate::params::ParamStore;

pub const COSINE_EPS: f64 = 1e-8;
pub const DEFAULT_MARGIN: f64 = 100.0;
pub const DEFAULT_EMBED_DIM: usize = 64;

/// Squared cosine similarity of two pooled vectors, as used by [`proj_loss`].
pub fn cos_squared(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|a| a * a).sum();
    dot * dot / ((nu + COSINE_EPS) * (nv + COSINE_EPS))
}

/// Batch mean of the squared cosine between pooled `[N, C]` vectors.
pub fn proj_loss_pooled(g: &mut Graph, u: Var, v: Var) -> Result<Var> {
    let uv = g.mul(u, v)?;
    let dot = g.sum_last_axis(uv)?;
    let num = g.square(dot);
    let uu = g.square(u);
    let nu = g.sum_last_axis(uu)?;
    let nu = g.offset(nu, COSINE_EPS);
    let vv = g.square(v);
    let nv = g.sum_last_axis(vv)?;
    let nv = g.offset(nv, COSINE_EPS);
    let den = g.mul(nu, nv)?;
    let ratio = g.div(num, den)?;
    Ok(g.mean_all(ratio))
}

/// Orthogonality penalty between two `[N, C, h, w]` feature maps: squared
/// cosine of their global-average-pooled channel vectors, in `[0, 1]`.
pub fn proj_loss(g: &mut Graph, z_a: Var, z_c: Var) -> Result<Var> {
    if g.shape(z_a) != g.shape(z_c) {
        return Err(Error::Shape(format!(
            "proj_loss: {:?} vs {:?}",
            g.shape(z_a),
            g.shape(z_c)
        )));
    }
    let u = g.spatial_mean(z_a)?;
    let v = g.spatial_mean(z_c)?;
    proj_loss_pooled(g, u, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

/// Domain classifier on pooled features; outputs the logit of "clean".
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    mlp: Mlp,
}

impl Discriminator {
    pub fn new(prefix: &str, spec: DiscriminatorSpec) -> Result<Self> {
        if spec.input_dim == 0 || spec.hidden.contains(&0) {
            return Err(Error::InvalidParameter(format!("degenerate discriminator {spec:?}")));
        }
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden);
        dims.push(1);
        Ok(Self {
            mlp: Mlp::new(&format!("{prefix}/disc"), &dims),
            spec,
        })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.mlp.init(store, rng);
    }

    /// `[N, C] -> [N, 1]` logits of the unit-normalised rows of `pooled`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, pooled: Var) -> Result<Var> {
        let u = g.normalize_rows(pooled, COSINE_EPS)?;
        self.mlp.forward(g, store, u)
    }
}

/// Binary cross-entropy of the discriminator labelling pooled clean-input
/// features 1 and artifact-input features 0, summed over the two and
/// averaged over the batch. Gradients reaching the features are multiplied
/// by `-lambda`; the discriminator itself descends the loss.
pub fn domain_confusion_pooled(
    g: &mut Graph,
    store: &ParamStore,
    disc: &Discriminator,
    u_clean: Var,
    u_artifact: Var,
    lambda: f64,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(2);
    for (u, label) in [(u_clean, 1.0), (u_artifact, 0.0)] {
        let n = g.shape(u)[0];
        let r = g.grad_reverse(u, lambda);
        let logits = disc.logits(g, store, r)?;
        let bce = g.bce_with_logits(logits, &vec![label; n])?;
        terms.push(g.scale(bce, 1.0 / n as f64));
    }
    g.add(terms[0], terms[1])
}

/// [`domain_confusion_pooled`] on `z_cc = E_C(x_c)` and `z_ca = E_C(x_a)`.
pub fn domain_confusion_loss(
    g: &mut Graph,
    store: &ParamStore,
    disc: &Discriminator,
    z_cc: Var,
    z_ca: Var,
    lambda: f64,
) -> Result<Var> {
    let u = g.spatial_mean(z_cc)?;
    let v = g.spatial_mean(z_ca)?;
    domain_confusion_pooled(g, store, disc, u, v, lambda)
}

/// `proj(z_ac, z_cc) + proj(z_aa, z_ca) + domain confusion on (z_cc, z_ca)`.
pub fn feature_loss(
    g: &mut Graph,
    store: &ParamStore,
    quad: &FeatureQuad,
    disc: &Discriminator,
    lambda: f64,
) -> Result<Var> {
    let p1 = proj_loss(g, quad.z_ac, quad.z_cc)?;
    let p2 = proj_loss(g, quad.z_aa, quad.z_ca)?;
    let dom = domain_confusion_loss(g, store, disc, quad.z_cc, quad.z_ca, lambda)?;
    let s = g.add(p1, p2)?;
    g.add(s, dom)
}

/// One small projection per feature role, all into a shared embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHeads {
    cc: Mlp,
    ac: Mlp,
    ca: Mlp,
    aa: Mlp,
}

impl EmbeddingHeads {
    pub fn new(prefix: &str, channels: usize, hidden: usize, embed_dim: usize) -> Self {
        let head = |role: &str| Mlp::new(&format!("{prefix}/embed_{role}"), &[channels, hidden, embed_dim]);
        Self {
            cc: head("cc"),
            ac: head("ac"),
            ca: head("ca"),
            aa: head("aa"),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.cc.output_dim()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for h in [&self.cc, &self.ac, &self.ca, &self.aa] {
            h.init(store, rng);
        }
    }

    /// Embeddings `[e_cc, e_ac, e_ca, e_aa]`, each `[N, E]`.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, quad: &FeatureQuad) -> Result<[Var; 4]> {
        let mut out = Vec::with_capacity(4);
        for (head, z) in [
            (&self.cc, quad.z_cc),
            (&self.ac, quad.z_ac),
            (&self.ca, quad.z_ca),
            (&self.aa, quad.z_aa),
        ] {
            let pooled = g.spatial_mean(z)?;
            out.push(head.forward(g, store, pooled)?);
        }
        Ok([out[0], out[1], out[2], out[3]])
    }
}

/// The two margin hinges for one sample, given squared distances.
pub fn margin_hinge(d_pos: f64, d_neg_ac: f64, d_neg_aa: f64, margin: f64) -> f64 {
    (d_pos - d_neg_ac + margin).max(0.0) + (d_pos - d_neg_aa + margin).max(0.0)
}

fn squared_distance(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let d2 = g.square(d);
    g.sum_last_axis(d2)
}

/// Batch mean of [`margin_hinge`] on embeddings `[e_cc, e_ac, e_ca, e_aa]`:
/// pulls `z_cc` and `z_ca` together, pushes `z_ac` from `z_cc` and `z_aa`
/// from `z_ca`.
pub fn distance_loss_from_embeddings(g: &mut Graph, e: [Var; 4], margin: f64) -> Result<Var> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter(format!("margin must be positive, got {margin}")));
    }
    let [cc, ac, ca, aa] = e;
    let pos = squared_distance(g, cc, ca)?;
    let neg_ac = squared_distance(g, cc, ac)?;
    let neg_aa = squared_distance(g, ca, aa)?;
    let h1 = g.sub(pos, neg_ac)?;
    let h1 = g.offset(h1, margin);
    let h1 = g.relu(h1);
    let h2 = g.sub(pos, neg_aa)?;
    let h2 = g.offset(h2, margin);
    let h2 = g.relu(h2);
    let s = g.add(h1, h2)?;
    Ok(g.mean_all(s))
}

pub fn distance_loss(
    g: &mut Graph,
    store: &ParamStore,
    quad: &FeatureQuad,
    heads: &EmbeddingHeads,
    margin: f64,
) -> Result<Var> {
    let e = heads.embed(g, store, quad)?;
    distance_loss_from_embeddings(g, e, margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfcLosses {
    pub l_f: f64,
    pub l_d: f64,
    pub l_q: f64,
    pub margin: f64,
}

/// Graph nodes of the QFC terms; `l_q = l_f + l_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QfcTerms {
    pub l_f: Var,
    pub l_d: Var,
    pub l_q: Var,
}

impl QfcTerms {
    pub fn values(&self, g: &Graph, margin: f64) -> QfcLosses {
        QfcLosses {
            l_f: g.value(self.l_f).item(),
            l_d: g.value(self.l_d).item(),
            l_q: g.value(self.l_q).item(),
            margin,
        }
    }
}

pub fn qfc_loss(
    g: &mut Graph,
    store: &ParamStore,
    quad: &FeatureQuad,
    disc: &Discriminator,
    heads: &EmbeddingHeads,
    margin: f64,
    lambda: f64,
) -> Result<QfcTerms> {
    let l_f = feature_loss(g, store, quad, disc, lambda)?;
    let l_d = distance_loss(g, store, quad, heads, margin)?;
    let l_q = g.add(l_f, l_d)?;
    Ok(QfcTerms { l_f, l_d, l_q })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::Tensor;

    /// A `[1, C, 2, 2]` map whose spatial mean is `v`.
    fn map_with_mean(v: &[f64]) -> Tensor {
        let c = v.len();
        Tensor::from_fn(&[1, c, 2, 2], |i| {
            let (ch, pos) = (i / 4, i % 4);
            v[ch] + [0.5, -0.5, 0.25, -0.25][pos]
        })
    }

    fn linear_disc(w: [f64; 2]) -> (Discriminator, ParamStore) {
        let disc = Discriminator::new(
            "qfc",
            DiscriminatorSpec {
                input_dim: 2,
                hidden: vec![],
            },
        )
        .unwrap();
        let mut store = ParamStore::new();
        store.insert("qfc/disc/l0/weight", Tensor::new(vec![2, 1], w.to_vec()).unwrap());
        store.insert("qfc/disc/l0/bias", Tensor::zeros(&[1]));
        (disc, store)
    }

    fn quad_from(g: &mut Graph, pooled: [[f64; 2]; 4]) -> FeatureQuad {
        let [cc, ac, ca, aa] = pooled.map(|p| map_with_mean(&p));
        FeatureQuad {
            z_cc: g.input(cc),
            z_ac: g.input(ac),
            z_ca: g.input(ca),
            z_aa: g.input(aa),
        }
    }

    #[test]
    fn projection_closed_forms() {
        let mut g = Graph::new();
        let cases = [([1.0, 0.0], [0.0, 1.0], 0.0), ([1.0, 1.0], [1.0, 0.0], 0.5)];
        for (a, b, want) in cases {
            let (x, y) = (g.input(map_with_mean(&a)), g.input(map_with_mean(&b)));
            let l = proj_loss(&mut g, x, y).unwrap();
            assert!((g.value(l).item() - want).abs() < 1e-7);
        }
        let (x, y) = (g.input(map_with_mean(&[0.3, -0.7])), g.input(map_with_mean(&[0.9, -2.1])));
        let l = proj_loss(&mut g, x, y).unwrap();
        assert!((g.value(l).item() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn domain_term_at_chance_and_at_optimum() {
        let (disc, store) = linear_disc([0.0, 0.0]);
        let mut g = Graph::new();
        let (u, v) = (g.input(map_with_mean(&[1.0, 0.0])), g.input(map_with_mean(&[0.0, 1.0])));
        let l = domain_confusion_loss(&mut g, &store, &disc, u, v, 1.0).unwrap();
        assert!((g.value(l).item() - 2.0 * 2f64.ln()).abs() < 1e-12);

        let (disc, store) = linear_disc([50.0, -50.0]);
        let mut g = Graph::new();
        let (u, v) = (g.input(map_with_mean(&[1.0, 0.0])), g.input(map_with_mean(&[0.0, 1.0])));
        let l = domain_confusion_loss(&mut g, &store, &disc, u, v, 1.0).unwrap();
        assert!(g.value(l).item() < 1e-20);
    }

    #[test]
    fn feature_loss_closed_forms() {
        let (disc, store) = linear_disc([0.0, 0.0]);
        let mut g = Graph::new();
        let q = quad_from(&mut g, [[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let l = feature_loss(&mut g, &store, &q, &disc, 1.0).unwrap();
        assert!((g.value(l).item() - 2.0 * 2f64.ln()).abs() < 1e-12);

        let (disc, store) = linear_disc([50.0, -50.0]);
        let mut g = Graph::new();
        let q = quad_from(&mut g, [[1.0, 0.0], [3.0, 0.0], [0.0, 1.0], [0.0, 2.0]]);
        let l = feature_loss(&mut g, &store, &q, &disc, 1.0).unwrap();
        assert!((g.value(l).item() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn margin_hand_cases() {
        assert_eq!(margin_hinge(0.0, 0.0, 0.0, 100.0), 200.0);
        assert_eq!(margin_hinge(0.0, 100.0, 150.0, 100.0), 0.0);
        assert_eq!(margin_hinge(5.0, 3.0, 120.0, 100.0), 102.0);

        let mut g = Graph::new();
        let r = |v: [f64; 3]| Tensor::new(vec![1, 3], v.to_vec()).unwrap();
        let e = [
            g.input(r([0.0, 0.0, 0.0])),
            g.input(r([0.0, 3f64.sqrt(), 0.0])),
            g.input(r([5f64.sqrt(), 0.0, 0.0])),
            g.input(r([5f64.sqrt(), 0.0, 120f64.sqrt()])),
        ];
        let l = distance_loss_from_embeddings(&mut g, e, 100.0).unwrap();
        assert!((g.value(l).item() - 102.0).abs() < 1e-9);
        assert!(distance_loss_from_embeddings(&mut g, e, 0.0).is_err());
    }

    #[test]
    fn qfc_sum_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let disc = Discriminator::new(
            "qfc",
            DiscriminatorSpec {
                input_dim: 4,
                hidden: vec![8],
            },
        )
        .unwrap();
        let heads = EmbeddingHeads::new("qfc", 4, 8, 6);
        let mut store = ParamStore::new();
        disc.init(&mut store, &mut rng);
        heads.init(&mut store, &mut rng);
        let mut g = Graph::new();
        let mut map = || Tensor::from_fn(&[3, 4, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let q = FeatureQuad {
            z_cc: g.input(map()),
            z_ac: g.input(map()),
            z_ca: g.input(map()),
            z_aa: g.input(map()),
        };
        let t = qfc_loss(&mut g, &store, &q, &disc, &heads, 100.0, 1.0).unwrap();
        let v = t.values(&g, 100.0);
        assert_eq!(v.l_q, v.l_f + v.l_d);
        assert!(v.l_d >= 0.0 && v.l_q >= v.l_f);
    }
}
