//! Domain-adaptation baselines: CORAL, MMD, triplet, adversarial-only and
//! plain-AdaIN fusion, all acting on pooled encoder features.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::gff::adain;
use crate::params::ParamStore;
use crate::qfc::{domain_confusion_loss, Discriminator};
use crate::tensor::Tensor;

fn check_pair(fs: &Tensor, ft: &Tensor) -> Result<(usize, usize, usize)> {
    let (ns, d) = fs.dims2()?;
    let (nt, dt) = ft.dims2()?;
    if d != dt {
        return Err(Error::Shape(format!("feature dims differ: {d} vs {dt}")));
    }
    Ok((ns, nt, d))
}

fn centred_covariance(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = x.dims2().expect("rank 2");
    let mut mean = vec![0.0; d];
    for row in x.data().chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let xc: Vec<f64> = x
        .data()
        .chunks(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in xc.chunks(d) {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += row[i] * row[j] / (n - 1) as f64;
            }
        }
    }
    (xc, cov)
}

/// `‖Cov(fs) − Cov(ft)‖²_F / (4d²)` with its gradients for both batches.
pub fn coral_value(fs: &Tensor, ft: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    let (ns, nt, d) = check_pair(fs, ft)?;
    if ns < 2 || nt < 2 {
        return Err(Error::InvalidParameter(format!(
            "CORAL needs at least 2 samples per batch, got {ns} and {nt}"
        )));
    }
    let (xs, cs) = centred_covariance(fs);
    let (xt, ct) = centred_covariance(ft);
    let scale = 1.0 / (4.0 * (d * d) as f64);
    let diff: Vec<f64> = cs.iter().zip(&ct).map(|(a, b)| a - b).collect();
    let value = scale * diff.iter().map(|v| v * v).sum::<f64>();
    let grad_of = |xc: &[f64], n: usize, sign: f64| {
        let k = sign * 4.0 * scale / (n - 1) as f64;
        let mut out = vec![0.0; xc.len()];
        for (orow, row) in out.chunks_mut(d).zip(xc.chunks(d)) {
            for j in 0..d {
                orow[j] = k * (0..d).map(|i| row[i] * diff[i * d + j]).sum::<f64>();
            }
        }
        out
    };
    Ok((
        value,
        Tensor::new(vec![ns, d], grad_of(&xs, ns, 1.0))?,
        Tensor::new(vec![nt, d], grad_of(&xt, nt, -1.0))?,
    ))
}

pub fn coral_loss(g: &mut Graph, fs: Var, ft: Var) -> Result<Var> {
    let (v, gs, gt) = coral_value(g.value(fs), g.value(ft))?;
    g.fused_scalar_multi(v, vec![(fs, gs), (ft, gt)])
}

/// Biased squared MMD with a Gaussian kernel, with gradients for both batches.
pub fn mmd_value(fs: &Tensor, ft: &Tensor, bandwidth: f64) -> Result<(f64, Tensor, Tensor)> {
    let (ns, nt, d) = check_pair(fs, ft)?;
    if ns == 0 || nt == 0 {
        return Err(Error::InvalidParameter("MMD needs nonempty batches".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let bw2 = bandwidth * bandwidth;
    let rows = |t: &Tensor| t.data().chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let (s, t) = (rows(fs), rows(ft));
    let kernel = |a: &[f64], b: &[f64]| {
        let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (-r2 / (2.0 * bw2)).exp()
    };
    let mut value = 0.0;
    let mut gs = vec![0.0; ns * d];
    let mut gt = vec![0.0; nt * d];
    let mut block = |a: &[Vec<f64>], b: &[Vec<f64>], w: f64, grad: &mut [f64]| {
        for (i, ai) in a.iter().enumerate() {
            for bj in b {
                let k = kernel(ai, bj);
                value += w * k;
                for c in 0..d {
                    grad[i * d + c] -= 2.0 * w * k * (ai[c] - bj[c]) / bw2;
                }
            }
        }
    };
    let (fs_n, ft_n) = (ns as f64, nt as f64);
    block(&s, &s, 1.0 / (fs_n * fs_n), &mut gs);
    block(&t, &t, 1.0 / (ft_n * ft_n), &mut gt);
    // the cross term is visited from both sides, half its weight each time
    block(&s, &t, -1.0 / (fs_n * ft_n), &mut gs);
    block(&t, &s, -1.0 / (fs_n * ft_n), &mut gt);
    Ok((value, Tensor::new(vec![ns, d], gs)?, Tensor::new(vec![nt, d], gt)?))
}

pub fn mmd_loss(g: &mut Graph, fs: Var, ft: Var, bandwidth: f64) -> Result<Var> {
    let (v, gs, gt) = mmd_value(g.value(fs), g.value(ft), bandwidth)?;
    g.fused_scalar_multi(v, vec![(fs, gs), (ft, gt)])
}

/// Median pairwise distance over both batches, floored at `1e-3`.
pub fn median_bandwidth(fs: &Tensor, ft: &Tensor) -> Result<f64> {
    let (_, _, d) = check_pair(fs, ft)?;
    let rows: Vec<&[f64]> = fs.data().chunks(d).chain(ft.data().chunks(d)).collect();
    let mut dists = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let r2: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
            dists.push(r2.sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    dists.sort_by(f64::total_cmp);
    Ok(dists[dists.len() / 2].max(1e-3))
}

pub fn triplet_value(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    (d(anchor, positive) - d(anchor, negative) + margin).max(0.0)
}

/// Batch mean of `max(‖a−p‖² − ‖a−n‖² + margin, 0)` over `[N, D]` rows.
pub fn vanilla_triplet_loss(g: &mut Graph, a: Var, p: Var, n: Var, margin: f64) -> Result<Var> {
    let ap = g.sub(a, p)?;
    let ap = g.square(ap);
    let ap = g.sum_last_axis(ap)?;
    let an = g.sub(a, n)?;
    let an = g.square(an);
    let an = g.sum_last_axis(an)?;
    let h = g.sub(ap, an)?;
    let h = g.offset(h, margin);
    let h = g.relu(h);
    Ok(g.mean_all(h))
}

/// Adversarial alignment as the only cross-domain loss.
pub fn dann_arm(
    g: &mut Graph,
    store: &ParamStore,
    disc: &Discriminator,
    z_clean: Var,
    z_artifact: Var,
    lambda: f64,
) -> Result<Var> {
    domain_confusion_loss(g, store, disc, z_clean, z_artifact, lambda)
}

/// Ungated fusion: the content feature restyled with the artifact feature's
/// statistics.
pub fn adain_only_arm(g: &mut Graph, z: Var, z_aa: Var) -> Result<Var> {
    if g.shape(z) != g.shape(z_aa) {
        return Err(Error::Shape(format!(
            "fusion inputs differ: {:?} vs {:?}",
            g.shape(z),
            g.shape(z_aa)
        )));
    }
    adain(g, z, z_aa)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{central_difference, relative_error};

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn coral_closed_form() {
        // sample variances 1 and 4
        let (v, _, _) = coral_value(&col(&[0.0, 1.0, 2.0]), &col(&[0.0, 2.0, 4.0])).unwrap();
        assert!((v - 2.25).abs() < 1e-12);
        assert!(coral_value(&col(&[1.0]), &col(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn mmd_singletons() {
        for r in [0.0, 0.5, 1.0, 3.0] {
            let (v, _, _) = mmd_value(&col(&[0.0]), &col(&[r]), 1.5).unwrap();
            assert!((v - (2.0 - 2.0 * (-r * r / (2.0 * 2.25)).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn triplet_hand_case() {
        assert_eq!(triplet_value(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], 3.0), 2.0);
        assert_eq!(triplet_value(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], 0.7), 0.7);
    }

    #[test]
    fn coral_and_mmd_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = Tensor::from_fn(&[5, 3], |_| rng.gen_range(-1.0..1.0));
        let t = Tensor::from_fn(&[4, 3], |_| rng.gen_range(-2.0..2.0));
        let inputs = [s, t];
        type F = fn(&Tensor, &Tensor) -> (f64, Tensor, Tensor);
        let coral: F = |a, b| coral_value(a, b).unwrap();
        let mmd: F = |a, b| mmd_value(a, b, 1.3).unwrap();
        for f in [coral, mmd] {
            let (_, gs, gt) = f(&inputs[0], &inputs[1]);
            for (slot, analytic) in [(0, gs), (1, gt)] {
                let numeric = central_difference(&inputs, slot, 1e-5, |x| f(&x[0], &x[1]).0);
                assert!(relative_error(analytic.data(), &numeric) < 1e-7);
            }
        }
    }
}
