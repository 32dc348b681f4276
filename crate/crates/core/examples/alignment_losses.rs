//! Compares the CORAL, MMD and triplet alignment statistics used by the
//! baseline arms on feature batches drawn from shifted distributions.
//!
//!     cargo run --release --example alignment_losses

use cdfi::baselines::{coral_value, median_bandwidth, mmd_value, triplet_value};
use cdfi::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 1.0)?;
    let source = Tensor::from_fn(&[64, 6], |_| normal.sample(&mut rng));
    for shift in [0.0, 0.5, 1.0, 2.0] {
        let target = Tensor::from_fn(&[64, 6], |i| (1.0 + shift * (i % 2) as f64) * normal.sample(&mut rng) + shift);
        let bandwidth = median_bandwidth(&source, &target)?;
        let (coral, _, _) = coral_value(&source, &target)?;
        let (mmd, _, _) = mmd_value(&source, &target, bandwidth)?;
        println!("shift {shift:.1}: CORAL {coral:.4}  MMD {mmd:.4} (bandwidth {bandwidth:.3})");
    }
    let anchor = [0.0, 0.0];
    println!(
        "triplet, margin 1: easy {:.2}  hard {:.2}",
        triplet_value(&anchor, &[0.1, 0.0], &[3.0, 0.0], 1.0),
        triplet_value(&anchor, &[2.0, 0.0], &[0.5, 0.0], 1.0)
    );
    Ok(())
}
