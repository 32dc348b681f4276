//! Renders a handful of clean scenes, corrupts each with every artifact
//! kind, and writes a contact sheet of PNGs.
//!
//!     cargo run --release --example synthetic_scenes -- out/scenes

use std::path::PathBuf;

use cdfi::data_synth::{
    inject_global_artifact, inject_local_artifact, render_clean_scene, ArtifactKind, SceneParams,
};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/scenes".into()));
    std::fs::create_dir_all(&out)?;
    let params = SceneParams {
        rng_seed: 11,
        ..Default::default()
    };
    for index in 0..4u64 {
        let clean = render_clean_scene(&params, index)?;
        clean.image.save_png(&out.join(format!("{index}_clean.png")))?;
        println!("scene {index}: {} lumen(s) {:?}", clean.boxes.len(), clean.boxes);
        for (k, kind) in ArtifactKind::ALL.into_iter().enumerate() {
            let seed = index * 10 + k as u64;
            let corrupted = if kind.is_local() {
                inject_local_artifact(&clean, kind, seed)?
            } else {
                inject_global_artifact(&clean, kind, seed)?
            };
            corrupted
                .image
                .save_png(&out.join(format!("{index}_{kind:?}.png").to_lowercase()))?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
