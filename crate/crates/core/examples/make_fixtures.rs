//! Writes demo models and images for trying the CLI.
//!
//! Usage: cargo run -p zerostyle-core --example make_fixtures -- <out-dir>

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zerostyle_core::fixtures::{inject_dead_channels, random_image, synthetic_net, toy_autoencoder, SyntheticSpec};
use zerostyle_core::{save_model_dir, write_image, Result};

fn main() -> Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()).into();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let (enc, dec) = toy_autoencoder(32, 32, &mut rng)?;
    save_model_dir(&enc, &out.join("toy-encoder"))?;
    save_model_dir(&dec, &out.join("toy-decoder"))?;

    let mut net = synthetic_net(&SyntheticSpec::googlenet(4, 64, 64), &mut rng)?;
    inject_dead_channels(&mut net, 0.2, 0.4, &mut rng);
    save_model_dir(&net.graph, &out.join("googlenet-div4"))?;

    for (dir, n, size) in [("calib32", 8, 32), ("calib64", 8, 64)] {
        std::fs::create_dir_all(out.join(dir))?;
        for i in 0..n {
            write_image(&random_image(size, size, &mut rng), &out.join(dir).join(format!("{i:03}.ppm")))?;
        }
    }
    write_image(&random_image(32, 32, &mut rng), &out.join("content.png"))?;
    write_image(&random_image(32, 32, &mut rng), &out.join("style.png"))?;
    println!("wrote fixtures to {}", out.display());
    Ok(())
}
