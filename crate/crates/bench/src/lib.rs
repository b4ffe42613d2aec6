//! Shared setup for the criterion benches.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zerostyle_core::fixtures::{inject_dead_channels, random_image, random_tensor, synthetic_net, SyntheticSpec};
use zerostyle_core::{prune_graph, Graph, PruneConfig, Result, Shape4, Tensor4};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A GoogLeNet-shaped net with 20-40% dead channels per relu, and its pruned copy.
pub struct PrunedPair {
    pub original: Graph,
    pub pruned: Graph,
    pub input: Tensor4,
}

pub fn pruned_pair(div: usize, size: usize, seed: u64) -> Result<PrunedPair> {
    let mut rng = rng(seed);
    let mut net = synthetic_net(&SyntheticSpec::googlenet(div, size, size), &mut rng)?;
    inject_dead_channels(&mut net, 0.2, 0.4, &mut rng);
    let calib: Vec<Tensor4> = (0..8).map(|_| random_image(size, size, &mut rng)).collect();
    let out = prune_graph(&net.graph, &calib, &[], PruneConfig::default())?;
    Ok(PrunedPair {
        original: net.graph,
        pruned: out.graph,
        input: random_image(size, size, &mut rng),
    })
}

/// Content and style features of the given shape.
pub fn feature_pair(c: usize, h: usize, w: usize, seed: u64) -> (Tensor4, Tensor4) {
    let mut rng = rng(seed);
    let s = Shape4::new(1, c, h, w);
    (random_tensor(s, -1.0, 1.0, &mut rng), random_tensor(s, -1.0, 1.0, &mut rng))
}
