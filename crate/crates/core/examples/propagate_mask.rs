// Carries the first-frame masks through a sequence one frame at a time with
// flow warping and the color-model refiner, without any re-identification.

use vosreid::flow::BlockMatchingFlow;
use vosreid::metrics::region_jaccard;
use vosreid::propagation::{propagate_mask, ColorModelRefiner, PropagationConfig};
use vosreid::synth;

fn main() -> vosreid::Result<()> {
    let scene = synth::generate(&synth::unoccluded_scene(), 0)?;
    let seq = &scene.sequence;
    let flow = BlockMatchingFlow::default();
    let refiner = ColorModelRefiner::default();
    let cfg = PropagationConfig::default();

    let mut maps = scene.first_masks();
    for t in 1..seq.len() {
        let mut scores = Vec::new();
        for (k, map) in maps.iter_mut().enumerate() {
            *map = propagate_mask(seq.frame(t - 1)?, seq.frame(t)?, map, k, &flow, &refiner, &cfg)?;
            let label = k as u8 + 1;
            scores.push(region_jaccard(&map.binarize(0.5), &scene.ground_truth[t].mask(label))?);
        }
        println!("frame {t:2}: J per object {scores:.3?}");
    }
    Ok(())
}
