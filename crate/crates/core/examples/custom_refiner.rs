// Plugs a user-defined refiner into the engine. This one keeps pixels of
// the warped map whose color is close to the patch's mean object color.

use vosreid::engine::{Backends, Engine, EngineConfig};
use vosreid::grid::ProbMap;
use vosreid::metrics::evaluate;
use vosreid::propagation::{MaskRefiner, RefineInput};
use vosreid::synth;

struct MeanColorRefiner {
    max_distance: f32,
}

impl MaskRefiner for MeanColorRefiner {
    fn name(&self) -> &str {
        "mean_color"
    }

    fn refine(&self, input: &RefineInput<'_>) -> vosreid::Result<ProbMap> {
        let (mut mean, mut n) = ([0.0f32; 3], 0.0f32);
        for (px, &p) in input.rgb.data().iter().zip(input.coarse.data()) {
            if p > 0.5 {
                for c in 0..3 {
                    mean[c] += px[c];
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return Ok(input.coarse.clone());
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let (w, h) = input.coarse.dims();
        Ok(ProbMap::from_fn(w, h, |x, y| {
            let px = input.rgb.get(x, y);
            let d = (0..3).map(|c| (px[c] - mean[c]).powi(2)).sum::<f32>().sqrt();
            let near = if d < self.max_distance { 1.0 } else { 0.0 };
            0.5 * input.coarse.get(x, y) + 0.5 * near
        }))
    }
}

fn main() -> vosreid::Result<()> {
    let scene = synth::generate(&synth::unoccluded_scene(), 0)?;
    for (name, backends) in [
        ("color model", Backends::default()),
        (
            "mean color",
            Backends {
                refiner: Box::new(MeanColorRefiner { max_distance: 0.2 }),
                ..Backends::default()
            },
        ),
    ] {
        let out = Engine::new(&scene.sequence, &backends, EngineConfig::default())?.run(&scene.first_masks())?;
        let eval = evaluate(&out.labels, &scene.ground_truth, None)?;
        println!("{name:>12}: global mean {:.3}, {} retrievals", eval.global_mean, out.iterations.len());
    }
    Ok(())
}
