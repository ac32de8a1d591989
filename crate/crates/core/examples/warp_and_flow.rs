// Block-matching flow against the analytic flow of a synthetic scene, and
// what each does to a warped mask.
//
// The exact field leaves a ghost behind a moving object: background that the
// object uncovers has zero motion, so it samples the object's old position.
// The refiner is what removes it during propagation.

use vosreid::flow::{warp_bilinear, BlockMatchingFlow, FlowEstimator};
use vosreid::grid::ProbMap;
use vosreid::metrics::region_jaccard;
use vosreid::synth;

fn main() -> vosreid::Result<()> {
    let scene = synth::generate(&synth::unoccluded_scene(), 0)?;
    let seq = &scene.sequence;
    let estimator = BlockMatchingFlow::default();

    for t in 1..4 {
        // A field on frame t's grid pointing into frame t-1 pulls t-1's mask forward.
        let estimated = estimator.estimate(seq.frame(t)?, seq.frame(t - 1)?)?;
        let exact = &scene.flows[t - 1];

        let gt = &scene.ground_truth[t];
        let (mut err, mut n) = (0.0f64, 0usize);
        for ((e, o), &l) in estimated.data().iter().zip(exact.data()).zip(gt.data()) {
            if l > 0 {
                err += (((e[0] - o[0]).powi(2) + (e[1] - o[1]).powi(2)) as f64).sqrt();
                n += 1;
            }
        }

        let prev = ProbMap::from_label(&scene.ground_truth[t - 1], 1);
        let j_est = region_jaccard(&warp_bilinear(&prev, &estimated)?.binarize(0.5), &gt.mask(1))?;
        let j_exact = region_jaccard(&warp_bilinear(&prev, exact)?.binarize(0.5), &gt.mask(1))?;
        println!(
            "{} -> {t}: endpoint error on objects {:.2} px, warped J estimated {j_est:.3} exact {j_exact:.3}",
            t - 1,
            err / n as f64
        );
    }
    Ok(())
}
