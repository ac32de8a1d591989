// Scores degraded predictions against ground truth and prints the summary table.

use vosreid::grid::LabelMap;
use vosreid::metrics::evaluate;
use vosreid::synth;

/// Shifts every label right by `dx` pixels, with a little more each frame.
fn drift(labels: &[LabelMap], dx: usize) -> Vec<LabelMap> {
    labels
        .iter()
        .enumerate()
        .map(|(t, l)| {
            let shift = dx * t / 4;
            LabelMap::from_fn(l.width(), l.height(), |x, y| if x >= shift { l.get(x - shift, y) } else { 0 })
        })
        .collect()
}

fn main() -> vosreid::Result<()> {
    let scene = synth::generate(&synth::unoccluded_scene(), 0)?;
    for dx in [0, 1, 3] {
        let eval = evaluate(&drift(&scene.ground_truth, dx), &scene.ground_truth, None)?;
        println!("drift {dx} px per 4 frames (tolerance {} px)", eval.tolerance);
        print!("{}", eval.table());
        println!();
    }
    Ok(())
}
