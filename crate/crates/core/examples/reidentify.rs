// Searches a frame for an object from its first-frame appearance, and shows
// how the two gates treat the best match.

use vosreid::bbox::prob_box;
use vosreid::grid::ProbMap;
use vosreid::reid::{reidentify, score_candidates, HistogramDescriptor, NccProposals, ReidGate, Template};
use vosreid::synth;

fn main() -> vosreid::Result<()> {
    let scene = synth::generate(&synth::occlusion_scene(), 0)?;
    let seq = &scene.sequence;
    let template = Template::from_first_frame(&seq.frames()[0], &scene.first_masks()[0], 0, &HistogramDescriptor)?;
    println!("template box {:?}", template.bbox);

    let proposals = NccProposals::default();
    let t = 12;
    for c in score_candidates(seq.frame(t)?, &template, &proposals, &HistogramDescriptor)? {
        println!("  candidate {:?} similarity {:.3}", c.bbox, c.similarity);
    }

    let gate = ReidGate::default();
    let truth = ProbMap::from_label(&scene.ground_truth[t], 1);
    let (w, h) = seq.dims();
    for (what, current) in [("lost", ProbMap::zeros(w, h)), ("already tracked", truth)] {
        let out = reidentify(seq.frame(t)?, &current, &template, &proposals, &HistogramDescriptor, gate)?;
        println!(
            "{what:>15}: current box {:?}, best {:?}, score {:.3}, accepted {}",
            prob_box(&current, 0.5),
            out.bbox,
            out.score,
            out.is_accepted()
        );
    }
    Ok(())
}
