// Renders a scene description and writes frames and ground truth under the
// system temp directory.

use vosreid::{io, synth};

fn main() -> vosreid::Result<()> {
    let spec_path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/scenes/crossing.json");
    let text = std::fs::read_to_string(spec_path).map_err(|e| vosreid::Error::io(spec_path, e))?;
    let spec: synth::SyntheticSpec = serde_json::from_str(&text)?;
    let scene = synth::generate(&spec, 0)?;

    for (t, gt) in scene.ground_truth.iter().enumerate() {
        let counts: Vec<usize> = (1..=scene.num_instances() as u8)
            .map(|l| gt.data().iter().filter(|&&v| v == l).count())
            .collect();
        println!("frame {t:2}: pixels per object {counts:?}");
    }
    println!("object 2 reappears in frames {:?}", scene.reappearance_frames(1));

    let out = std::env::temp_dir().join("vosreid-crossing");
    io::save_sequence(&out.join("frames"), scene.sequence.frames())?;
    io::save_masks(&out.join("gt"), &scene.ground_truth)?;
    println!("wrote {}", out.display());
    Ok(())
}
