use occbench::datamodel::{generate_synthetic_dataset, write_dataset, SynthConfig};
use occbench::occlusion::ObjectLibrary;

use crate::config::{output_dir, required, RunConfig};
use crate::error::CliResult;
use crate::{SynthDataArgs, SynthObjectsArgs};

pub fn synth_data(a: SynthDataArgs) -> CliResult<()> {
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let seed = required(a.common.seed, cfg.seed, "seed")?;
    let out = output_dir(a.common.out, cfg.output_dir, "synth-data")?;
    let config = SynthConfig { num_frames: a.frames as usize, image_size: a.image_size, seed, ..SynthConfig::default() };
    let data = generate_synthetic_dataset(&config)?;
    let manifest = write_dataset(&data, &out)?;
    println!("wrote {} frames to {}", data.manifest.len(), manifest.display());
    Ok(())
}

pub fn synth_objects(a: SynthObjectsArgs) -> CliResult<()> {
    let cfg = RunConfig::load_optional(a.common.config.as_deref())?;
    let seed = required(a.common.seed, cfg.seed, "seed")?;
    let out = output_dir(a.common.out, cfg.output_dir, "synth-objects")?;
    let lib = ObjectLibrary::synthetic(a.train, a.test, a.size, seed);
    lib.save(&out)?;
    println!("wrote {} objects ({} train, {} test) to {}", lib.entries().len(), a.train, a.test, out.display());
    Ok(())
}
