use super::{equally_spaced, CompletedDataset, FitConfig, PosteriorArchive, Sampler};
use crate::error::{Error, Result};
use crate::model::{Mode, ModelData, PriorSpec};

/// Run the joint-profiling sampler to completion.
pub fn run_joint_chain(data: &ModelData, config: &FitConfig, prior: &PriorSpec) -> Result<PosteriorArchive> {
    if data.mode != Mode::Joint {
        return Err(Error::argument("run_joint_chain needs model data built in joint mode"));
    }
    let mut s = Sampler::new(data, prior.clone(), config.clone())?;
    s.run_until(config.iterations)?;
    Ok(s.finish())
}

/// `m` evenly spaced completed datasets from those stored during the run.
pub fn extract_imputations_joint(archive: &PosteriorArchive, data: &ModelData, m: usize) -> Result<Vec<CompletedDataset>> {
    if archive.mode != Mode::Joint {
        return Err(Error::argument("archive was not produced by the joint sampler"));
    }
    let picks = equally_spaced(archive.imputations.len(), m)?;
    Ok(picks
        .into_iter()
        .map(|k| {
            let s = &archive.imputations[k];
            CompletedDataset::assemble(data, s.draw_index, s.iteration, &s.values)
        })
        .collect())
}
