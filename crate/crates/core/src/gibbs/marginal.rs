use super::blocks::{draw_missing, Block};
use super::{equally_spaced, CompletedDataset, FitConfig, PosteriorArchive, Sampler};
use crate::error::{Error, Result};
use crate::model::{Mode, ModelData, PriorSpec};
use crate::rng::RngStream;

/// Run the marginal-profiling sampler to completion.
pub fn run_chain(data: &ModelData, config: &FitConfig, prior: &PriorSpec) -> Result<PosteriorArchive> {
    if data.mode != Mode::Marginal {
        return Err(Error::argument("run_chain needs model data built in marginal mode"));
    }
    let mut s = Sampler::new(data, prior.clone(), config.clone())?;
    s.run_until(config.iterations)?;
    Ok(s.finish())
}

/// Draw the missing cells once for each of `m` evenly spaced retained draws,
/// using that draw's classes, random effects and coefficients.
pub fn impute_marginal(archive: &PosteriorArchive, data: &ModelData, m: usize, stream: &RngStream) -> Result<Vec<CompletedDataset>> {
    if archive.dims != data.dims {
        return Err(Error::argument("archive and model data disagree in shape"));
    }
    let picks = equally_spaced(archive.draws.len(), m)?;
    picks
        .into_iter()
        .enumerate()
        .map(|(k, d)| {
            let draw = &archive.draws[d];
            let params = draw.outcome_params();
            let missing = data
                .patients
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = stream.substream(&[k as u64, Block::Imputation as u64, i as u64]);
                    draw_missing(p, &params, draw.allocation[i], &params.random_effects.row(i).transpose(), &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CompletedDataset::assemble(data, d, draw.iteration, &missing))
        })
        .collect()
}
