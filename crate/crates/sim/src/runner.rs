use eprqkd_core::session::run_trial;
use eprqkd_core::Transcript;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::report::{RunReport, TrialRecord};
use crate::SimError;

pub struct RunOutput {
    pub report: RunReport,
    /// Per-trial transcripts in trial order, when requested.
    pub transcripts: Option<Vec<(u64, Transcript)>>,
}

/// Runs every trial (in parallel) and folds the results in trial order.
pub fn run(config: &RunConfig, keep_transcripts: bool) -> Result<RunOutput, SimError> {
    config.validate()?;
    let results: Vec<(TrialRecord, Option<Transcript>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = config.trial_seed(trial);
            let outcome = run_trial(&config.protocol, seed)?;
            let record = TrialRecord::from_run(trial, seed, &outcome);
            Ok((record, keep_transcripts.then_some(outcome.transcript)))
        })
        .collect::<Result<_, SimError>>()?;

    let mut records = Vec::with_capacity(results.len());
    let mut transcripts = keep_transcripts.then(Vec::new);
    for (record, transcript) in results {
        if let (Some(all), Some(t)) = (transcripts.as_mut(), transcript) {
            all.push((record.trial, t));
        }
        records.push(record);
    }
    Ok(RunOutput {
        report: RunReport::new(config.clone(), records),
        transcripts,
    })
}
