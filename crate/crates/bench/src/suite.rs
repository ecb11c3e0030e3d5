//! Shared plumbing of the suites: manifest lookup, record assembly and the
//! worker pool.

use std::time::Instant;

use rayon::prelude::*;

use crate::config::{RunConfig, SuiteManifest};
use crate::record::{ExperimentRecord, RecordDraft, Rule};

pub struct SuiteContext<'a> {
    pub config: &'a RunConfig,
    pub manifest: &'a SuiteManifest,
}

/// One unit of work producing one record.
pub type Job<'a> = Box<dyn Fn() -> ExperimentRecord + Send + Sync + 'a>;

/// Runs jobs on the worker pool; the output keeps the job order.
pub fn run_jobs(jobs: Vec<Job<'_>>) -> Vec<ExperimentRecord> {
    jobs.par_iter().map(|j| j()).collect()
}

/// One unit of work producing several records that share a computation.
pub type Batch<'a> = Box<dyn Fn() -> Vec<ExperimentRecord> + Send + Sync + 'a>;

pub fn run_batches(batches: Vec<Batch<'_>>) -> Vec<ExperimentRecord> {
    batches.par_iter().flat_map_iter(|b| b()).collect()
}

impl<'a> SuiteContext<'a> {
    pub fn new(config: &'a RunConfig, manifest: &'a SuiteManifest) -> Self {
        Self { config, manifest }
    }

    /// A draft pre-filled with the check's suite, id, anchor and the run seed.
    pub fn draft(&self, check: &str, n: usize, geometry: &str, config: String, x_name: &str) -> RecordDraft {
        let spec = self.manifest.get(check);
        RecordDraft {
            suite: spec.map_or_else(String::new, |s| s.suite.clone()),
            check: check.into(),
            anchor: spec.map_or_else(String::new, |s| s.anchor.clone()),
            n,
            geometry: geometry.into(),
            config,
            seed: self.config.seed,
            x_name: x_name.into(),
            ..RecordDraft::default()
        }
    }

    /// Fills `draft` with `fill` and judges it by the manifest entry of its check.
    pub fn measure<F>(&self, draft: RecordDraft, fill: F) -> ExperimentRecord
    where
        F: FnOnce(&mut RecordDraft) -> bubblelab::Result<()>,
    {
        self.measure_with(draft, fill)
    }

    /// [`Self::measure`] for fills with any displayable error.
    pub fn measure_with<F, E>(&self, mut draft: RecordDraft, fill: F) -> ExperimentRecord
    where
        F: FnOnce(&mut RecordDraft) -> Result<(), E>,
        E: std::fmt::Display,
    {
        let t0 = Instant::now();
        let Some(spec) = self.manifest.get(&draft.check).cloned() else {
            let reason = format!("check {} is not in the manifest", draft.check);
            return draft.failed(Rule::MaxAtMost, f64::NAN, &reason, 0.0);
        };
        if draft.anchor.is_empty() {
            draft.anchor = spec.anchor.clone();
        }
        match fill(&mut draft) {
            Ok(()) => draft.judge(spec.rule, spec.tolerance, t0.elapsed().as_secs_f64()),
            Err(e) => draft.failed(spec.rule, spec.tolerance, &e.to_string(), t0.elapsed().as_secs_f64()),
        }
    }
}

/// `key=value` pairs joined by `;`, numbers in full precision.
pub fn describe(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

pub fn list(v: &[f64]) -> String {
    v.iter().map(|x| crate::record::fmt_num(*x)).collect::<Vec<_>>().join(" ")
}
