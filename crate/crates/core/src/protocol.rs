//! Seed-isolation experiment matrices and their execution.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DatasetPair;
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::store::RunStore;
use crate::training::{run_id, train_run, Onset, RunInput, RunRecord, SeedVector, SourceId, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitFlipMarker {
    BitFlip,
}

/// What changes between the runs of a condition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Varied {
    BitFlip(BitFlipMarker),
    Sources(BTreeSet<SourceId>),
}

impl Varied {
    pub fn sources(list: impl IntoIterator<Item = SourceId>) -> Self {
        Varied::Sources(list.into_iter().collect())
    }

    pub fn all() -> Self {
        Self::sources(SourceId::ALL)
    }

    pub fn bit_flip() -> Self {
        Varied::BitFlip(BitFlipMarker::BitFlip)
    }

    pub fn label(&self) -> String {
        match self {
            Varied::BitFlip(_) => "bit_flip".into(),
            Varied::Sources(s) if s.len() == SourceId::ALL.len() => "all_sources".into(),
            Varied::Sources(s) => s.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+"),
        }
    }
}

/// A family of `replicates` runs varying one set of factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub varied: Varied,
    #[serde(alias = "R")]
    pub replicates: usize,
    #[serde(default = "default_fixed_seed")]
    pub fixed_seed: u64,
    #[serde(default)]
    pub onset_epoch: Option<usize>,
    pub model: String,
    pub config: String,
    pub dataset: String,
}

fn default_fixed_seed() -> u64 {
    1
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::Plan {
                plan: self.name.clone(),
                reason: reason.into(),
            })
        };
        if self.replicates < 2 {
            return fail(&format!("needs at least 2 replicates, got {}", self.replicates));
        }
        match &self.varied {
            Varied::Sources(s) if s.is_empty() => fail("no varied source"),
            Varied::Sources(s) if self.onset_epoch.is_some() && s.len() != 1 => {
                fail("an onset requires exactly one varied source")
            }
            Varied::BitFlip(_) if self.onset_epoch.is_some() => fail("bit-flip plans take no onset"),
            _ => Ok(()),
        }
    }
}

/// The fully resolved inputs of every run in a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub plan_name: String,
    pub varied: Varied,
    pub onset_epoch: Option<usize>,
    pub model: String,
    pub config: String,
    pub dataset: String,
    pub runs: Vec<RunInput>,
}

/// Run `i` (1-based) gets seed `i` for every varied source and the fixed
/// constant elsewhere; low-level noise stays off unless varied. Bit-flip
/// plans keep all seeds fixed and use flip-stream seed `i`.
pub fn build_plan(plan: &ExperimentPlan) -> Result<Condition> {
    plan.validate()?;
    let base = SeedVector::fixed(plan.fixed_seed);
    let runs = (1..=plan.replicates as u64)
        .map(|i| match &plan.varied {
            Varied::BitFlip(_) => RunInput {
                seeds: base,
                onset: None,
                bitflip_seed: Some(i),
            },
            Varied::Sources(sources) => {
                let mut seeds = base;
                for &s in sources {
                    seeds.set(s, i);
                }
                let onset = plan
                    .onset_epoch
                    .filter(|&e| e > 0)
                    .map(|epoch| Onset { epoch, baseline: base });
                RunInput {
                    seeds,
                    onset,
                    bitflip_seed: None,
                }
            }
        })
        .collect();
    Ok(Condition {
        plan_name: plan.name.clone(),
        varied: plan.varied.clone(),
        onset_epoch: plan.onset_epoch,
        model: plan.model.clone(),
        config: plan.config.clone(),
        dataset: plan.dataset.clone(),
        runs,
    })
}

/// One condition per onset epoch, named `<plan>@onset<e>`.
pub fn onset_sweep(base: &ExperimentPlan, onsets: &[usize], epochs: usize) -> Result<Vec<Condition>> {
    onsets
        .iter()
        .map(|&e| {
            if e >= epochs {
                return Err(Error::Plan {
                    plan: base.name.clone(),
                    reason: format!("onset {e} is not below the {epochs} training epochs"),
                });
            }
            build_plan(&ExperimentPlan {
                name: format!("{}@onset{e}", base.name),
                onset_epoch: Some(e),
                ..base.clone()
            })
        })
        .collect()
}

/// Everything a condition's runs share.
#[derive(Clone, Copy, Debug)]
pub struct RunContext<'a> {
    pub model: &'a ModelSpec,
    pub config: &'a TrainConfig,
    pub data: &'a DatasetPair,
}

impl RunContext<'_> {
    pub fn run_id(&self, input: &RunInput) -> String {
        run_id(self.model, self.config, self.data.fingerprint(), input)
    }
}

#[derive(Debug)]
pub struct ConditionOutcome {
    /// Successful runs, ordered by replicate index.
    pub records: Vec<RunRecord>,
    /// Replicate index (0-based) of each record.
    pub replicates: Vec<usize>,
    /// `Error::Run` for each failed replicate.
    pub failures: Vec<Error>,
    pub trained: usize,
    pub reused: usize,
}

/// Trains (or loads from `store`) every run of `condition`.
pub fn run_condition(
    condition: &Condition,
    ctx: RunContext<'_>,
    parallelism: usize,
    store: &RunStore,
) -> Result<ConditionOutcome> {
    run_condition_with(condition, ctx, parallelism, store, |_, input| {
        train_run(ctx.model, ctx.config, ctx.data, input)
    })
}

/// [`run_condition`] with a custom trainer, for fault injection.
pub fn run_condition_with<F>(
    condition: &Condition,
    ctx: RunContext<'_>,
    parallelism: usize,
    store: &RunStore,
    train: F,
) -> Result<ConditionOutcome>
where
    F: Fn(usize, &RunInput) -> Result<RunRecord> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let one = |replicate: usize, input: &RunInput| -> (Result<RunRecord>, bool) {
        let id = ctx.run_id(input);
        if store.contains(&id) {
            match store.load(&id) {
                Ok(r) => return (Ok(r), false),
                Err(_) => {
                    if let Err(e) = store.quarantine(&id) {
                        return (Err(e), false);
                    }
                }
            }
        }
        let result = train(replicate, input).and_then(|r| {
            store.save(&r)?;
            Ok(r)
        });
        let result = result.map_err(|e| Error::Run {
            run_id: id,
            replicate,
            source: Box::new(e),
        });
        (result, true)
    };
    let results: Vec<(Result<RunRecord>, bool)> = pool.install(|| {
        condition
            .runs
            .par_iter()
            .enumerate()
            .map(|(i, input)| one(i, input))
            .collect()
    });
    let mut out = ConditionOutcome {
        records: Vec::new(),
        replicates: Vec::new(),
        failures: Vec::new(),
        trained: 0,
        reused: 0,
    };
    for (i, (result, fresh)) in results.into_iter().enumerate() {
        match result {
            Ok(r) => {
                if fresh {
                    out.trained += 1;
                } else {
                    out.reused += 1;
                }
                out.records.push(r);
                out.replicates.push(i);
            }
            Err(e) => out.failures.push(e),
        }
    }
    Ok(out)
}
