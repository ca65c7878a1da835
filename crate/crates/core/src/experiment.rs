//! Experiment files: named datasets, models, configs and plans, plus the
//! analysis that turns stored runs into reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetPair, DatasetSource};
use crate::error::{Error, Result};
use crate::metrics::{report, report_predictions, Averaging, MetricsReport, ReportOptions};
use crate::mitigation::{combine, snapshot_ensemble_predict, tta_predict, TtaSpec};
use crate::models::ModelSpec;
use crate::protocol::{build_plan, onset_sweep, Condition, ExperimentPlan, RunContext, Varied};
use crate::store::RunStore;
use crate::training::{PredictionMatrix, RunRecord, TrainConfig};

/// A plan as written in the file; `onset` expands it into a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub name: String,
    pub model: String,
    pub config: String,
    pub dataset: String,
    pub varied: Varied,
    #[serde(alias = "R")]
    pub replicates: usize,
    #[serde(default)]
    pub onset: Vec<usize>,
    /// Overrides the global constant.
    #[serde(default)]
    pub fixed_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalOptions {
    pub bootstrap_reps: usize,
    pub cka_pair_cap: usize,
    pub fixed_seed: u64,
    /// Seeds bootstrap resampling and CKA subsetting.
    pub seed: u64,
    pub averaging: Averaging,
    /// Test-time augmentations evaluated by `analyze`.
    pub tta: Vec<TtaSpec>,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            bootstrap_reps: 1000,
            cka_pair_cap: 25,
            fixed_seed: 1,
            seed: 0,
            averaging: Averaging::Probabilities,
            tta: Vec::new(),
        }
    }
}

impl GlobalOptions {
    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            bootstrap_reps: self.bootstrap_reps,
            seed: self.seed,
            cka_pair_cap: self.cka_pair_cap,
            averaging: self.averaging,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: String,
    pub datasets: BTreeMap<String, DatasetSource>,
    pub models: BTreeMap<String, ModelSpec>,
    pub configs: BTreeMap<String, TrainConfig>,
    pub plans: Vec<PlanEntry>,
    #[serde(default)]
    pub options: GlobalOptions,
}

/// A condition together with the definitions it references.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedCondition {
    pub condition: Condition,
    /// Plan entry this came from (differs from the condition name for sweeps).
    pub plan: String,
    pub model: ModelSpec,
    pub config: TrainConfig,
}

impl ExperimentFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let exp: Self = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks cross-references and every definition.
    pub fn validate(&self) -> Result<()> {
        let named = |kind: &str, name: &str, e: Error| match e {
            Error::Config(m) => Error::Config(format!("{kind} `{name}`: {m}")),
            other => other,
        };
        for (name, m) in &self.models {
            m.validate().map_err(|e| named("model", name, e))?;
        }
        for (name, c) in &self.configs {
            c.validate().map_err(|e| named("config", name, e))?;
        }
        for t in &self.options.tta {
            t.validate()?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.plans {
            if !seen.insert(&p.name) {
                return Err(Error::Plan {
                    plan: p.name.clone(),
                    reason: "duplicate plan name".into(),
                });
            }
            let missing = |kind: &str, name: &str| Error::Plan {
                plan: p.name.clone(),
                reason: format!("unknown {kind} `{name}`"),
            };
            if !self.models.contains_key(&p.model) {
                return Err(missing("model", &p.model));
            }
            if !self.configs.contains_key(&p.config) {
                return Err(missing("config", &p.config));
            }
            if !self.datasets.contains_key(&p.dataset) {
                return Err(missing("dataset", &p.dataset));
            }
        }
        Ok(())
    }

    fn plan_for(&self, p: &PlanEntry) -> ExperimentPlan {
        ExperimentPlan {
            name: p.name.clone(),
            varied: p.varied.clone(),
            replicates: p.replicates,
            fixed_seed: p.fixed_seed.unwrap_or(self.options.fixed_seed),
            onset_epoch: None,
            model: p.model.clone(),
            config: p.config.clone(),
            dataset: p.dataset.clone(),
        }
    }

    /// Every condition, in plan order; sweeps expand in onset order.
    pub fn conditions(&self) -> Result<Vec<ResolvedCondition>> {
        let mut out = Vec::new();
        for p in &self.plans {
            let plan = self.plan_for(p);
            let config = self.configs[&p.config].clone();
            let conds = if p.onset.is_empty() {
                vec![build_plan(&plan)?]
            } else {
                onset_sweep(&plan, &p.onset, config.epochs)?
            };
            out.extend(conds.into_iter().map(|condition| ResolvedCondition {
                condition,
                plan: p.name.clone(),
                model: self.models[&p.model].clone(),
                config: config.clone(),
            }));
        }
        Ok(out)
    }
}

/// Loads each dataset once.
#[derive(Default)]
pub struct DatasetCache {
    loaded: BTreeMap<String, DatasetPair>,
}

impl DatasetCache {
    pub fn get(&mut self, exp: &ExperimentFile, name: &str) -> Result<&DatasetPair> {
        if !self.loaded.contains_key(name) {
            let src = exp
                .datasets
                .get(name)
                .ok_or_else(|| Error::Config(format!("unknown dataset `{name}`")))?;
            self.loaded.insert(name.to_string(), src.load(name)?);
        }
        Ok(&self.loaded[name])
    }
}

/// Loads a condition's runs from the store; every run must be present.
pub fn load_condition(rc: &ResolvedCondition, data: &DatasetPair, store: &RunStore) -> Result<Vec<RunRecord>> {
    let ctx = RunContext {
        model: &rc.model,
        config: &rc.config,
        data,
    };
    rc.condition
        .runs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let id = ctx.run_id(input);
            if !store.contains(&id) {
                return Err(Error::Plan {
                    plan: rc.condition.plan_name.clone(),
                    reason: format!("run {id} (replicate {i}) is not in the store; execute `run` first"),
                });
            }
            store.load(&id)
        })
        .collect()
}

fn cached<F>(store: &RunStore, run: &RunRecord, file: &str, compute: F) -> Result<PredictionMatrix>
where
    F: FnOnce() -> Result<PredictionMatrix>,
{
    if let Some(p) = store.load_derived(&run.run_id, file)? {
        return Ok(p);
    }
    let p = compute()?;
    store.save_derived(&run.run_id, file, &p)?;
    Ok(p)
}

/// The condition's report, followed by one report per mitigation:
/// `+tta:<tag>` for each TTA spec, and when the runs carry snapshots,
/// `+snap` and `+snap+tta:<tag>`.
pub fn analyze_condition(
    rc: &ResolvedCondition,
    data: &DatasetPair,
    store: &RunStore,
    options: &GlobalOptions,
) -> Result<Vec<MetricsReport>> {
    let runs = load_condition(rc, data, store)?;
    let opts = options.report_options();
    let labels = data.test.labels();
    let name = &rc.condition.plan_name;
    let mut out = vec![report(name, &runs, labels, &opts)?];
    let images = data.test.images();
    let avg = options.averaging;
    let suffix = match avg {
        Averaging::Probabilities => "",
        Averaging::Logits => ".logits",
    };
    for spec in &options.tta {
        let file = format!("preds_tta_{}{suffix}.bin", spec.tag());
        let preds = runs
            .iter()
            .map(|r| cached(store, r, &file, || tta_predict(&r.model, &r.params, images, spec, avg)))
            .collect::<Result<Vec<_>>>()?;
        out.push(report_predictions(
            &format!("{name}+tta:{}", spec.tag()),
            &preds,
            labels,
            None,
            &opts,
        )?);
    }
    if runs.iter().all(|r| r.snapshots.len() >= 2) {
        let file = format!("preds_snap{suffix}.bin");
        let preds = runs
            .iter()
            .map(|r| cached(store, r, &file, || snapshot_ensemble_predict(r, avg)))
            .collect::<Result<Vec<_>>>()?;
        out.push(report_predictions(
            &format!("{name}+snap"),
            &preds,
            labels,
            None,
            &opts,
        )?);
        for spec in &options.tta {
            let file = format!("preds_snap_tta_{}{suffix}.bin", spec.tag());
            let preds = runs
                .iter()
                .map(|r| cached(store, r, &file, || combine(r, images, spec, avg)))
                .collect::<Result<Vec<_>>>()?;
            out.push(report_predictions(
                &format!("{name}+snap+tta:{}", spec.tag()),
                &preds,
                labels,
                None,
                &opts,
            )?);
        }
    }
    Ok(out)
}
