//! Paired evaluation of every registered system over sequence lengths and
//! query noise levels on one generated dataset.

use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetRecipe};
use crate::error::{invalid, Result};
use crate::eval::{
    op_count, recall_curve, storage_report, CurveMeta, MatchRecord, OpConfig, OpCount, RecallCurve, StorageConfig,
    StorageReport, MAX_RADIUS,
};
use crate::pipeline::{train, GroundTruth, QueryPlan, TrainConfig, TrainedModel};
use crate::system::{ProposedLocalizer, Registry, SystemContext, SystemParams};

fn default_systems() -> Vec<String> {
    vec!["proposed".into(), "baseline".into()]
}
fn default_lengths() -> Vec<usize> {
    vec![1, 50, 100]
}
fn default_noise() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn default_d() -> usize {
    15
}
fn default_k() -> usize {
    2
}
fn default_stride() -> usize {
    10
}
fn default_baseline_dims() -> usize {
    1
}
fn default_precision() -> u64 {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Label written into every report row.
    pub dataset: String,
    pub recipe: DatasetRecipe,
    #[serde(default = "default_systems")]
    pub systems: Vec<String>,
    #[serde(default = "default_lengths", rename = "L")]
    pub sequence_lengths: Vec<usize>,
    #[serde(default = "default_noise")]
    pub noise_scales: Vec<f64>,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_k", rename = "K")]
    pub k: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_baseline_dims")]
    pub baseline_dims: usize,
    #[serde(default = "default_precision")]
    pub precision: u64,
}

impl BenchConfig {
    pub fn new(dataset: impl Into<String>, recipe: DatasetRecipe) -> Self {
        Self {
            dataset: dataset.into(),
            recipe,
            systems: default_systems(),
            sequence_lengths: default_lengths(),
            noise_scales: default_noise(),
            d: default_d(),
            k: default_k(),
            stride: default_stride(),
            baseline_dims: default_baseline_dims(),
            precision: default_precision(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub system: String,
    pub l: usize,
    pub noise_scale: f64,
    pub mean_nr: f64,
    /// Shortlist cap handed to capped systems.
    pub cap: Option<usize>,
    pub records: Vec<MatchRecord>,
    pub selected: RecallCurve,
    pub in_list: RecallCurve,
}

impl RunSummary {
    pub fn recall_at(&self, radius: usize) -> f64 {
        self.selected.recall[radius]
    }

    pub fn in_list_recall_at(&self, radius: usize) -> f64 {
        self.in_list.recall[radius]
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub runs: Vec<RunSummary>,
    pub storage: StorageReport,
    pub ops: Vec<(String, OpCount)>,
    pub model: TrainedModel,
}

impl BenchReport {
    pub fn run(&self, system: &str, l: usize, noise_scale: f64) -> Option<&RunSummary> {
        self.runs
            .iter()
            .find(|r| r.system == system && r.l == l && r.noise_scale == noise_scale)
    }

    /// Selected-match curves, then candidate-list curves of the proposed system.
    pub fn curves(&self) -> Vec<RecallCurve> {
        let mut out: Vec<RecallCurve> = self.runs.iter().map(|r| r.selected.clone()).collect();
        out.extend(
            self.runs
                .iter()
                .filter(|r| r.system == ProposedLocalizer::NAME)
                .map(|r| r.in_list.clone()),
        );
        out
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    run_bench_with(cfg, &Registry::default())
}

pub fn run_bench_with(cfg: &BenchConfig, registry: &Registry) -> Result<BenchReport> {
    if cfg.systems.is_empty() || cfg.sequence_lengths.is_empty() || cfg.noise_scales.is_empty() {
        return invalid("bench needs at least one system, sequence length and noise scale");
    }
    let proposed = ProposedLocalizer::NAME;
    if cfg.systems.iter().any(|s| s != proposed) && !cfg.systems.iter().any(|s| s == proposed) {
        return invalid("capped systems take their shortlist size from 'proposed', which must be listed");
    }
    for s in &cfg.systems {
        if !registry.names().any(|n| n == s) {
            return invalid(format!("unknown system '{s}'"));
        }
    }
    // proposed first: its mean N_r caps the others
    let mut order: Vec<&str> = vec![proposed];
    order.extend(cfg.systems.iter().map(String::as_str).filter(|s| *s != proposed));

    let mut model: Option<TrainedModel> = None;
    let mut reference_rows = 0;
    let mut runs = Vec::new();
    let mut ops = Vec::new();
    for &noise in &cfg.noise_scales {
        let recipe = DatasetRecipe {
            noise_scale: noise,
            ..cfg.recipe.clone()
        };
        let data = dataset::build(&recipe)?;
        if model.is_none() {
            // references do not depend on the query noise
            model = Some(train(
                &data.reference,
                TrainConfig {
                    d: cfg.d,
                    k: cfg.k,
                    batch: None,
                },
            )?);
            reference_rows = data.reference.rows();
        }
        let model = model.as_ref().unwrap();
        let ctx = SystemContext {
            references: &data.reference,
            model,
        };
        let truth = GroundTruth::new(&data.reference, &data.query);
        for &l in &cfg.sequence_lengths {
            let plan = QueryPlan::new(l, cfg.stride)?;
            let mut cap = None;
            for &name in &order {
                let params = SystemParams {
                    baseline_dims: cfg.baseline_dims,
                    candidate_cap: cap,
                };
                let system = registry.create(name, ctx, &params)?;
                let records = system.localize(&data.query, &plan, &truth)?;
                let mean_nr = records.iter().map(|r| r.n_r as f64).sum::<f64>() / records.len() as f64;
                let is_proposed = name == proposed;
                let (d, k) = if is_proposed { (cfg.d, cfg.k) } else { (cfg.baseline_dims, 0) };
                let meta = CurveMeta {
                    dataset: format!("{}:{name}", cfg.dataset),
                    l,
                    noise_scale: noise,
                    d,
                    k,
                    mean_nr,
                };
                let selected = recall_curve(&records, meta.clone(), false)?;
                let in_list = recall_curve(
                    &records,
                    CurveMeta {
                        dataset: format!("{}:{name}:in-list", cfg.dataset),
                        ..meta
                    },
                    true,
                )?;
                ops.push((
                    format!("{name}:L{l}:noise{noise}"),
                    op_count(
                        OpConfig {
                            input_dims: data.reference.dims() as u64,
                            d: d as u64,
                            k: cfg.k as u64,
                            ref_count: reference_rows as u64,
                            candidates: mean_nr.round() as u64,
                            new_pairs: l as u64,
                            precision: cfg.precision,
                        },
                        system.kind(),
                    )?,
                ));
                let run_cap = (!is_proposed).then_some(params.candidate_cap).flatten();
                if is_proposed {
                    cap = Some((mean_nr.round() as usize).max(1));
                }
                if is_proposed && !cfg.systems.iter().any(|s| s == proposed) {
                    continue;
                }
                runs.push(RunSummary {
                    system: name.to_string(),
                    l,
                    noise_scale: noise,
                    mean_nr,
                    cap: run_cap,
                    records,
                    selected,
                    in_list,
                });
            }
        }
    }
    let model = model.expect("at least one noise scale");
    let storage = storage_report(StorageConfig {
        ref_count: reference_rows as u64,
        input_dims: model.pca.input_dims() as u64,
        d: cfg.d as u64,
        k: cfg.k as u64,
    });
    debug_assert!(runs.iter().all(|r| r.selected.recall.len() == MAX_RADIUS + 1));
    Ok(BenchReport {
        runs,
        storage,
        ops,
        model,
    })
}
