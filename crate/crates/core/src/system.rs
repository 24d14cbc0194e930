//! Localization systems behind one trait, selected by name at runtime.

use std::collections::BTreeMap;

use crate::baseline::{baseline_match, check_storage_parity};
use crate::error::{invalid, Result};
use crate::eval::{MatchRecord, SystemKind};
use crate::matrix::DescriptorMatrix;
use crate::pipeline::{GroundTruth, QueryPlan, TrainedModel};
use crate::seqmatch::Matcher;
use crate::transform::PcaModel;

/// A place-recognition system that matches query windows against references.
pub trait Localizer: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> SystemKind;

    /// Evaluates every window of `plan` over `queries`.
    fn localize(&self, queries: &DescriptorMatrix, plan: &QueryPlan, truth: &GroundTruth) -> Result<Vec<MatchRecord>>;
}

/// Trained state shared by every system.
#[derive(Debug, Clone, Copy)]
pub struct SystemContext<'a> {
    pub references: &'a DescriptorMatrix,
    pub model: &'a TrainedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemParams {
    /// Principal components the baseline keeps per place.
    pub baseline_dims: usize,
    /// Baseline shortlist size; normally the proposed system's mean N_r.
    pub candidate_cap: Option<usize>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            baseline_dims: 1,
            candidate_cap: None,
        }
    }
}

pub type Factory = for<'a> fn(SystemContext<'a>, &SystemParams) -> Result<Box<dyn Localizer + 'a>>;

/// Name-keyed set of system constructors.
#[derive(Clone)]
pub struct Registry {
    factories: BTreeMap<String, Factory>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: Factory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create<'a>(&self, name: &str, ctx: SystemContext<'a>, params: &SystemParams) -> Result<Box<dyn Localizer + 'a>> {
        match self.factories.get(name) {
            Some(f) => f(ctx, params),
            None => invalid(format!(
                "unknown system '{name}' (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            )),
        }
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(ProposedLocalizer::NAME, |ctx, _| Ok(Box::new(ProposedLocalizer::new(ctx.model)?)));
        r.register(BaselineLocalizer::NAME, |ctx, p| Ok(Box::new(BaselineLocalizer::new(ctx, p)?)));
        r
    }
}

fn nearest_candidate(sorted: &[u32], truth: usize) -> usize {
    let p = sorted.partition_point(|&c| (c as usize) < truth);
    let after = sorted.get(p).map(|&c| c as usize - truth);
    let before = p.checked_sub(1).map(|i| truth - sorted[i] as usize);
    after.into_iter().chain(before).min().unwrap_or(usize::MAX)
}

/// Coarse hash lookup resolved by sequence matching.
pub struct ProposedLocalizer<'a> {
    model: &'a TrainedModel,
    matcher: Matcher<'a>,
}

impl<'a> ProposedLocalizer<'a> {
    pub const NAME: &'static str = "proposed";

    pub fn new(model: &'a TrainedModel) -> Result<Self> {
        Ok(Self {
            model,
            matcher: Matcher::new(&model.index, &model.quantizer)?,
        })
    }
}

impl Localizer for ProposedLocalizer<'_> {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn kind(&self) -> SystemKind {
        SystemKind::Proposed
    }

    fn localize(&self, queries: &DescriptorMatrix, plan: &QueryPlan, truth: &GroundTruth) -> Result<Vec<MatchRecord>> {
        let codes = self.model.encode(queries)?;
        let n = queries.rows();
        let mut window = Vec::with_capacity(plan.l);
        plan.centers(n)
            .map(|t| {
                window.clear();
                window.extend(plan.window_rows(t, n).map(|r| codes[r].clone()));
                let m = self.matcher.match_sequence(&window)?;
                let gt = truth.of(t);
                Ok(MatchRecord {
                    query: t,
                    truth: gt,
                    best: m.best,
                    score: m.score,
                    n_r: m.candidates.len(),
                    fallback_frames: m.fallback_frames,
                    nearest_candidate: nearest_candidate(&m.candidates, gt),
                })
            })
            .collect()
    }
}

/// Linear scan over the leading principal coordinates with a capped shortlist.
pub struct BaselineLocalizer {
    pca: PcaModel,
    refs: DescriptorMatrix,
    cap: usize,
}

impl BaselineLocalizer {
    pub const NAME: &'static str = "baseline";

    pub fn new(ctx: SystemContext<'_>, params: &SystemParams) -> Result<Self> {
        let Some(cap) = params.candidate_cap else {
            return invalid("baseline needs a candidate cap");
        };
        if cap == 0 {
            return invalid("baseline candidate cap must be >= 1");
        }
        check_storage_parity(ctx.references.rows(), params.baseline_dims)?;
        let pca = ctx.model.pca.truncated(params.baseline_dims)?;
        let refs = pca.project(ctx.references)?;
        Ok(Self { pca, refs, cap })
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
}

impl Localizer for BaselineLocalizer {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn kind(&self) -> SystemKind {
        SystemKind::Baseline
    }

    fn localize(&self, queries: &DescriptorMatrix, plan: &QueryPlan, truth: &GroundTruth) -> Result<Vec<MatchRecord>> {
        if queries.dims() != self.pca.input_dims() {
            return invalid("query dimensionality does not match the model");
        }
        let mut buf = vec![0.0f64; self.pca.output_dims()];
        let projected: Vec<Vec<f64>> = queries
            .iter_rows()
            .map(|row| {
                self.pca.project_row(row, &mut buf);
                buf.clone()
            })
            .collect();
        let n = queries.rows();
        plan.centers(n)
            .map(|t| {
                let window: Vec<Vec<f64>> = plan.window_rows(t, n).map(|r| projected[r].clone()).collect();
                let m = baseline_match(&self.refs, &window, plan.l, self.cap)?;
                let gt = truth.of(t);
                Ok(MatchRecord {
                    query: t,
                    truth: gt,
                    best: m.best,
                    score: m.score,
                    n_r: m.candidates.len(),
                    fallback_frames: 0,
                    nearest_candidate: nearest_candidate(&m.candidates, gt),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_candidate_distance() {
        assert_eq!(nearest_candidate(&[2, 10, 40], 12), 2);
        assert_eq!(nearest_candidate(&[2, 10, 40], 1), 1);
        assert_eq!(nearest_candidate(&[2, 10, 40], 50), 10);
        assert_eq!(nearest_candidate(&[], 5), usize::MAX);
    }

    #[test]
    fn registry_knows_both_systems() {
        let r = Registry::default();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["baseline", "proposed"]);
    }
}
