use crate::config::EvalConfig;
use crate::dataset::Dataset;
use crate::error::EvalError;
use crate::matching::Evaluator;
use crate::ranges::{
    range_bins_report, view_metrics, RangeGlobal, RangeMetrics, ViewMetrics, RANGE_POLICY,
};
use crate::taxonomy::MatchContext;
use crate::weights::{sweep_weights, SweepWeights};

/// Everything a report needs: the global evaluation with its errors and weights, the
/// optional threshold sweep of the weights, and the temporal-range breakdown.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub global: ViewMetrics,
    pub sweep: Vec<SweepWeights>,
    pub ranges: RangeMetrics,
}

pub fn analyze_with(evaluator: &Evaluator) -> Result<Analysis, EvalError> {
    let base = evaluator.base_view();
    let (global, bins) = rayon::join(
        || view_metrics(evaluator, &base),
        || range_bins_report(evaluator, &base),
    );
    let (global, bins) = (global?, bins?);
    let sweep = if evaluator.config().weight_sweep.is_empty() {
        Vec::new()
    } else {
        let ctx = MatchContext {
            evaluator,
            view: &base,
            matching: &global.eval.matching,
        };
        sweep_weights(&ctx, &global.records, &evaluator.config().weight_sweep)
    };
    let ranges = RangeMetrics {
        bins,
        global: RangeGlobal::new(evaluator, &base, &global),
        policy: RANGE_POLICY,
    };
    Ok(Analysis {
        global,
        sweep,
        ranges,
    })
}

pub fn analyze(dataset: &Dataset, config: &EvalConfig) -> Result<Analysis, EvalError> {
    analyze_with(&Evaluator::new(dataset, config)?)
}
