//! Error metrics, consistency checks and their CSV/summary output.

mod assumptions;
mod csv;
mod metrics;

pub use assumptions::{
    bounded_mse_experiment, boundedness, check_assumptions, mean_square_error, perron_vector, AssumptionReport,
    BoundednessReport, Range,
};
pub use csv::{format_g, write_rows, MetricRow, CSV_HEADER};
pub use metrics::{
    acee, average_nees, extent_spd, gwd, nees, nees_bounds, nees_of_error, ospa_vertices, OSPA_CUTOFF, OSPA_ORDER,
};

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::experiment::RunRecord;
use crate::geometry::{extent_vertices, Extent, ShapeKind};
use crate::trackers::NodeOutput;

/// Orientation error modulo the half turn that maps the shape onto itself.
pub fn orientation_error(estimate: f64, truth: f64) -> f64 {
    let d = (estimate - truth).rem_euclid(PI);
    if d > FRAC_PI_2 {
        d - PI
    } else {
        d
    }
}

pub fn extent_error(out: &NodeOutput, truth: &Extent) -> DVector<f64> {
    DVector::from_column_slice(&[
        orientation_error(out.p_hat[0], truth.alpha()),
        out.p_hat[1] - truth.l1(),
        out.p_hat[2] - truth.l2(),
    ])
}

/// Signed semi-axis errors `(l̂1 − l1, l̂2 − l2)`. The parameterizations
/// `(α, l1, l2)` and `(α + π/2, l2, l1)` describe the same shape, so the
/// estimate is compared in whichever one is closer to the true orientation.
pub fn semi_axis_errors(estimate: &Extent, truth: &Extent) -> (f64, f64) {
    let direct = orientation_error(estimate.alpha(), truth.alpha()).abs();
    let swapped = orientation_error(estimate.alpha() + FRAC_PI_2, truth.alpha()).abs();
    if swapped < direct {
        (estimate.l2() - truth.l1(), estimate.l1() - truth.l2())
    } else {
        (estimate.l1() - truth.l1(), estimate.l2() - truth.l2())
    }
}

/// Metric rows of one run, ordered by step, node, then metric.
pub fn record_rows(config: &ScenarioConfig, rec: &RunRecord) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let rectangle = config.object.shape == ShapeKind::Rectangle;
    for (step, (outs, truth)) in rec.estimates.iter().zip(&rec.truth).enumerate() {
        let truth_pos = truth.x.position();
        let truth_vertices = extent_vertices(&truth_pos, &truth.extent);
        for (node, out) in outs.iter().enumerate() {
            let mut push = |metric, value| {
                rows.push(MetricRow {
                    run: rec.run,
                    step,
                    node: node as i64,
                    metric,
                    value,
                })
            };
            let pos = out.position();
            push("gwd", gwd(&pos, &out.extent, &truth_pos, &truth.extent));
            if rectangle {
                push(
                    "ospa",
                    ospa_vertices(&extent_vertices(&pos, &out.extent), &truth_vertices, OSPA_CUTOFF, OSPA_ORDER),
                );
            }
            let ex = &out.x_hat - truth.x.as_vector();
            push("nees_x", nees_of_error(&ex, &out.cx)?);
            push("nees_p", nees_of_error(&extent_error(out, &truth.extent), &crate::linalg::to_dyn3(&out.cp))?);
            push("mse_x", ex.norm_squared());
        }
        if outs.len() > 1 {
            let xs: Vec<DVector<f64>> = outs.iter().map(|o| o.x_hat.clone()).collect();
            let ps: Vec<DVector<f64>> = outs.iter().map(|o| DVector::from_column_slice(o.p_hat.as_slice())).collect();
            for (metric, value) in [("acee_x", acee(&xs)?), ("acee_p", acee(&ps)?)] {
                rows.push(MetricRow {
                    run: rec.run,
                    step,
                    node: -1,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean and standard deviation across runs of each run's time-averaged metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

pub fn summarize(rows: &[MetricRow]) -> Vec<MetricSummary> {
    let mut per_run: BTreeMap<&'static str, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        let e = per_run.entry(r.metric).or_default().entry(r.run).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    per_run
        .into_iter()
        .map(|(metric, runs)| {
            let means: Vec<f64> = runs.values().map(|(s, n)| s / *n as f64).collect();
            let m = means.len() as f64;
            let mean = means.iter().sum::<f64>() / m;
            let std = if means.len() > 1 {
                (means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            MetricSummary {
                metric,
                mean,
                std,
                runs: means.len(),
            }
        })
        .collect()
}
