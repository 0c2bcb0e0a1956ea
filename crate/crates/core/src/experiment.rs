//! Monte Carlo driver: scenario generation plus one tracker per run.

use std::time::Instant;

use rayon::prelude::*;

use crate::config::{PriorMoments, ScenarioConfig};
use crate::consensus::{check_primitive, metropolis_weights, ConsensusMatrix, SensorNetwork};
use crate::error::{EotError, Result};
use crate::scenario::{generate_run, TruthState};
use crate::trackers::{FilterConfig, NodeEstimate, NodeOutput, Tracker};

/// Everything a run produced that the metrics need.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub truth: Vec<TruthState>,
    /// `estimates[step][node]`; a single entry per step for CEOT.
    pub estimates: Vec<Vec<NodeOutput>>,
    /// Wall-clock seconds spent in each tracking step.
    pub step_seconds: Vec<f64>,
}

/// Network, consensus matrix and filter configuration shared by all runs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ScenarioConfig,
    pub network: SensorNetwork,
    pub consensus: ConsensusMatrix,
    pub filter: FilterConfig,
}

impl Experiment {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let network = config.network.build()?;
        let consensus = metropolis_weights(&network);
        if !check_primitive(consensus.matrix()) {
            return Err(EotError::InvalidNetwork("consensus matrix is not primitive".into()));
        }
        let filter = config.filter_config(&network)?;
        Ok(Self {
            config,
            network,
            consensus,
            filter,
        })
    }

    pub fn prior_estimate(prior: &PriorMoments) -> Result<NodeEstimate> {
        NodeEstimate::from_moments(&prior.x_hat, &prior.cx, &prior.p_hat, &prior.cp)
    }

    pub fn simulate_run(&self, run: usize) -> Result<RunRecord> {
        let scenario = generate_run(&self.config, &self.network, run)?;
        let mut tracker = Tracker::new(
            self.filter.clone(),
            self.network.clone(),
            self.consensus.clone(),
            Self::prior_estimate(&scenario.prior)?,
        )?;
        let mut estimates = Vec::with_capacity(self.config.steps);
        let mut step_seconds = Vec::with_capacity(self.config.steps);
        for batch in &scenario.measurements {
            let start = Instant::now();
            let posterior = tracker.step(batch)?;
            step_seconds.push(start.elapsed().as_secs_f64());
            estimates.push(
                posterior
                    .iter()
                    .map(|e| e.output(self.filter.semi_axis_floor))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(RunRecord {
            run,
            truth: scenario.truth,
            estimates,
            step_seconds,
        })
    }

    /// All configured runs in parallel, returned in run order.
    pub fn simulate_runs(&self) -> Result<Vec<RunRecord>> {
        (0..self.config.runs)
            .into_par_iter()
            .map(|run| self.simulate_run(run))
            .collect()
    }
}
