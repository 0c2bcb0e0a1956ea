//! Batch runs and parameter sweeps over the shipped scenarios.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eot_core::config::{preset, CountLaw, ScenarioConfig};
use eot_core::diagnostics::{check_assumptions, format_g, record_rows, summarize, write_rows, MetricRow, MetricSummary};
use eot_core::{Experiment, FilterKind, OmegaMode};

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Preset(String),
    File(PathBuf),
}

/// A scenario plus command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scenario: ScenarioSource,
    pub filter: Option<FilterKind>,
    pub consensus_iterations: Option<usize>,
    pub lambda: Option<f64>,
    pub fixed_n: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub omega: Option<OmegaMode>,
    pub steps: Option<usize>,
    pub out: PathBuf,
}

impl RunSpec {
    pub fn new(scenario: ScenarioSource, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            filter: None,
            consensus_iterations: None,
            lambda: None,
            fixed_n: None,
            runs: None,
            seed: None,
            omega: None,
            steps: None,
            out: out.into(),
        }
    }

    /// Loads the scenario and applies the overrides.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.scenario {
            ScenarioSource::Preset(name) => preset(name)?,
            ScenarioSource::File(path) => ScenarioConfig::from_path(path)?,
        };
        if self.lambda.is_some() && self.fixed_n.is_some() {
            bail!("--lambda and --fixed-n are mutually exclusive");
        }
        if let Some(kind) = self.filter {
            cfg.filter.kind = kind;
        }
        if let Some(l) = self.consensus_iterations {
            cfg.filter.consensus_iterations = l;
        }
        if let Some(rate) = self.lambda {
            cfg.measurements.law = CountLaw::Poisson { rate };
        }
        if let Some(count) = self.fixed_n {
            cfg.measurements.law = CountLaw::Fixed { count };
        }
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(omega) = self.omega {
            cfg.filter.omega = match omega {
                OmegaMode::CardinalityG => "G".into(),
                OmegaMode::Fixed(w) => w.to_string(),
            };
        }
        if cfg.filter.kind.is_distributed() && cfg.filter.consensus_iterations < 1 {
            bail!("L must be at least 1 for distributed filters");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Paths and summaries written by [`run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub assumptions: PathBuf,
    pub summaries: Vec<MetricSummary>,
    pub mean_step_seconds: f64,
}

fn law_label(law: &CountLaw) -> String {
    match law {
        CountLaw::Fixed { count } => format!("fixed({count})"),
        CountLaw::Poisson { rate } => format!("poisson({rate})"),
    }
}

fn summary_text(cfg: &ScenarioConfig, summaries: &[MetricSummary], mean_step_seconds: f64) -> String {
    let mut s = String::new();
    let f = &cfg.filter;
    let _ = writeln!(s, "scenario      {}", cfg.name);
    let _ = writeln!(s, "filter        {}", f.kind);
    if f.kind.is_distributed() {
        let _ = writeln!(s, "L             {}", f.consensus_iterations);
    }
    if f.kind == FilterKind::Cm {
        let _ = writeln!(s, "omega         {}", f.omega);
    }
    let _ = writeln!(s, "measurements  {}", law_label(&cfg.measurements.law));
    let _ = writeln!(s, "runs          {}", cfg.runs);
    let _ = writeln!(s, "steps         {}", cfg.steps);
    let _ = writeln!(s, "seed          {}", cfg.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<8} {:>16} {:>16}", "metric", "mean", "std");
    for m in summaries {
        let _ = writeln!(s, "{:<8} {:>16} {:>16}", m.metric, format_g(m.mean), format_g(m.std));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "mean wall-clock per step  {} s", format_g(mean_step_seconds));
    s
}

/// Runs every Monte Carlo run of `cfg` and writes the artifacts into `dir`.
pub fn run_config(cfg: &ScenarioConfig, dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let exp = Experiment::new(cfg.clone())?;
    let records = exp.simulate_runs()?;

    let mut rows: Vec<MetricRow> = Vec::new();
    for rec in &records {
        rows.extend(record_rows(cfg, rec)?);
    }
    let metrics = dir.join("metrics.csv");
    let file = File::create(&metrics).with_context(|| format!("cannot write {}", metrics.display()))?;
    write_rows(BufWriter::new(file), &rows)?;

    let summaries = summarize(&rows);
    let seconds: Vec<f64> = records.iter().flat_map(|r| r.step_seconds.iter().copied()).collect();
    let mean_step_seconds = seconds.iter().sum::<f64>() / seconds.len().max(1) as f64;
    let summary = dir.join("summary.txt");
    fs::write(&summary, summary_text(cfg, &summaries, mean_step_seconds))?;

    let report = check_assumptions(&exp, &records)?;
    let assumptions = dir.join("assumptions.txt");
    fs::write(&assumptions, report.to_string())?;

    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        metrics,
        summary,
        assumptions,
        summaries,
        mean_step_seconds,
    })
}

pub fn run(spec: &RunSpec) -> Result<RunArtifacts> {
    run_config(&spec.resolve()?, &spec.out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    ConsensusIterations(Vec<usize>),
    Lambda(Vec<f64>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::ConsensusIterations(v) => v.len(),
            SweepAxis::Lambda(v) => v.len(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SweepAxis::ConsensusIterations(_) => "L",
            SweepAxis::Lambda(_) => "lambda",
        }
    }
}

/// One artifact set per setting under `spec.out`, plus `sweep.csv` with the
/// per-setting summaries.
pub fn sweep(spec: &RunSpec, axis: &SweepAxis) -> Result<PathBuf> {
    if axis.len() == 0 {
        bail!("sweep list must not be empty");
    }
    let settings: Vec<(String, RunSpec)> = match axis {
        SweepAxis::ConsensusIterations(ls) => ls
            .iter()
            .map(|&l| {
                let mut s = spec.clone();
                s.consensus_iterations = Some(l);
                (l.to_string(), s)
            })
            .collect(),
        SweepAxis::Lambda(rates) => rates
            .iter()
            .map(|&rate| {
                let mut s = spec.clone();
                s.lambda = Some(rate);
                s.fixed_n = None;
                (format_g(rate), s)
            })
            .collect(),
    };
    fs::create_dir_all(&spec.out).with_context(|| format!("cannot create {}", spec.out.display()))?;
    let mut combined = format!("{},metric,mean,std\n", axis.name());
    for (label, s) in &settings {
        let artifacts = run_config(&s.resolve()?, &spec.out.join(format!("{}_{label}", axis.name())))?;
        for m in &artifacts.summaries {
            let _ = writeln!(combined, "{label},{},{},{}", m.metric, format_g(m.mean), format_g(m.std));
        }
        let _ = writeln!(combined, "{label},step_seconds,{},0", format_g(artifacts.mean_step_seconds));
    }
    let path = spec.out.join("sweep.csv");
    fs::write(&path, combined)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let mut spec = RunSpec::new(ScenarioSource::Preset("s2".into()), "/tmp/unused");
        spec.filter = Some(FilterKind::Ci);
        spec.consensus_iterations = Some(3);
        spec.lambda = Some(10.0);
        spec.runs = Some(4);
        spec.seed = Some(99);
        spec.omega = Some(OmegaMode::Fixed(12.5));
        let cfg = spec.resolve().unwrap();
        assert_eq!(cfg.filter.kind, FilterKind::Ci);
        assert_eq!(cfg.filter.consensus_iterations, 3);
        assert_eq!(cfg.measurements.law, CountLaw::Poisson { rate: 10.0 });
        assert_eq!((cfg.runs, cfg.seed), (4, 99));
        assert_eq!(cfg.omega().unwrap(), OmegaMode::Fixed(12.5));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = RunSpec::new(ScenarioSource::Preset("s2".into()), "/tmp/unused");
        spec.runs = Some(0);
        assert!(spec.resolve().is_err());
        let mut spec = RunSpec::new(ScenarioSource::Preset("s2".into()), "/tmp/unused");
        spec.consensus_iterations = Some(0);
        assert!(spec.resolve().is_err());
        let mut spec = RunSpec::new(ScenarioSource::Preset("s2".into()), "/tmp/unused");
        spec.lambda = Some(5.0);
        spec.fixed_n = Some(3);
        assert!(spec.resolve().is_err());
        let spec = RunSpec::new(ScenarioSource::Preset("nope".into()), "/tmp/unused");
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let spec = RunSpec::new(ScenarioSource::Preset("s2".into()), "/tmp/unused");
        assert!(sweep(&spec, &SweepAxis::ConsensusIterations(vec![])).is_err());
    }
}
