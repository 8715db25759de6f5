//! Rollouts, ablation batches and their CSV / SVG artifacts.

mod ablation;
mod log;
mod plot;

pub use ablation::{
    run_ablation, summary_from_csv, summary_to_csv, AblationMatrix, AblationReport, CellResult, Grouping, SummaryRow, SUMMARY_HEADER,
};
pub use log::{LogParseError, RobotRecord, RolloutLog, StepRecord};
pub use plot::{bar_chart_svg, target_accel_svg, velocity_svg, write_log_plots, write_summary_plots};

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::controller::{ControlError, ControlOutput, Controller};
use crate::dynamics::{Plant, WorldState};
use crate::impact_map::{generate_dataset, parse_dataset, ImpactDataset, MapError, ParseError};
use crate::qp::QpStatus;
use crate::scenario::{BuiltScenario, ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("impact map: {0}")]
    Map(#[from] MapError),
    #[error("dataset file: {0}")]
    Dataset(#[from] ParseError),
    #[error("dataset was generated for scenario {found}, expected {expected}")]
    DatasetMismatch { expected: String, found: String },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("invalid matrix: {0}")]
    Matrix(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    LogParse(#[from] LogParseError),
    #[error("nothing to plot: {0}")]
    EmptyPlot(String),
}

impl HarnessError {
    /// Whether the failure stems from user input rather than a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Scenario(_)
                | HarnessError::Dataset(_)
                | HarnessError::DatasetMismatch { .. }
                | HarnessError::Matrix(_)
                | HarnessError::LogParse(_)
                | HarnessError::Control(ControlError::Config(_))
        )
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Impact dataset for a scenario: read from the configured file, or
/// generated on the spot.
pub fn impact_dataset(cfg: &ScenarioConfig) -> Result<ImpactDataset, HarnessError> {
    let expected = cfg.map_hash();
    if let Some(path) = &cfg.impact_map.dataset {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let d = parse_dataset(&text)?;
        if d.scenario_hash != expected {
            return Err(HarnessError::DatasetMismatch {
                expected,
                found: d.scenario_hash,
            });
        }
        return Ok(d);
    }
    let built = cfg.build()?;
    Ok(generate_dataset(&built.impact, cfg.n_samples(), cfg.impact_map.face_extent)?)
}

/// Closed-loop rollout that can be advanced one control step at a time.
pub struct Rollout {
    pub plant: Plant,
    pub controller: Controller,
    pub world: WorldState,
    pub steps: usize,
    pub log: RolloutLog,
    k: usize,
}

impl Rollout {
    pub fn new(cfg: &ScenarioConfig, dataset: Option<Arc<ImpactDataset>>) -> Result<Self, HarnessError> {
        let BuiltScenario {
            plant,
            controller_config,
            setup,
            initial,
            detection_latency,
            steps,
            ..
        } = cfg.build()?;
        let dataset = if controller_config.variant.uses_impact_map() { dataset } else { None };
        let mut controller = Controller::new(controller_config, setup, plant.robots.clone(), dataset)?;
        controller.set_detection_latency(detection_latency);
        let log = RolloutLog::new(cfg, plant.robots.iter().map(|m| m.n_links()).collect(), detection_latency);
        Ok(Self {
            plant,
            controller,
            world: initial,
            steps,
            log,
            k: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn finished(&self) -> bool {
        self.k >= self.steps || self.log.failure.is_some()
    }

    /// Advances one control step. Returns the controller output, or `None`
    /// once the rollout is over.
    pub fn step(&mut self) -> Option<ControlOutput> {
        if self.finished() {
            return None;
        }
        let k = self.k;
        let out = match self.controller.step(&self.world.robots) {
            Ok(out) => out,
            Err(e) => {
                self.log.fail(k, format!("controller: {e}"));
                return None;
            }
        };
        self.log.push(k, &self.plant, &self.world, &out, &self.controller);
        match self.plant.step(&self.world, &out.torques, self.controller.config.dt) {
            Ok(next) => self.world = next,
            Err(e) => self.log.fail(k, format!("plant: {e}")),
        }
        if out.qp_status != QpStatus::Optimal {
            self.log.qp_fallbacks += 1;
        }
        self.k += 1;
        Some(out)
    }

    pub fn run(mut self) -> RolloutLog {
        while self.step().is_some() {}
        self.finish()
    }

    pub fn finish(mut self) -> RolloutLog {
        self.log.detection_steps = self.controller.state.detection_step.clone();
        self.log.switch_step = self.controller.state.k_imp;
        self.log
    }
}

/// Runs one scenario to completion. Controller and plant failures are
/// recorded in the log rather than returned.
pub fn run_rollout(cfg: &ScenarioConfig, dataset: Option<Arc<ImpactDataset>>) -> Result<RolloutLog, HarnessError> {
    Ok(Rollout::new(cfg, dataset)?.run())
}
