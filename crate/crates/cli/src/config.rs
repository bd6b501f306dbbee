use std::path::{Path, PathBuf};

use ffbsde::solver::ContinuationMode;
use ffbsde::{
    registry_get, AssumptionConstants, CoefficientSet, ContinuationSchedule, Dims, Discretization, Params,
    SamplerConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A run configuration as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemConfig,
    pub constants: ConstantsConfig,
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub ppde: PpdeConfig,
    #[serde(default)]
    pub ito: ItoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default)]
    pub params: Params,
    pub x0: Vec<f64>,
    /// Optional `[n, m, d]` echo, checked against the problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub mu1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub num_steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    pub num_paths: usize,
    #[serde(default = "two")]
    pub basis_degree: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: ContinuationMode,
    pub delta_init: f64,
    pub delta_min: f64,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub relaxation: f64,
    pub min_relaxation: f64,
    pub anderson_depth: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = ContinuationSchedule::default();
        Self {
            mode: s.mode,
            delta_init: s.delta_init,
            delta_min: s.delta_min,
            inner_tol: s.inner_tol,
            max_inner_iters: s.max_inner_iters,
            relaxation: s.relaxation,
            min_relaxation: s.min_relaxation,
            anderson_depth: s.anderson_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 7,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    /// The Riccati functional of `example31`.
    Oracle,
    /// `u ≡ constant`, `v ≡ 0`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessConfig {
    C0,
    C12,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpdeConfig {
    pub functional: FunctionalKind,
    pub smoothness: SmoothnessConfig,
    pub constant: f64,
    pub num_paths: usize,
    pub min_steps: usize,
    pub max_steps: usize,
    pub step: f64,
    pub eps: f64,
    pub oracle_steps: usize,
    pub tolerance: f64,
    pub feynman_kac: bool,
    /// Relaxation for the lifted solve, when it differs from `schedule`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
    pub seed: u64,
}

impl Default for PpdeConfig {
    fn default() -> Self {
        Self {
            functional: FunctionalKind::Oracle,
            smoothness: SmoothnessConfig::C12,
            constant: 1.0,
            num_paths: 100,
            min_steps: 500,
            max_steps: 9_500,
            step: 1e-4,
            eps: 1e-4,
            oracle_steps: 10_000,
            tolerance: 1e-3,
            feynman_kac: true,
            relaxation: None,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoConfig {
    pub step_counts: Vec<usize>,
    pub num_paths: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for ItoConfig {
    fn default() -> Self {
        Self {
            step_counts: vec![25, 50, 100, 200],
            num_paths: 1000,
            horizon: 1.0,
            seed: 3,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

/// Everything a subcommand needs, validated.
pub struct Resolved {
    pub cs: CoefficientSet,
    pub constants: AssumptionConstants,
    pub disc: Discretization,
    pub schedule: ContinuationSchedule,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.discretization.seed = seed;
        self.check.seed = seed;
        self.ppde.seed = seed;
        self.ito.seed = seed;
    }

    pub fn schedule(&self) -> ContinuationSchedule {
        let s = self.schedule;
        ContinuationSchedule {
            mode: s.mode,
            delta_init: s.delta_init,
            delta_min: s.delta_min,
            inner_tol: s.inner_tol,
            max_inner_iters: s.max_inner_iters,
            relaxation: s.relaxation,
            min_relaxation: s.min_relaxation,
            anderson_depth: s.anderson_depth,
        }
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let cs = registry_get(&self.problem.name, &self.problem.params)?;
        let dims = cs.dims();
        if let Some([n, m, d]) = self.problem.dims {
            if Dims::new(n, m, d) != dims {
                return Err(CliError::Config(format!(
                    "problem.dims: `{}` has dims [{}, {}, {}]",
                    self.problem.name, dims.n, dims.m, dims.d
                )));
            }
        }
        if self.problem.x0.len() != dims.n {
            return Err(CliError::Config(format!("problem.x0: expected {} entries", dims.n)));
        }
        let k = self.constants;
        let constants = AssumptionConstants::new(k.c1, k.beta1, k.beta2, k.mu1);
        constants.validate(dims)?;
        let d = self.discretization;
        let disc = Discretization::new(d.num_steps, d.horizon, d.num_paths, d.basis_degree, d.seed)?;
        let schedule = self.schedule();
        schedule.validate()?;
        self.check.sampler.validate()?;
        if self.check.trials == 0 {
            return Err(CliError::Config("check.trials: must be positive".into()));
        }
        let p = &self.ppde;
        if p.num_paths == 0 || p.min_steps == 0 || p.max_steps < p.min_steps {
            return Err(CliError::Config("ppde: need num_paths > 0 and 0 < min_steps <= max_steps".into()));
        }
        for (name, v) in [("ppde.step", p.step), ("ppde.eps", p.eps), ("ppde.tolerance", p.tolerance)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name}: must be positive")));
            }
        }
        if let Some(theta) = p.relaxation {
            ContinuationSchedule {
                relaxation: theta,
                min_relaxation: theta.min(schedule.min_relaxation),
                ..schedule
            }
            .validate()?;
        }
        if self.ito.step_counts.len() < 2 {
            return Err(CliError::Config("ito.step_counts: need at least two entries".into()));
        }
        if self.ito.num_paths == 0 {
            return Err(CliError::Config("ito.num_paths: must be positive".into()));
        }
        Ok(Resolved {
            cs,
            constants,
            disc,
            schedule,
        })
    }
}
