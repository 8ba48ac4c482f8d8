//! Run configuration: a JSON document that fully determines a run. Unknown
//! fields are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ssnkit::diagnostics::{DiagnoseOptions, Tolerances};
use ssnkit::experiments::{
    ExperimentOptions, LASSO_WARM_STEPS, PROJECTED_WARM_CAP, PROJECTED_WARM_TARGET,
};
use ssnkit::manifold::SupportManifold;
use ssnkit::problems::{load_instance, Generator, ProblemInstance};
use ssnkit::residual::ResidualKind;
use ssnkit::solver::{Globalization, SolverConfig};

use crate::output::Header;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Generator { generator: Generator, seed: u64 },
    File { path: PathBuf },
}

/// Support manifold for the projected solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldChoice {
    /// Support of the instance's known solution; replaced by the explicit
    /// index list in the resolved config.
    TrueSupport,
    Support(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStart {
    /// Fixed-point steps from 0, or the cap when `target` is set.
    pub steps: usize,
    pub target: Option<f64>,
}

impl Default for WarmStart {
    fn default() -> Self {
        WarmStart { steps: LASSO_WARM_STEPS, target: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Written into resolved configs; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<Header>,
    pub problem: ProblemSpec,
    /// Defaults to the natural residual for quadratic `f`, DRS otherwise.
    #[serde(default)]
    pub residual: Option<ResidualKind>,
    /// Step size; defaults per residual kind.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub warm_start: WarmStart,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub manifold: Option<ManifoldChoice>,
    #[serde(default)]
    pub diagnostics: DiagnoseOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    /// Duplicated-column Lasso, 64 × 128, λ = 1e-3, natural residual.
    LassoDup,
    /// Duplicated-column basis pursuit, 64 × 128, DRS residual.
    BasisPursuit,
    /// Constructed instance without strict complementarity, projected
    /// solve on the true support.
    NoSc,
    /// Small Lasso with a certified stationary point, n = 5.
    SmallEnum,
    /// `½‖x − b‖² + λ‖x‖₁`.
    IdentityL1,
}

impl ExperimentConfig {
    pub fn preset(experiment: Experiment, seed: u64) -> Self {
        let base = ExperimentOptions::default();
        let mut cfg = ExperimentConfig {
            header: None,
            problem: ProblemSpec::Generator { generator: Generator::lasso_dup_default(), seed },
            residual: Some(ResidualKind::Pgm),
            step: None,
            warm_start: WarmStart::default(),
            solver: SolverConfig { record_timing: false, ..base.solver },
            manifold: None,
            diagnostics: DiagnoseOptions::default(),
            tolerances: base.tolerances,
            out_dir: default_out_dir(),
        };
        let generator = match experiment {
            Experiment::LassoDup => Generator::lasso_dup_default(),
            Experiment::BasisPursuit => {
                cfg.residual = Some(ResidualKind::Drs);
                cfg.warm_start.steps = 0;
                cfg.solver.globalization = Globalization::None;
                Generator::basis_pursuit_dup_default()
            }
            Experiment::NoSc => {
                cfg.warm_start = WarmStart { steps: PROJECTED_WARM_CAP, target: Some(PROJECTED_WARM_TARGET) };
                cfg.manifold = Some(ManifoldChoice::TrueSupport);
                Generator::NoScLasso { n: 40 }
            }
            Experiment::SmallEnum => Generator::SmallEnum { n: 5 },
            Experiment::IdentityL1 => Generator::IdentityL1 { n: 8, lambda: 0.5 },
        };
        cfg.problem = ProblemSpec::Generator { generator, seed };
        cfg
    }

    /// Defaults for an instance file.
    pub fn for_file(path: PathBuf) -> Self {
        let base = ExperimentOptions::default();
        ExperimentConfig {
            header: None,
            problem: ProblemSpec::File { path },
            residual: None,
            step: None,
            warm_start: WarmStart::default(),
            solver: SolverConfig { record_timing: false, ..base.solver },
            manifold: None,
            diagnostics: DiagnoseOptions::default(),
            tolerances: base.tolerances,
            out_dir: default_out_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.solver.validate().map_err(|e| format!("solver: {e}"))?;
        if let Some(t) = self.step {
            if !(t > 0.0 && t.is_finite()) {
                return Err(format!("step: must be positive and finite, got {t}"));
            }
        }
        if let Some(target) = self.warm_start.target {
            if !(target > 0.0) {
                return Err(format!("warm_start.target: must be positive, got {target}"));
            }
        }
        Ok(())
    }

    pub fn seed(&self, inst: &ProblemInstance) -> u64 {
        match &self.problem {
            ProblemSpec::Generator { seed, .. } => *seed,
            ProblemSpec::File { .. } => inst.seed,
        }
    }

    pub fn instance(&self) -> Result<ProblemInstance, String> {
        match &self.problem {
            ProblemSpec::Generator { generator, seed } => {
                generator.generate(*seed).map_err(|e| format!("problem.generator: {e}"))
            }
            ProblemSpec::File { path } => {
                load_instance(path).map_err(|e| format!("problem.path {}: {e}", path.display()))
            }
        }
    }

    pub fn residual_kind(&self, inst: &ProblemInstance) -> ResidualKind {
        self.residual.unwrap_or_else(|| inst.default_residual())
    }

    /// Replaces `TrueSupport` by the explicit support and checks indices.
    pub fn resolve_manifold(&mut self, inst: &ProblemInstance) -> Result<Option<SupportManifold>, String> {
        let support = match &self.manifold {
            None => return Ok(None),
            Some(ManifoldChoice::Support(s)) => s.clone(),
            Some(ManifoldChoice::TrueSupport) => {
                let x = inst
                    .solution
                    .as_ref()
                    .ok_or("manifold: true_support needs an instance with a known solution")?;
                SupportManifold::from_support_of(x, 0.0).support().to_vec()
            }
        };
        let m = SupportManifold::new(inst.dim(), support).map_err(|e| format!("manifold: {e}"))?;
        self.manifold = Some(ManifoldChoice::Support(m.support().to_vec()));
        Ok(Some(m))
    }

    pub fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            warm_steps: self.warm_start.steps,
            warm_target: self.warm_start.target,
            solver: self.solver.clone(),
            tolerances: self.tolerances,
        }
    }
}

/// Parses `"0,3,5"` into indices.
pub fn parse_support(s: &str) -> Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("--manifold-support: {p:?}: {e}")))
        .collect()
}
