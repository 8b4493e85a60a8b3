//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vortex_core::solvers::SolveOptions;
use vortex_core::subsolution::default_delta;
use vortex_core::{Grid, Problem, Vortex, VortexModel, VortexSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub vortices: Vec<VortexConfig>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_model: Option<CheckModelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexConfig {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub lambda: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_schedule: Option<Vec<f64>>,
    /// Bump radius; defaults to L/8 reduced for nearby vortices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Overrides of [`SolveOptions`]; absent keys keep the library defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_switch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub krylov_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dealias: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_check: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    fn validate(&self) -> Result<()> {
        if self.vortices.is_empty() {
            bail!("vortices: at least one vortex is required");
        }
        if let Some(schedule) = &self.problem.epsilon_schedule {
            if schedule.is_empty() {
                bail!("problem.epsilon_schedule: must not be empty");
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.grid.length).context("grid")
    }

    pub fn model(&self) -> Result<VortexModel> {
        VortexModel::builtin(&self.model.name, self.model.s, self.model.alpha).context("model")
    }

    pub fn vortex_set(&self) -> Result<VortexSet> {
        let list = self
            .vortices
            .iter()
            .map(|v| Vortex::new(v.x, v.y, v.multiplicity))
            .collect();
        VortexSet::new(list).context("vortices")
    }

    pub fn delta(&self, grid: &Grid, vortices: &VortexSet) -> f64 {
        self.problem.delta.unwrap_or_else(|| default_delta(grid, vortices))
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut o = SolveOptions::default();
        let s = &self.solver;
        if let Some(v) = s.max_iters {
            o.max_iters = v;
        }
        o.grad_tol = s.grad_tol;
        if let Some(v) = s.newton_switch {
            o.newton_switch = v;
        }
        if let Some(v) = s.newton_max_iters {
            o.newton_max_iters = v;
        }
        if let Some(v) = s.krylov_tol {
            o.krylov_tol = v;
        }
        if let Some(v) = s.path_nodes {
            o.path_nodes = v;
        }
        if let Some(v) = s.path_iters {
            o.path_iters = v;
        }
        if let Some(v) = s.far_shift {
            o.far_shift = v;
        }
        if let Some(v) = s.initial_offset {
            o.initial_offset = v;
        }
        o
    }

    /// Build σ and the problem at the configured λ and ε.
    pub fn problem(&self, dealias: bool) -> Result<Problem> {
        let grid = self.grid()?;
        let vortices = self.vortex_set()?;
        let bg = vortex_core::singular::build_sigma(&grid, &vortices).context("singular background")?;
        let p = Problem::new(self.model()?, bg, self.problem.lambda, self.problem.epsilon).context("problem")?;
        if dealias || self.solver.dealias {
            Ok(p.with_dealiasing()?)
        } else {
            Ok(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[grid]
n = 64
length = 6.283185307179586

[model]
name = "cp1"
s = 0.25

[[vortices]]
x = 1.0
y = 2.0

[[vortices]]
x = 4.0
y = 4.5
multiplicity = 2

[problem]
lambda = 12.5
epsilon = 0.001
epsilon_schedule = [0.1, 0.01]

[solver]
path_nodes = 21
dealias = true

[output]
dir = "runs/a"

[probe]
lambdas = [1.0, 10.0]
epsilons = [0.001, 0.01]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.vortices[0].multiplicity, 1);
        assert_eq!(cfg.vortices[1].multiplicity, 2);
        assert_eq!(cfg.solve_options().path_nodes, 21);
        assert!(cfg.solver.dealias);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let text = "[grid]\nn = 32\nlength = 1.0\n[model]\nname = \"u1\"\n[[vortices]]\nx = 0.5\ny = 0.5\n[problem]\nlambda = 3.0\nepsilon = 0.01\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        assert_eq!(cfg.solve_options(), SolveOptions::default());
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let g = cfg.grid().unwrap();
        let v = cfg.vortex_set().unwrap();
        assert_eq!(cfg.delta(&g, &v), 1.0 / 8.0);
    }

    #[test]
    fn errors_name_the_offending_key_and_line() {
        let bad = SAMPLE.replace("lambda = 12.5", "lambda = \"big\"");
        let err = format!("{:#}", RunConfig::parse(&bad).unwrap_err());
        assert!(err.contains("lambda"), "{err}");
        assert!(err.contains("line"), "{err}");
        let typo = SAMPLE.replace("path_nodes", "path_node");
        let err = format!("{:#}", RunConfig::parse(&typo).unwrap_err());
        assert!(err.contains("path_node"), "{err}");
        let none = "vortices = []\n[grid]\nn = 32\nlength = 1.0\n[model]\nname = \"u1\"\n[problem]\nlambda = 3.0\nepsilon = 0.01\n";
        assert!(RunConfig::parse(none).is_err());
    }
}
