//! The declarative experiment configuration file.
//!
//! TOML with five sections — `ensemble`, `grid`, `agents`, `payloads`,
//! `output` — plus a `tasks` section and top-level `name` / `methods` /
//! `root_seed`. Unknown keys anywhere are errors.
//!
//! ```toml
//! name = "paper-grid"
//! methods = ["maj", "rrmaj"]
//! root_seed = 7
//!
//! [ensemble]
//! n = 5
//! k = 100
//! l = 3000
//!
//! [grid]
//! rows = ["0c5t", "1c4t", "2c3t", "3c2t", "4c1t", "5c0t"]
//!
//! [agents]
//! kind = "potential"
//! gamma_h = 0.03
//! alpha = 0.004
//!
//! [payloads]
//! tier = "strong"
//!
//! [tasks]
//! source = "synthetic"
//! count = 100
//! seed = 3
//!
//! [output]
//! dir = "out"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{parse_grid_row, AgentSettings, ExperimentError, ExperimentPlan, Method, TaskSource};
use crate::agents::PayloadTier;
use crate::stats::TiePolicy;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: String,
    pub methods: Vec<String>,
    #[serde(default)]
    pub root_seed: Option<u64>,
    #[serde(default)]
    pub tie_policy: Option<TiePolicy>,
    pub ensemble: EnsembleSection,
    pub grid: GridSection,
    pub agents: AgentSettings,
    #[serde(default)]
    pub payloads: PayloadSection,
    pub tasks: TaskSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n: usize,
    pub k: usize,
    /// Shots per task; defaults to `n`.
    #[serde(default)]
    pub m: Option<usize>,
    pub l: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Row names like `3c2t`; each must sum to `ensemble.n`.
    pub rows: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSection {
    #[serde(default)]
    pub tier: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    /// `synthetic` or `file`.
    pub source: String,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub dump_trajectories: bool,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Resolves the file into a validated plan. `seed_override` and
    /// `out_override` come from the command line and win over the file.
    pub fn into_plan(
        self,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> Result<ExperimentPlan, ExperimentError> {
        let methods = self
            .methods
            .iter()
            .map(|m| m.parse::<Method>().map_err(ExperimentError::Config))
            .collect::<Result<Vec<_>, _>>()?;

        let grid = self
            .grid
            .rows
            .iter()
            .map(|r| parse_grid_row(r))
            .collect::<Result<Vec<_>, _>>()?;

        let payload_tier = match self.payloads.tier.as_deref() {
            None | Some("none") => PayloadTier::None,
            Some("moderate") => PayloadTier::Moderate,
            Some("strong") => PayloadTier::Strong,
            Some(other) => {
                return Err(ExperimentError::Config(format!(
                    "unknown payload tier `{other}` (expected none, moderate or strong)"
                )))
            }
        };

        let task_source = match self.tasks.source.as_str() {
            "synthetic" => TaskSource::Synthetic {
                count: self.tasks.count.ok_or_else(|| {
                    ExperimentError::Config("synthetic tasks need `count`".into())
                })?,
                seed: self.tasks.seed.unwrap_or(0),
            },
            "file" => TaskSource::File(self.tasks.path.ok_or_else(|| {
                ExperimentError::Config("file tasks need `path`".into())
            })?),
            other => {
                return Err(ExperimentError::Config(format!(
                    "unknown task source `{other}` (expected synthetic or file)"
                )))
            }
        };

        let plan = ExperimentPlan {
            name: self.name,
            root_seed: seed_override.or(self.root_seed).unwrap_or(0),
            methods,
            n: self.ensemble.n,
            k: self.ensemble.k,
            m: self.ensemble.m.unwrap_or(self.ensemble.n),
            l: self.ensemble.l,
            payload_tier,
            grid,
            agents: self.agents,
            task_source,
            tie_policy: self.tie_policy.unwrap_or(TiePolicy::SeededUniform),
            output_dir: out_override
                .or(self.output.dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            dump_trajectories: self.output.dump_trajectories,
        };
        plan.validate()?;
        Ok(plan)
    }
}
