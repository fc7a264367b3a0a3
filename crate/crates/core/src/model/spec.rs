use serde::{Deserialize, Serialize};

use super::data::{Mode, ModelData};
use crate::error::Result;
use crate::panel::{allocation_design, assemble_designs, DesignLayout, DesignSpec, Panel, SplineBasisSpec, Term};

/// Column lists for one linear predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumns {
    pub fixed: Vec<String>,
    pub profile: Vec<String>,
    pub random: Vec<String>,
}

impl DesignColumns {
    pub fn to_spec(&self, spline: &SplineBasisSpec) -> DesignSpec {
        DesignSpec {
            fixed: Term::parse_list(&self.fixed, spline),
            profile: Term::parse_list(&self.profile, spline),
            random: Term::parse_list(&self.random, spline),
        }
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Model structure: which columns enter which part of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: Mode,
    pub classes: usize,
    /// Baseline columns of the allocation model (an intercept is always added).
    pub allocation: Vec<String>,
    pub outcome: DesignColumns,
    /// Presence model; used in joint mode only.
    pub presence: DesignColumns,
    pub spline: SplineBasisSpec,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Marginal,
            classes: 3,
            allocation: Vec::new(),
            outcome: DesignColumns { fixed: strings(&["1"]), profile: strings(&["spline"]), random: strings(&["1"]) },
            presence: DesignColumns { fixed: strings(&["1"]), profile: strings(&["1"]), random: strings(&["1"]) },
            spline: SplineBasisSpec::default(),
        }
    }
}

/// Resolved column names of every design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub allocation: Vec<String>,
    pub outcome: DesignLayout,
    pub presence: Option<DesignLayout>,
}

impl ModelSpec {
    pub fn build(&self, panel: &Panel) -> Result<(ModelLayout, ModelData)> {
        let (alloc_names, alloc) = allocation_design(panel, &self.allocation)?;
        let (outcome_layout, designs) = assemble_designs(panel, &self.outcome.to_spec(&self.spline))?;
        let (presence_layout, presence_designs) = match self.mode {
            Mode::Joint => {
                let (l, d) = assemble_designs(panel, &self.presence.to_spec(&self.spline))?;
                (Some(l), Some(d))
            }
            Mode::Marginal => (None, None),
        };
        let data = ModelData::new(self.mode, self.classes, panel, &alloc, &designs, presence_designs.as_deref())?;
        Ok((ModelLayout { allocation: alloc_names, outcome: outcome_layout, presence: presence_layout }, data))
    }
}
