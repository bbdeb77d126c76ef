//! Synthetic objectives with known ground truth.

mod prompt;
mod quadratic;
mod two_basin;

use serde::{Deserialize, Serialize};

pub use prompt::{make_prompt_task, PromptSpec, PromptTask};
pub use quadratic::{make_quadratic, Quadratic, QuadraticSpec};
pub use two_basin::{make_two_basin, Basin, TwoBasin, TwoBasinSpec};

use crate::error::Result;
use crate::objective::Objective;

/// Serializable name-plus-parameters description of an objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveDescriptor {
    Quadratic(QuadraticSpec),
    TwoBasin(TwoBasinSpec),
    Prompt(PromptSpec),
}

impl ObjectiveDescriptor {
    pub fn build(&self) -> Result<Box<dyn Objective>> {
        Ok(match self {
            Self::Quadratic(s) => Box::new(Quadratic::new(s.clone())?),
            Self::TwoBasin(s) => Box::new(TwoBasin::new(s.clone())?),
            Self::Prompt(s) => Box::new(PromptTask::new(s.clone())?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(s) => s.d,
            Self::TwoBasin(s) => s.d,
            Self::Prompt(s) => s.d,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Quadratic(_) => "quadratic",
            Self::TwoBasin(_) => "two_basin",
            Self::Prompt(_) => "prompt",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trips_and_builds() {
        let desc = ObjectiveDescriptor::Quadratic(QuadraticSpec {
            d: 4,
            condition_number: 10.0,
            noise_std: 0.0,
            seed: 1,
            rotated: false,
            skew: 0.0,
        });
        let json = serde_json::to_string(&desc).unwrap();
        assert!(json.contains("\"kind\":\"quadratic\""));
        let back: ObjectiveDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, desc);
        assert_eq!(back.build().unwrap().dim(), 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"kind":"two_basin","d":2,"curvature_ratio":100,"depth_gap":0.1,"sepration":1}"#;
        assert!(serde_json::from_str::<ObjectiveDescriptor>(bad).is_err());
    }
}
