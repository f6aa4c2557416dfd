use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::curriculum::ScheduleOverrides;
use crate::error::Error;

/// Training variants compared in the ablation study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Ablation {
    #[default]
    Full,
    /// Gravity fixed at the vertical wall from the first iteration.
    NoCurriculum,
    /// Attachment always succeeds during training.
    NoProbabilistic,
    /// Any magnet command above threshold is full adhesion.
    NoModeling,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoCurriculum,
        Ablation::NoProbabilistic,
        Ablation::NoModeling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCurriculum => "no-curriculum",
            Ablation::NoProbabilistic => "no-probabilistic",
            Ablation::NoModeling => "no-modeling",
        }
    }

    pub fn overrides(self) -> ScheduleOverrides {
        match self {
            Ablation::NoCurriculum => ScheduleOverrides {
                fixed_theta: Some(FRAC_PI_2),
                ..Default::default()
            },
            Ablation::NoProbabilistic => ScheduleOverrides {
                fixed_prob_attach: Some(1.0),
                ..Default::default()
            },
            Ablation::Full | Ablation::NoModeling => ScheduleOverrides::default(),
        }
    }

    pub fn ideal_adhesion(self) -> bool {
        self == Ablation::NoModeling
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("ablation", format!("unknown variant `{s}`")))
    }
}
