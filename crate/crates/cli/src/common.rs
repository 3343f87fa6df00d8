//! Flag enums shared by the phase-loop subcommands.

use clap::ValueEnum;
use klapi::api::{EvalMode, ImprovementKind};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoArg {
    Cpo,
    Mdpo,
    Surrogate,
    Vmpo,
    ExactMd,
}

impl AlgoArg {
    pub fn kind(self) -> ImprovementKind {
        match self {
            AlgoArg::Cpo => ImprovementKind::Cpo,
            AlgoArg::Mdpo => ImprovementKind::Mdpo,
            AlgoArg::Surrogate => ImprovementKind::Surrogate,
            AlgoArg::Vmpo => ImprovementKind::Vmpo,
            AlgoArg::ExactMd => ImprovementKind::ExactMd,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgoArg::Cpo => "cpo",
            AlgoArg::Mdpo => "mdpo",
            AlgoArg::Surrogate => "surrogate",
            AlgoArg::Vmpo => "vmpo",
            AlgoArg::ExactMd => "exact-md",
        }
    }
}

impl std::str::FromStr for AlgoArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalArg {
    Tabular,
    LeastSquares,
    Oracle,
}

impl EvalArg {
    pub fn mode(self) -> EvalMode {
        match self {
            EvalArg::Tabular => EvalMode::TabularEmpirical,
            EvalArg::LeastSquares => EvalMode::LeastSquares,
            EvalArg::Oracle => EvalMode::Oracle,
        }
    }
}

impl std::str::FromStr for EvalArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}
