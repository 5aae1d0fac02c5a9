use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The agents in the pool. `Manager` is the scheduler itself and never runs a model loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Manager,
    LibraryBuilder,
    DictionaryGenerator,
    SeedGenerator,
    HarnessGenerator,
    FuzzerExecutor,
    CoverageAnalyzer,
    CrashAnalyzer,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Manager,
        Role::LibraryBuilder,
        Role::DictionaryGenerator,
        Role::SeedGenerator,
        Role::HarnessGenerator,
        Role::FuzzerExecutor,
        Role::CoverageAnalyzer,
        Role::CrashAnalyzer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Manager => "Manager",
            Role::LibraryBuilder => "LibraryBuilder",
            Role::DictionaryGenerator => "DictionaryGenerator",
            Role::SeedGenerator => "SeedGenerator",
            Role::HarnessGenerator => "HarnessGenerator",
            Role::FuzzerExecutor => "FuzzerExecutor",
            Role::CoverageAnalyzer => "CoverageAnalyzer",
            Role::CrashAnalyzer => "CrashAnalyzer",
        }
    }

    /// snake_case form used for script and log file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            Role::Manager => "manager",
            Role::LibraryBuilder => "library_builder",
            Role::DictionaryGenerator => "dictionary_generator",
            Role::SeedGenerator => "seed_generator",
            Role::HarnessGenerator => "harness_generator",
            Role::FuzzerExecutor => "fuzzer_executor",
            Role::CoverageAnalyzer => "coverage_analyzer",
            Role::CrashAnalyzer => "crash_analyzer",
        }
    }

    pub fn is_analyzer(self) -> bool {
        matches!(self, Role::CoverageAnalyzer | Role::CrashAnalyzer)
    }

    pub fn is_setup(self) -> bool {
        matches!(
            self,
            Role::LibraryBuilder | Role::DictionaryGenerator | Role::SeedGenerator
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .iter()
            .copied()
            .find(|r| r.as_str().eq_ignore_ascii_case(s) || r.file_stem() == s)
            .ok_or_else(|| format!("unknown agent role `{s}`"))
    }
}
