//! Hierarchical coverage analysis.
//!
//! Coverage arrives in a neutral JSON export (see [`schema`]) and is folded
//! into a six-level tree: project, module (top-level source directory), file,
//! public API or internal function, branch. Every internal node carries the
//! sums of its children, and `blocked_complexity` counts uncovered branch
//! leaves beneath it.

mod blockers;
mod catalog;
pub mod headers;
pub mod llvm;
mod render;
pub mod schema;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blockers::{top_blockers, Blocker};
pub use catalog::{api_coverage_ratio, ApiCatalog, ApiEntry};
pub use render::{render_context, MIN_RENDER_BUDGET};
pub use schema::{BranchRecord, CoverageExport, FunctionRecord};
pub use tree::{build_tree, CoverageFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Project,
    Module,
    File,
    Api,
    InternalFunction,
    Branch,
}

impl Level {
    pub fn label(self) -> &'static str {
        match self {
            Level::Project => "Project",
            Level::Module => "Module",
            Level::File => "File",
            Level::Api => "Api",
            Level::InternalFunction => "InternalFunction",
            Level::Branch => "Branch",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        let l = s.to_ascii_lowercase();
        Some(match l.as_str() {
            "project" => Level::Project,
            "module" => Level::Module,
            "file" => Level::File,
            "api" => Level::Api,
            "internal" | "internalfunction" | "internal_function" | "function" => {
                Level::InternalFunction
            }
            "branch" => Level::Branch,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageNode {
    pub level: Level,
    pub name: String,
    pub covered: u64,
    pub total: u64,
    pub blocked_complexity: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<CoverageNode>,
}

impl CoverageNode {
    pub fn leaf(level: Level, name: impl Into<String>, covered: u64, total: u64) -> Self {
        Self {
            level,
            name: name.into(),
            covered,
            total,
            blocked_complexity: total - covered,
            children: Vec::new(),
        }
    }

    /// Builds an internal node whose counters are the sums over `children`.
    pub fn with_children(level: Level, name: impl Into<String>, children: Vec<CoverageNode>) -> Self {
        let covered = children.iter().map(|c| c.covered).sum();
        let total = children.iter().map(|c| c.total).sum();
        let blocked_complexity = children.iter().map(|c| c.blocked_complexity).sum();
        Self {
            level,
            name: name.into(),
            covered,
            total,
            blocked_complexity,
            children,
        }
    }

    pub fn uncovered(&self) -> u64 {
        self.total - self.covered
    }

    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.covered as f64 * 100.0 / self.total as f64
        }
    }

    /// Pre-order walk.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a CoverageNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn nodes_at(&self, level: Level) -> Vec<&CoverageNode> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if n.level == level {
                out.push(n);
            }
        });
        out
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0 && self.children.is_empty()
    }
}

/// A point-in-time campaign observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSnapshot {
    /// Seconds since campaign start.
    pub taken_at: f64,
    /// Monotone count of unique runtime features reported by the fuzzer.
    pub feature_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<CoverageNode>,
}

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("coverage export {locus}: {reason}")]
    Schema { locus: String, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("API catalog is empty")]
    EmptyCatalog,
    #[error("bad glob `{0}`")]
    Glob(String),
}

/// Reads an export file and builds the filtered hierarchy.
pub fn ingest_coverage_export(
    export_file: &Path,
    filter: &CoverageFilter,
) -> Result<CoverageNode, CoverageError> {
    let export = CoverageExport::load(export_file)?;
    Ok(build_tree(&export, filter))
}
