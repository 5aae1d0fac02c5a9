use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CoverageError, CoverageExport, CoverageFilter};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiEntry {
    pub name: String,
    pub file: String,
    pub covered: bool,
}

/// Public API functions and whether any campaign reached them. Names are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCatalog {
    apis: Vec<ApiEntry>,
}

impl ApiCatalog {
    /// Builds a catalog, merging duplicate names (covered if any duplicate is).
    pub fn new(entries: impl IntoIterator<Item = ApiEntry>) -> Self {
        let mut by_name: BTreeMap<String, ApiEntry> = BTreeMap::new();
        for e in entries {
            by_name
                .entry(e.name.clone())
                .and_modify(|prev| prev.covered |= e.covered)
                .or_insert(e);
        }
        Self {
            apis: by_name.into_values().collect(),
        }
    }

    pub fn from_export(export: &CoverageExport, filter: &CoverageFilter) -> Self {
        Self::new(
            export
                .records
                .iter()
                .filter(|r| r.is_public_api && !filter.excludes(&r.file))
                .map(|r| ApiEntry {
                    name: r.function.clone(),
                    file: r.file.clone(),
                    covered: r.reached(),
                }),
        )
    }

    /// Adds declared APIs that never showed up in the export as uncovered.
    pub fn with_declared(self, declared: impl IntoIterator<Item = (String, String)>) -> Self {
        let extra = declared.into_iter().map(|(name, file)| ApiEntry {
            name,
            file,
            covered: false,
        });
        Self::new(self.apis.into_iter().chain(extra))
    }

    pub fn apis(&self) -> &[ApiEntry] {
        &self.apis
    }

    pub fn get(&self, name: &str) -> Option<&ApiEntry> {
        self.apis.iter().find(|a| a.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn uncovered(&self) -> impl Iterator<Item = &ApiEntry> {
        self.apis.iter().filter(|a| !a.covered)
    }
}

pub fn api_coverage_ratio(catalog: &ApiCatalog) -> Result<f64, CoverageError> {
    if catalog.is_empty() {
        return Err(CoverageError::EmptyCatalog);
    }
    let covered = catalog.apis.iter().filter(|a| a.covered).count();
    Ok(covered as f64 / catalog.apis.len() as f64)
}
