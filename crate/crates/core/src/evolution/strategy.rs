use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::guidance::{ApiCluster, GuidanceRequest};
use crate::coverage::{api_coverage_ratio, top_blockers, ApiCatalog, CoverageError, CoverageNode, Level};

pub const DEFAULT_STRATEGY_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    SurfacePhase,
    DeepPhase,
}

pub fn strategy_for_ratio(ratio: f64, threshold: f64) -> Strategy {
    if ratio >= threshold {
        Strategy::DeepPhase
    } else {
        Strategy::SurfacePhase
    }
}

/// Surface exploration until the API coverage ratio reaches `threshold`.
pub fn choose_strategy(catalog: &ApiCatalog, threshold: f64) -> Result<Strategy, CoverageError> {
    Ok(strategy_for_ratio(api_coverage_ratio(catalog)?, threshold))
}

/// Uncovered APIs grouped by declaring file, largest group first, then by path.
pub fn surface_clusters(catalog: &ApiCatalog) -> Vec<ApiCluster> {
    let mut by_file: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for e in catalog.uncovered() {
        by_file.entry(&e.file).or_default().push(e.name.clone());
    }
    let mut clusters: Vec<ApiCluster> = by_file
        .into_iter()
        .map(|(file, apis)| ApiCluster { file: file.to_string(), apis })
        .collect();
    clusters.sort_by(|a, b| b.apis.len().cmp(&a.apis.len()).then_with(|| a.file.cmp(&b.file)));
    clusters
}

/// Request for surface targets, or `None` when every API is covered.
pub fn surface_request(root: &CoverageNode, catalog: &ApiCatalog) -> Option<GuidanceRequest> {
    let clusters = surface_clusters(catalog);
    if clusters.is_empty() {
        return None;
    }
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for n in root.nodes_at(Level::Api) {
        *totals.entry(n.name.clone()).or_default() += n.uncovered();
    }
    Some(GuidanceRequest::Surface {
        clusters,
        catalog: catalog.clone(),
        api_totals: totals.into_iter().collect(),
    })
}

/// Request seeded with the single top blocker, or `None` on a fully covered tree.
pub fn deep_request(root: &CoverageNode, catalog: &ApiCatalog) -> Option<GuidanceRequest> {
    top_blockers(root, 1).into_iter().next().map(|blocker| GuidanceRequest::Deep {
        blocker,
        catalog: catalog.clone(),
    })
}
