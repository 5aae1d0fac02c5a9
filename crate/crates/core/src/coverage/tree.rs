use std::collections::BTreeMap;

use globset::{GlobSet, GlobSetBuilder};

use super::{CoverageError, CoverageExport, CoverageNode, FunctionRecord, Level};


pub const ROOT_MODULE: &str = "(root)";

/// Drops third-party files from coverage before aggregation.
#[derive(Debug, Clone)]
pub struct CoverageFilter {
    patterns: Vec<String>,
    set: GlobSet,
}

impl Default for CoverageFilter {
    fn default() -> Self {
        Self::new::<&str>(&[]).expect("empty filter")
    }
}

impl CoverageFilter {
    pub fn new<S: AsRef<str>>(exclude: &[S]) -> Result<Self, CoverageError> {
        let mut builder = GlobSetBuilder::new();
        for p in exclude {
            let p = p.as_ref();
            let g = globset::GlobBuilder::new(p)
                .literal_separator(true)
                .build()
                .map_err(|_| CoverageError::Glob(p.to_string()))?;
            builder.add(g);
        }
        Ok(Self {
            patterns: exclude.iter().map(|p| p.as_ref().to_string()).collect(),
            set: builder.build().map_err(|e| CoverageError::Glob(e.to_string()))?,
        })
    }

    pub fn excludes(&self, file: &str) -> bool {
        self.set.is_match(file)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }
}

/// Module of a source file: its top-level directory, or `(root)` for files at the top.
pub fn module_of(file: &str) -> &str {
    let trimmed = file.trim_start_matches("./");
    match trimmed.split_once('/') {
        Some((top, _)) if !top.is_empty() => top,
        _ => ROOT_MODULE,
    }
}

fn function_node(r: &FunctionRecord) -> CoverageNode {
    let level = if r.is_public_api {
        Level::Api
    } else {
        Level::InternalFunction
    };
    let mut branches: Vec<CoverageNode> = r
        .branches
        .iter()
        .map(|b| CoverageNode::leaf(Level::Branch, b.id.clone(), u64::from(b.hits > 0), 1))
        .collect();
    branches.sort_by(|a, b| a.name.cmp(&b.name));
    CoverageNode::with_children(level, r.function.clone(), branches)
}

pub fn build_tree(export: &CoverageExport, filter: &CoverageFilter) -> CoverageNode {
    // module -> file -> functions
    let mut modules: BTreeMap<&str, BTreeMap<&str, Vec<CoverageNode>>> = BTreeMap::new();
    for r in &export.records {
        if filter.excludes(&r.file) {
            continue;
        }
        modules
            .entry(module_of(&r.file))
            .or_default()
            .entry(r.file.as_str())
            .or_default()
            .push(function_node(r));
    }
    let module_nodes = modules
        .into_iter()
        .map(|(module, files)| {
            let file_nodes = files
                .into_iter()
                .map(|(file, mut funcs)| {
                    funcs.sort_by(|a, b| (a.level, &a.name).cmp(&(b.level, &b.name)));
                    CoverageNode::with_children(Level::File, file, funcs)
                })
                .collect();
            CoverageNode::with_children(Level::Module, module, file_nodes)
        })
        .collect();
    CoverageNode::with_children(Level::Project, "project", module_nodes)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::BranchRecord;

    fn rec(file: &str, func: &str, api: bool, hits: &[u64]) -> FunctionRecord {
        FunctionRecord {
            file: file.into(),
            function: func.into(),
            is_public_api: api,
            entry_hits: None,
            branches: hits
                .iter()
                .enumerate()
                .map(|(i, h)| BranchRecord {
                    id: format!("b{i}"),
                    hits: *h,
                })
                .collect(),
        }
    }

    fn two_by_two(hits: [u64; 8]) -> CoverageExport {
        CoverageExport {
            records: vec![
                rec("core/a.c", "a_api", true, &hits[0..2]),
                rec("core/a.c", "a_int", false, &hits[2..4]),
                rec("util/b.c", "b_api", true, &hits[4..6]),
                rec("util/b.c", "b_int", false, &hits[6..8]),
            ],
        }
    }

    #[test]
    fn full_coverage_sums_to_eight() {
        let root = build_tree(&two_by_two([1; 8]), &CoverageFilter::default());
        assert_eq!((root.covered, root.total), (8, 8));
        assert_eq!(root.blocked_complexity, 0);
    }

    #[test]
    fn one_uncovered_branch_propagates() {
        let root = build_tree(&two_by_two([1, 1, 1, 1, 1, 1, 1, 0]), &CoverageFilter::default());
        assert_eq!((root.covered, root.total), (7, 8));
        let util = root.children.iter().find(|m| m.name == "util").unwrap();
        assert_eq!((util.covered, util.total), (3, 4));
        let file = &util.children[0];
        assert_eq!(file.name, "util/b.c");
        assert_eq!(file.blocked_complexity, 1);
        let core = root.children.iter().find(|m| m.name == "core").unwrap();
        assert_eq!(core.uncovered(), 0);
    }

    #[test]
    fn excluded_files_are_absent() {
        let mut e = two_by_two([1; 8]);
        e.records.push(rec("third_party/z/zlib.c", "inflate", false, &[0, 0]));
        let filter = CoverageFilter::new(&["third_party/**"]).unwrap();
        let root = build_tree(&e, &filter);
        let mut names = Vec::new();
        root.walk(&mut |n| names.push(n.name.clone()));
        assert!(!names.iter().any(|n| n.contains("third_party") || n == "inflate"));
        assert_eq!(root.total, 8);
    }

    #[test]
    fn levels_strictly_decrease_and_top_level_files_use_root_module() {
        let e = CoverageExport {
            records: vec![rec("top.c", "f", false, &[0])],
        };
        let root = build_tree(&e, &CoverageFilter::default());
        assert_eq!(root.children[0].name, ROOT_MODULE);
        fn check(n: &CoverageNode) {
            for c in &n.children {
                assert!(c.level > n.level);
                check(c);
            }
        }
        check(&root);
    }

    #[test]
    fn empty_export_gives_empty_root() {
        let root = build_tree(&CoverageExport::default(), &CoverageFilter::default());
        assert!(root.is_empty());
        assert_eq!(root.total, 0);
    }
}
