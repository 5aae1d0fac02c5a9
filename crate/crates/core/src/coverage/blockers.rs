use serde::{Deserialize, Serialize};

use super::{CoverageNode, Level};

/// A runtime blocker: an under-covered function or branch plus the chain of
/// enclosing file and function names that leads to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocker {
    pub level: Level,
    pub name: String,
    pub file: String,
    pub blocked_complexity: u64,
    pub covered: u64,
    pub total: u64,
    pub trace: Vec<String>,
}

impl Blocker {
    /// Function that owns the blocker (itself for function-level blockers).
    pub fn function(&self) -> &str {
        match self.level {
            Level::Branch => self.trace.last().map(String::as_str).unwrap_or(""),
            _ => &self.name,
        }
    }
}

fn collect(node: &CoverageNode, chain: &mut Vec<String>, file: &str, out: &mut Vec<Blocker>) {
    let is_candidate = matches!(node.level, Level::Api | Level::InternalFunction | Level::Branch);
    if is_candidate && node.blocked_complexity > 0 {
        out.push(Blocker {
            level: node.level,
            name: node.name.clone(),
            file: file.to_string(),
            blocked_complexity: node.blocked_complexity,
            covered: node.covered,
            total: node.total,
            trace: chain.clone(),
        });
    }
    let file = if node.level == Level::File { node.name.as_str() } else { file };
    let pushed = matches!(node.level, Level::File | Level::Api | Level::InternalFunction);
    if pushed {
        chain.push(node.name.clone());
    }
    for c in &node.children {
        collect(c, chain, file, out);
    }
    if pushed {
        chain.pop();
    }
}

/// The `k` function or branch nodes with the most uncovered branches beneath them.
/// Ties fall back to (file, name, trace) so the order is total.
pub fn top_blockers(root: &CoverageNode, k: usize) -> Vec<Blocker> {
    let mut out = Vec::new();
    collect(root, &mut Vec::new(), "", &mut out);
    out.sort_by(|a, b| {
        b.blocked_complexity
            .cmp(&a.blocked_complexity)
            .then_with(|| a.file.cmp(&b.file))
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.trace.cmp(&b.trace))
            .then_with(|| a.level.cmp(&b.level))
    });
    out.truncate(k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::{build_tree, BranchRecord, CoverageExport, CoverageFilter, FunctionRecord};

    fn rec(file: &str, func: &str, covered: u64, total: u64) -> FunctionRecord {
        FunctionRecord {
            file: file.into(),
            function: func.into(),
            is_public_api: false,
            entry_hits: Some(1),
            branches: (0..total)
                .map(|i| BranchRecord {
                    id: format!("b{i}"),
                    hits: u64::from(i < covered),
                })
                .collect(),
        }
    }

    fn tree(records: Vec<FunctionRecord>) -> CoverageNode {
        build_tree(&CoverageExport { records }, &CoverageFilter::default())
    }

    #[test]
    fn highest_complexity_first() {
        let t = tree(vec![rec("m/a.c", "small", 0, 3), rec("m/b.c", "big", 0, 10)]);
        let top = top_blockers(&t, 1);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].name, "big");
        assert_eq!(top[0].blocked_complexity, 10);
        assert_eq!(top[0].trace, vec!["m/b.c".to_string()]);
    }

    #[test]
    fn ties_go_to_first_file() {
        let t = tree(vec![rec("m/z.c", "f", 0, 5), rec("m/a.c", "g", 0, 5)]);
        let top = top_blockers(&t, 1);
        assert_eq!(top[0].file, "m/a.c");
    }

    #[test]
    fn covered_tree_has_no_blockers_and_large_k_returns_all() {
        assert!(top_blockers(&tree(vec![rec("a.c", "f", 4, 4)]), 3).is_empty());
        let t = tree(vec![rec("a.c", "f", 1, 3)]);
        // one function plus two branch leaves
        let all = top_blockers(&t, 100);
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].name, "f");
        assert_eq!(all[1].function(), "f");
        assert_eq!(all[1].trace, vec!["a.c".to_string(), "f".to_string()]);
    }
}
