use std::collections::BTreeMap;

use evofuzz::coverage::{
    build_tree, render_context, top_blockers, BranchRecord, CoverageExport, CoverageFilter,
    CoverageNode, FunctionRecord, Level,
};
use proptest::prelude::*;

fn export_strategy() -> impl Strategy<Value = CoverageExport> {
    let file = prop_oneof![
        Just("a.c".to_string()),
        Just("core/x.c".to_string()),
        Just("core/y.c".to_string()),
        Just("util/deep/z.c".to_string()),
        Just("third_party/zlib/inflate.c".to_string()),
    ];
    let record = (file, 0usize..6, any::<bool>(), prop::collection::vec(0u64..3, 0..6)).prop_map(
        |(file, f, api, hits)| FunctionRecord {
            function: format!("fn{f}"),
            file,
            is_public_api: api,
            entry_hits: None,
            branches: hits
                .into_iter()
                .enumerate()
                .map(|(i, hits)| BranchRecord { id: format!("b{i}"), hits })
                .collect(),
        },
    );
    prop::collection::vec(record, 0..20).prop_map(|mut records| {
        // (file, function) pairs are unique in a valid export
        let mut seen = std::collections::BTreeSet::new();
        records.retain(|r| seen.insert((r.file.clone(), r.function.clone())));
        CoverageExport { records }
    })
}

/// Flat sums straight from the records, keyed by (level, name).
fn oracle(export: &CoverageExport, excluded: &str) -> BTreeMap<(Level, String), (u64, u64)> {
    let mut sums: BTreeMap<(Level, String), (u64, u64)> = BTreeMap::new();
    for r in &export.records {
        if r.file.starts_with(excluded) {
            continue;
        }
        let covered = r.branches.iter().filter(|b| b.hits > 0).count() as u64;
        let total = r.branches.len() as u64;
        let module = match r.file.find('/') {
            Some(i) => r.file[..i].to_string(),
            None => "(root)".to_string(),
        };
        for key in [
            (Level::Project, "project".to_string()),
            (Level::Module, module),
            (Level::File, r.file.clone()),
        ] {
            let e = sums.entry(key).or_default();
            e.0 += covered;
            e.1 += total;
        }
    }
    sums
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn aggregation_matches_flat_sums(export in export_strategy()) {
        let filter = CoverageFilter::new(&["third_party/**"]).unwrap();
        let root = build_tree(&export, &filter);
        let expected = oracle(&export, "third_party/");
        let mut seen = 0;
        let mut bad = Vec::new();
        root.walk(&mut |n: &CoverageNode| {
            check_node(n, &mut bad);
            if matches!(n.level, Level::Project | Level::Module | Level::File) {
                let want = expected.get(&(n.level, n.name.clone())).copied().unwrap_or((0, 0));
                if (n.covered, n.total) != want {
                    bad.push(format!("{:?} {} {:?} != {:?}", n.level, n.name, (n.covered, n.total), want));
                }
                seen += 1;
            }
        });
        prop_assert!(bad.is_empty(), "{:?}", bad);
        // every oracle key shows up in the tree (empty export still has the project root)
        prop_assert_eq!(seen, expected.len().max(1));
    }

    #[test]
    fn render_respects_budget(export in export_strategy(), budget in 0usize..2000, lvl in 0usize..6) {
        let root = build_tree(&export, &CoverageFilter::default());
        let level = [Level::Project, Level::Module, Level::File, Level::Api, Level::InternalFunction, Level::Branch][lvl];
        prop_assert!(render_context(&root, level, budget).chars().count() <= budget);
    }

    #[test]
    fn blockers_are_deterministic(export in export_strategy(), k in 0usize..10) {
        let root = build_tree(&export, &CoverageFilter::default());
        let mut shuffled = export.clone();
        shuffled.records.reverse();
        let other = build_tree(&shuffled, &CoverageFilter::default());
        let a = top_blockers(&root, k);
        prop_assert_eq!(&a, &top_blockers(&other, k));
        prop_assert!(a.windows(2).all(|w| w[0].blocked_complexity >= w[1].blocked_complexity));
    }
}

fn check_node(n: &CoverageNode, bad: &mut Vec<String>) {
    if n.name.starts_with("third_party") || n.covered > n.total {
        bad.push(format!("bad node {}", n.name));
    }
    if !n.children.is_empty() {
        let c: u64 = n.children.iter().map(|c| c.covered).sum();
        let t: u64 = n.children.iter().map(|c| c.total).sum();
        if (c, t) != (n.covered, n.total) {
            bad.push(format!("child sums differ at {}", n.name));
        }
        if n.children.iter().any(|c| c.level <= n.level) {
            bad.push(format!("level order broken at {}", n.name));
        }
    }
}
