use super::{CoverageNode, Level};

/// Smallest budget the table layout is designed for.
pub const MIN_RENDER_BUDGET: usize = 256;

pub const NO_DATA: &str = "no coverage data";

const NAME_WIDTH: usize = 40;

fn clip_name(name: &str) -> String {
    if name.chars().count() <= NAME_WIDTH {
        return name.to_string();
    }
    let tail: String = name
        .chars()
        .rev()
        .take(NAME_WIDTH - 1)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    format!("…{tail}")
}

fn row(name: &str, covered: u64, total: u64, uncovered: u64, pct: f64) -> String {
    format!(
        "{:<w$} {:>9} {:>9} {:>9} {:>6.1}\n",
        clip_name(name),
        covered,
        total,
        uncovered,
        pct,
        w = NAME_WIDTH
    )
}

fn clip_chars(text: &str, budget: usize) -> String {
    text.chars().take(budget).collect()
}

/// Fixed-width table of the nodes at `level`, most uncovered first, never longer
/// than `budget_chars` characters.
pub fn render_context(root: &CoverageNode, level: Level, budget_chars: usize) -> String {
    if root.total == 0 {
        return clip_chars(NO_DATA, budget_chars);
    }
    let mut nodes = root.nodes_at(level);
    nodes.sort_by(|a, b| {
        b.uncovered()
            .cmp(&a.uncovered())
            .then_with(|| a.name.cmp(&b.name))
    });
    let header = format!(
        "{:<w$} {:>9} {:>9} {:>9} {:>6}\n",
        level.label(),
        "covered",
        "total",
        "uncovered",
        "%",
        w = NAME_WIDTH
    );
    let mut out = header;
    let mut used = out.chars().count();
    for (i, n) in nodes.iter().enumerate() {
        let line = row(&n.name, n.covered, n.total, n.uncovered(), n.percent());
        let remaining = nodes.len() - i - 1;
        let reserve = if remaining > 0 {
            elision(remaining).chars().count()
        } else {
            0
        };
        let len = line.chars().count();
        if used + len + reserve > budget_chars {
            let dropped = nodes.len() - i;
            let tail = elision(dropped);
            if used + tail.chars().count() <= budget_chars {
                out.push_str(&tail);
                return out;
            }
            return clip_chars(&out, budget_chars);
        }
        out.push_str(&line);
        used += len;
    }
    clip_chars(&out, budget_chars)
}

fn elision(dropped: usize) -> String {
    format!("… {dropped} more rows\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modules(n: usize) -> CoverageNode {
        let files = (0..n)
            .map(|i| {
                let f = CoverageNode::leaf(Level::InternalFunction, format!("f{i}"), i as u64 % 7, 10);
                CoverageNode::with_children(Level::File, format!("m/file{i:04}.c"), vec![f])
            })
            .collect();
        CoverageNode::with_children(
            Level::Project,
            "project",
            vec![CoverageNode::with_children(Level::Module, "m", files)],
        )
    }

    #[test]
    fn three_module_table() {
        let mods = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, m)| {
                CoverageNode::with_children(
                    Level::Module,
                    *m,
                    vec![CoverageNode::leaf(Level::Branch, "x", i as u64, 4)],
                )
            })
            .collect();
        let root = CoverageNode::with_children(Level::Project, "project", mods);
        let text = render_context(&root, Level::Module, 4096);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("covered") && lines[0].contains('%'));
        assert!(lines[1].starts_with("a ") && lines[1].ends_with("0.0"));
        assert!(lines[3].starts_with("c ") && lines[3].ends_with("50.0"));
    }

    #[test]
    fn truncates_with_elision_count() {
        let root = modules(1000);
        let budget = 1200;
        let text = render_context(&root, Level::File, budget);
        assert!(text.chars().count() <= budget);
        let shown = text.lines().count() - 2;
        let last = text.lines().last().unwrap();
        assert_eq!(last, format!("… {} more rows", 1000 - shown));
    }

    #[test]
    fn empty_tree_sentinel() {
        let root = CoverageNode::with_children(Level::Project, "project", vec![]);
        assert_eq!(render_context(&root, Level::Module, 512), NO_DATA);
    }

    #[test]
    fn tiny_budget_still_respected() {
        let root = modules(5);
        for b in [0, 1, 10, 100, 255] {
            assert!(render_context(&root, Level::File, b).chars().count() <= b);
        }
    }
}
