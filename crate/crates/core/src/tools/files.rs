use std::fs;
use std::path::Path;

use regex::Regex;
use walkdir::WalkDir;

use super::{p, Args, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::util::glob;
use crate::workspace::Sandbox;

pub const DEFAULT_WINDOW: usize = 100;
const SNIFF_BYTES: usize = 8192;
const MAX_SEARCH_HITS: usize = 200;

fn read_text(path: &Path, shown: &str) -> Result<String, ToolFailure> {
    if !path.is_file() {
        return Err(ToolFailure::bad_args(format!("no such file: {shown}")));
    }
    let bytes = fs::read(path).map_err(|e| ToolFailure::bad_args(format!("{shown}: {e}")))?;
    if bytes[..bytes.len().min(SNIFF_BYTES)].contains(&0) {
        return Err(ToolFailure::bad_args(format!("{shown} is a binary file")));
    }
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// A window of `window` numbered lines starting at the 1-based `start_line`.
pub fn view_file(sandbox: &Sandbox, path: &str, start_line: Option<usize>, window: Option<usize>) -> ToolOutput {
    let abs = sandbox.resolve(path)?;
    if !abs.is_file() {
        return Err(ToolFailure::bad_args(format!("no such file: {path}")));
    }
    let bytes = fs::read(&abs).map_err(|e| ToolFailure::bad_args(format!("{path}: {e}")))?;
    if bytes[..bytes.len().min(SNIFF_BYTES)].contains(&0) {
        return Ok(format!("binary file, {} bytes", bytes.len()));
    }
    let text = String::from_utf8_lossy(&bytes);
    let lines: Vec<&str> = text.lines().collect();
    let start = start_line.unwrap_or(1).max(1);
    let window = window.unwrap_or(DEFAULT_WINDOW).max(1);
    if start > lines.len() {
        return Ok(format!("[{path}: no lines from {start}; file has {} lines]\n", lines.len()));
    }
    let end = (start - 1 + window).min(lines.len());
    let mut out = format!("[{path}: lines {start}-{end} of {}]\n", lines.len());
    for (i, l) in lines[start - 1..end].iter().enumerate() {
        out.push_str(&format!("{:>5}| {l}\n", start + i));
    }
    Ok(out)
}

pub fn write_file(sandbox: &Sandbox, path: &str, content: &str) -> ToolOutput {
    let abs = sandbox.resolve(path)?;
    if abs == sandbox.root() || abs.is_dir() {
        return Err(ToolFailure::bad_args(format!("{path} is a directory")));
    }
    if let Some(dir) = abs.parent() {
        fs::create_dir_all(dir).map_err(|e| ToolFailure::bad_args(format!("{path}: {e}")))?;
    }
    fs::write(&abs, content).map_err(|e| ToolFailure::bad_args(format!("{path}: {e}")))?;
    Ok(format!("wrote {path} ({} bytes, {} lines)", content.len(), content.lines().count()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditSummary {
    pub removed: usize,
    pub added: usize,
    pub diff: String,
}

/// Replaces lines `start_line..end_line` (1-based, end exclusive) with
/// `replacement`. `end_line == start_line` inserts before `start_line`;
/// `start_line == line_count + 1` appends.
pub fn apply_edit(
    sandbox: &Sandbox,
    path: &str,
    start_line: usize,
    end_line: usize,
    replacement: &str,
) -> Result<EditSummary, ToolFailure> {
    let abs = sandbox.resolve(path)?;
    let text = read_text(&abs, path)?;
    let had_newline = text.ends_with('\n') || text.is_empty();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let n = lines.len();
    if !(1 <= start_line && start_line <= end_line && end_line <= n + 1) {
        return Err(ToolFailure::bad_args(format!(
            "line range {start_line}..{end_line} invalid for {path}: need 1 <= start <= end <= {} (end exclusive)",
            n + 1
        )));
    }
    let new: Vec<String> = replacement.lines().map(String::from).collect();
    let old: Vec<String> = lines.splice(start_line - 1..end_line - 1, new.clone()).collect();
    let mut body = lines.join("\n");
    if had_newline && !lines.is_empty() {
        body.push('\n');
    }
    fs::write(&abs, body).map_err(|e| ToolFailure::bad_args(format!("{path}: {e}")))?;

    let mut diff = String::new();
    let ctx_from = start_line.saturating_sub(3).max(1);
    for i in ctx_from..start_line {
        diff.push_str(&format!(" {:>5}| {}\n", i, lines[i - 1]));
    }
    for l in &old {
        diff.push_str(&format!("-      | {l}\n"));
    }
    for (k, l) in new.iter().enumerate() {
        diff.push_str(&format!("+{:>5}| {l}\n", start_line + k));
    }
    let after = start_line - 1 + new.len();
    for i in after..(after + 3).min(lines.len()) {
        diff.push_str(&format!(" {:>5}| {}\n", i + 1, lines[i]));
    }
    Ok(EditSummary {
        removed: old.len(),
        added: new.len(),
        diff,
    })
}

/// Regex search over text files under `dir`, optionally filtered by a glob on
/// the workspace-relative path.
pub fn search_files(sandbox: &Sandbox, pattern: &str, dir: &str, file_glob: Option<&str>) -> ToolOutput {
    let re = Regex::new(pattern).map_err(|e| ToolFailure::bad_args(format!("bad pattern: {e}")))?;
    let base = sandbox.resolve(dir)?;
    let matcher = match file_glob {
        Some(g) => Some(glob(g).map_err(|e| ToolFailure::bad_args(format!("bad glob: {e}")))?),
        None => None,
    };
    let root = sandbox.root().to_path_buf();
    let mut hits = Vec::new();
    let mut total = 0;
    let mut entries: Vec<_> = WalkDir::new(&base)
        .follow_links(false)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .collect();
    entries.sort_by(|a, b| a.path().cmp(b.path()));
    for e in entries {
        let rel = e.path().strip_prefix(&root).unwrap_or(e.path()).to_string_lossy().into_owned();
        if matcher.as_ref().is_some_and(|m| !m.is_match(&rel)) {
            continue;
        }
        let Ok(bytes) = fs::read(e.path()) else { continue };
        if bytes[..bytes.len().min(SNIFF_BYTES)].contains(&0) {
            continue;
        }
        let text = String::from_utf8_lossy(&bytes);
        for (i, line) in text.lines().enumerate() {
            if re.is_match(line) {
                total += 1;
                if hits.len() < MAX_SEARCH_HITS {
                    hits.push(format!("{rel}:{}: {}", i + 1, line.trim_end()));
                }
            }
        }
    }
    if hits.is_empty() {
        return Ok(format!("no matches for /{pattern}/"));
    }
    let mut out = hits.join("\n");
    out.push('\n');
    if total > hits.len() {
        out.push_str(&format!("… {} more matches\n", total - hits.len()));
    }
    Ok(out)
}

pub(crate) struct ViewFile;
pub(crate) struct WriteFile;
pub(crate) struct ApplyEdit;
pub(crate) struct SearchFiles;

impl Tool for ViewFile {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "view_file",
            description: "Show a window of numbered lines from a workspace file.",
            params: vec![
                p("path", "workspace-relative file path", true),
                p("start_line", "first line to show (1-based, default 1)", false),
                p("window", "number of lines (default 100)", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        view_file(&env.sandbox, args.req("path")?, args.opt_num("start_line")?, args.opt_num("window")?)
    }
}

impl Tool for WriteFile {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "write_file",
            description: "Create or overwrite a workspace file.",
            params: vec![p("path", "workspace-relative file path", true), p("content", "full file content", true)],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        write_file(&env.sandbox, args.req("path")?, args.req("content")?)
    }
}

impl Tool for ApplyEdit {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "apply_edit",
            description: "Replace lines start_line up to but excluding end_line; equal bounds insert.",
            params: vec![
                p("path", "workspace-relative file path", true),
                p("start_line", "first replaced line (1-based)", true),
                p("end_line", "line after the last replaced one", true),
                p("replacement", "new text for the range", true),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let s = apply_edit(
            &env.sandbox,
            args.req("path")?,
            args.req_num("start_line")?,
            args.req_num("end_line")?,
            args.req("replacement")?,
        )?;
        Ok(format!("removed {} lines, added {} lines\n{}", s.removed, s.added, s.diff))
    }
}

impl Tool for SearchFiles {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "search_files",
            description: "Regex search over workspace text files.",
            params: vec![
                p("pattern", "regular expression", true),
                p("path", "directory to search (default: workspace root)", false),
                p("glob", "only files whose relative path matches this glob", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let root = env.root().to_string_lossy().into_owned();
        let dir = args.opt("path").unwrap_or(&root);
        search_files(&env.sandbox, args.req("pattern")?, dir, args.opt("glob"))
    }
}

