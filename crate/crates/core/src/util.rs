//! Small shared helpers: output truncation, glob listing, content hashing.

use std::path::Path;

use globset::{GlobBuilder, GlobMatcher};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

/// Cap applied to every tool output.
pub const OUTPUT_CAP: usize = 64 * 1024;
/// Compile diagnostics are never cut shorter than this.
pub const DIAGNOSTICS_FLOOR: usize = 16 * 1024;

/// Keeps the head and tail of `text` around an elision marker when it exceeds `cap` bytes.
pub fn truncate_middle(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let marker_room = 64;
    let keep = cap.saturating_sub(marker_room);
    let head_end = floor_char_boundary(text, keep / 2);
    let tail_start = ceil_char_boundary(text, text.len() - (keep - keep / 2));
    let elided = tail_start - head_end;
    format!(
        "{}\n[... {} bytes elided ...]\n{}",
        &text[..head_end],
        elided,
        &text[tail_start..]
    )
}

/// Keeps a contiguous prefix of whole lines up to `cap` bytes (never less than
/// [`DIAGNOSTICS_FLOOR`]), so the first diagnostics survive intact.
pub fn truncate_head(text: &str, cap: usize) -> String {
    let cap = cap.max(DIAGNOSTICS_FLOOR);
    if text.len() <= cap {
        return text.to_string();
    }
    let limit = floor_char_boundary(text, cap - 48);
    let cut = match text[..limit].rfind('\n') {
        Some(nl) if nl + 1 >= DIAGNOSTICS_FLOOR => nl + 1,
        _ => limit,
    };
    format!(
        "{}[... {} further bytes of diagnostics omitted ...]\n",
        &text[..cut],
        text.len() - cut
    )
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    i = i.min(s.len());
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn ceil_char_boundary(s: &str, mut i: usize) -> usize {
    while i < s.len() && !s.is_char_boundary(i) {
        i += 1;
    }
    i
}

pub fn glob(pattern: &str) -> Result<GlobMatcher, globset::Error> {
    Ok(GlobBuilder::new(pattern)
        .literal_separator(true)
        .build()?
        .compile_matcher())
}

/// Workspace-relative paths of regular files under `root` matching `pattern`, sorted.
pub fn glob_files(root: &Path, pattern: &str) -> Vec<String> {
    let Ok(matcher) = glob(pattern) else {
        return Vec::new();
    };
    let mut out: Vec<String> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let rel = e.path().strip_prefix(root).ok()?.to_string_lossy().into_owned();
            matcher.is_match(&rel).then_some(rel)
        })
        .collect();
    out.sort();
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
