//! Adapter from `llvm-cov export -format=text` JSON to the neutral export.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Deserialize;

use super::{BranchRecord, CoverageError, CoverageExport, FunctionRecord};

#[derive(Deserialize)]
struct Export {
    data: Vec<Data>,
}

#[derive(Deserialize)]
struct Data {
    #[serde(default)]
    functions: Vec<Function>,
}

#[derive(Deserialize)]
struct Function {
    name: String,
    count: u64,
    filenames: Vec<String>,
    #[serde(default)]
    branches: Vec<Vec<serde_json::Value>>,
}

fn num(v: Option<&serde_json::Value>) -> u64 {
    v.and_then(|v| v.as_u64()).unwrap_or(0)
}

/// Converts llvm-cov JSON. Paths are made relative to `source_root`; functions
/// outside it are dropped. `public_api` names which functions are public.
pub fn convert(
    json: &str,
    source_root: &Path,
    public_api: &BTreeSet<String>,
) -> Result<CoverageExport, CoverageError> {
    let export: Export = serde_json::from_str(json).map_err(|e| CoverageError::Schema {
        locus: format!("llvm-cov line {} column {}", e.line(), e.column()),
        reason: e.to_string(),
    })?;
    let root = source_root.to_string_lossy();
    let root = root.trim_end_matches('/');
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for f in export.data.into_iter().flat_map(|d| d.functions) {
        let Some(path) = f.filenames.first() else { continue };
        let Some(rel) = path.strip_prefix(root).map(|r| r.trim_start_matches('/')) else {
            continue;
        };
        // static functions are mangled as "file.c:name"
        let name = f.name.rsplit(':').next().unwrap_or(&f.name).to_string();
        if !seen.insert((rel.to_string(), name.clone())) {
            continue;
        }
        let mut branches = Vec::new();
        for b in &f.branches {
            let (line, col) = (num(b.first()), num(b.get(1)));
            branches.push(BranchRecord { id: format!("{line}:{col}:T"), hits: num(b.get(4)) });
            branches.push(BranchRecord { id: format!("{line}:{col}:F"), hits: num(b.get(5)) });
        }
        branches.sort_by(|a, b| a.id.cmp(&b.id));
        branches.dedup_by(|a, b| a.id == b.id);
        if branches.is_empty() {
            branches.push(BranchRecord { id: "entry".into(), hits: f.count });
        }
        records.push(FunctionRecord {
            file: rel.to_string(),
            is_public_api: public_api.contains(&name),
            function: name,
            entry_hits: Some(f.count),
            branches,
        });
    }
    records.sort_by(|a, b| (&a.file, &a.function).cmp(&(&b.file, &b.function)));
    Ok(CoverageExport { records })
}

/// Merges raw profiles and runs llvm-cov against `binary`, returning its JSON.
/// Fails cleanly when the LLVM tools are not installed.
pub fn export_profiles(
    profraw: &[PathBuf],
    binary: &Path,
    scratch: &Path,
) -> Result<String, CoverageError> {
    let profdata = scratch.join("merged.profdata");
    let io = |what: &str, source: std::io::Error| CoverageError::Io {
        path: what.to_string(),
        source,
    };
    let status = Command::new(tool("llvm-profdata"))
        .arg("merge")
        .arg("-sparse")
        .args(profraw)
        .arg("-o")
        .arg(&profdata)
        .status()
        .map_err(|e| io("llvm-profdata", e))?;
    if !status.success() {
        return Err(CoverageError::Schema {
            locus: "llvm-profdata".into(),
            reason: format!("merge exited with {status}"),
        });
    }
    let out = Command::new(tool("llvm-cov"))
        .arg("export")
        .arg("-format=text")
        .arg(format!("-instr-profile={}", profdata.display()))
        .arg(binary)
        .output()
        .map_err(|e| io("llvm-cov", e))?;
    if !out.status.success() {
        return Err(CoverageError::Schema {
            locus: "llvm-cov".into(),
            reason: String::from_utf8_lossy(&out.stderr).lines().next().unwrap_or("").to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Finds an LLVM tool, preferring a versioned binary when the plain one is absent.
pub fn tool(name: &str) -> String {
    let on_path = |n: &str| {
        std::env::var_os("PATH")
            .map(|p| std::env::split_paths(&p).any(|d| d.join(n).is_file()))
            .unwrap_or(false)
    };
    if on_path(name) {
        return name.to_string();
    }
    for v in (11..=20).rev() {
        let n = format!("{name}-{v}");
        if on_path(&n) {
            return n;
        }
    }
    name.to_string()
}

pub fn tools_available() -> bool {
    let t = tool("llvm-cov");
    Command::new(&t).arg("--version").output().is_ok()
        && Command::new(tool("llvm-profdata")).arg("--help").output().is_ok()
}
