//! Project search and artifact retrieval for dictionaries and seeds.
//!
//! A catalog is a JSON document:
//!
//! ```json
//! { "projects": [
//!     { "id": "libpng", "description": "PNG reference library", "tags": ["png", "image"],
//!       "files": { "contrib/png.dict": { "content": "\"IHDR\"\n" },
//!                  "seeds/a.png": { "source": "files/a.png" },
//!                  "huge.bin": { "size": 209715200 } } } ] }
//! ```
//!
//! `content` is inline text, `source` a file next to the catalog, `url` a
//! remote file (live provider only). `size` overrides the reported size.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{p, Args, ErrorKind, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::workspace::Subdir;

pub const ARTIFACT_CAP: u64 = 32 * 1024 * 1024;
pub const TOTAL_CAP: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchKind {
    Exact,
    ProtocolMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub project_id: String,
    pub description: String,
    pub match_kind: MatchKind,
    pub artifact_hints: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub files: BTreeMap<String, FileEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub projects: Vec<Project>,
}

/// Lowercase alphanumerics with any leading `lib` removed.
pub fn normalize_id(s: &str) -> String {
    let lower: String = s.to_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    lower.strip_prefix("lib").filter(|r| !r.is_empty()).unwrap_or(&lower).to_string()
}

impl Catalog {
    /// Exact identifier matches first, then projects tagged with a query word.
    pub fn search(&self, query: &str) -> Vec<SearchHit> {
        let target = normalize_id(query);
        let words: Vec<String> = query
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut exact = Vec::new();
        let mut protocol = Vec::new();
        for p in &self.projects {
            let hit = |kind| SearchHit {
                project_id: p.id.clone(),
                description: p.description.clone(),
                match_kind: kind,
                artifact_hints: p.files.keys().cloned().collect(),
            };
            if !target.is_empty() && normalize_id(&p.id) == target {
                exact.push(hit(MatchKind::Exact));
            } else if p
                .tags
                .iter()
                .any(|t| words.iter().any(|w| t.to_lowercase() == *w))
            {
                protocol.push(hit(MatchKind::ProtocolMatch));
            }
        }
        exact.sort_by(|a, b| a.project_id.cmp(&b.project_id));
        protocol.sort_by(|a, b| a.project_id.cmp(&b.project_id));
        exact.extend(protocol);
        exact
    }

    fn entry(&self, project: &str, selector: &str) -> Result<&FileEntry, ProviderError> {
        let p = self
            .projects
            .iter()
            .find(|p| p.id == project)
            .ok_or_else(|| ProviderError::NotFound(format!("project {project}")))?;
        p.files
            .get(selector)
            .ok_or_else(|| ProviderError::NotFound(format!("{selector} in {project}")))
    }
}

pub trait WebProvider: Send {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ProviderError>;
    /// Size advertised before download, when known.
    fn size(&self, project: &str, selector: &str) -> Result<Option<u64>, ProviderError>;
    fn fetch(&self, project: &str, selector: &str, cap: u64) -> Result<Vec<u8>, ProviderError>;
}

/// Offline provider answering from a checked-in catalog file.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    catalog: Option<Catalog>,
    base: PathBuf,
    problem: String,
}

impl FixtureProvider {
    pub fn load(path: &Path) -> Self {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        match fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|t| {
            serde_json::from_str::<Catalog>(&t).map_err(|e| e.to_string())
        }) {
            Ok(catalog) => Self { catalog: Some(catalog), base, problem: String::new() },
            Err(e) => Self { catalog: None, base, problem: format!("catalog {}: {e}", path.display()) },
        }
    }

    pub fn from_catalog(catalog: Catalog, base: PathBuf) -> Self {
        Self { catalog: Some(catalog), base, problem: String::new() }
    }

    /// A provider that is always down.
    pub fn unavailable(reason: &str) -> Self {
        Self { catalog: None, base: PathBuf::new(), problem: reason.to_string() }
    }

    fn catalog(&self) -> Result<&Catalog, ProviderError> {
        self.catalog.as_ref().ok_or_else(|| ProviderError::Unavailable(self.problem.clone()))
    }
}

fn too_large(selector: &str, size: u64, cap: u64) -> ProviderError {
    ProviderError::TooLarge(format!("{selector} is {size} bytes, over the {cap}-byte cap"))
}

impl WebProvider for FixtureProvider {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ProviderError> {
        Ok(self.catalog()?.search(query))
    }

    fn size(&self, project: &str, selector: &str) -> Result<Option<u64>, ProviderError> {
        let e = self.catalog()?.entry(project, selector)?;
        Ok(e.size.or_else(|| e.content.as_ref().map(|c| c.len() as u64)).or_else(|| {
            e.source.as_ref().and_then(|s| fs::metadata(self.base.join(s)).ok()).map(|m| m.len())
        }))
    }

    fn fetch(&self, project: &str, selector: &str, cap: u64) -> Result<Vec<u8>, ProviderError> {
        let e = self.catalog()?.entry(project, selector)?;
        if let Some(size) = e.size.filter(|s| *s > cap) {
            return Err(too_large(selector, size, cap));
        }
        let bytes = match (&e.content, &e.source) {
            (Some(c), _) => c.clone().into_bytes(),
            (None, Some(s)) => fs::read(self.base.join(s))
                .map_err(|err| ProviderError::NotFound(format!("{selector}: {err}")))?,
            (None, None) => return Err(ProviderError::NotFound(format!("{selector} has no content"))),
        };
        if bytes.len() as u64 > cap {
            return Err(too_large(selector, bytes.len() as u64, cap));
        }
        Ok(bytes)
    }
}

/// Provider backed by a catalog served over HTTP; file entries carry URLs.
#[derive(Debug, Clone)]
pub struct LiveProvider {
    pub catalog_url: String,
    /// Name of the environment variable holding a bearer token, if any.
    pub token_env: Option<String>,
    pub timeout_s: u64,
}

impl LiveProvider {
    fn get(&self, url: &str) -> Result<ureq::Response, ProviderError> {
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(self.timeout_s))
            .build();
        let mut req = agent.get(url);
        if let Some(token) = self.token_env.as_deref().and_then(|v| std::env::var(v).ok()) {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        req.call().map_err(|e| match e {
            ureq::Error::Status(404, _) => ProviderError::NotFound(url.to_string()),
            other => ProviderError::Unavailable(other.to_string()),
        })
    }

    fn catalog(&self) -> Result<Catalog, ProviderError> {
        let resp = self.get(&self.catalog_url)?;
        let text = resp.into_string().map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Unavailable(format!("bad catalog: {e}")))
    }
}

impl WebProvider for LiveProvider {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ProviderError> {
        Ok(self.catalog()?.search(query))
    }

    fn size(&self, project: &str, selector: &str) -> Result<Option<u64>, ProviderError> {
        let cat = self.catalog()?;
        let e = cat.entry(project, selector)?;
        Ok(e.size.or_else(|| e.content.as_ref().map(|c| c.len() as u64)))
    }

    fn fetch(&self, project: &str, selector: &str, cap: u64) -> Result<Vec<u8>, ProviderError> {
        let cat = self.catalog()?;
        let e = cat.entry(project, selector)?;
        if let Some(c) = &e.content {
            return Ok(c.clone().into_bytes());
        }
        let url = e
            .url
            .as_ref()
            .ok_or_else(|| ProviderError::NotFound(format!("{selector} has no url")))?;
        let resp = self.get(url)?;
        if let Some(len) = resp.header("Content-Length").and_then(|l| l.parse::<u64>().ok()) {
            if len > cap {
                return Err(too_large(selector, len, cap));
            }
        }
        let mut buf = Vec::new();
        resp.into_reader()
            .take(cap + 1)
            .read_to_end(&mut buf)
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        if buf.len() as u64 > cap {
            return Err(too_large(selector, buf.len() as u64, cap));
        }
        Ok(buf)
    }
}

/// Which selected projects are still pending, fetched, or failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalLedger {
    pub pending: Vec<String>,
    pub done: Vec<(String, Vec<String>)>,
    pub failed: Vec<(String, String)>,
}

impl RetrievalLedger {
    pub fn contains(&self, id: &str) -> bool {
        self.pending.iter().any(|p| p == id)
            || self.done.iter().any(|(p, _)| p == id)
            || self.failed.iter().any(|(p, _)| p == id)
    }

    pub fn total(&self) -> usize {
        self.pending.len() + self.done.len() + self.failed.len()
    }

    pub fn select(&mut self, id: &str) -> bool {
        if self.contains(id) {
            return false;
        }
        self.pending.push(id.to_string());
        true
    }

    pub fn record_done(&mut self, id: &str, file: &str) {
        self.select(id);
        if let Some((_, files)) = self.done.iter_mut().find(|(p, _)| p == id) {
            files.push(file.to_string());
            return;
        }
        if let Some(i) = self.pending.iter().position(|p| p == id) {
            self.pending.remove(i);
            self.done.push((id.to_string(), vec![file.to_string()]));
        }
    }

    /// Moves a pending project to `failed`. Projects that already delivered files stay done.
    pub fn record_failed(&mut self, id: &str, reason: &str) {
        self.select(id);
        if let Some(i) = self.pending.iter().position(|p| p == id) {
            self.pending.remove(i);
            self.failed.push((id.to_string(), reason.to_string()));
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "selected {}: pending {}, done {}, failed {}\n",
            self.total(),
            self.pending.len(),
            self.done.len(),
            self.failed.len()
        );
        for p in &self.pending {
            s.push_str(&format!("  pending {p}\n"));
        }
        for (p, files) in &self.done {
            s.push_str(&format!("  done    {p}: {}\n", files.join(", ")));
        }
        for (p, why) in &self.failed {
            s.push_str(&format!("  failed  {p}: {why}\n"));
        }
        s
    }
}

pub struct WebState {
    pub provider: Box<dyn WebProvider>,
    pub ledger: RetrievalLedger,
    pub fetched_total: u64,
    pub artifact_cap: u64,
    pub total_cap: u64,
}

impl WebState {
    pub fn new(provider: Box<dyn WebProvider>) -> Self {
        Self {
            provider,
            ledger: RetrievalLedger::default(),
            fetched_total: 0,
            artifact_cap: ARTIFACT_CAP,
            total_cap: TOTAL_CAP,
        }
    }

    /// Fetches one file to `dest` (absolute, already sandbox-checked).
    pub fn fetch_to(&mut self, project: &str, selector: &str, dest: &Path, dest_rel: &str) -> Result<u64, ToolFailure> {
        let remaining = self.total_cap.saturating_sub(self.fetched_total);
        let cap = self.artifact_cap.min(remaining);
        let result = self
            .provider
            .size(project, selector)
            .and_then(|size| match size {
                Some(s) if s > self.artifact_cap => Err(too_large(selector, s, self.artifact_cap)),
                Some(s) if s > remaining => Err(ProviderError::TooLarge(format!(
                    "{selector} ({s} bytes) would exceed the remaining {remaining}-byte retrieval budget"
                ))),
                _ => self.provider.fetch(project, selector, cap),
            });
        match result {
            Ok(bytes) => {
                if let Some(dir) = dest.parent() {
                    fs::create_dir_all(dir).map_err(|e| ToolFailure::bad_args(e.to_string()))?;
                }
                fs::write(dest, &bytes).map_err(|e| ToolFailure::bad_args(e.to_string()))?;
                self.fetched_total += bytes.len() as u64;
                self.ledger.record_done(project, dest_rel);
                Ok(bytes.len() as u64)
            }
            Err(e) => {
                self.ledger.record_failed(project, &e.to_string());
                let kind = match e {
                    ProviderError::Unavailable(_) => ErrorKind::ProviderUnavailable,
                    _ => ErrorKind::BadArguments,
                };
                Err(ToolFailure::new(kind, e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictEntry {
    pub line: usize,
    pub name: Option<String>,
    /// Token text between the quotes, escapes intact.
    pub raw: String,
    pub bytes: Vec<u8>,
}

fn decode_token(raw: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let b = raw.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\\' => {
                match b.get(i + 1) {
                    Some(b'\\') => out.push(b'\\'),
                    Some(b'"') => out.push(b'"'),
                    Some(b'x') => {
                        let hex = raw.get(i + 2..i + 4).ok_or("truncated \\x escape")?;
                        out.push(u8::from_str_radix(hex, 16).map_err(|_| format!("bad escape \\x{hex}"))?);
                        i += 2;
                    }
                    _ => return Err("unknown escape".into()),
                }
                i += 2;
            }
            b'"' => return Err("unescaped quote inside token".into()),
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Parses fuzzer dictionary text: `"token"` or `name="token"` per line.
pub fn parse_dictionary(text: &str) -> Result<Vec<DictEntry>, Vec<(usize, String)>> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (name, quoted) = match t.find('"') {
            Some(0) => (None, t),
            Some(q) => {
                let n = t[..q].trim_end();
                match n.strip_suffix('=') {
                    Some(n) if !n.trim().is_empty()
                        && n.trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '_') =>
                    {
                        (Some(n.trim().to_string()), &t[q..])
                    }
                    _ => {
                        errors.push((i + 1, format!("expected name=\"token\", got `{t}`")));
                        continue;
                    }
                }
            }
            None => {
                errors.push((i + 1, format!("token must be double-quoted: `{t}`")));
                continue;
            }
        };
        // find the closing quote, skipping escaped characters
        let body = &quoted[1..];
        let mut end = None;
        let mut chars = body.char_indices();
        while let Some((j, c)) = chars.next() {
            match c {
                '\\' => {
                    chars.next();
                }
                '"' => {
                    end = Some(j);
                    break;
                }
                _ => {}
            }
        }
        let Some(end) = end else {
            errors.push((i + 1, "unterminated token".into()));
            continue;
        };
        if !body[end + 1..].trim().is_empty() {
            errors.push((i + 1, "trailing text after token".into()));
            continue;
        }
        let raw = &body[..end];
        match decode_token(raw) {
            Ok(bytes) if !bytes.is_empty() => entries.push(DictEntry {
                line: i + 1,
                name,
                raw: raw.to_string(),
                bytes,
            }),
            Ok(_) => errors.push((i + 1, "empty token".into())),
            Err(e) => errors.push((i + 1, e)),
        }
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedDict {
    pub text: String,
    pub kept: usize,
    pub dropped: usize,
}

/// Keeps the entries named in `keep` (by token text or entry name; all when
/// `None`), dropping duplicates, in input order.
pub fn prune_dictionary(raw: &str, keep: Option<&[String]>) -> Result<PrunedDict, Vec<(usize, String)>> {
    let entries = parse_dictionary(raw)?;
    let wanted = |e: &DictEntry| match keep {
        None => true,
        Some(k) => k.iter().any(|w| {
            let w = w.trim().trim_matches('"');
            w == e.raw || e.name.as_deref() == Some(w) || decode_token(w).is_ok_and(|b| b == e.bytes)
        }),
    };
    let mut seen: Vec<&[u8]> = Vec::new();
    let mut text = String::new();
    let mut kept = 0;
    for e in &entries {
        if !wanted(e) || seen.contains(&e.bytes.as_slice()) {
            continue;
        }
        seen.push(&e.bytes);
        kept += 1;
        match &e.name {
            Some(n) => text.push_str(&format!("{n}=\"{}\"\n", e.raw)),
            None => text.push_str(&format!("\"{}\"\n", e.raw)),
        }
    }
    Ok(PrunedDict {
        text,
        kept,
        dropped: entries.len() - kept,
    })
}

pub(crate) struct SearchWeb;
pub(crate) struct FetchArtifact;
pub(crate) struct TrackProgress;
pub(crate) struct PruneDictionary;

impl Tool for SearchWeb {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "search_web",
            description: "Search open-source projects by name, protocol or format.",
            params: vec![p("query", "library name or format keywords", true)],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let hits = env
            .web
            .provider
            .search(args.req("query")?)
            .map_err(|e| ToolFailure::new(ErrorKind::ProviderUnavailable, format!("{e}; fall back to a minimal dictionary from standard protocol knowledge")))?;
        if hits.is_empty() {
            return Ok("no matching projects".into());
        }
        let mut s = String::new();
        for h in hits {
            s.push_str(&format!(
                "{} [{:?}] {}\n  files: {}\n",
                h.project_id,
                h.match_kind,
                h.description,
                h.artifact_hints.join(", ")
            ));
        }
        Ok(s)
    }
}

impl Tool for FetchArtifact {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "fetch_artifact",
            description: "Download one file of a project into dict/ or corpus/.",
            params: vec![
                p("project", "project id from search_web", true),
                p("selector", "file path within the project", true),
                p("dest", "destination under dict/ or corpus/", true),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let (project, selector) = (args.req("project")?, args.req("selector")?);
        let dest = env.sandbox.resolve_within(args.req("dest")?, &[Subdir::Dict, Subdir::Corpus])?;
        let rel = env.sandbox.relative(&dest);
        let n = env.web.fetch_to(project, selector, &dest, &rel)?;
        Ok(format!("fetched {project}:{selector} -> {rel} ({n} bytes)"))
    }
}

impl Tool for TrackProgress {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "track_web_retrieve_progress",
            description: "Show retrieval progress; `select` marks projects as pending, `fail` gives up on one.",
            params: vec![
                p("select", "comma-separated project ids to add as pending", false),
                p("fail", "project id to mark failed", false),
                p("reason", "why the project failed", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        for id in args.list("select") {
            env.web.ledger.select(&id);
        }
        if let Some(id) = args.opt("fail") {
            env.web.ledger.record_failed(id, args.opt("reason").unwrap_or("abandoned"));
        }
        Ok(env.web.ledger.render())
    }
}

impl Tool for PruneDictionary {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "prune_dictionary",
            description: "Rewrite a dictionary keeping only the listed tokens, deduplicated and syntax-checked.",
            params: vec![
                p("path", "dictionary under dict/", true),
                p("keep", "tokens or entry names to keep, one per line (default: all)", false),
                p("dest", "output path under dict/ (default: overwrite path)", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let path = args.req("path")?;
        let src = env.sandbox.resolve_within(path, &[Subdir::Dict])?;
        let dest = match args.opt("dest") {
            Some(d) => env.sandbox.resolve_within(d, &[Subdir::Dict])?,
            None => src.clone(),
        };
        let raw = fs::read_to_string(&src).map_err(|e| ToolFailure::bad_args(format!("{path}: {e}")))?;
        let keep = args.opt("keep").map(|_| args.lines("keep"));
        let pruned = prune_dictionary(&raw, keep.as_deref()).map_err(|errs| {
            let lines: Vec<String> = errs.iter().map(|(l, m)| format!("line {l}: {m}")).collect();
            ToolFailure::bad_args(format!("dictionary has malformed entries:\n{}", lines.join("\n")))
        })?;
        fs::write(&dest, &pruned.text).map_err(|e| ToolFailure::bad_args(e.to_string()))?;
        Ok(format!(
            "wrote {} with {} tokens ({} dropped)",
            env.sandbox.relative(&dest),
            pruned.kept,
            pruned.dropped
        ))
    }
}
