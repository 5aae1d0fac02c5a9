//! Replays scripted feature-count traces instead of running a fuzzer.
//!
//! Trace syntax, one poll per line (`#` starts a comment):
//!
//! ```text
//! TICK 100
//! TICK 150 CRASH crash-heap
//! EXIT 1
//! ```
//!
//! `CRASH <name>` copies `<dir>/crashes/<name>` into the campaign's crash
//! directory and uses `<dir>/crashes/<name>.report` as the sanitizer report.
//! `EXIT <code>` makes the fuzzer die. Once the trace runs out the last count
//! is repeated. A trace is looked up as `<dir>/<campaign>.trace`, then
//! `<dir>/<harness>.trace`, then `<dir>/default.trace`. Inputs listed under
//! `<dir>/<harness>.queue/` are reported as new-feature inputs on stop.

use std::fs;
use std::path::{Path, PathBuf};

use super::{CampaignSpec, CrashFile, FuzzError, FuzzerAdapter, Poll};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceStep {
    Tick { features: u64, crash: Option<String> },
    Exit(i32),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StubTrace {
    pub steps: Vec<TraceStep>,
}

impl StubTrace {
    pub fn parse(text: &str, path: &str) -> Result<Self, FuzzError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| FuzzError::Trace {
                path: path.to_string(),
                line: i + 1,
                reason: reason.to_string(),
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            let step = match words.as_slice() {
                ["TICK", n] => TraceStep::Tick {
                    features: n.parse().map_err(|_| err("feature count is not a number"))?,
                    crash: None,
                },
                ["TICK", n, "CRASH", name] => TraceStep::Tick {
                    features: n.parse().map_err(|_| err("feature count is not a number"))?,
                    crash: Some(name.to_string()),
                },
                ["EXIT", code] => TraceStep::Exit(code.parse().map_err(|_| err("exit code is not a number"))?),
                _ => return Err(err("expected `TICK <n> [CRASH <name>]` or `EXIT <code>`")),
            };
            steps.push(step);
        }
        Ok(Self { steps })
    }

    pub fn load(path: &Path) -> Result<Self, FuzzError> {
        let text = fs::read_to_string(path).map_err(|e| FuzzError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// A plain trace of feature counts.
    pub fn counts(counts: &[u64]) -> Self {
        Self {
            steps: counts
                .iter()
                .map(|&features| TraceStep::Tick { features, crash: None })
                .collect(),
        }
    }
}

#[derive(Debug)]
pub struct StubAdapter {
    dir: Option<PathBuf>,
    fixed: Option<StubTrace>,
    trace: StubTrace,
    spec: Option<CampaignSpec>,
    cursor: usize,
    last: u64,
}

impl StubAdapter {
    /// Looks traces and fixtures up in `dir` per campaign.
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            fixed: None,
            trace: StubTrace::default(),
            spec: None,
            cursor: 0,
            last: 0,
        }
    }

    /// Replays one trace for every campaign, with no fixture directory.
    pub fn from_trace(trace: StubTrace) -> Self {
        Self {
            dir: None,
            fixed: Some(trace),
            trace: StubTrace::default(),
            spec: None,
            cursor: 0,
            last: 0,
        }
    }

    fn find_trace(&self, spec: &CampaignSpec) -> Result<StubTrace, FuzzError> {
        if let Some(t) = &self.fixed {
            return Ok(t.clone());
        }
        let dir = self.dir.as_ref().expect("stub has a dir or a fixed trace");
        for name in [&spec.id, &spec.harness_id, "default"] {
            let p = dir.join(format!("{name}.trace"));
            if p.is_file() {
                return StubTrace::load(&p);
            }
        }
        Err(FuzzError::Spawn(format!(
            "no stub trace for campaign {} / harness {} in {}",
            spec.id,
            spec.harness_id,
            dir.display()
        )))
    }

    fn materialize_crash(&self, spec: &CampaignSpec, name: &str) -> Result<CrashFile, FuzzError> {
        let rel = format!("{}/{name}", spec.crash_dir());
        let dest = spec.abs(&rel);
        fs::create_dir_all(spec.abs(&spec.crash_dir()))
            .map_err(|e| FuzzError::io("creating crash dir", e))?;
        let (bytes, report) = match &self.dir {
            Some(dir) => {
                let src = dir.join("crashes").join(name);
                let bytes = fs::read(&src).unwrap_or_else(|_| name.as_bytes().to_vec());
                let report = fs::read_to_string(dir.join("crashes").join(format!("{name}.report")))
                    .unwrap_or_default();
                (bytes, report)
            }
            None => (name.as_bytes().to_vec(), String::new()),
        };
        fs::write(&dest, bytes).map_err(|e| FuzzError::io(format!("writing {rel}"), e))?;
        Ok(CrashFile {
            input_file: rel,
            raw_report: report,
        })
    }
}

impl FuzzerAdapter for StubAdapter {
    fn spawn(&mut self, spec: &CampaignSpec) -> Result<(), FuzzError> {
        if !spec.abs(&spec.binary).is_file() {
            return Err(FuzzError::Spawn(format!("harness binary {} not found", spec.binary)));
        }
        self.trace = self.find_trace(spec)?;
        self.spec = Some(spec.clone());
        self.cursor = 0;
        self.last = 0;
        Ok(())
    }

    fn poll(&mut self) -> Result<Poll, FuzzError> {
        let spec = self.spec.clone().expect("poll after spawn");
        let step = self.trace.steps.get(self.cursor).cloned();
        self.cursor += 1;
        match step {
            None => Ok(Poll {
                feature_count: self.last,
                ..Poll::default()
            }),
            Some(TraceStep::Exit(code)) => Ok(Poll {
                feature_count: self.last,
                new_crashes: Vec::new(),
                exited: Some(code),
            }),
            Some(TraceStep::Tick { features, crash }) => {
                self.last = features;
                let new_crashes = match crash {
                    Some(name) => vec![self.materialize_crash(&spec, &name)?],
                    None => Vec::new(),
                };
                Ok(Poll {
                    feature_count: features,
                    new_crashes,
                    exited: None,
                })
            }
        }
    }

    fn stop(&mut self) -> Vec<String> {
        let (Some(spec), Some(dir)) = (self.spec.take(), &self.dir) else {
            return Vec::new();
        };
        let src = dir.join(format!("{}.queue", spec.harness_id));
        let Ok(entries) = fs::read_dir(&src) else {
            return Vec::new();
        };
        let mut names: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let queue = spec.queue_dir();
        if fs::create_dir_all(spec.abs(&queue)).is_err() {
            return Vec::new();
        }
        names
            .into_iter()
            .filter_map(|n| {
                let rel = format!("{queue}/{n}");
                fs::copy(src.join(&n), spec.abs(&rel)).ok().map(|_| rel)
            })
            .collect()
    }
}
