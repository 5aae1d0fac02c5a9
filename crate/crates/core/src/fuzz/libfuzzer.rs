//! Drives a libFuzzer-linked harness binary as a background process.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;

use super::{CampaignSpec, CrashFile, FuzzError, FuzzerAdapter, Poll};

const CRASH_PREFIXES: [&str; 4] = ["crash-", "leak-", "timeout-", "oom-"];

#[derive(Debug, Default)]
pub struct LibFuzzerAdapter {
    /// Extra flags passed to every run, e.g. `-rss_limit_mb=4096`.
    pub extra_args: Vec<String>,
    child: Option<Child>,
    spec: Option<CampaignSpec>,
    log: PathBuf,
    seen: BTreeSet<String>,
    features: u64,
}

impl LibFuzzerAdapter {
    pub fn new(extra_args: Vec<String>) -> Self {
        Self {
            extra_args,
            ..Self::default()
        }
    }
}

/// Largest `ft:` value in a libFuzzer status log.
pub fn parse_features(log: &str) -> Option<u64> {
    static FT: OnceLock<Regex> = OnceLock::new();
    let re = FT.get_or_init(|| Regex::new(r"\bft: (\d+)").unwrap());
    re.captures_iter(log).filter_map(|c| c[1].parse().ok()).max()
}

/// The sanitizer or libFuzzer report section of a log, from its first error banner.
pub fn extract_report(log: &str) -> String {
    let start = log
        .lines()
        .scan(0usize, |off, line| {
            let at = *off;
            *off += line.len() + 1;
            Some((at, line))
        })
        .find(|(_, l)| l.contains("ERROR: ") || l.contains("deadly signal") || l.contains("==WARNING: "))
        .map(|(at, _)| at);
    match start {
        Some(at) => log[at..].to_string(),
        None => String::new(),
    }
}

impl FuzzerAdapter for LibFuzzerAdapter {
    fn spawn(&mut self, spec: &CampaignSpec) -> Result<(), FuzzError> {
        let binary = spec.abs(&spec.binary);
        if !binary.is_file() {
            return Err(FuzzError::Spawn(format!("harness binary {} not found", spec.binary)));
        }
        for d in [spec.crash_dir(), spec.queue_dir()] {
            fs::create_dir_all(spec.abs(&d)).map_err(|e| FuzzError::io(format!("creating {d}"), e))?;
        }
        self.log = spec.abs(&format!("{}/fuzzer.log", spec.dir()));
        let log = File::create(&self.log).map_err(|e| FuzzError::io("creating fuzzer log", e))?;
        let mut cmd = Command::new(&binary);
        cmd.current_dir(spec.abs(&spec.dir()))
            .arg(format!("-artifact_prefix={}/", spec.abs(&spec.crash_dir()).display()))
            .arg("-print_final_stats=1");
        if let Some(d) = &spec.dict {
            cmd.arg(format!("-dict={}", spec.abs(d).display()));
        }
        cmd.args(&self.extra_args)
            .arg(spec.abs(&spec.queue_dir()))
            .arg(spec.abs(&spec.corpus))
            .stdin(Stdio::null())
            .stdout(log.try_clone().map_err(|e| FuzzError::io("fuzzer log", e))?)
            .stderr(log)
            .process_group(0);
        let child = cmd.spawn().map_err(|e| FuzzError::Spawn(format!("{}: {e}", spec.binary)))?;
        self.child = Some(child);
        self.spec = Some(spec.clone());
        self.seen.clear();
        self.features = 0;
        Ok(())
    }

    fn poll(&mut self) -> Result<Poll, FuzzError> {
        let spec = self.spec.clone().expect("poll after spawn");
        let child = self.child.as_mut().expect("poll after spawn");
        let mut exited = child
            .try_wait()
            .map_err(|e| FuzzError::io("waiting for fuzzer", e))?
            .map(|s| s.code().unwrap_or(-1));
        let mut fresh = Vec::new();
        if let Ok(entries) = fs::read_dir(spec.abs(&spec.crash_dir())) {
            let mut names: Vec<String> = entries
                .filter_map(Result::ok)
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| CRASH_PREFIXES.iter().any(|p| n.starts_with(p)))
                .collect();
            names.sort();
            for n in names {
                if self.seen.insert(n.clone()) {
                    fresh.push(n);
                }
            }
        }
        if !fresh.is_empty() && exited.is_none() {
            // libFuzzer writes the artifact just before exiting; let it finish the report
            let deadline = Instant::now() + Duration::from_secs(5);
            while Instant::now() < deadline {
                if let Ok(Some(s)) = child.try_wait() {
                    exited = Some(s.code().unwrap_or(-1));
                    break;
                }
                std::thread::sleep(Duration::from_millis(50));
            }
        }
        let log = fs::read_to_string(&self.log).unwrap_or_default();
        if let Some(ft) = parse_features(&log) {
            self.features = self.features.max(ft);
        }
        let report = extract_report(&log);
        let new_crashes = fresh
            .into_iter()
            .map(|n| CrashFile {
                input_file: format!("{}/{n}", spec.crash_dir()),
                raw_report: report.clone(),
            })
            .collect();
        Ok(Poll {
            feature_count: self.features,
            new_crashes,
            exited,
        })
    }

    fn stop(&mut self) -> Vec<String> {
        if let Some(mut child) = self.child.take() {
            if child.try_wait().ok().flatten().is_none() {
                // SAFETY: the child was spawned as its own process group leader
                unsafe {
                    libc::killpg(child.id() as i32, libc::SIGKILL);
                }
            }
            let _ = child.wait();
        }
        let Some(spec) = self.spec.take() else {
            return Vec::new();
        };
        let queue = spec.queue_dir();
        let mut out: Vec<String> = fs::read_dir(spec.abs(&queue))
            .map(|it| {
                it.filter_map(Result::ok)
                    .filter(|e| e.path().is_file())
                    .map(|e| format!("{queue}/{}", e.file_name().to_string_lossy()))
                    .collect()
            })
            .unwrap_or_default();
        out.sort();
        out
    }
}
