//! Scripted, non-interactive debugger probes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeCommand {
    /// Select a stack frame by index or function name.
    Break(String),
    PrintLocal(String),
    PrintArg(String),
    Backtrace,
}

impl ProbeCommand {
    pub fn parse(line: &str) -> Result<Self, String> {
        let line = line.trim();
        let (verb, arg) = match line.split_once(char::is_whitespace) {
            Some((v, a)) => (v, a.trim()),
            None => (line, ""),
        };
        let need = |a: &str| {
            if a.is_empty() {
                Err(format!("`{verb}` needs an argument"))
            } else {
                Ok(a.to_string())
            }
        };
        match verb {
            "break" => Ok(ProbeCommand::Break(need(arg)?)),
            "print-local" => Ok(ProbeCommand::PrintLocal(need(arg)?)),
            "print-arg" => Ok(ProbeCommand::PrintArg(need(arg)?)),
            "backtrace" if arg.is_empty() => Ok(ProbeCommand::Backtrace),
            _ => Err(format!(
                "unknown probe `{line}` (use break, print-local, print-arg, backtrace)"
            )),
        }
    }

    pub fn parse_script(text: &str) -> Result<Vec<Self>, String> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(i, l)| Self::parse(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect()
    }
}

impl fmt::Display for ProbeCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeCommand::Break(a) => write!(f, "break {a}"),
            ProbeCommand::PrintLocal(a) => write!(f, "print-local {a}"),
            ProbeCommand::PrintArg(a) => write!(f, "print-arg {a}"),
            ProbeCommand::Backtrace => write!(f, "backtrace"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub command: String,
    pub ok: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub debugger_available: bool,
    pub observations: Vec<Observation>,
}

pub trait Debugger: Send + Sync {
    fn available(&self) -> bool;
    fn run(&self, binary: &Path, input: &Path, script: &[ProbeCommand]) -> Vec<Observation>;
}

/// Runs `script` against a crashing input. An unavailable debugger yields no
/// observations and says so.
pub fn debug_probe(
    debugger: &dyn Debugger,
    binary: &Path,
    input: &Path,
    script: &[ProbeCommand],
) -> ProbeOutcome {
    if script.is_empty() {
        return ProbeOutcome {
            debugger_available: debugger.available(),
            observations: Vec::new(),
        };
    }
    if !debugger.available() {
        return ProbeOutcome {
            debugger_available: false,
            observations: Vec::new(),
        };
    }
    ProbeOutcome {
        debugger_available: true,
        observations: debugger.run(binary, input, script),
    }
}

/// Replays canned observations. Fixture lines look like
/// `break 0 => frame #0 scan_quoted (p=0x602000000015)`.
#[derive(Debug, Clone, Default)]
pub struct StubDebugger {
    answers: BTreeMap<String, String>,
}

impl StubDebugger {
    pub fn parse(text: &str) -> Self {
        let answers = text
            .lines()
            .filter_map(|l| l.split_once("=>"))
            .map(|(k, v)| (k.split_whitespace().collect::<Vec<_>>().join(" "), v.trim().to_string()))
            .collect();
        Self { answers }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }
}

impl Debugger for StubDebugger {
    fn available(&self) -> bool {
        true
    }

    fn run(&self, _binary: &Path, _input: &Path, script: &[ProbeCommand]) -> Vec<Observation> {
        script
            .iter()
            .map(|c| {
                let key = c.to_string();
                match self.answers.get(&key) {
                    Some(text) => Observation { command: key, ok: true, text: text.clone() },
                    None => Observation {
                        text: format!("no such frame or symbol for `{key}`"),
                        command: key,
                        ok: false,
                    },
                }
            })
            .collect()
    }
}

/// Always unavailable.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDebugger;

impl Debugger for NoDebugger {
    fn available(&self) -> bool {
        false
    }

    fn run(&self, _: &Path, _: &Path, _: &[ProbeCommand]) -> Vec<Observation> {
        Vec::new()
    }
}

/// GDB in batch mode. The harness is run to the crash with sanitizers set to
/// abort, then each probe is issued between echo markers.
#[derive(Debug, Clone)]
pub struct GdbDebugger {
    pub program: String,
    pub timeout: Duration,
}

impl Default for GdbDebugger {
    fn default() -> Self {
        Self {
            program: "gdb".into(),
            timeout: Duration::from_secs(60),
        }
    }
}

const MARK: &str = "@@probe";

fn gdb_command(c: &ProbeCommand) -> String {
    match c {
        ProbeCommand::Break(a) if a.chars().all(|ch| ch.is_ascii_digit()) => format!("frame {a}"),
        ProbeCommand::Break(a) => format!("frame function {a}"),
        ProbeCommand::PrintLocal(a) | ProbeCommand::PrintArg(a) => format!("print {a}"),
        ProbeCommand::Backtrace => "bt".into(),
    }
}

impl Debugger for GdbDebugger {
    fn available(&self) -> bool {
        Command::new(&self.program)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    }

    fn run(&self, binary: &Path, input: &Path, script: &[ProbeCommand]) -> Vec<Observation> {
        let mut cmd = Command::new("timeout");
        cmd.arg(self.timeout.as_secs().max(1).to_string())
            .arg(&self.program)
            .args(["-batch", "-nx", "-ex", "set pagination off", "-ex", "run"]);
        for (i, c) in script.iter().enumerate() {
            cmd.arg("-ex").arg(format!("echo \\n{MARK}{i}\\n"));
            cmd.arg("-ex").arg(gdb_command(c));
        }
        cmd.arg("-ex").arg(format!("echo \\n{MARK}end\\n"));
        cmd.arg("--args").arg(binary).arg(input);
        cmd.env("ASAN_OPTIONS", "abort_on_error=1:detect_leaks=0");
        let out = match cmd.output() {
            Ok(o) => o,
            Err(e) => {
                return script
                    .iter()
                    .map(|c| Observation { command: c.to_string(), ok: false, text: e.to_string() })
                    .collect()
            }
        };
        let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
        script
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let start = format!("{MARK}{i}\n");
                let section = text
                    .split_once(&start)
                    .map(|(_, rest)| rest.split(MARK).next().unwrap_or("").trim().to_string());
                match section {
                    Some(s) => {
                        let failed = s.is_empty()
                            || s.starts_with("No frame")
                            || s.starts_with("No symbol")
                            || s.starts_with("No stack");
                        Observation { command: c.to_string(), ok: !failed, text: s }
                    }
                    None => Observation {
                        command: c.to_string(),
                        ok: false,
                        text: "debugger produced no output for this probe".into(),
                    },
                }
            })
            .collect()
    }
}
