use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    HeapOverflow,
    StackOverflow,
    UseAfterFree,
    IntegerOverflow,
    NullDeref,
    Assert,
    Timeout,
    Other,
}

impl SignalKind {
    pub fn label(self) -> &'static str {
        match self {
            SignalKind::HeapOverflow => "heap-buffer-overflow",
            SignalKind::StackOverflow => "stack-overflow",
            SignalKind::UseAfterFree => "use-after-free",
            SignalKind::IntegerOverflow => "integer-overflow",
            SignalKind::NullDeref => "null-dereference",
            SignalKind::Assert => "assertion-failure",
            SignalKind::Timeout => "timeout",
            SignalKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub function: String,
    /// Relative to the workspace root for in-project frames.
    pub file: String,
    pub line: Option<u32>,
    pub in_project: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedReport {
    pub frames: Vec<Frame>,
    pub signal_kind: SignalKind,
}

/// Directories whose frames count as project code.
pub const PROJECT_DIRS: [&str; 2] = ["src/", "harnesses/"];

fn frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*#(\d+)\s+0x[0-9a-fA-F]+(?:\s+in\s+(.+?))?\s+(\S+)\s*$").unwrap()
    })
}

fn build_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*\(BuildId: [0-9a-fA-F]+\)\s*$").unwrap())
}

fn location_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(.+?):(\d+)(?::\d+)?$").unwrap())
}

fn relativize(file: &str, root: &str) -> String {
    let root = root.trim_end_matches('/');
    let f = if !root.is_empty() {
        file.strip_prefix(root).map(|r| r.trim_start_matches('/')).unwrap_or(file)
    } else {
        file
    };
    f.trim_start_matches("./").to_string()
}

fn classify(report: &str) -> SignalKind {
    let error_line = report
        .lines()
        .find(|l| l.contains("ERROR: ") || l.contains("runtime error:"))
        .unwrap_or("");
    let l = error_line.to_ascii_lowercase();
    if l.contains("libfuzzer: timeout") {
        SignalKind::Timeout
    } else if l.contains("heap-use-after-free") || l.contains("use-after-free") {
        SignalKind::UseAfterFree
    } else if l.contains("heap-buffer-overflow") {
        SignalKind::HeapOverflow
    } else if l.contains("stack-buffer-overflow") || l.contains("stack-overflow") {
        SignalKind::StackOverflow
    } else if l.contains("integer overflow") {
        SignalKind::IntegerOverflow
    } else if l.contains("segv") || l.contains("null pointer") {
        static ZERO_PAGE: OnceLock<Regex> = OnceLock::new();
        let zero_page = ZERO_PAGE.get_or_init(|| Regex::new(r"address 0x0{0,13}[0-9a-f]{1,3}\b").unwrap());
        if l.contains("null pointer") || zero_page.is_match(&l) {
            SignalKind::NullDeref
        } else {
            SignalKind::Other
        }
    } else if report.contains("Assertion") && report.contains("failed") {
        SignalKind::Assert
    } else {
        SignalKind::Other
    }
}

/// Parses the first stack of a sanitizer report. `root` is stripped from
/// absolute paths so project frames read as `src/...` or `harnesses/...`.
pub fn parse_crash_report(raw: &str, root: &str) -> ParsedReport {
    let mut frames = Vec::new();
    let mut started = false;
    for line in raw.lines() {
        let line = build_id_re().replace(line, "");
        match frame_re().captures(&line) {
            Some(c) => {
                let index: usize = c[1].parse().unwrap_or(0);
                if started && index == 0 {
                    break;
                }
                started = true;
                let function = c.get(2).map(|m| m.as_str()).unwrap_or("??").to_string();
                let rest = c[3].to_string();
                let (file, line_no) = match location_re().captures(&rest) {
                    Some(l) if !rest.starts_with('(') => {
                        (relativize(&l[1], root), l[2].parse().ok())
                    }
                    _ => (relativize(rest.trim_matches(|ch| ch == '(' || ch == ')'), root), None),
                };
                let in_project = line_no.is_some() && PROJECT_DIRS.iter().any(|d| file.starts_with(d));
                frames.push(Frame {
                    function,
                    file,
                    line: line_no,
                    in_project,
                });
            }
            None if started && line.trim().is_empty() => break,
            None => {}
        }
    }
    ParsedReport {
        frames,
        signal_kind: classify(raw),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAP: &str = "\
==4242==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x602000000015 at pc 0x55 bp 0x7f sp 0x7f
READ of size 1 at 0x602000000015 thread T0
    #0 0x55d1c3 in scan_quoted /ws/src/toycfg.c:88:12
    #1 0x55d2a0 in toycfg_parse /ws/src/toycfg.c:131:9
    #2 0x55d3b1 in LLVMFuzzerTestOneInput /ws/harnesses/h2.c:14:3
    #3 0x4f1e2 in fuzzer::Fuzzer::ExecuteCallback(unsigned char const*, unsigned long) (/ws/harnesses/h2+0x4f1e2)
    #4 0x7f00 in __libc_start_main (/lib/x86_64-linux-gnu/libc.so.6+0x29d90)

0x602000000015 is located 0 bytes after 5-byte region
allocated by thread T0 here:
    #0 0x4a in malloc (/ws/harnesses/h2+0x4a)
    #1 0x55 in toycfg_parse /ws/src/toycfg.c:120:5
";

    #[test]
    fn heap_overflow_fixture() {
        let p = parse_crash_report(HEAP, "/ws");
        assert_eq!(p.signal_kind, SignalKind::HeapOverflow);
        assert_eq!(p.frames.len(), 5);
        assert_eq!(p.frames[0].function, "scan_quoted");
        assert_eq!(p.frames[0].file, "src/toycfg.c");
        assert_eq!(p.frames[0].line, Some(88));
        let flags: Vec<bool> = p.frames.iter().map(|f| f.in_project).collect();
        assert_eq!(flags, vec![true, true, true, false, false]);
    }

    #[test]
    fn runtime_only_frames_are_not_project_frames() {
        let r = "==1==ERROR: AddressSanitizer: SEGV on unknown address 0x000000000000\n    #0 0x1 in strlen (/lib/libc.so.6+0x1)\n    #1 0x2 in __interceptor_strlen /llvm/asan_interceptors.cpp:40:3\n";
        let p = parse_crash_report(r, "/ws");
        assert_eq!(p.signal_kind, SignalKind::NullDeref);
        assert_eq!(p.frames.len(), 2);
        assert!(p.frames.iter().all(|f| !f.in_project));
    }

    #[test]
    fn demangled_names_and_build_ids() {
        let r = "==1==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x6\n    #0 0x55 in fuzzer::Fuzzer::ExecuteCallback(unsigned char const*, unsigned long) (/ws/h2+0x3f373) (BuildId: eb4413e2)\n    #1 0x55 (/ws/h2+0x117a93) (BuildId: eb4413e2)\n";
        let p = parse_crash_report(r, "/ws");
        assert_eq!(p.frames[0].function, "fuzzer::Fuzzer::ExecuteCallback(unsigned char const*, unsigned long)");
        assert_eq!(p.frames[0].file, "h2+0x3f373");
        assert_eq!(p.frames[1].function, "??");
        assert!(!p.frames[1].in_project);
    }

    #[test]
    fn garbage_is_other_without_frames() {
        let p = parse_crash_report("it broke, sorry", "/ws");
        assert_eq!(p.signal_kind, SignalKind::Other);
        assert!(p.frames.is_empty());
    }

    #[test]
    fn kinds_from_error_lines() {
        let k = |s: &str| parse_crash_report(s, "").signal_kind;
        assert_eq!(k("==1==ERROR: AddressSanitizer: heap-use-after-free on"), SignalKind::UseAfterFree);
        assert_eq!(k("==1==ERROR: AddressSanitizer: stack-overflow on"), SignalKind::StackOverflow);
        assert_eq!(k("a.c:3:5: runtime error: signed integer overflow: 1 + 2147483647"), SignalKind::IntegerOverflow);
        assert_eq!(k("==1== ERROR: libFuzzer: timeout after 25 seconds"), SignalKind::Timeout);
        assert_eq!(k("h: a.c:9: f: Assertion `x' failed.\n==1== ERROR: libFuzzer: deadly signal"), SignalKind::Assert);
        assert_eq!(k("==1==ERROR: AddressSanitizer: SEGV on unknown address 0x7fff12345678"), SignalKind::Other);
    }
}
