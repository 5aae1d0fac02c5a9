use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{p, Args, BuildSettings, ErrorKind, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::util::{truncate_middle, OUTPUT_CAP};

/// Exit code reported for a command killed on timeout (128 + SIGKILL).
pub const KILLED_EXIT: i32 = 137;
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub stdout_excerpt: String,
    pub stderr_excerpt: String,
    pub duration: f64,
    pub timed_out: bool,
}

impl CommandOutcome {
    pub fn success(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }

    /// Exit status and both streams, without timing, so logs stay reproducible.
    pub fn render(&self) -> String {
        let mut s = if self.timed_out {
            "timed out; process group killed\n".to_string()
        } else {
            format!("exit code {}\n", self.exit_code)
        };
        if !self.stdout_excerpt.is_empty() {
            s.push_str("--- stdout ---\n");
            s.push_str(&self.stdout_excerpt);
            if !self.stdout_excerpt.ends_with('\n') {
                s.push('\n');
            }
        }
        if !self.stderr_excerpt.is_empty() {
            s.push_str("--- stderr ---\n");
            s.push_str(&self.stderr_excerpt);
            if !self.stderr_excerpt.ends_with('\n') {
                s.push('\n');
            }
        }
        s
    }
}

/// The scrubbed environment every workspace command runs with.
pub fn command_env(root: &Path, build: &BuildSettings) -> Vec<(String, String)> {
    let home = root.join("build/.home");
    let tmp = root.join("build/.tmp");
    let _ = std::fs::create_dir_all(&home);
    let _ = std::fs::create_dir_all(&tmp);
    let path = std::env::var("PATH").unwrap_or_else(|_| "/usr/local/bin:/usr/bin:/bin".into());
    vec![
        ("PATH".into(), path),
        ("HOME".into(), home.to_string_lossy().into_owned()),
        ("TMPDIR".into(), tmp.to_string_lossy().into_owned()),
        ("LANG".into(), "C".into()),
        ("LC_ALL".into(), "C".into()),
        ("CC".into(), build.cc.clone()),
        ("CXX".into(), build.cxx.clone()),
    ]
}

/// Runs `sh -c cmd` in `cwd` with `env` only, killing its whole process group
/// after `timeout` seconds.
pub fn run_command(cmd: &str, cwd: &Path, env: &[(String, String)], timeout: f64) -> Result<CommandOutcome, ToolFailure> {
    run_argv(&["sh", "-c", cmd], cwd, env, timeout)
}

pub(crate) fn run_argv(argv: &[&str], cwd: &Path, env: &[(String, String)], timeout: f64) -> Result<CommandOutcome, ToolFailure> {
    let started = Instant::now();
    let mut child = Command::new(argv[0])
        .args(&argv[1..])
        .current_dir(cwd)
        .env_clear()
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, format!("cannot start `{}`: {e}", argv[0])))?;
    let mut out = child.stdout.take().expect("piped");
    let mut err = child.stderr.take().expect("piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err.read_to_end(&mut buf);
        buf
    });
    let limit = Duration::from_secs_f64(timeout.max(0.0));
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) if started.elapsed() >= limit => {
                timed_out = true;
                // SAFETY: the child leads its own process group
                unsafe {
                    libc::killpg(child.id() as i32, libc::SIGKILL);
                }
                break child.wait().ok();
            }
            Ok(None) => thread::sleep(POLL),
            Err(_) => break None,
        }
    };
    if !timed_out {
        // reap any background stragglers still holding the pipes
        unsafe {
            libc::killpg(child.id() as i32, libc::SIGKILL);
        }
    }
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    let exit_code = if timed_out {
        KILLED_EXIT
    } else {
        status
            .and_then(|s| {
                use std::os::unix::process::ExitStatusExt;
                s.code().or_else(|| s.signal().map(|sig| 128 + sig))
            })
            .unwrap_or(-1)
    };
    Ok(CommandOutcome {
        exit_code,
        stdout_excerpt: truncate_middle(&String::from_utf8_lossy(&stdout), OUTPUT_CAP / 2),
        stderr_excerpt: truncate_middle(&String::from_utf8_lossy(&stderr), OUTPUT_CAP / 2),
        duration: started.elapsed().as_secs_f64(),
        timed_out,
    })
}

pub(crate) struct RunCommand;

impl Tool for RunCommand {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "run_command",
            description: "Run a shell command inside the workspace with a timeout.",
            params: vec![
                p("cmd", "shell command line", true),
                p("cwd", "workspace-relative working directory (default: root)", false),
                p("timeout_s", "seconds before the command is killed (default 60)", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let cmd = args.req("cmd")?;
        let cwd = match args.opt("cwd") {
            Some(c) => env.sandbox.resolve(c)?,
            None => env.root().to_path_buf(),
        };
        if !cwd.is_dir() {
            return Err(ToolFailure::bad_args("cwd is not a directory"));
        }
        let timeout: f64 = args.opt_num("timeout_s")?.unwrap_or(60.0);
        let vars = command_env(env.root(), &env.build);
        let outcome = run_command(cmd, &cwd, &vars, timeout)?;
        if outcome.timed_out {
            Err(ToolFailure::new(ErrorKind::Timeout, outcome.render()))
        } else if outcome.exit_code != 0 {
            Err(ToolFailure::new(ErrorKind::NonzeroExit, outcome.render()))
        } else {
            Ok(outcome.render())
        }
    }
}
