//! Execution of untrusted guest programs under wall-time, memory and output
//! limits.
//!
//! Each run gets a private scratch directory that is also the only writable
//! location. Wall-clock time is measured from spawn to reap; memory is the
//! peak resident set reported by `wait4`. Verdict classification is a pure
//! function of the observed outcome, see [`classify`].

mod isolate;
mod normalize;
mod runtime;

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ExecutionResult, Verdict};

pub use isolate::{landlock_abi, IsolationConfig};
pub use normalize::{canonical_input, normalize_output};
pub use runtime::{HarnessKind, RuntimeMap, RuntimeSpec, PYTHON_HARNESS};

/// Exit status the Python harness uses when the guest hits `MemoryError`.
pub const MEMORY_EXHAUSTED_EXIT: i32 = 86;
pub const DEFAULT_STDOUT_CAP: usize = 8 * 1024 * 1024;
const STDERR_KEEP: usize = 4096;
/// Extra address space on top of the memory limit so interpreters can start;
/// resident usage above the limit is still reported as `MemoryLimit`.
const ADDRESS_SPACE_HEADROOM_MB: u64 = 256;
const FILE_SIZE_CAP: u64 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("runtime {0:?} is not configured")]
    UnknownRuntime(String),
    #[error("runtime binary {0:?} not found")]
    RuntimeMissing(String),
    #[error("sandbox setup failed: {0}")]
    Setup(String),
    #[error("sandbox config error: {0}")]
    Config(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
}

impl SandboxError {
    pub fn is_fatal(&self) -> bool {
        !matches!(self, SandboxError::InvalidLimits(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecLimits {
    pub wall_ms: u64,
    pub mem_mb: u64,
    pub stdout_cap_bytes: usize,
}

impl ExecLimits {
    pub fn new(wall_ms: u64, mem_mb: u64) -> Result<Self, SandboxError> {
        Self::with_cap(wall_ms, mem_mb, DEFAULT_STDOUT_CAP)
    }

    pub fn with_cap(wall_ms: u64, mem_mb: u64, stdout_cap_bytes: usize) -> Result<Self, SandboxError> {
        let l = ExecLimits { wall_ms, mem_mb, stdout_cap_bytes };
        l.check()?;
        Ok(l)
    }

    pub fn check(&self) -> Result<(), SandboxError> {
        if self.wall_ms == 0 || self.mem_mb == 0 || self.stdout_cap_bytes == 0 {
            return Err(SandboxError::InvalidLimits(format!("{self:?}: all limits must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryMode {
    RunWholeFile,
    CallFunction(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuestProgram {
    pub source: String,
    pub entry: EntryMode,
    pub runtime_tag: String,
}

impl GuestProgram {
    pub fn python(source: impl Into<String>) -> Self {
        GuestProgram { source: source.into(), entry: EntryMode::RunWholeFile, runtime_tag: "python".into() }
    }

    pub fn python_fn(source: impl Into<String>, entry: &str) -> Self {
        GuestProgram {
            source: source.into(),
            entry: EntryMode::CallFunction(entry.to_string()),
            runtime_tag: "python".into(),
        }
    }
}

/// Raw facts about a finished guest process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOutcome {
    pub timed_out: bool,
    pub wall_ms: u64,
    pub peak_mem_mb: f64,
    pub exit_code: i32,
    pub signal: Option<i32>,
    pub truncated: bool,
}

/// Maps an outcome onto a verdict. Time is checked before memory, memory
/// before output truncation, truncation before the exit status.
pub fn classify(o: &ProcessOutcome, limits: &ExecLimits) -> Verdict {
    if o.timed_out || o.wall_ms >= limits.wall_ms {
        Verdict::TimeLimit
    } else if o.peak_mem_mb > limits.mem_mb as f64 || (o.signal.is_none() && o.exit_code == MEMORY_EXHAUSTED_EXIT) {
        Verdict::MemoryLimit
    } else if o.truncated || o.exit_code != 0 || o.signal.is_some() {
        Verdict::RuntimeError
    } else {
        Verdict::Accepted
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxConfig {
    pub isolation: IsolationConfig,
    /// Parent directory for per-run scratch directories (system temp if unset).
    pub scratch_root: Option<PathBuf>,
    /// Concurrent guests for batch runs; 0 means available parallelism.
    pub workers: usize,
}

/// Environment variable that caps guest parallelism process-wide.
pub const MAX_WORKERS_ENV: &str = "PROBSMITH_MAX_WORKERS";

/// One unit of work for [`Sandbox::run_batch`].
#[derive(Debug, Clone)]
pub struct Job<'a> {
    pub program: &'a GuestProgram,
    pub stdin: &'a str,
    pub limits: ExecLimits,
    pub seed: u64,
}

pub struct Sandbox {
    runtimes: RuntimeMap,
    config: SandboxConfig,
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox").field("runtimes", &self.runtimes).field("config", &self.config).finish()
    }
}

impl Sandbox {
    /// Fails when a configured interpreter is missing or the requested
    /// isolation cannot be provided; there is no unsandboxed fallback.
    pub fn new(runtimes: RuntimeMap, config: SandboxConfig) -> Result<Self, SandboxError> {
        for spec in runtimes.0.values() {
            let bin = &spec.command[0];
            if runtime::resolve_binary(bin).is_none() {
                return Err(SandboxError::RuntimeMissing(bin.clone()));
            }
        }
        if config.isolation.landlock && landlock_abi().is_none() {
            return Err(SandboxError::Setup("landlock isolation requested but unsupported by the kernel".into()));
        }
        let mut workers = if config.workers == 0 {
            thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            config.workers
        };
        if let Some(cap) = std::env::var(MAX_WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            workers = workers.min(cap.max(1));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("sandbox-{i}"))
            .build()
            .map_err(|e| SandboxError::Setup(e.to_string()))?;
        Ok(Sandbox { runtimes, config, pool: Arc::new(pool) })
    }

    pub fn with_defaults() -> Result<Self, SandboxError> {
        Self::new(RuntimeMap::default(), SandboxConfig::default())
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn run_guest(
        &self,
        prog: &GuestProgram,
        stdin: &str,
        limits: &ExecLimits,
    ) -> Result<ExecutionResult, SandboxError> {
        self.run_seeded(prog, stdin, limits, 0)
    }

    /// Runs jobs concurrently on the sandbox worker pool; results keep job order.
    pub fn run_batch(&self, jobs: &[Job<'_>]) -> Vec<Result<ExecutionResult, SandboxError>> {
        self.pool.install(|| jobs.par_iter().map(|j| self.run_seeded(j.program, j.stdin, &j.limits, j.seed)).collect())
    }

    /// Like [`Sandbox::run_batch`] but stops at the first environment error.
    pub fn try_run_batch(&self, jobs: &[Job<'_>]) -> Result<Vec<ExecutionResult>, SandboxError> {
        self.run_batch(jobs).into_iter().collect()
    }

    pub fn run_seeded(
        &self,
        prog: &GuestProgram,
        stdin: &str,
        limits: &ExecLimits,
        seed: u64,
    ) -> Result<ExecutionResult, SandboxError> {
        limits.check()?;
        let spec = self.runtimes.get(&prog.runtime_tag)?;
        let scratch = match &self.config.scratch_root {
            Some(root) => tempfile::Builder::new().prefix("guest-").tempdir_in(root),
            None => tempfile::Builder::new().prefix("guest-").tempdir(),
        }
        .map_err(|e| SandboxError::Setup(format!("scratch dir: {e}")))?;
        let dir = scratch.path().to_path_buf();
        let source_path = dir.join(&spec.source_name);
        std::fs::write(&source_path, &prog.source).map_err(|e| SandboxError::Setup(format!("write source: {e}")))?;
        let harness_path = match spec.harness {
            Some(HarnessKind::Python) => {
                let p = dir.join("_harness.py");
                std::fs::write(&p, PYTHON_HARNESS).map_err(|e| SandboxError::Setup(format!("write harness: {e}")))?;
                Some(p)
            }
            None => None,
        };
        let entry = match &prog.entry {
            EntryMode::RunWholeFile => "",
            EntryMode::CallFunction(name) => name.as_str(),
        };
        if harness_path.is_none() && !entry.is_empty() {
            return Err(SandboxError::Config(format!(
                "runtime {} has no harness and cannot call functions",
                prog.runtime_tag
            )));
        }
        let args = spec.render_args(&source_path, harness_path.as_deref(), entry, &dir);

        let ruleset = if self.config.isolation.landlock {
            Some(isolate::Ruleset::confine_writes_to(&dir).map_err(|e| SandboxError::Setup(format!("landlock: {e}")))?)
        } else {
            None
        };
        let jail = isolate::ChildJail {
            address_space_bytes: (limits.mem_mb + ADDRESS_SPACE_HEADROOM_MB.max(limits.mem_mb)) * 1024 * 1024,
            cpu_seconds: limits.wall_ms.div_ceil(1000) + 1,
            file_size_bytes: FILE_SIZE_CAP,
            net_namespace: self.config.isolation.net_namespace,
            ruleset_fd: ruleset.as_ref().map(|r| r.raw_fd()),
        };

        let mut cmd = Command::new(&args[0]);
        cmd.args(&args[1..])
            .current_dir(&dir)
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("LANG", "C.UTF-8")
            .env("HOME", &dir)
            .env("TMPDIR", &dir)
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONNOUSERSITE", "1")
            .env("PYTHONIOENCODING", "utf-8")
            .env("GUEST_SEED", seed.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: `apply` only performs async-signal-safe syscalls.
        unsafe {
            cmd.pre_exec(move || jail.apply());
        }

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => SandboxError::RuntimeMissing(args[0].clone()),
            _ => SandboxError::Setup(format!("spawn {}: {e}", args[0])),
        })?;
        drop(ruleset);
        let pid = child.id() as libc::pid_t;

        let mut stdin_pipe = child.stdin.take().expect("stdin piped");
        let input = stdin.as_bytes().to_vec();
        let writer = thread::spawn(move || {
            // EPIPE is expected when the guest exits without reading.
            let _ = stdin_pipe.write_all(&input);
        });
        let mut stdout_pipe = child.stdout.take().expect("stdout piped");
        let cap = limits.stdout_cap_bytes;
        let reader = thread::spawn(move || read_capped(&mut stdout_pipe, cap));
        let mut stderr_pipe = child.stderr.take().expect("stderr piped");
        let err_reader = thread::spawn(move || read_capped(&mut stderr_pipe, STDERR_KEEP));

        let deadline = Duration::from_millis(limits.wall_ms);
        let mut status: libc::c_int = 0;
        // SAFETY: rusage is plain old data.
        let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
        let mut timed_out = false;
        let mut poll = Duration::from_micros(500);
        loop {
            // SAFETY: pid is our child; status/usage are valid out-pointers.
            let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
            if r == pid {
                break;
            }
            if r < 0 {
                let err = std::io::Error::last_os_error();
                if err.raw_os_error() == Some(libc::EINTR) {
                    continue;
                }
                return Err(SandboxError::Setup(format!("wait4: {err}")));
            }
            if start.elapsed() >= deadline {
                timed_out = true;
                // SAFETY: signalling our own process group.
                unsafe {
                    libc::kill(-pid, libc::SIGKILL);
                    libc::kill(pid, libc::SIGKILL);
                }
                loop {
                    // SAFETY: as above, blocking reap.
                    let r = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
                    if r == pid || (r < 0 && std::io::Error::last_os_error().raw_os_error() != Some(libc::EINTR)) {
                        break;
                    }
                }
                break;
            }
            thread::sleep(poll);
            poll = (poll * 2).min(Duration::from_millis(5));
        }
        let wall_ms = start.elapsed().as_millis() as u64;
        // Reap stragglers left in the guest's process group.
        // SAFETY: signalling a process group we created.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
        let _ = writer.join();
        let (stdout, truncated) = reader.join().unwrap_or_default();
        let (stderr, _) = err_reader.join().unwrap_or_default();

        let (exit_code, signal) = if libc::WIFEXITED(status) {
            (libc::WEXITSTATUS(status), None)
        } else if libc::WIFSIGNALED(status) {
            let sig = libc::WTERMSIG(status);
            (128 + sig, Some(sig))
        } else {
            (-1, None)
        };
        let outcome = ProcessOutcome {
            timed_out,
            wall_ms,
            peak_mem_mb: usage.ru_maxrss as f64 / 1024.0,
            exit_code,
            signal,
            truncated,
        };
        let verdict = classify(&outcome, limits);
        Ok(ExecutionResult {
            verdict,
            wall_ms,
            peak_mem_mb: outcome.peak_mem_mb,
            stdout: String::from_utf8_lossy(&stdout).into_owned(),
            exit_code,
            truncated,
            stderr: String::from_utf8_lossy(&stderr).into_owned(),
        })
    }
}

/// Reads a pipe to EOF, keeping at most `cap` bytes.
fn read_capped(r: &mut impl Read, cap: usize) -> (Vec<u8>, bool) {
    let mut kept = Vec::new();
    let mut buf = [0u8; 64 * 1024];
    let mut truncated = false;
    loop {
        match r.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                if n > room {
                    truncated = true;
                }
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(_) => break,
        }
    }
    (kept, truncated)
}
