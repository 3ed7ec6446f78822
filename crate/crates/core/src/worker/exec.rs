use std::fs::File;
use std::io;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{ExecStatus, TaskExecutionResult, TaskWorkspace, WorkerError};

pub const COMPILE_TIMEOUT: Duration = Duration::from_secs(120);
/// Time between SIGTERM and SIGKILL for a timed-out process group.
pub const KILL_GRACE: Duration = Duration::from_secs(5);
const POLL: Duration = Duration::from_millis(5);
const GROUP_EXIT_WAIT: Duration = Duration::from_secs(2);

/// Cancellation handle for a running task.
#[derive(Debug, Default)]
pub struct ExecControl {
    cancelled: AtomicBool,
    pgid: Mutex<Option<i32>>,
}

impl ExecControl {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks the task cancelled and kills its current process group.
    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::SeqCst);
        if let Some(pgid) = *self.pgid.lock().unwrap() {
            kill_group(pgid, libc::SIGKILL);
        }
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::SeqCst)
    }

    /// Process group of the phase currently running, if any.
    pub fn pgid(&self) -> Option<i32> {
        *self.pgid.lock().unwrap()
    }
}

fn kill_group(pgid: i32, signal: libc::c_int) {
    if pgid > 1 {
        // SAFETY: plain syscall; ESRCH for an already-dead group is fine.
        unsafe {
            libc::kill(-pgid, signal);
        }
    }
}

fn group_exists(pgid: i32) -> bool {
    // SAFETY: signal 0 only checks whether any member can be signalled.
    unsafe { libc::kill(-pgid, 0) == 0 }
}

/// Waits until every member of a killed group has been reaped by its parent
/// or by init. Gives up after [`GROUP_EXIT_WAIT`].
fn await_group_exit(pgid: i32) {
    let start = Instant::now();
    while group_exists(pgid) {
        if start.elapsed() >= GROUP_EXIT_WAIT {
            tracing::warn!(pgid, "process group still present after SIGKILL");
            return;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Exited(i32),
    Signaled(i32),
    TimedOut,
    Cancelled,
}

pub(crate) struct Phase {
    pub outcome: Outcome,
    pub wall_s: f64,
    pub cpu_s: f64,
}

/// Extra arguments and environment for a shell command.
#[derive(Default)]
pub(crate) struct ShellExtras<'a> {
    /// Appended to the command as positional arguments.
    pub args: &'a [&'a std::ffi::OsStr],
    pub envs: &'a [(&'a str, &'a str)],
}

fn run_phase(
    cmd: &str,
    cwd: &Path,
    stdout: File,
    stderr: File,
    niceness: Option<u8>,
    timeout: Duration,
    control: &ExecControl,
) -> io::Result<Phase> {
    run_shell(cmd, &ShellExtras::default(), cwd, stdout, stderr, niceness, timeout, control)
}

/// Runs `cmd` through `/bin/sh -c` in its own process group, enforcing
/// `timeout` with SIGTERM then SIGKILL after [`KILL_GRACE`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_shell(
    cmd: &str,
    extras: &ShellExtras<'_>,
    cwd: &Path,
    stdout: File,
    stderr: File,
    niceness: Option<u8>,
    timeout: Duration,
    control: &ExecControl,
) -> io::Result<Phase> {
    let mut command = Command::new("/bin/sh");
    if extras.args.is_empty() {
        command.arg("-c").arg(cmd);
    } else {
        command.arg("-c").arg(format!("{cmd} \"$@\"")).arg("gridlet").args(extras.args);
    }
    command.envs(extras.envs.iter().copied()).current_dir(cwd).stdin(Stdio::null()).stdout(stdout).stderr(stderr);
    // SAFETY: only async-signal-safe syscalls run between fork and exec.
    unsafe {
        command.pre_exec(move || {
            if libc::setpgid(0, 0) == -1 {
                return Err(io::Error::last_os_error());
            }
            if let Some(n) = niceness {
                libc::setpriority(libc::PRIO_PROCESS, 0, libc::c_int::from(n));
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let child = command.spawn()?;
    let pid = child.id() as i32;
    *control.pgid.lock().unwrap() = Some(pid);
    // The child is reaped below through wait4 so its rusage is available.
    drop(child);

    let mut term_sent: Option<Instant> = None;
    let mut timed_out = false;
    let mut killed_for_cancel = false;
    let (status, usage) = loop {
        let mut status: libc::c_int = 0;
        // SAFETY: rusage is plain old data filled by the kernel.
        let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
        let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
        if r == pid {
            break (status, usage);
        }
        if r == -1 {
            let err = io::Error::last_os_error();
            if err.kind() != io::ErrorKind::Interrupted {
                *control.pgid.lock().unwrap() = None;
                return Err(err);
            }
        }
        if control.is_cancelled() && !killed_for_cancel {
            kill_group(pid, libc::SIGKILL);
            killed_for_cancel = true;
        }
        match term_sent {
            None if start.elapsed() >= timeout => {
                timed_out = true;
                kill_group(pid, libc::SIGTERM);
                term_sent = Some(Instant::now());
            }
            Some(at) if at.elapsed() >= KILL_GRACE => {
                kill_group(pid, libc::SIGKILL);
                term_sent = Some(Instant::now());
            }
            _ => {}
        }
        std::thread::sleep(POLL);
    };
    let wall_s = start.elapsed().as_secs_f64();
    // Leftover members of the group must not outlive the phase.
    kill_group(pid, libc::SIGKILL);
    await_group_exit(pid);
    *control.pgid.lock().unwrap() = None;

    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
    let cpu_s = tv(usage.ru_utime) + tv(usage.ru_stime);
    let outcome = if control.is_cancelled() {
        Outcome::Cancelled
    } else if timed_out {
        Outcome::TimedOut
    } else if libc::WIFEXITED(status) {
        Outcome::Exited(libc::WEXITSTATUS(status))
    } else {
        Outcome::Signaled(libc::WTERMSIG(status))
    };
    Ok(Phase { outcome, wall_s, cpu_s })
}

fn collect_out(dir: &Path, rel: &str, out: &mut std::collections::BTreeMap<String, Vec<u8>>) -> io::Result<()> {
    let here = if rel.is_empty() { dir.to_path_buf() } else { dir.join(rel) };
    if !here.is_dir() {
        return Ok(());
    }
    for item in std::fs::read_dir(&here)? {
        let item = item?;
        let Ok(name) = item.file_name().into_string() else { continue };
        let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
        let ft = item.file_type()?;
        if ft.is_dir() {
            collect_out(dir, &child, out)?;
        } else if ft.is_file() {
            out.insert(child, std::fs::read(item.path())?);
        }
    }
    Ok(())
}

/// Compiles (if requested) and runs the workspace's task. Returns
/// [`WorkerError::Cancelled`] when `control` is cancelled mid-run.
pub fn execute_task(ws: &TaskWorkspace, control: &ExecControl) -> Result<TaskExecutionResult, WorkerError> {
    let m = &ws.manifest;
    if !ws.work_dir.is_dir() {
        return Err(WorkerError::WorkspaceCorrupt(format!("{} missing", ws.work_dir.display())));
    }
    let stdout_path = ws.dir.join("stdout");
    let stderr_path = ws.dir.join("stderr");
    let mut result = TaskExecutionResult {
        task_id: m.task_id.clone(),
        attempt: m.attempt,
        status: ExecStatus::Ok,
        exit_code: None,
        wall_s: 0.0,
        cpu_s: 0.0,
        stdout: Vec::new(),
        stderr: Vec::new(),
        out_files: Default::default(),
    };

    if !m.compile_cmd.is_empty() {
        let (out, err) = (File::create(&stdout_path)?, File::create(&stderr_path)?);
        let phase = match run_phase(&m.compile_cmd, &ws.work_dir, out, err, None, COMPILE_TIMEOUT, control) {
            Ok(p) => p,
            Err(e) => {
                result.status = ExecStatus::CompileError;
                result.stderr = format!("gridlet: failed to spawn compile command: {e}\n").into_bytes();
                return Ok(result);
            }
        };
        let failure = match phase.outcome {
            Outcome::Cancelled => return Err(WorkerError::Cancelled),
            Outcome::Exited(0) => None,
            Outcome::Exited(code) => Some((Some(code), String::new())),
            Outcome::Signaled(sig) => Some((Some(128 + sig), format!("gridlet: compile killed by signal {sig}\n"))),
            Outcome::TimedOut => Some((None, format!("gridlet: compile exceeded {} s\n", COMPILE_TIMEOUT.as_secs()))),
        };
        if let Some((code, note)) = failure {
            result.status = ExecStatus::CompileError;
            result.exit_code = code;
            result.stdout = std::fs::read(&stdout_path).unwrap_or_default();
            result.stderr = std::fs::read(&stderr_path).unwrap_or_default();
            result.stderr.extend_from_slice(note.as_bytes());
            return Ok(result);
        }
    }

    let (out, err) = (File::create(&stdout_path)?, File::create(&stderr_path)?);
    let timeout = Duration::from_secs(m.timeout_s);
    let phase = match run_phase(&m.exec_cmd, &ws.work_dir, out, err, Some(m.priority), timeout, control) {
        Ok(p) => p,
        Err(e) => {
            result.status = ExecStatus::CompileError;
            result.stderr = format!("gridlet: failed to spawn task: {e}\n").into_bytes();
            return Ok(result);
        }
    };
    result.wall_s = phase.wall_s;
    result.cpu_s = phase.cpu_s;
    match phase.outcome {
        Outcome::Cancelled => return Err(WorkerError::Cancelled),
        Outcome::Exited(0) => {
            result.status = ExecStatus::Ok;
            result.exit_code = Some(0);
        }
        Outcome::Exited(code) => {
            result.status = ExecStatus::RuntimeError;
            result.exit_code = Some(code);
        }
        Outcome::Signaled(sig) => {
            result.status = ExecStatus::RuntimeError;
            result.exit_code = Some(128 + sig);
        }
        Outcome::TimedOut => {
            result.status = ExecStatus::Timeout;
        }
    }
    result.stdout = std::fs::read(&stdout_path)?;
    result.stderr = std::fs::read(&stderr_path)?;
    collect_out(&ws.out_dir, "", &mut result.out_files)?;
    Ok(result)
}
