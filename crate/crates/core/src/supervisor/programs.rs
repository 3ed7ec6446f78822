//! Runs the user's execution monitor and result compilation programs at the
//! supervisor. Each program gets a staged copy of the problem directory and
//! is compiled at most once per run.

use std::ffi::OsStr;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::pss::ProgramSpec;
use crate::worker::exec::{run_shell, ExecControl, Outcome, ShellExtras};
use crate::worker::COMPILE_TIMEOUT;

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramRun {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wall_s: f64,
}

impl ProgramRun {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0)
    }
}

pub struct StagedProgram {
    spec: ProgramSpec,
    dir: PathBuf,
    compiled: Option<Result<(), String>>,
    timeout: Duration,
}

fn copy_tree(src: &Path, dst: &Path, skip: &[&Path]) -> io::Result<()> {
    std::fs::create_dir_all(dst)?;
    for entry in std::fs::read_dir(src)? {
        let entry = entry?;
        let path = entry.path();
        if skip.contains(&path.as_path()) || path == dst {
            continue;
        }
        let ty = entry.file_type()?;
        let target = dst.join(entry.file_name());
        if ty.is_dir() {
            copy_tree(&path, &target, skip)?;
        } else if ty.is_file() {
            std::fs::copy(&path, &target)?;
        }
    }
    Ok(())
}

fn outcome_code(outcome: Outcome) -> Option<i32> {
    match outcome {
        Outcome::Exited(c) => Some(c),
        Outcome::Signaled(s) => Some(128 + s),
        Outcome::TimedOut | Outcome::Cancelled => None,
    }
}

impl StagedProgram {
    /// Copies `base_dir` into `dir`, leaving out the `skip` paths (run
    /// directories that live inside the problem directory).
    pub fn stage(
        spec: &ProgramSpec,
        base_dir: &Path,
        dir: &Path,
        skip: &[&Path],
        timeout: Duration,
    ) -> io::Result<Self> {
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
        copy_tree(base_dir, dir, skip)?;
        Ok(Self { spec: spec.clone(), dir: dir.to_path_buf(), compiled: None, timeout })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn capture(&self, name: &str) -> io::Result<(PathBuf, File, File)> {
        let out = self.dir.join(format!(".{name}.stdout"));
        let err = self.dir.join(format!(".{name}.stderr"));
        Ok((out.clone(), File::create(&out)?, File::create(err)?))
    }

    fn read_capture(&self, name: &str) -> (String, String) {
        let read = |suffix: &str| {
            std::fs::read(self.dir.join(format!(".{name}.{suffix}")))
                .map(|b| String::from_utf8_lossy(&b).into_owned())
                .unwrap_or_default()
        };
        (read("stdout"), read("stderr"))
    }

    fn compile(&mut self) -> Result<(), String> {
        if let Some(c) = &self.compiled {
            return c.clone();
        }
        let result = if self.spec.compile_cmd.trim().is_empty() {
            Ok(())
        } else {
            let control = ExecControl::new();
            let phase = self.capture("compile").and_then(|(_, o, e)| {
                run_shell(
                    &self.spec.compile_cmd,
                    &ShellExtras::default(),
                    &self.dir,
                    o,
                    e,
                    None,
                    COMPILE_TIMEOUT,
                    &control,
                )
            });
            match phase {
                Ok(p) if p.outcome == Outcome::Exited(0) => Ok(()),
                Ok(p) => {
                    let (_, err) = self.read_capture("compile");
                    Err(format!("compile failed ({:?}): {}", p.outcome, err.trim()))
                }
                Err(e) => Err(format!("compile could not start: {e}")),
            }
        };
        self.compiled = Some(result.clone());
        result
    }

    /// Compiles if needed, then runs the program with `results_dir` as its
    /// only argument.
    pub fn run(&mut self, results_dir: &Path, envs: &[(&str, &str)]) -> Result<ProgramRun, String> {
        self.compile()?;
        let control = ExecControl::new();
        let args = [results_dir.as_os_str()];
        let extras = ShellExtras { args: &args as &[&OsStr], envs };
        let (_, o, e) = self.capture("run").map_err(|e| e.to_string())?;
        let phase = run_shell(&self.spec.exec_cmd, &extras, &self.dir, o, e, None, self.timeout, &control)
            .map_err(|e| format!("could not start: {e}"))?;
        let (stdout, stderr) = self.read_capture("run");
        Ok(ProgramRun { exit_code: outcome_code(phase.outcome), stdout, stderr, wall_s: phase.wall_s })
    }
}
