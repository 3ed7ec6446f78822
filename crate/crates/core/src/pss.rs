//! Problem Solving Schema: the XML document describing a problem's tasks,
//! their dependency matrix, priorities, checkpoints and the result
//! compilation / execution monitor programs.
//!
//! ```xml
//! <problem name="pi" summary="...">
//!   <tasks>
//!     <task id="t0" priority="0" timeout="10" work_hint="1.0" checkpoint="false">
//!       <file>slice.c</file>
//!       <inputs><input>params.txt</input></inputs>
//!       <compile>cc -O2 -o slice slice.c</compile>
//!       <execute>./slice 0 8</execute>
//!     </task>
//!   </tasks>
//!   <dependencies><row>0</row></dependencies>
//!   <rcp><compile/><execute>sh rcp.sh</execute></rcp>
//!   <emp><compile/><execute>sh emp.sh</execute></emp>
//! </problem>
//! ```
//!
//! Row `i` of `<dependencies>` lists `d[i][*]`; `d[i][j] = 1` means task `i`
//! runs after task `j`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const MAX_PRIORITY: u8 = 19;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PssError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("unknown element <{0}>")]
    UnknownElement(String),
    #[error("missing required field `{0}`")]
    MissingRequiredField(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("duplicate task id `{0}`")]
    DuplicateTaskId(String),
    #[error("task `{task}`: priority `{value}` outside 0..=19")]
    BadPriority { task: String, value: String },
    #[error("task `{task}`: timeout `{value}` is not a positive integer")]
    BadTimeout { task: String, value: String },
    #[error("bad value for `{field}`: `{value}`")]
    BadValue { field: String, value: String },
    #[error("unsafe path `{0}` (must be relative, `/`-separated, without `..`)")]
    UnsafePath(String),
    #[error("dependency matrix: {0}")]
    BadDependencies(String),
    #[error("dependency cycle through tasks {0:?}")]
    CycleDetected(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub task_file: String,
    pub input_files: Vec<String>,
    /// Empty means there is no compile step.
    pub compile_cmd: String,
    pub exec_cmd: String,
    /// POSIX niceness, 0 (most urgent) to 19.
    pub priority: u8,
    pub timeout_s: u64,
    pub work_hint: f64,
    pub payload_bytes: u64,
    pub is_checkpoint: bool,
}

impl TaskSpec {
    pub fn files(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.task_file.as_str()).chain(self.input_files.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyMatrix {
    n: usize,
    d: Vec<bool>,
}

impl DependencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self { n, d: vec![false; n * n] }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self, PssError> {
        let n = rows.len();
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(PssError::BadDependencies(format!("row {i} has {} entries, expected {n}", rows[i].len())));
        }
        if let Some(i) = (0..n).find(|&i| rows[i][i]) {
            return Err(PssError::BadDependencies(format!("task {i} depends on itself")));
        }
        Ok(Self { n, d: rows.concat() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True when task `i` must run after task `j`.
    #[inline]
    pub fn depends(&self, i: usize, j: usize) -> bool {
        self.d[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.d[i * self.n + j] = value;
    }

    pub fn deps_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.depends(i, j))
    }

    pub fn dependents_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.depends(i, j))
    }

    pub fn edge_count(&self) -> usize {
        self.d.iter().filter(|&&b| b).count()
    }
}

/// A user-supplied program run at the supervisor.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProgramSpec {
    pub compile_cmd: String,
    pub exec_cmd: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub summary: String,
    pub tasks: Vec<TaskSpec>,
    pub deps: DependencyMatrix,
    pub rcp: ProgramSpec,
    /// Absent means checkpoints are ignored.
    pub emp: Option<ProgramSpec>,
    pub base_dir: PathBuf,
}

impl Problem {
    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Renders the problem back to PSS XML.
    pub fn to_pss_xml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(out, r#"<problem name="{}" summary="{}">"#, esc(&self.name), esc(&self.summary));
        out.push_str("  <tasks>\n");
        for t in &self.tasks {
            let _ = writeln!(
                out,
                r#"    <task id="{}" priority="{}" timeout="{}" work_hint="{}" checkpoint="{}">"#,
                esc(&t.id),
                t.priority,
                t.timeout_s,
                t.work_hint,
                t.is_checkpoint
            );
            let _ = writeln!(out, "      <file>{}</file>", esc(&t.task_file));
            if !t.input_files.is_empty() {
                out.push_str("      <inputs>");
                for f in &t.input_files {
                    let _ = write!(out, "<input>{}</input>", esc(f));
                }
                out.push_str("</inputs>\n");
            }
            let _ = writeln!(out, "      <compile>{}</compile>", esc(&t.compile_cmd));
            let _ = writeln!(out, "      <execute>{}</execute>", esc(&t.exec_cmd));
            out.push_str("    </task>\n");
        }
        out.push_str("  </tasks>\n  <dependencies>\n");
        for i in 0..self.deps.len() {
            let row: Vec<&str> =
                (0..self.deps.len()).map(|j| if self.deps.depends(i, j) { "1" } else { "0" }).collect();
            let _ = writeln!(out, "    <row>{}</row>", row.join(" "));
        }
        out.push_str("  </dependencies>\n");
        write_program(&mut out, "rcp", &self.rcp);
        if let Some(emp) = &self.emp {
            write_program(&mut out, "emp", emp);
        }
        out.push_str("</problem>\n");
        out
    }
}

fn write_program(out: &mut String, tag: &str, p: &ProgramSpec) {
    let _ = writeln!(
        out,
        "  <{tag}><compile>{}</compile><execute>{}</execute></{tag}>",
        esc(&p.compile_cmd),
        esc(&p.exec_cmd)
    );
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

/// Checks that `path` is relative, `/`-separated and free of `..` and empty components.
pub fn check_relative_path(path: &str) -> Result<(), PssError> {
    let unsafe_path = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.contains('\0')
        || path.split('/').any(|c| c.is_empty() || c == "..");
    if unsafe_path {
        Err(PssError::UnsafePath(path.to_string()))
    } else {
        Ok(())
    }
}

pub fn parse_pss(xml_text: &str, base_dir: &Path) -> Result<Problem, PssError> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| PssError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "problem" {
        return Err(PssError::UnknownElement(root.tag_name().name().to_string()));
    }
    let name = required_attr(root, "name")?.to_string();
    let summary = root.attribute("summary").unwrap_or_default().to_string();

    let mut tasks = None;
    let mut dep_rows = None;
    let mut rcp = None;
    let mut emp = None;
    for child in root.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "tasks" => tasks = Some(parse_tasks(child)?),
            "dependencies" => dep_rows = Some(parse_dep_rows(child)?),
            "rcp" => rcp = Some(parse_program(child, "rcp")?),
            "emp" => emp = Some(parse_program(child, "emp")?),
            other => return Err(PssError::UnknownElement(other.to_string())),
        }
    }
    let mut tasks = tasks.ok_or_else(|| PssError::MissingRequiredField("tasks".into()))?;
    if tasks.is_empty() {
        return Err(PssError::MissingRequiredField("task".into()));
    }
    let rcp = rcp.ok_or_else(|| PssError::MissingRequiredField("rcp".into()))?;
    let deps = match dep_rows {
        Some(rows) if rows.len() != tasks.len() => {
            return Err(PssError::BadDependencies(format!("{} rows for {} tasks", rows.len(), tasks.len())))
        }
        Some(rows) => DependencyMatrix::from_rows(&rows)?,
        None => DependencyMatrix::empty(tasks.len()),
    };
    validate_dag(&deps)?;

    let mut seen = HashSet::new();
    for t in &tasks {
        if !seen.insert(t.id.as_str()) {
            return Err(PssError::DuplicateTaskId(t.id.clone()));
        }
    }
    for t in &mut tasks {
        let mut payload = 0;
        for f in t.files() {
            check_relative_path(f)?;
            let meta = std::fs::metadata(base_dir.join(f)).map_err(|_| PssError::FileNotFound(f.to_string()))?;
            if !meta.is_file() {
                return Err(PssError::FileNotFound(f.to_string()));
            }
            payload += meta.len();
        }
        t.payload_bytes = payload;
    }

    Ok(Problem { name, summary, tasks, deps, rcp, emp, base_dir: base_dir.to_path_buf() })
}

fn required_attr<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str, PssError> {
    node.attribute(name).ok_or_else(|| PssError::MissingRequiredField(name.to_string()))
}

fn text_of(node: roxmltree::Node<'_, '_>) -> String {
    node.text().unwrap_or_default().trim().to_string()
}

fn parse_tasks(node: roxmltree::Node<'_, '_>) -> Result<Vec<TaskSpec>, PssError> {
    node.children()
        .filter(|n| n.is_element())
        .map(|n| match n.tag_name().name() {
            "task" => parse_task(n),
            other => Err(PssError::UnknownElement(other.to_string())),
        })
        .collect()
}

fn parse_task(node: roxmltree::Node<'_, '_>) -> Result<TaskSpec, PssError> {
    let id = required_attr(node, "id")?.trim().to_string();
    if id.is_empty() {
        return Err(PssError::MissingRequiredField("id".into()));
    }
    if id == "." || id == ".." || !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
        return Err(PssError::BadValue { field: "id".into(), value: id });
    }
    let priority = match node.attribute("priority") {
        None => 0,
        Some(raw) => raw
            .trim()
            .parse::<u8>()
            .ok()
            .filter(|p| *p <= MAX_PRIORITY)
            .ok_or_else(|| PssError::BadPriority { task: id.clone(), value: raw.to_string() })?,
    };
    let raw_timeout = required_attr(node, "timeout")?;
    let timeout_s = raw_timeout
        .trim()
        .parse::<u64>()
        .ok()
        .filter(|t| *t >= 1)
        .ok_or_else(|| PssError::BadTimeout { task: id.clone(), value: raw_timeout.to_string() })?;
    let work_hint = match node.attribute("work_hint") {
        None => 1.0,
        Some(raw) => raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|w| w.is_finite() && *w > 0.0)
            .ok_or_else(|| PssError::BadValue { field: "work_hint".into(), value: raw.to_string() })?,
    };
    let is_checkpoint = match node.attribute("checkpoint").map(str::trim) {
        None | Some("false") | Some("0") => false,
        Some("true") | Some("1") => true,
        Some(other) => return Err(PssError::BadValue { field: "checkpoint".into(), value: other.to_string() }),
    };
    for attr in node.attributes() {
        if !matches!(attr.name(), "id" | "priority" | "timeout" | "work_hint" | "checkpoint") {
            return Err(PssError::BadValue { field: attr.name().to_string(), value: attr.value().to_string() });
        }
    }

    let mut task_file = None;
    let mut input_files = Vec::new();
    let mut compile_cmd = String::new();
    let mut exec_cmd = None;
    for child in node.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "file" => task_file = Some(text_of(child)),
            "inputs" => {
                for input in child.children().filter(|n| n.is_element()) {
                    if input.tag_name().name() != "input" {
                        return Err(PssError::UnknownElement(input.tag_name().name().to_string()));
                    }
                    input_files.push(text_of(input));
                }
            }
            "compile" => compile_cmd = text_of(child),
            "execute" => exec_cmd = Some(text_of(child)),
            other => return Err(PssError::UnknownElement(other.to_string())),
        }
    }
    let task_file = task_file.ok_or_else(|| PssError::MissingRequiredField("file".into()))?;
    let exec_cmd =
        exec_cmd.filter(|c| !c.is_empty()).ok_or_else(|| PssError::MissingRequiredField("execute".into()))?;
    Ok(TaskSpec {
        id,
        task_file,
        input_files,
        compile_cmd,
        exec_cmd,
        priority,
        timeout_s,
        work_hint,
        payload_bytes: 0,
        is_checkpoint,
    })
}

fn parse_dep_rows(node: roxmltree::Node<'_, '_>) -> Result<Vec<Vec<bool>>, PssError> {
    node.children()
        .filter(|n| n.is_element())
        .map(|row| {
            if row.tag_name().name() != "row" {
                return Err(PssError::UnknownElement(row.tag_name().name().to_string()));
            }
            row.text()
                .unwrap_or_default()
                .split_whitespace()
                .map(|cell| match cell {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(PssError::BadDependencies(format!("cell `{other}` is not 0 or 1"))),
                })
                .collect()
        })
        .collect()
}

fn parse_program(node: roxmltree::Node<'_, '_>, tag: &str) -> Result<ProgramSpec, PssError> {
    let mut prog = ProgramSpec::default();
    let mut has_exec = false;
    for child in node.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "compile" => prog.compile_cmd = text_of(child),
            "execute" => {
                prog.exec_cmd = text_of(child);
                has_exec = !prog.exec_cmd.is_empty();
            }
            other => return Err(PssError::UnknownElement(other.to_string())),
        }
    }
    if !has_exec {
        return Err(PssError::MissingRequiredField(format!("{tag}/execute")));
    }
    Ok(prog)
}

/// Succeeds iff the dependency digraph is acyclic; otherwise returns one
/// cycle as task indices in dependency order.
pub fn validate_dag(deps: &DependencyMatrix) -> Result<(), PssError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = deps.len();
    let mut mark = vec![Mark::New; n];
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        // Iterative DFS: stack of (node, next dependency to try).
        let mut path: Vec<(usize, usize)> = vec![(start, 0)];
        mark[start] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = path.last_mut() {
            match (*next..n).find(|&j| deps.depends(node, j)) {
                Some(j) => {
                    *next = j + 1;
                    match mark[j] {
                        Mark::New => {
                            mark[j] = Mark::Active;
                            path.push((j, 0));
                        }
                        Mark::Active => {
                            let from = path.iter().position(|&(v, _)| v == j).expect("active node on path");
                            return Err(PssError::CycleDetected(path[from..].iter().map(|&(v, _)| v).collect()));
                        }
                        Mark::Done => {}
                    }
                }
                None => {
                    mark[node] = Mark::Done;
                    path.pop();
                }
            }
        }
    }
    Ok(())
}

/// Topological order where, among eligible tasks, lower priority value goes
/// first and ties keep declaration order.
pub fn topo_priority_order(problem: &Problem) -> Vec<String> {
    topo_priority_indices(problem).into_iter().map(|i| problem.tasks[i].id.clone()).collect()
}

pub fn topo_priority_indices(problem: &Problem) -> Vec<usize> {
    let n = problem.tasks.len();
    let mut remaining: Vec<usize> = (0..n).map(|i| problem.deps.deps_of(i).count()).collect();
    let mut heap: BinaryHeap<Reverse<(u8, usize)>> =
        (0..n).filter(|&i| remaining[i] == 0).map(|i| Reverse((problem.tasks[i].priority, i))).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, i))) = heap.pop() {
        order.push(i);
        for k in problem.deps.dependents_of(i) {
            remaining[k] -= 1;
            if remaining[k] == 0 {
                heap.push(Reverse((problem.tasks[k].priority, k)));
            }
        }
    }
    order
}

/// Tasks not completed and not in flight whose dependencies are all
/// completed, in declaration order.
pub fn ready_set(problem: &Problem, completed: &HashSet<String>, in_flight: &HashSet<String>) -> Vec<String> {
    let index: HashMap<&str, usize> = problem.tasks.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let done: Vec<bool> = {
        let mut v = vec![false; problem.tasks.len()];
        for id in completed {
            if let Some(&i) = index.get(id.as_str()) {
                v[i] = true;
            }
        }
        v
    };
    problem
        .tasks
        .iter()
        .enumerate()
        .filter(|(i, t)| !done[*i] && !in_flight.contains(&t.id) && problem.deps.deps_of(*i).all(|j| done[j]))
        .map(|(_, t)| t.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with(files: &[&str]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in files {
            let p = dir.path().join(f);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, b"x").unwrap();
        }
        dir
    }

    const MINIMAL: &str = r#"<problem name="m">
        <tasks><task id="t0" timeout="10"><file>a.out</file><execute>./a.out</execute></task></tasks>
        <rcp><execute>cat</execute></rcp>
    </problem>"#;

    fn problem_with(tasks: &[(&str, u8)], rows: &[&str]) -> Problem {
        let dir = dir_with(&["f"]);
        let mut xml = String::from(r#"<problem name="p"><tasks>"#);
        for (id, prio) in tasks {
            xml += &format!(
                r#"<task id="{id}" priority="{prio}" timeout="5"><file>f</file><execute>true</execute></task>"#
            );
        }
        xml += "</tasks><dependencies>";
        for r in rows {
            xml += &format!("<row>{r}</row>");
        }
        xml += "</dependencies><rcp><execute>true</execute></rcp></problem>";
        parse_pss(&xml, dir.path()).unwrap()
    }

    #[test]
    fn minimal_document() {
        let dir = dir_with(&["a.out"]);
        let p = parse_pss(MINIMAL, dir.path()).unwrap();
        assert_eq!(p.tasks.len(), 1);
        assert_eq!(p.tasks[0].id, "t0");
        assert_eq!(p.tasks[0].timeout_s, 10);
        assert_eq!(p.tasks[0].work_hint, 1.0);
        assert_eq!(p.tasks[0].payload_bytes, 1);
        assert_eq!(p.deps.edge_count(), 0);
        assert!(p.emp.is_none());
    }

    #[test]
    fn priority_out_of_range() {
        let dir = dir_with(&["a.out"]);
        let xml = MINIMAL.replace(r#"timeout="10""#, r#"timeout="10" priority="25""#);
        assert!(matches!(parse_pss(&xml, dir.path()), Err(PssError::BadPriority { .. })));
    }

    type ErrorCase = (String, fn(&PssError) -> bool);

    #[test]
    fn field_errors() {
        let dir = dir_with(&["a.out"]);
        let cases: Vec<ErrorCase> = vec![
            ("<problem".into(), |e| matches!(e, PssError::MalformedXml(_))),
            (MINIMAL.replace("<rcp>", "<bogus/><rcp>"), |e| matches!(e, PssError::UnknownElement(s) if s == "bogus")),
            (
                MINIMAL.replace(r#" timeout="10""#, ""),
                |e| matches!(e, PssError::MissingRequiredField(s) if s == "timeout"),
            ),
            (MINIMAL.replace(r#"timeout="10""#, r#"timeout="0""#), |e| matches!(e, PssError::BadTimeout { .. })),
            (MINIMAL.replace("a.out</file>", "b.out</file>"), |e| matches!(e, PssError::FileNotFound(_))),
            (MINIMAL.replace("a.out</file>", "../a.out</file>"), |e| matches!(e, PssError::UnsafePath(_))),
            (MINIMAL.replace("a.out</file>", "/etc/passwd</file>"), |e| matches!(e, PssError::UnsafePath(_))),
            (
                MINIMAL.replace("<execute>./a.out</execute>", ""),
                |e| matches!(e, PssError::MissingRequiredField(s) if s == "execute"),
            ),
            (
                MINIMAL.replace(
                    "</tasks>",
                    r#"<task id="t0" timeout="1"><file>a.out</file><execute>x</execute></task></tasks>"#,
                ),
                |e| matches!(e, PssError::DuplicateTaskId(s) if s == "t0"),
            ),
            (
                MINIMAL.replace("<rcp><execute>cat</execute></rcp>", ""),
                |e| matches!(e, PssError::MissingRequiredField(s) if s == "rcp"),
            ),
            (
                MINIMAL.replace(r#"id="t0""#, r#"id="a/b""#),
                |e| matches!(e, PssError::BadValue { field, .. } if field == "id"),
            ),
        ];
        for (xml, check) in cases {
            let err = parse_pss(&xml, dir.path()).unwrap_err();
            assert!(check(&err), "unexpected error {err:?} for {xml}");
        }
    }

    #[test]
    fn dependency_rows_transcribed() {
        let p = problem_with(&[("t0", 0), ("t1", 0), ("t2", 0)], &["0 0 0", "1 0 0", "1 1 0"]);
        assert!(p.deps.depends(1, 0));
        assert!(p.deps.depends(2, 0) && p.deps.depends(2, 1));
        assert_eq!(p.deps.edge_count(), 3);
    }

    #[test]
    fn cyclic_document_rejected() {
        let dir = dir_with(&["f"]);
        let xml = r#"<problem name="p"><tasks>
            <task id="a" timeout="1"><file>f</file><execute>x</execute></task>
            <task id="b" timeout="1"><file>f</file><execute>x</execute></task>
            </tasks><dependencies><row>0 1</row><row>1 0</row></dependencies>
            <rcp><execute>x</execute></rcp></problem>"#;
        assert_eq!(parse_pss(xml, dir.path()).unwrap_err(), PssError::CycleDetected(vec![0, 1]));
    }

    #[test]
    fn validate_dag_examples() {
        assert!(validate_dag(&DependencyMatrix::empty(3)).is_ok());
        let two = DependencyMatrix::from_rows(&[vec![false, true], vec![true, false]]).unwrap();
        assert_eq!(validate_dag(&two), Err(PssError::CycleDetected(vec![0, 1])));
        let mut chain = DependencyMatrix::empty(4);
        for i in 1..4 {
            chain.set(i, i - 1, true);
        }
        assert!(validate_dag(&chain).is_ok());
        assert!(DependencyMatrix::from_rows(&[vec![true]]).is_err());
    }

    #[test]
    fn topo_examples() {
        let p = problem_with(&[("t0", 10), ("t1", 0)], &["0 0", "0 0"]);
        assert_eq!(topo_priority_order(&p), ["t1", "t0"]);
        let p = problem_with(&[("t0", 19), ("t1", 0)], &["0 0", "1 0"]);
        assert_eq!(topo_priority_order(&p), ["t0", "t1"]);
        let diamond =
            problem_with(&[("t0", 5), ("t1", 5), ("t2", 5), ("t3", 5)], &["0 0 0 0", "1 0 0 0", "1 0 0 0", "0 1 1 0"]);
        assert_eq!(topo_priority_order(&diamond), ["t0", "t1", "t2", "t3"]);
    }

    #[test]
    fn ready_set_examples() {
        let set = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<HashSet<_>>();
        let chain = problem_with(&[("t0", 0), ("t1", 0)], &["0 0", "1 0"]);
        assert_eq!(ready_set(&chain, &set(&[]), &set(&[])), ["t0"]);
        assert_eq!(ready_set(&chain, &set(&["t0"]), &set(&[])), ["t1"]);
        let diamond =
            problem_with(&[("t0", 0), ("t1", 0), ("t2", 0), ("t3", 0)], &["0 0 0 0", "1 0 0 0", "1 0 0 0", "0 1 1 0"]);
        assert_eq!(ready_set(&diamond, &set(&["t0"]), &set(&["t1"])), ["t2"]);
    }

    #[test]
    fn xml_escaping_round_trips() {
        let dir = dir_with(&["a.out"]);
        let mut p = parse_pss(MINIMAL, dir.path()).unwrap();
        p.tasks[0].exec_cmd = r#"echo "a<b" && echo 'c' > out/x"#.into();
        p.summary = "sum & more".into();
        let back = parse_pss(&p.to_pss_xml(), dir.path()).unwrap();
        assert_eq!(back, p);
    }
}
