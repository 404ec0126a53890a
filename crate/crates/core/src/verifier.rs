//! Proof checking: a live Lean driver, a fixture-table mock, and a
//! per-run verdict cache in front of either.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use crate::llm::Semaphore;
use crate::model::{Diagnostic, DiagnosticKind, Severity, Theorem, Verdict, VerdictStatus};
use crate::parse::{contains_sorry, mask_comments_and_strings, parse_verifier_log, LogFormat};
use crate::prompt::splice;

/// Extra wait after the kill signal before a check is abandoned.
pub const KILL_GRACE: Duration = Duration::from_secs(5);

pub const SORRY_MESSAGE: &str = "proof contains `sorry`";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierMode {
    Live,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierConfig {
    pub mode: VerifierMode,
    /// Lake project with Mathlib available (live mode).
    pub project_root: PathBuf,
    pub header_lines: Vec<String>,
    pub timeout_secs: u64,
    pub max_parallel_checks: usize,
    /// Program and arguments; the source file path is appended.
    pub command: Vec<String>,
    /// Mock table file (mock mode).
    pub mock_table: Option<PathBuf>,
    /// Verdict for proofs absent from the mock table.
    pub mock_default: VerdictStatus,
}

pub fn default_header() -> Vec<String> {
    [
        "import Mathlib",
        "import Aesop",
        "set_option maxHeartbeats 0",
        "open BigOperators Real Nat Topology Rat",
    ]
    .map(String::from)
    .to_vec()
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            mode: VerifierMode::Mock,
            project_root: PathBuf::from("."),
            header_lines: default_header(),
            timeout_secs: 300,
            max_parallel_checks: 4,
            command: vec!["lake".into(), "env".into(), "lean".into()],
            mock_table: None,
            mock_default: VerdictStatus::Fail,
        }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_parallel_checks == 0 {
            return Err("verifier.max_parallel_checks must be >= 1".into());
        }
        if self.timeout_secs == 0 {
            return Err("verifier.timeout_secs must be >= 1".into());
        }
        if self.mode == VerifierMode::Live && self.command.is_empty() {
            return Err("verifier.command must name a program".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifierError {
    #[error("verifier unavailable: {0}")]
    VerifierUnavailable(String),
    #[error("cannot tell whether the proof for {theorem_id} is a declaration or a tactic block (starts with {first_token:?})")]
    AmbiguousProofShape {
        theorem_id: String,
        first_token: String,
    },
    #[error("empty proof for {0}")]
    EmptyProof(String),
    #[error("mock table {path}:{line}: {reason}")]
    BadTable {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Hex SHA-256 of the exact proof bytes.
pub fn proof_digest(proof: &str) -> String {
    hex::encode(Sha256::digest(proof.as_bytes()))
}

/// A complete Lean file plus the line where the declaration starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledSource {
    pub text: String,
    /// 1-based file line of the declaration's first line.
    pub declaration_line: u32,
}

const DECLARATION_KEYWORDS: &[&str] = &[
    "theorem",
    "lemma",
    "example",
    "def",
    "abbrev",
    "instance",
    "axiom",
    "namespace",
    "section",
    "import",
];

fn first_token(proof: &str) -> Option<String> {
    let masked = mask_comments_and_strings(proof);
    masked
        .split_whitespace()
        .next()
        .map(|t| t.chars().take(24).collect())
}

fn plausible_tactic_start(token: &str) -> bool {
    let word: String = token
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '\'')
        .collect();
    if DECLARATION_KEYWORDS.contains(&word.as_str()) {
        return false;
    }
    token
        .chars()
        .next()
        .is_some_and(|c| c.is_alphanumeric() || "_·.(⟨<{@?!".contains(c))
}

/// Builds the file to check: header lines, theorem imports, then the proof
/// either verbatim (when it declares the theorem) or spliced after the
/// statement. `import` lines inside a full declaration are hoisted.
pub fn assemble_source(
    theorem: &Theorem,
    proof: &str,
    header_lines: &[String],
) -> Result<AssembledSource, VerifierError> {
    if proof.trim().is_empty() {
        return Err(VerifierError::EmptyProof(theorem.id.clone()));
    }
    let name = theorem.declaration_name();
    let declares = name.is_some_and(|n| crate::model::declaration_name(proof) == Some(n));
    let mut imports: Vec<String> = Vec::new();
    let mut rest: Vec<String> = Vec::new();
    for line in header_lines.iter().chain(&theorem.imports) {
        if line.trim_start().starts_with("import ") {
            imports.push(line.trim().to_string());
        } else {
            rest.push(line.clone());
        }
    }
    let body = if declares {
        let mut kept = Vec::new();
        for line in proof.lines() {
            if line.trim_start().starts_with("import ") {
                imports.push(line.trim().to_string());
            } else {
                kept.push(line);
            }
        }
        kept.join("\n")
    } else {
        let token = first_token(proof).unwrap_or_default();
        if !plausible_tactic_start(&token) {
            return Err(VerifierError::AmbiguousProofShape {
                theorem_id: theorem.id.clone(),
                first_token: token,
            });
        }
        splice(&theorem.fl_statement, proof)
    };
    let mut seen = std::collections::HashSet::new();
    imports.retain(|i| seen.insert(i.clone()));
    let mut text = String::new();
    for l in imports.iter().chain(&rest) {
        text.push_str(l);
        text.push('\n');
    }
    text.push('\n');
    let declaration_line = text.lines().count() as u32 + 1;
    text.push_str(body.trim_start_matches('\n'));
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(AssembledSource {
        text,
        declaration_line,
    })
}

fn sorry_diagnostic() -> Diagnostic {
    let mut d = Diagnostic::error(None, SORRY_MESSAGE);
    d.kind = DiagnosticKind::ContainsSorry;
    d
}

/// Forces a failing verdict when the proof uses `sorry`, whatever the
/// checker said.
pub fn enforce_no_sorry(proof: &str, mut verdict: Verdict) -> Verdict {
    if !contains_sorry(proof) {
        return verdict;
    }
    if !verdict
        .diagnostics
        .iter()
        .any(|d| d.kind == DiagnosticKind::ContainsSorry && d.is_error())
    {
        verdict.diagnostics.push(sorry_diagnostic());
    }
    if matches!(verdict.status, VerdictStatus::Pass) {
        verdict.status = VerdictStatus::Fail;
    }
    verdict
}

pub trait Verifier: Send + Sync {
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError>;
}

impl<V: Verifier + ?Sized> Verifier for &V {
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError> {
        (**self).check(theorem, proof)
    }
}

impl<V: Verifier + ?Sized> Verifier for Box<V> {
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError> {
        (**self).check(theorem, proof)
    }
}

/// Verifier backed by a closure over (theorem, proof); the sorry rule is
/// still applied.
pub struct FnVerifier<F>(pub F);

impl<F> Verifier for FnVerifier<F>
where
    F: Fn(&Theorem, &str) -> Verdict + Send + Sync,
{
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError> {
        Ok(enforce_no_sorry(proof, (self.0)(theorem, proof)))
    }
}

/// One row of a mock table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub theorem_id: String,
    pub proof_digest: String,
    pub status: VerdictStatus,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl MockEntry {
    pub fn new(theorem_id: &str, proof: &str, verdict: &Verdict) -> Self {
        Self {
            theorem_id: theorem_id.to_string(),
            proof_digest: proof_digest(proof),
            status: verdict.status,
            diagnostics: verdict.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockTable {
    entries: HashMap<(String, String), Verdict>,
    pub default_verdict: Verdict,
}

impl Default for MockTable {
    fn default() -> Self {
        Self {
            entries: HashMap::new(),
            default_verdict: Verdict::fail(vec![Diagnostic::error(
                None,
                "no mock verdict recorded for this proof",
            )]),
        }
    }
}

impl MockTable {
    pub fn new(default_verdict: Verdict) -> Self {
        Self {
            entries: HashMap::new(),
            default_verdict,
        }
    }

    pub fn insert(&mut self, theorem_id: &str, proof: &str, verdict: Verdict) {
        self.entries
            .insert((theorem_id.to_string(), proof_digest(proof)), verdict);
    }

    pub fn insert_entry(&mut self, entry: MockEntry) {
        let verdict = Verdict::with_status(entry.status, entry.diagnostics);
        self.entries
            .insert((entry.theorem_id, entry.proof_digest), verdict);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, theorem_id: &str, proof: &str) -> &Verdict {
        self.entries
            .get(&(theorem_id.to_string(), proof_digest(proof)))
            .unwrap_or(&self.default_verdict)
    }

    pub fn load(path: &Path) -> Result<Self, VerifierError> {
        let file =
            File::open(path).map_err(|e| VerifierError::Io(format!("{}: {e}", path.display())))?;
        let mut table = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| VerifierError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MockEntry =
                serde_json::from_str(&line).map_err(|e| VerifierError::BadTable {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            table.insert_entry(entry);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut rows: Vec<MockEntry> = self
            .entries
            .iter()
            .map(|((id, digest), v)| MockEntry {
                theorem_id: id.clone(),
                proof_digest: digest.clone(),
                status: v.status,
                diagnostics: v.diagnostics.clone(),
            })
            .collect();
        rows.sort_by(|a, b| {
            (&a.theorem_id, &a.proof_digest).cmp(&(&b.theorem_id, &b.proof_digest))
        });
        let mut f = File::create(path)?;
        for r in rows {
            writeln!(f, "{}", serde_json::to_string(&r)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockVerifier {
    pub table: MockTable,
}

impl MockVerifier {
    pub fn new(table: MockTable) -> Self {
        Self { table }
    }
}

impl Verifier for MockVerifier {
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError> {
        if proof.trim().is_empty() {
            return Err(VerifierError::EmptyProof(theorem.id.clone()));
        }
        let verdict = self.table.lookup(&theorem.id, proof).clone();
        Ok(enforce_no_sorry(proof, verdict))
    }
}

/// Runs the Lean toolchain on a generated file per check.
#[derive(Debug)]
pub struct LiveVerifier {
    config: VerifierConfig,
    slots: Semaphore,
}

fn is_lake_project(root: &Path) -> bool {
    ["lakefile.lean", "lakefile.toml", "lean-toolchain"]
        .iter()
        .any(|f| root.join(f).is_file())
}

fn on_path(program: &str) -> bool {
    let p = Path::new(program);
    if p.components().count() > 1 {
        return p.is_file();
    }
    std::env::var_os("PATH")
        .is_some_and(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
}

impl LiveVerifier {
    /// Fails with `VerifierUnavailable` when the project or toolchain is missing.
    pub fn new(config: VerifierConfig) -> Result<Self, VerifierError> {
        if !is_lake_project(&config.project_root) {
            return Err(VerifierError::VerifierUnavailable(format!(
                "{} has no lakefile or lean-toolchain",
                config.project_root.display()
            )));
        }
        let program = config.command.first().cloned().unwrap_or_default();
        if !on_path(&program) {
            return Err(VerifierError::VerifierUnavailable(format!(
                "{program:?} not found on PATH"
            )));
        }
        Ok(Self {
            slots: Semaphore::new(config.max_parallel_checks),
            config,
        })
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    fn run(
        &self,
        source: &AssembledSource,
    ) -> Result<(Option<i32>, String, Duration), VerifierError> {
        let io = |e: std::io::Error| VerifierError::Io(e.to_string());
        let mut file = tempfile::Builder::new()
            .prefix("check-")
            .suffix(".lean")
            .tempfile()
            .map_err(io)?;
        file.write_all(source.text.as_bytes()).map_err(io)?;
        file.flush().map_err(io)?;
        let _slot = self.slots.acquire();
        let started = Instant::now();
        let mut cmd = Command::new(&self.config.command[0]);
        cmd.args(&self.config.command[1..])
            .arg(file.path())
            .current_dir(&self.config.project_root)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| VerifierError::VerifierUnavailable(e.to_string()))?;
        // drain pipes on threads so a chatty checker cannot block on a full pipe
        let (tx, rx) = std::sync::mpsc::channel();
        let out = child.stdout.take().expect("piped");
        let err = child.stderr.take().expect("piped");
        for (i, mut pipe) in [Box::new(out) as Box<dyn Read + Send>, Box::new(err)]
            .into_iter()
            .enumerate()
        {
            let tx = tx.clone();
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = pipe.read_to_end(&mut buf);
                let _ = tx.send((i, String::from_utf8_lossy(&buf).into_owned()));
            });
        }
        drop(tx);
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let code = match child.wait_timeout(timeout).map_err(io)? {
            Some(status) => Some(status.code().unwrap_or(-1)),
            None => {
                kill_tree(&mut child);
                let _ = child.wait_timeout(KILL_GRACE);
                None
            }
        };
        let elapsed = started.elapsed();
        let mut parts = [String::new(), String::new()];
        let deadline = Instant::now() + KILL_GRACE;
        for _ in 0..2 {
            let left = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(left) {
                Ok((i, s)) => parts[i] = s,
                Err(_) => break,
            }
        }
        let [mut log, err] = parts;
        log.push_str(&err);
        Ok((code, log, elapsed))
    }
}

/// Kills the checker and, on unix, everything in its process group
/// (`lake` runs `lean` as a child).
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: plain syscall on the group created for this child
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

/// Turns toolchain output into a verdict. Line numbers are made relative to
/// the declaration so they index into the proof shown to the corrector.
pub fn interpret_log(exit_code: Option<i32>, log: &str, declaration_line: u32) -> Verdict {
    let mut diags = parse_verifier_log(log, LogFormat::LeanNative);
    for d in &mut diags {
        d.line = d
            .line
            .and_then(|l| l.checked_sub(declaration_line - 1))
            .filter(|l| *l >= 1);
    }
    let Some(code) = exit_code else {
        let mut d = Diagnostic::error(None, "verification timed out");
        d.kind = DiagnosticKind::Timeout;
        diags.push(d);
        return Verdict::with_status(VerdictStatus::Timeout, diags);
    };
    let errors = diags.iter().any(|d| d.severity == Severity::Error);
    if code == 0 && !errors {
        return Verdict::with_status(VerdictStatus::Pass, diags);
    }
    if !errors {
        let msg = if log.trim().is_empty() {
            format!("checker exited with status {code} and no output")
        } else {
            log.trim().chars().take(2000).collect()
        };
        return Verdict::with_status(
            VerdictStatus::VerifierError,
            vec![Diagnostic::error(None, msg)],
        );
    }
    Verdict::fail(diags)
}

impl Verifier for LiveVerifier {
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError> {
        let source = assemble_source(theorem, proof, &self.config.header_lines)?;
        let (code, log, elapsed) = self.run(&source)?;
        let mut verdict = interpret_log(code, &log, source.declaration_line);
        verdict.wall_time = elapsed.as_secs_f64();
        Ok(enforce_no_sorry(proof, verdict))
    }
}

/// Within-run cache keyed by (theorem id, proof digest).
pub struct CachedVerifier<V> {
    inner: V,
    cache: Mutex<HashMap<(String, String), Verdict>>,
    hits: AtomicU64,
}

impl<V: Verifier> CachedVerifier<V> {
    pub fn new(inner: V) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &V {
        &self.inner
    }
}

impl<V: Verifier> Verifier for CachedVerifier<V> {
    fn check(&self, theorem: &Theorem, proof: &str) -> Result<Verdict, VerifierError> {
        let key = (theorem.id.clone(), proof_digest(proof));
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v.clone());
        }
        let verdict = self.inner.check(theorem, proof)?;
        self.cache.lock().unwrap().insert(key, verdict.clone());
        Ok(verdict)
    }
}

/// Builds the configured verifier.
pub fn from_config(config: &VerifierConfig) -> Result<Box<dyn Verifier>, VerifierError> {
    match config.mode {
        VerifierMode::Live => Ok(Box::new(LiveVerifier::new(config.clone())?)),
        VerifierMode::Mock => {
            let mut table = match &config.mock_table {
                Some(p) => MockTable::load(p)?,
                None => MockTable::default(),
            };
            if config.mock_default == VerdictStatus::Pass {
                table.default_verdict = Verdict::pass();
            }
            Ok(Box::new(MockVerifier::new(table)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nt458() -> Theorem {
        Theorem::new(
            "mathd_numbertheory_458",
            "If $n$ leaves remainder 7 on division by 8, what is its remainder modulo 4? Show that it is 3.",
            "theorem mathd_numbertheory_458 (n : ℕ) (h₀ : n % 8 = 7) : n % 4 = 3 := by",
        )
    }

    #[test]
    fn full_declaration_used_verbatim() {
        let proof =
            "theorem mathd_numbertheory_458 (n : ℕ) (h₀ : n % 8 = 7) : n % 4 = 3 := by\n  omega";
        let src = assemble_source(&nt458(), proof, &default_header()).unwrap();
        let expected = "import Mathlib\nimport Aesop\nset_option maxHeartbeats 0\nopen BigOperators Real Nat Topology Rat\n\n".to_string()
            + proof
            + "\n";
        assert_eq!(src.text, expected);
        assert_eq!(src.declaration_line, 6);
    }

    #[test]
    fn tactic_fragment_spliced() {
        let t = Theorem::new("t", "one is one", "theorem t : (1 : ℕ) = 1 := by");
        let src = assemble_source(&t, "norm_num", &[]).unwrap();
        assert_eq!(src.text, "\ntheorem t : (1 : ℕ) = 1 := by\n  norm_num\n");
    }

    #[test]
    fn imports_hoisted_and_deduplicated() {
        let t = Theorem::new("t", "x", "theorem t : True := by");
        let proof = "import Mathlib\nimport Mathlib.Tactic\n\ntheorem t : True := by\n  trivial";
        let src = assemble_source(&t, proof, &default_header()).unwrap();
        assert!(src
            .text
            .starts_with("import Mathlib\nimport Aesop\nimport Mathlib.Tactic\nset_option"));
        assert_eq!(src.text.matches("import Mathlib\n").count(), 1);
    }

    #[test]
    fn ambiguous_and_empty_rejected() {
        let t = nt458();
        assert!(matches!(
            assemble_source(&t, "theorem other : True := trivial", &[]),
            Err(VerifierError::AmbiguousProofShape { .. })
        ));
        assert!(matches!(
            assemble_source(&t, "  \n", &[]),
            Err(VerifierError::EmptyProof(_))
        ));
        // a leading comment does not count as the first token
        assert!(assemble_source(&t, "-- reduce mod 8\n  omega", &[]).is_ok());
    }

    #[test]
    fn sorry_forces_failure_in_mock() {
        let t = nt458();
        let mut table = MockTable::new(Verdict::pass());
        table.insert(&t.id, "omega", Verdict::pass());
        let v = MockVerifier::new(table);
        assert!(v.check(&t, "omega").unwrap().is_pass());
        let bad = v.check(&t, "  sorry").unwrap();
        assert_eq!(bad.status, VerdictStatus::Fail);
        assert_eq!(
            bad.diagnostics.last().unwrap().kind,
            DiagnosticKind::ContainsSorry
        );
        // prose mention in a comment is fine
        assert!(v.check(&t, "-- no sorry here\n  omega").unwrap().is_pass());
    }

    #[test]
    fn mock_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.ndjson");
        let mut table = MockTable::default();
        table.insert("t1", "rfl", Verdict::pass());
        table.insert(
            "t1",
            "simp",
            Verdict::fail(vec![Diagnostic::error(Some(2), "unsolved goals\n⊢ 1 = 1")]),
        );
        table.save(&path).unwrap();
        let loaded = MockTable::load(&path).unwrap();
        assert_eq!(loaded.entries, table.entries);

        std::fs::write(&path, "{\"theorem_id\":\"t\"}\n").unwrap();
        assert!(matches!(
            MockTable::load(&path),
            Err(VerifierError::BadTable { line: 1, .. })
        ));
    }

    #[test]
    fn cache_skips_repeat_checks() {
        let calls = AtomicU64::new(0);
        let inner = FnVerifier(|_: &Theorem, _: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Verdict::pass()
        });
        let v = CachedVerifier::new(inner);
        let t = nt458();
        for _ in 0..5 {
            v.check(&t, "omega").unwrap();
        }
        v.check(&t, "simp").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(v.hits(), 4);
    }

    #[test]
    fn log_interpretation() {
        let log = "/tmp/check-1.lean:8:2: error: unsolved goals\nn : ℕ\n⊢ n % 4 = 3\n/tmp/check-1.lean:3:0: warning: unused\n";
        let v = interpret_log(Some(1), log, 6);
        assert_eq!(v.status, VerdictStatus::Fail);
        assert_eq!(v.diagnostics[0].line, Some(3));
        assert_eq!(v.diagnostics[0].kind, DiagnosticKind::UnsolvedGoals);
        // header-region warning loses its line
        assert_eq!(v.diagnostics[1].line, None);

        assert!(interpret_log(Some(0), "", 6).is_pass());
        assert_eq!(interpret_log(None, "", 6).status, VerdictStatus::Timeout);
        assert_eq!(
            interpret_log(Some(1), "segfault", 6).status,
            VerdictStatus::VerifierError
        );
        let warn_only = "f.lean:7:0: warning: declaration uses 'sorry'\n";
        assert!(interpret_log(Some(0), warn_only, 6).is_pass());
    }

    #[test]
    fn live_unavailable_without_project() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = VerifierConfig {
            mode: VerifierMode::Live,
            project_root: dir.path().to_path_buf(),
            ..Default::default()
        };
        assert!(matches!(
            LiveVerifier::new(cfg),
            Err(VerifierError::VerifierUnavailable(_))
        ));
    }

    #[test]
    #[cfg(unix)]
    fn live_driver_with_stub_checker() {
        // a shell script standing in for the toolchain exercises the process plumbing
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("lean-toolchain"), "stub\n").unwrap();
        let script = dir.path().join("fake-lean.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\nif grep -q bad \"$1\"; then echo \"$1:6:2: error: type mismatch\"; exit 1; fi\nif grep -q slow \"$1\"; then sleep 30; fi\nexit 0\n",
        )
        .unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let cfg = VerifierConfig {
            mode: VerifierMode::Live,
            project_root: dir.path().to_path_buf(),
            command: vec![script.display().to_string()],
            timeout_secs: 1,
            ..Default::default()
        };
        let v = LiveVerifier::new(cfg).unwrap();
        let t = Theorem::new("t", "x", "theorem t : (1 : ℕ) = 1 := by");
        assert!(v.check(&t, "rfl").unwrap().is_pass());
        let bad = v.check(&t, "exact bad").unwrap();
        assert_eq!(bad.status, VerdictStatus::Fail);
        assert_eq!(bad.diagnostics[0].kind, DiagnosticKind::TypeMismatch);
        assert_eq!(bad.diagnostics[0].line, Some(1));
        let started = Instant::now();
        let slow = v.check(&t, "exact slow").unwrap();
        assert_eq!(slow.status, VerdictStatus::Timeout);
        assert!(started.elapsed() < Duration::from_secs(1) + KILL_GRACE);
        let sorry = v.check(&t, "sorry").unwrap();
        assert_eq!(sorry.status, VerdictStatus::Fail);
        assert_eq!(sorry.diagnostics[0].kind, DiagnosticKind::ContainsSorry);
    }
}
