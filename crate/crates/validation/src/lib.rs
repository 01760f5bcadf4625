//! Shared plumbing for the acceptance suite: criterion outcomes, the
//! runner that prints one line per criterion, and dataset loading.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use epigate_core::data::{load_builtin, DATA_DIR_ENV, TabularDataset};

pub type Check = Result<String, String>;

pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}: {} ({:.1}s) {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

/// Run one criterion, turning a panic into a failure.
pub fn run_criterion(id: u8, title: &'static str, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (passed, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    let outcome = Outcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    };
    println!("{}", outcome.line());
    outcome
}

/// Load a built-in dataset or explain why it is unavailable.
pub fn dataset(name: &str) -> Result<TabularDataset, String> {
    load_builtin(name)
        .map(|l| l.dataset)
        .map_err(|e| format!("dataset '{name}' unavailable (set {DATA_DIR_ENV}): {e}"))
}

/// `Ok` when `cond` holds, otherwise the message.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}
