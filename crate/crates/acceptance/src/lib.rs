//! Pass/fail bookkeeping for the acceptance run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one numbered criterion.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit: f64,
}

impl Verdict {
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        format!("{status} [{:2}] {}: {} ({:.1} s, limit {:.0} s)", self.id, self.name, self.detail, self.seconds, self.limit)
    }
}

/// A single check inside a criterion, kept for the detail string.
pub struct Checks {
    parts: Vec<String>,
    pass: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks { parts: Vec::new(), pass: true }
    }
}

impl Checks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `value <= tol`.
    pub fn at_most(&mut self, what: &str, value: f64, tol: f64) {
        self.record(what, value, value <= tol, &format!("<= {tol:.1e}"));
    }

    pub fn at_least(&mut self, what: &str, value: f64, tol: f64) {
        self.record(what, value, value >= tol, &format!(">= {tol}"));
    }

    pub fn within(&mut self, what: &str, value: f64, lo: f64, hi: f64) {
        self.record(what, value, (lo..=hi).contains(&value), &format!("in [{lo}, {hi}]"));
    }

    pub fn holds(&mut self, what: &str, ok: bool) {
        self.pass &= ok;
        self.parts.push(format!("{what} {}", if ok { "yes" } else { "NO" }));
    }

    pub fn note(&mut self, text: String) {
        self.parts.push(text);
    }

    fn record(&mut self, what: &str, value: f64, ok: bool, bound: &str) {
        self.pass &= ok && value.is_finite();
        let mark = if ok { "" } else { " !" };
        self.parts.push(format!("{what} {value:.3e} {bound}{mark}"));
    }
}

/// Runs a criterion, converting panics and errors into a failing verdict.
/// Exceeding the runtime limit also fails.
pub fn run<F>(id: usize, name: &'static str, limit: f64, f: F) -> Verdict
where
    F: FnOnce(&mut Checks) -> Result<(), Box<dyn std::error::Error>>,
{
    let t = Instant::now();
    let mut checks = Checks::new();
    let res = catch_unwind(AssertUnwindSafe(|| f(&mut checks)));
    let seconds = t.elapsed().as_secs_f64();
    let mut pass = checks.pass;
    match res {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            pass = false;
            checks.parts.push(format!("error: {e}"));
        }
        Err(p) => {
            pass = false;
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            checks.parts.push(format!("panic: {}", msg.unwrap_or_default()));
        }
    }
    if seconds > limit {
        pass = false;
        checks.parts.push("over time".into());
    }
    Verdict { id, name, pass, detail: checks.parts.join("; "), seconds, limit }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_and_panics_are_caught() {
        let ok = run(1, "ok", 10.0, |c| {
            c.at_most("x", 1.0, 2.0);
            Ok(())
        });
        assert!(ok.pass);
        let bad = run(2, "bad", 10.0, |c| {
            c.at_least("slope", 1.0, 2.0);
            Ok(())
        });
        assert!(!bad.pass && bad.detail.contains('!'));
        let boom = run(3, "boom", 10.0, |_| panic!("nope"));
        assert!(!boom.pass && boom.detail.contains("nope"));
        let nan = run(4, "nan", 10.0, |c| {
            c.at_most("x", f64::NAN, 1.0);
            Ok(())
        });
        assert!(!nan.pass);
    }
}
