//! Pass/fail bookkeeping for the acceptance suite.
//!
//! Lines go straight to the process's stderr so that they show up in
//! `cargo test` output without `--nocapture`.

use std::io::Write;

pub struct Gate {
    id: u32,
    title: &'static str,
    lines: Vec<String>,
    failed: usize,
    checks: usize,
}

impl Gate {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, lines: Vec::new(), failed: 0, checks: 0 }
    }

    fn record(&mut self, pass: bool, text: String) -> bool {
        self.checks += 1;
        if !pass {
            self.failed += 1;
        }
        self.lines.push(format!("    {} {text}", if pass { "ok  " } else { "FAIL" }));
        pass
    }

    /// `|value − target| ≤ tol·|target|`.
    pub fn rel(&mut self, what: &str, value: f64, target: f64, tol: f64, unit: &str) -> bool {
        let dev = (value - target) / target.abs();
        let pass = dev.abs() <= tol;
        self.record(
            pass,
            format!("{what}: {value:.4} {unit} vs {target} {unit} ({:+.1}%, tolerance ±{:.0}%)", 100.0 * dev, 100.0 * tol),
        )
    }

    pub fn below(&mut self, what: &str, value: f64, limit: f64) -> bool {
        self.record(value < limit, format!("{what}: {value:.3e} (limit {limit:.1e})"))
    }

    pub fn holds(&mut self, what: &str, pass: bool, detail: impl Into<String>) -> bool {
        let detail = detail.into();
        self.record(pass, if detail.is_empty() { what.to_string() } else { format!("{what}: {detail}") })
    }

    /// Context that is not itself a check.
    pub fn info(&mut self, text: impl Into<String>) {
        self.lines.push(format!("    info {}", text.into()));
    }

    /// Prints the criterion line and its checks; panics when any check failed.
    pub fn finish(self) {
        let verdict = if self.failed == 0 { "[PASS]" } else { "[FAIL]" };
        let mut out = format!(
            "{verdict} criterion {}: {} ({}/{} checks pass)\n",
            self.id,
            self.title,
            self.checks - self.failed,
            self.checks
        );
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        let _ = std::io::stderr().lock().write_all(out.as_bytes());
        assert!(self.failed == 0, "criterion {} failed {} of {} checks", self.id, self.failed, self.checks);
    }
}
