use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Where the worst margin of a check was observed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Location {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Location {
    pub fn at_point(r: f64) -> Self {
        Location {
            point: Some(r),
            ..Default::default()
        }
    }

    pub fn at_sample(t: f64, node: Option<usize>) -> Self {
        Location {
            t: Some(t),
            node,
            ..Default::default()
        }
    }

    pub fn at_pair(t_ref: f64, t: f64, node: Option<usize>) -> Self {
        Location {
            t: Some(t),
            t_ref: Some(t_ref),
            node,
            ..Default::default()
        }
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Outcome of one inequality check.
///
/// Margins are signed and normalised so that positive means slack;
/// `pass` is exactly `worst_margin >= -tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub location: Location,
    pub tolerance: f64,
    pub samples: usize,
    #[serde(default)]
    pub skipped: usize,
    /// `Some(true)` when the check also passed at `dt/2` with the same
    /// absolute tolerance; `None` when no halving ladder was run.
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Running minimum of margins over the samples of a check.
#[derive(Clone, Debug)]
pub(crate) struct MarginTracker {
    name: String,
    tolerance: f64,
    worst: f64,
    location: Location,
    samples: usize,
    skipped: usize,
}

impl MarginTracker {
    pub fn new(name: &str, tolerance: f64) -> Self {
        MarginTracker {
            name: name.to_string(),
            tolerance,
            worst: f64::INFINITY,
            location: Location::default(),
            samples: 0,
            skipped: 0,
        }
    }

    pub fn record(&mut self, margin: f64, at: impl FnOnce() -> Location) {
        self.samples += 1;
        // NaN margins count as violations.
        let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if m < self.worst {
            self.worst = m;
            self.location = at();
        }
    }

    /// Margin of `lhs <= rhs`, normalised by the larger magnitude.
    pub fn record_le(&mut self, lhs: f64, rhs: f64, at: impl FnOnce() -> Location) {
        self.record(relative_margin(lhs, rhs), at);
    }

    pub fn skip(&mut self) {
        self.skipped += 1;
    }

    pub fn worst(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.worst
        }
    }

    pub fn finish(self) -> CheckReport {
        let worst = self.worst();
        let worst = if worst.is_finite() { worst } else { -f64::MAX };
        CheckReport {
            check: self.name,
            pass: worst >= -self.tolerance,
            worst_margin: worst,
            location: self.location,
            tolerance: self.tolerance,
            samples: self.samples,
            skipped: self.skipped,
            converged: None,
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }
}

/// `(rhs - lhs) / max(|lhs|, |rhs|)`, zero when both sides vanish.
pub(crate) fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// Combine several reports into one named report (worst margin wins).
pub fn combine(name: &str, reports: &[CheckReport]) -> CheckReport {
    let mut worst: Option<&CheckReport> = None;
    for r in reports {
        let rel = r.worst_margin + r.tolerance;
        if worst.is_none_or(|w| rel < w.worst_margin + w.tolerance) {
            worst = Some(r);
        }
    }
    let mut out = match worst {
        Some(w) => w.clone(),
        None => MarginTracker::new(name, 0.0).finish(),
    };
    out.check = name.to_string();
    out.pass = reports.iter().all(|r| r.pass);
    out.samples = reports.iter().map(|r| r.samples).sum();
    out.skipped = reports.iter().map(|r| r.skipped).sum();
    out.details.clear();
    for r in reports {
        out.details
            .insert(format!("{}.worst_margin", r.check), r.worst_margin);
    }
    out.notes = reports.iter().flat_map(|r| r.notes.clone()).collect();
    out
}

/// Set `converged` on `coarse` from the same-named reports of a run at a
/// finer step: converged means the check passed at every level so far.
pub fn mark_converged(coarse: &mut [CheckReport], finer: &[CheckReport]) {
    for r in coarse.iter_mut() {
        let fine_pass = finer.iter().find(|f| f.check == r.check).map(|f| f.pass);
        let prev = r.converged.unwrap_or(r.pass);
        r.converged = Some(prev && fine_pass.unwrap_or(false));
    }
}
