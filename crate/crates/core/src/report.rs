//! Verdicts of sampled checks.

use serde::{Deserialize, Serialize};

use crate::kinematics::FieldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Parameters of the worst sample of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Jet at which the sample was evaluated, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<(Vec<f64>, Vec<f64>)>,
    /// Margin before normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_margin: Option<f64>,
}

/// One row of the per-sample series written as CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub sample: usize,
    pub margin: f64,
    pub tau: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub condition: String,
    pub verdict: Verdict,
    /// Worst (smallest) signed margin over all samples.
    pub margin: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub caveat: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub series: Vec<SeriesRow>,
}

/// Margin of one sample with the data needed to reproduce it.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub margin: f64,
    pub tau: f64,
    pub amplitude: f64,
    pub witness: Witness,
}

/// Accumulates sample margins in submission order and derives the verdict:
/// fail iff the worst margin is below `-tolerance`.
#[derive(Debug, Clone)]
pub struct ReportBuilder {
    condition: String,
    tolerance: f64,
    seed: u64,
    worst: Option<(f64, Witness)>,
    series: Vec<SeriesRow>,
    notes: Vec<String>,
    invalid: usize,
}

impl ReportBuilder {
    pub fn new(condition: impl Into<String>, tolerance: f64, seed: u64) -> Self {
        Self {
            condition: condition.into(),
            tolerance,
            seed,
            worst: None,
            series: Vec::new(),
            notes: Vec::new(),
            invalid: 0,
        }
    }

    pub fn push(&mut self, s: SampleOutcome) {
        let index = self.series.len();
        self.series.push(SeriesRow { sample: index, margin: s.margin, tau: s.tau, amplitude: s.amplitude });
        if !s.margin.is_finite() {
            self.invalid += 1;
            return;
        }
        let replace = match &self.worst {
            None => true,
            Some((m, _)) => s.margin < *m,
        };
        if replace {
            let mut w = s.witness;
            w.sample.get_or_insert(index);
            self.worst = Some((s.margin, w));
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn finish(self) -> TestReport {
        let samples = self.series.len();
        let (margin, witness) = match self.worst {
            Some((m, w)) => (m, Some(w)),
            None => (f64::NAN, None),
        };
        let (verdict, caveat) = if samples == 0 {
            (Verdict::Inconclusive, "no samples evaluated".to_string())
        } else if self.invalid > 0 {
            (Verdict::Inconclusive, format!("{} of {samples} samples produced non-finite margins", self.invalid))
        } else if margin < -self.tolerance {
            (Verdict::Fail, violation_caveat(margin, self.tolerance))
        } else {
            (
                Verdict::Pass,
                format!("no violation found in {samples} samples; sampling does not prove the condition"),
            )
        };
        TestReport {
            condition: self.condition,
            verdict,
            margin: if margin.is_finite() { margin } else { 0.0 },
            tolerance: self.tolerance,
            samples,
            seed: self.seed,
            witness,
            caveat,
            notes: self.notes,
            series: self.series,
        }
    }
}

fn violation_caveat(margin: f64, tolerance: f64) -> String {
    format!("violation witnessed: margin {margin:e} below -{tolerance:e}")
}

impl TestReport {
    /// Replaces the worst margin of a failed report by a refined one.
    pub fn refine_violation(&mut self, margin: f64, witness: Witness) {
        self.margin = margin;
        self.witness = Some(witness);
        self.caveat = violation_caveat(margin, self.tolerance);
    }

    /// Report for a single deterministic quantity (no sampling).
    pub fn single(
        condition: impl Into<String>,
        margin: f64,
        tolerance: f64,
        witness: Witness,
    ) -> TestReport {
        let mut b = ReportBuilder::new(condition, tolerance, 0);
        b.push(SampleOutcome { margin, tau: 0.0, amplitude: 0.0, witness });
        let mut r = b.finish();
        if r.verdict == Verdict::Pass {
            r.caveat = "deterministic evaluation within tolerance".into();
        }
        r
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// CSV with header `sample,margin,tau,amplitude`, LF line endings.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("sample,margin,tau,amplitude\n");
        for r in &self.series {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", r.sample, r.margin, r.tau, r.amplitude));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(margin: f64) -> SampleOutcome {
        SampleOutcome { margin, tau: 0.5, amplitude: 0.1, witness: Witness::default() }
    }

    #[test]
    fn verdict_follows_tolerance() {
        let mut b = ReportBuilder::new("c", 1e-7, 3);
        b.push(outcome(1e-3));
        b.push(outcome(-5e-8));
        let r = b.finish();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.margin, -5e-8);
        assert_eq!(r.witness.unwrap().sample, Some(1));
        assert!(r.caveat.starts_with("no violation found in 2 samples"));

        let mut b = ReportBuilder::new("c", 1e-7, 3);
        b.push(outcome(0.0));
        b.push(outcome(-2e-7));
        assert_eq!(b.finish().verdict, Verdict::Fail);
    }

    #[test]
    fn empty_or_nan_runs_are_inconclusive() {
        assert_eq!(ReportBuilder::new("c", 1e-7, 0).finish().verdict, Verdict::Inconclusive);
        let mut b = ReportBuilder::new("c", 1e-7, 0);
        b.push(outcome(f64::NAN));
        assert_eq!(b.finish().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn csv_layout() {
        let mut b = ReportBuilder::new("c", 1e-7, 0);
        b.push(outcome(0.25));
        let csv = b.finish().series_csv();
        assert_eq!(csv, "sample,margin,tau,amplitude\n0,0.25,0.5,0.1\n");
    }
}
