//! Experiment records, the pass rules that judge them, and CSV output.
//!
//! A record carries the sweep abscissae, the raw measurements, the derived
//! ratios a rule looks at, the rule itself and its tolerance, so that the
//! pass flag can be recomputed from a CSV row alone.

use std::io::Write;

use bubblelab::fit::{band_width, loglog_slope, max_step_drift};
use serde::{Deserialize, Serialize};

/// How a record's observed statistic is computed and judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Least-squares slope of `ln value` on `ln x` within `tol` of `predicted`.
    SlopeWithin,
    /// Same slope at most `predicted + tol` (an upper bound `value ≲ x^predicted`).
    SlopeAtMost,
    /// Every ratio within `tol` relative of the median ratio.
    RatioBand,
    /// No ratio exceeds the first one by more than `tol` relative.
    RatioBounded,
    /// Relative change between consecutive ratios at most `tol`.
    StepDrift,
    /// `max/min` of the ratios at most `tol`.
    BandFactor,
    /// Largest ratio at most `tol`.
    MaxAtMost,
    /// Largest ratio strictly below `tol`.
    MaxBelow,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::SlopeWithin => "slope_within",
            Rule::SlopeAtMost => "slope_at_most",
            Rule::RatioBand => "ratio_band",
            Rule::RatioBounded => "ratio_bounded",
            Rule::StepDrift => "step_drift",
            Rule::BandFactor => "band_factor",
            Rule::MaxAtMost => "max_at_most",
            Rule::MaxBelow => "max_below",
        }
    }

    /// The observed statistic and the verdict.
    pub fn judge(self, x: &[f64], values: &[f64], ratios: &[f64], predicted: f64, drop_first: bool, tol: f64) -> (f64, bool) {
        let finite = |v: f64| if v.is_finite() { v } else { f64::NAN };
        let observed = match self {
            Rule::SlopeWithin | Rule::SlopeAtMost => loglog_slope(x, values, drop_first).map(|f| f.slope).unwrap_or(f64::NAN),
            Rule::RatioBand => {
                if ratios.is_empty() {
                    f64::NAN
                } else {
                    let m = median(ratios);
                    ratios.iter().map(|r| (r / m - 1.0).abs()).fold(0.0, f64::max)
                }
            }
            Rule::RatioBounded => match ratios.first() {
                Some(&r0) if r0 > 0.0 => ratios.iter().map(|r| r / r0 - 1.0).fold(0.0, f64::max),
                _ => f64::NAN,
            },
            Rule::StepDrift => max_step_drift(ratios),
            Rule::BandFactor => band_width(ratios),
            Rule::MaxAtMost | Rule::MaxBelow => ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let observed = finite(observed);
        let pass = match self {
            Rule::SlopeWithin => (observed - predicted).abs() <= tol,
            Rule::SlopeAtMost => observed <= predicted + tol,
            Rule::MaxBelow => observed < tol,
            _ => observed <= tol,
        };
        (observed, pass && !ratios.iter().chain(values).any(|v| v.is_nan()))
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub suite: String,
    pub check: String,
    pub anchor: String,
    pub n: usize,
    pub geometry: String,
    /// Everything else needed to rebuild the configuration, `key=value;…`.
    pub config: String,
    pub seed: u64,
    pub x_name: String,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub rule: Rule,
    pub predicted: f64,
    pub drop_first: bool,
    pub tolerance: f64,
    pub observed: f64,
    pub pass: bool,
    pub note: String,
    /// Wall time; kept out of the CSV so reruns are byte-identical.
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Fields of a record before it is judged.
#[derive(Debug, Clone, Default)]
pub struct RecordDraft {
    pub suite: String,
    pub check: String,
    pub anchor: String,
    pub n: usize,
    pub geometry: String,
    pub config: String,
    pub seed: u64,
    pub x_name: String,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub predicted: f64,
    pub drop_first: bool,
    pub note: String,
}

impl RecordDraft {
    pub fn judge(self, rule: Rule, tolerance: f64, runtime_s: f64) -> ExperimentRecord {
        let (observed, pass) = rule.judge(&self.x, &self.values, &self.ratios, self.predicted, self.drop_first, tolerance);
        ExperimentRecord {
            suite: self.suite,
            check: self.check,
            anchor: self.anchor,
            n: self.n,
            geometry: self.geometry,
            config: self.config,
            seed: self.seed,
            x_name: self.x_name,
            x: self.x,
            values: self.values,
            ratios: self.ratios,
            rule,
            predicted: self.predicted,
            drop_first: self.drop_first,
            tolerance,
            observed,
            pass,
            note: self.note,
            runtime_s,
        }
    }

    /// A record for a check that could not be computed; it always fails.
    pub fn failed(self, rule: Rule, tolerance: f64, reason: &str, runtime_s: f64) -> ExperimentRecord {
        let mut r = RecordDraft {
            note: if self.note.is_empty() {
                format!("error: {reason}")
            } else {
                format!("{}; error: {reason}", self.note)
            },
            ..self
        }
        .judge(rule, tolerance, runtime_s);
        r.pass = false;
        r
    }
}

pub const CSV_HEADER: [&str; 19] = [
    "suite",
    "check",
    "anchor",
    "n",
    "geometry",
    "config",
    "seed",
    "x_name",
    "x",
    "values",
    "ratios",
    "rule",
    "predicted",
    "drop_first",
    "tolerance",
    "observed",
    "pass",
    "note",
    "points",
];

/// Scientific notation with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.11e}")
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";")
}

impl ExperimentRecord {
    fn csv_row(&self) -> Vec<String> {
        vec![
            self.suite.clone(),
            self.check.clone(),
            self.anchor.clone(),
            self.n.to_string(),
            self.geometry.clone(),
            self.config.clone(),
            self.seed.to_string(),
            self.x_name.clone(),
            fmt_list(&self.x),
            fmt_list(&self.values),
            fmt_list(&self.ratios),
            self.rule.as_str().into(),
            fmt_num(self.predicted),
            self.drop_first.to_string(),
            fmt_num(self.tolerance),
            fmt_num(self.observed),
            self.pass.to_string(),
            self.note.clone(),
            self.x.len().to_string(),
        ]
    }
}

/// Writes records through one CSV writer, in the order given.
pub fn write_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Pass/fail counts over a set of records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

impl Summary {
    pub fn of(records: &[ExperimentRecord]) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        Self {
            total: records.len(),
            passed,
            failed: records.len() - passed,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft(x: Vec<f64>, values: Vec<f64>, ratios: Vec<f64>, predicted: f64) -> RecordDraft {
        RecordDraft {
            suite: "t".into(),
            check: "c".into(),
            x,
            values,
            ratios,
            predicted,
            ..Default::default()
        }
    }

    #[test]
    fn slope_rules() {
        let x = vec![10.0, 20.0, 40.0, 80.0];
        let v: Vec<f64> = x.iter().map(|r: &f64| 3.0 * r.powf(-7.0)).collect();
        let r = draft(x.clone(), v.clone(), vec![], -7.0).judge(Rule::SlopeWithin, 0.1, 0.0);
        assert!(r.pass && (r.observed + 7.0).abs() < 1e-12);
        assert!(draft(x.clone(), v.clone(), vec![], -5.0).judge(Rule::SlopeAtMost, 0.1, 0.0).pass);
        assert!(!draft(x, v, vec![], -8.0).judge(Rule::SlopeAtMost, 0.1, 0.0).pass);
    }

    #[test]
    fn ratio_rules() {
        let r = draft(vec![], vec![], vec![1.0, 1.1, 0.9], 0.0).judge(Rule::RatioBand, 0.2, 0.0);
        assert!(r.pass && (r.observed - 0.1).abs() < 1e-12);
        assert!(!draft(vec![], vec![], vec![1.0, 1.5], 0.0).judge(Rule::RatioBounded, 0.2, 0.0).pass);
        assert!(
            draft(vec![], vec![], vec![1.0, 0.5, 0.1], 0.0)
                .judge(Rule::RatioBounded, 0.2, 0.0)
                .pass
        );
        assert!(draft(vec![], vec![], vec![-3.0, -1.0], 0.0).judge(Rule::MaxBelow, 0.0, 0.0).pass);
        assert!(!draft(vec![], vec![], vec![-3.0, 0.0], 0.0).judge(Rule::MaxBelow, 0.0, 0.0).pass);
        assert!(
            !draft(vec![], vec![], vec![1.0, f64::NAN], 0.0)
                .judge(Rule::BandFactor, 2.0, 0.0)
                .pass
        );
    }

    #[test]
    fn csv_has_header_and_precision() {
        let r = draft(vec![10.0], vec![1.0 / 3.0], vec![2.0 / 3.0], 1.0).judge(Rule::MaxAtMost, 1.0, 5.0);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("suite,check,anchor,"));
        assert!(s.contains("3.33333333333e-1"));
        assert!(!s.contains("5.0"));
    }
}
