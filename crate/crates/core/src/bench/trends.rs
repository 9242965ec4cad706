use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsRecord;
use crate::middlebox::SwitchMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Nonincreasing,
    Nondecreasing,
}

/// Inclusive (`min`, `max`) and strict (`above`, `below`) bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub above: Option<f64>,
    pub below: Option<f64>,
}

impl Bounds {
    fn holds(&self, x: f64) -> bool {
        self.min.is_none_or(|b| x >= b)
            && self.max.is_none_or(|b| x <= b)
            && self.above.is_none_or(|b| x > b)
            && self.below.is_none_or(|b| x < b)
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(b) = self.min {
            parts.push(format!(">= {b}"));
        }
        if let Some(b) = self.above {
            parts.push(format!("> {b}"));
        }
        if let Some(b) = self.max {
            parts.push(format!("<= {b}"));
        }
        if let Some(b) = self.below {
            parts.push(format!("< {b}"));
        }
        f.write_str(&parts.join(" and "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assertion {
    /// `metric(numerator) / metric(denominator)` at one sweep value.
    Ratio {
        name: String,
        experiment: Option<String>,
        metric: String,
        numerator: SwitchMode,
        denominator: SwitchMode,
        at: Option<f64>,
        #[serde(flatten)]
        bounds: Bounds,
    },
    /// One mode's metric along the sweep axis.
    Monotonic {
        name: String,
        experiment: Option<String>,
        metric: String,
        mode: SwitchMode,
        direction: Direction,
        #[serde(default)]
        max_inversions: usize,
        #[serde(default)]
        inversion_tolerance: f64,
        /// Restrict to these sweep values.
        over: Option<Vec<f64>>,
    },
    /// The ratio of two modes along the sweep axis.
    RatioMonotonic {
        name: String,
        experiment: Option<String>,
        metric: String,
        numerator: SwitchMode,
        denominator: SwitchMode,
        direction: Direction,
        #[serde(default)]
        max_inversions: usize,
        #[serde(default)]
        inversion_tolerance: f64,
        over: Option<Vec<f64>>,
    },
}

impl Assertion {
    pub fn name(&self) -> &str {
        match self {
            Assertion::Ratio { name, .. } | Assertion::Monotonic { name, .. } | Assertion::RatioMonotonic { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionFile {
    #[serde(rename = "assertion")]
    pub assertions: Vec<Assertion>,
}

impl AssertionFile {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrendReport {
    pub results: Vec<TrendResult>,
}

impl TrendReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

impl fmt::Display for TrendReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        Ok(())
    }
}

fn same_value(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, _) => true,
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        (Some(_), None) => false,
    }
}

/// `metric` of `mode` per sweep value, in record order.
fn series(records: &[MetricsRecord], experiment: &Option<String>, mode: SwitchMode, metric: &str) -> Result<Vec<(Option<f64>, f64)>, String> {
    records
        .iter()
        .filter(|r| r.mode == mode && experiment.as_ref().is_none_or(|e| &r.experiment == e))
        .map(|r| r.metric(metric).map(|m| (r.value, m)).ok_or_else(|| format!("no metric `{metric}`")))
        .collect()
}

fn restrict(s: Vec<(Option<f64>, f64)>, over: &Option<Vec<f64>>) -> Vec<(Option<f64>, f64)> {
    match over {
        None => s,
        Some(keep) => s.into_iter().filter(|(v, _)| keep.iter().any(|&k| same_value(Some(k), *v))).collect(),
    }
}

fn at_value(s: &[(Option<f64>, f64)], at: Option<f64>) -> Option<f64> {
    s.iter().find(|(v, _)| same_value(at, *v)).map(|&(_, m)| m)
}

/// Counts steps against `direction`; fails if more than `max_inversions` or
/// any larger than `tolerance` relative to the earlier point.
fn check_monotonic(points: &[(Option<f64>, f64)], direction: Direction, max_inversions: usize, tolerance: f64) -> (bool, String) {
    let mut inversions = 0;
    let mut worst: f64 = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        let wrong = match direction {
            Direction::Nonincreasing => b > a,
            Direction::Nondecreasing => b < a,
        };
        if wrong {
            inversions += 1;
            let rel = if a == 0.0 { f64::INFINITY } else { ((b - a) / a).abs() };
            worst = worst.max(rel);
        }
    }
    let passed = inversions == 0 || (inversions <= max_inversions && worst <= tolerance);
    let values: Vec<String> = points
        .iter()
        .map(|(v, m)| format!("{}={m:.3}", v.map(|v| v.to_string()).unwrap_or_default()))
        .collect();
    (passed, format!("[{}] inversions={inversions} worst={:.1}%", values.join(", "), worst * 100.0))
}

fn ratio_series(
    records: &[MetricsRecord],
    experiment: &Option<String>,
    metric: &str,
    num: SwitchMode,
    den: SwitchMode,
) -> Result<Vec<(Option<f64>, f64)>, String> {
    let n = series(records, experiment, num, metric)?;
    let d = series(records, experiment, den, metric)?;
    n.iter()
        .map(|&(v, x)| {
            let y = at_value(&d, v).ok_or_else(|| format!("no {den} record at {v:?}"))?;
            Ok((v, x / y))
        })
        .collect()
}

fn evaluate(a: &Assertion, records: &[MetricsRecord]) -> Result<(bool, String), String> {
    match a {
        Assertion::Ratio { experiment, metric, numerator, denominator, at, bounds, .. } => {
            let n = at_value(&series(records, experiment, *numerator, metric)?, *at).ok_or_else(|| format!("no {numerator} record at {at:?}"))?;
            let d = at_value(&series(records, experiment, *denominator, metric)?, *at).ok_or_else(|| format!("no {denominator} record at {at:?}"))?;
            let r = n / d;
            Ok((bounds.holds(r), format!("{numerator}/{denominator} {metric} = {n:.3}/{d:.3} = {r:.3}, want {bounds}")))
        }
        Assertion::Monotonic { experiment, metric, mode, direction, max_inversions, inversion_tolerance, over, .. } => {
            let s = restrict(series(records, experiment, *mode, metric)?, over);
            if s.len() < 2 {
                return Err(format!("{mode} has {} points, need at least 2", s.len()));
            }
            let (ok, detail) = check_monotonic(&s, *direction, *max_inversions, *inversion_tolerance);
            Ok((ok, format!("{mode} {metric} {direction:?}: {detail}")))
        }
        Assertion::RatioMonotonic { experiment, metric, numerator, denominator, direction, max_inversions, inversion_tolerance, over, .. } => {
            let s = restrict(ratio_series(records, experiment, metric, *numerator, *denominator)?, over);
            if s.len() < 2 {
                return Err(format!("ratio has {} points, need at least 2", s.len()));
            }
            let (ok, detail) = check_monotonic(&s, *direction, *max_inversions, *inversion_tolerance);
            Ok((ok, format!("{numerator}/{denominator} {metric} {direction:?}: {detail}")))
        }
    }
}

/// Evaluates every assertion; missing data counts as a failure.
pub fn check_trends(records: &[MetricsRecord], assertions: &AssertionFile) -> TrendReport {
    let results = assertions
        .assertions
        .iter()
        .map(|a| {
            let (passed, detail) = evaluate(a, records).unwrap_or_else(|e| (false, e));
            TrendResult { name: a.name().to_string(), passed, detail }
        })
        .collect();
    TrendReport { results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonic_with_tolerated_inversion() {
        let pts = |v: &[f64]| v.iter().enumerate().map(|(i, &m)| (Some(i as f64), m)).collect::<Vec<_>>();
        assert!(check_monotonic(&pts(&[5.0, 4.0, 4.0, 1.0]), Direction::Nonincreasing, 0, 0.0).0);
        assert!(!check_monotonic(&pts(&[5.0, 4.0, 4.1, 1.0]), Direction::Nonincreasing, 0, 0.0).0);
        assert!(check_monotonic(&pts(&[5.0, 4.0, 4.1, 1.0]), Direction::Nonincreasing, 1, 0.05).0);
        assert!(!check_monotonic(&pts(&[5.0, 4.0, 4.5, 1.0]), Direction::Nonincreasing, 1, 0.05).0);
        assert!(!check_monotonic(&pts(&[5.0, 5.1, 4.0, 4.1]), Direction::Nonincreasing, 1, 0.05).0);
        assert!(check_monotonic(&pts(&[1.0, 2.0, 2.0]), Direction::Nondecreasing, 0, 0.0).0);
    }

    fn record(mode: SwitchMode, value: f64, throughput: f64) -> MetricsRecord {
        MetricsRecord {
            experiment: "x".into(),
            mode,
            workload: "micro".into(),
            axis: "delta".into(),
            value: Some(value),
            clients: 1,
            seed: 1,
            duration_s: 1.0,
            warmup_s: 0.0,
            committed: 0,
            committed_txn_per_sec: throughput,
            mean_commit_latency_ms: 0.0,
            p50_ms: 0.0,
            p90_ms: 0.0,
            p99_ms: 0.0,
            aborts_by_switch: 0,
            aborts_by_store: 0,
            submitted: 0,
            oks: 0,
            in_flight: 0,
            store_commits: 0,
            switch_commits: 0,
            mean_attempts: 0.0,
            attempts_hist: String::new(),
            completion_s: None,
            trace_hash: String::new(),
            latencies_us: Vec::new(),
        }
    }

    #[test]
    fn over_restricts_the_series() {
        let records: Vec<MetricsRecord> = [(0.0, 9.0), (0.2, 9.5), (0.25, 8.0), (0.5, 7.0)]
            .iter()
            .map(|&(v, t)| record(SwitchMode::Gotthard, v, t))
            .collect();
        let file = |over: &str| {
            AssertionFile::from_toml(&format!(
                "[[assertion]]\nkind = \"monotonic\"\nname = \"m\"\nmetric = \"throughput\"\nmode = \"gotthard\"\ndirection = \"nonincreasing\"\n{over}"
            ))
            .unwrap()
        };
        assert!(!check_trends(&records, &file("")).all_passed());
        assert!(check_trends(&records, &file("over = [0.0, 0.25, 0.5]")).all_passed());
    }

    #[test]
    fn missing_mode_fails_the_assertion() {
        let records = vec![record(SwitchMode::Gotthard, 0.5, 2.0)];
        let f = AssertionFile::from_toml(
            "[[assertion]]\nkind = \"ratio\"\nname = \"r\"\nmetric = \"throughput\"\nnumerator = \"gotthard\"\ndenominator = \"read_cache\"\nmin = 1.0\n",
        )
        .unwrap();
        let report = check_trends(&records, &f);
        assert!(!report.all_passed());
        assert!(report.to_string().starts_with("FAIL r: no read_cache record"));
    }

    #[test]
    fn bounds() {
        let b = Bounds { min: Some(1.5), ..Bounds::default() };
        assert!(b.holds(1.5) && !b.holds(1.49));
        let b = Bounds { below: Some(1.0), ..Bounds::default() };
        assert!(!b.holds(1.0) && b.holds(0.99));
        assert_eq!(Bounds { min: Some(1.0), below: Some(2.0), ..Bounds::default() }.to_string(), ">= 1 and < 2");
    }

    #[test]
    fn parses_assertion_file() {
        let f = AssertionFile::from_toml(
            r#"
[[assertion]]
kind = "ratio"
name = "r"
metric = "throughput"
numerator = "gotthard"
denominator = "read_cache"
at = 0.5
min = 1.5

[[assertion]]
kind = "monotonic"
name = "m"
metric = "mean_latency"
mode = "gotthard"
direction = "nondecreasing"
max_inversions = 1
inversion_tolerance = 0.05
"#,
        )
        .unwrap();
        assert_eq!(f.assertions.len(), 2);
        assert!(matches!(&f.assertions[0], Assertion::Ratio { bounds, .. } if bounds.min == Some(1.5)));
    }
}
