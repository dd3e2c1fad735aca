//! Longitudinal binary datasets and their delimited-text file format.
//!
//! A file has `K + 2` columns per row: `K` binary outcomes, the episode
//! duration in minutes, and the standardized observation time. The tantrum
//! layout is `K = 8` (ten columns). Rows of one subject are consecutive; a new
//! subject starts whenever the duration changes or the time decreases.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MblError, Result};

/// One episode: a duration and its repeated `K`-variate binary observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    /// Duration in minutes.
    pub duration: f64,
    /// Standardized times, nondecreasing, in `[0, 1]`.
    pub times: Vec<f64>,
    /// `outcomes[j][k]` is response `k` at time `times[j]`.
    pub outcomes: Vec<Vec<u8>>,
}

impl Subject {
    pub fn n_obs(&self) -> usize {
        self.times.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MblDataset {
    pub n_responses: usize,
    pub subjects: Vec<Subject>,
}

impl MblDataset {
    /// Builds a dataset after checking every structural invariant.
    pub fn new(n_responses: usize, subjects: Vec<Subject>) -> Result<Self> {
        let ds = Self { n_responses, subjects };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_responses == 0 {
            return Err(MblError::InvalidInput("dataset needs at least one response".into()));
        }
        for (i, s) in self.subjects.iter().enumerate() {
            if s.times.is_empty() {
                return Err(MblError::InvalidInput(format!("subject {i} has no observations")));
            }
            if s.times.len() != s.outcomes.len() {
                return Err(MblError::InvalidInput(format!("subject {i}: times and outcomes differ in length")));
            }
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(MblError::InvalidInput(format!("subject {i}: duration must be positive")));
            }
            if s.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(MblError::InvalidInput(format!("subject {i}: time outside [0, 1]")));
            }
            if s.times.windows(2).any(|w| w[1] < w[0]) {
                return Err(MblError::InvalidInput(format!("subject {i}: times decrease")));
            }
            for y in &s.outcomes {
                if y.len() != self.n_responses || y.iter().any(|&v| v > 1) {
                    return Err(MblError::InvalidInput(format!("subject {i}: malformed outcome vector")));
                }
            }
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Total number of time points over all subjects.
    pub fn n_obs(&self) -> usize {
        self.subjects.iter().map(Subject::n_obs).sum()
    }

    /// Iterates `(duration, time, outcomes)` over every time point in subject order.
    pub fn observations(&self) -> impl Iterator<Item = (f64, f64, &[u8])> + '_ {
        self.subjects
            .iter()
            .flat_map(|s| s.times.iter().zip(&s.outcomes).map(move |(&t, y)| (s.duration, t, y.as_slice())))
    }

    /// Event count per response.
    pub fn event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_responses];
        for (_, _, y) in self.observations() {
            for (c, &v) in counts.iter_mut().zip(y) {
                *c += v as usize;
            }
        }
        counts
    }

    /// Comma-delimited text with a header row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for k in 1..=self.n_responses {
            let _ = write!(out, "y{k},");
        }
        out.push_str("duration,time\n");
        for (d, t, y) in self.observations() {
            for v in y {
                let _ = write!(out, "{v},");
            }
            // `{}` on f64 prints the shortest representation that round-trips
            let _ = writeln!(out, "{d},{t}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Parses whitespace- or comma-delimited rows; a non-numeric first row is
    /// treated as a header. Row numbers in errors are one-based file lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n_cols: Option<usize> = None;
        let mut subjects: Vec<Subject> = Vec::new();
        let mut seen_data = false;

        for (line_no, line) in text.lines().enumerate() {
            let row = line_no + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if !seen_data && n_cols.is_none() => {
                    n_cols = Some(fields.len());
                    continue;
                }
                Err(_) => return Err(parse_err(row, "non-numeric field")),
            };
            seen_data = true;
            let expected = *n_cols.get_or_insert(values.len());
            if values.len() != expected {
                return Err(parse_err(row, &format!("expected {expected} columns, found {}", values.len())));
            }
            if expected < 3 {
                return Err(parse_err(row, "need at least one outcome column plus duration and time"));
            }
            let k = expected - 2;
            let mut y = Vec::with_capacity(k);
            for &v in &values[..k] {
                if v == 0.0 {
                    y.push(0);
                } else if v == 1.0 {
                    y.push(1);
                } else {
                    return Err(parse_err(row, &format!("outcome {v} is not 0 or 1")));
                }
            }
            let (d, t) = (values[k], values[k + 1]);
            if !(d.is_finite() && d > 0.0) {
                return Err(parse_err(row, &format!("duration {d} must be positive")));
            }
            if !(0.0..=1.0).contains(&t) {
                return Err(parse_err(row, &format!("time {t} outside [0, 1]")));
            }
            match subjects.last_mut() {
                Some(s) if s.duration == d && t >= *s.times.last().unwrap_or(&0.0) => {
                    s.times.push(t);
                    s.outcomes.push(y);
                }
                _ => subjects.push(Subject { duration: d, times: vec![t], outcomes: vec![y] }),
            }
        }

        let k = match n_cols {
            Some(c) if seen_data => c - 2,
            _ => return Err(MblError::InvalidInput("file contains no data rows".into())),
        };
        MblDataset::new(k, subjects)
    }

    /// True when writing and re-reading reproduces the same subject partition,
    /// i.e. every pair of neighbouring subjects is separated by a duration
    /// change or a time reset.
    pub fn has_detectable_boundaries(&self) -> bool {
        self.subjects
            .windows(2)
            .all(|w| w[0].duration != w[1].duration || w[1].times[0] < *w[0].times.last().expect("nonempty subject"))
    }
}

fn parse_err(row: usize, message: &str) -> MblError {
    MblError::Parse { row, message: message.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_subject() {
        let ds = MblDataset::parse("1 0 0 0 0 0 0 0 2 0.5\n0 1 0 0 0 0 0 1 2 1.0\n").unwrap();
        assert_eq!(ds.n_responses, 8);
        assert_eq!(ds.n_subjects(), 1);
        assert_eq!(ds.subjects[0].n_obs(), 2);
        assert_eq!(ds.subjects[0].outcomes[1], vec![0, 1, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn time_reset_starts_new_subject() {
        let ds = MblDataset::parse("1,0,3,0.5\n0,0,3,1.0\n1,1,3,0.5\n").unwrap();
        assert_eq!(ds.n_responses, 2);
        assert_eq!(ds.n_subjects(), 2);
        assert_eq!(ds.subjects[1].times, vec![0.5]);
    }

    #[test]
    fn duration_change_starts_new_subject() {
        let ds = MblDataset::parse("y1,duration,time\n1,1,0.5\n0,1.5,0.6\n").unwrap();
        assert_eq!(ds.n_subjects(), 2);
    }

    #[test]
    fn parse_errors_carry_row_numbers() {
        let cases = [
            ("1,0,2,0.5\n2,0,2,0.6\n", 2),
            ("1,0,2,0.5\n1,0,2,1.5\n", 2),
            ("1,0,0,0.5\n", 1),
            ("1,0,2,0.5\n1,0,2\n", 2),
            ("h1,h2,h3,h4\n1,0,2,0.5\n1,x,2,0.6\n", 3),
        ];
        for (text, row) in cases {
            match MblDataset::parse(text) {
                Err(MblError::Parse { row: r, .. }) => assert_eq!(r, row, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
        assert!(MblDataset::parse("").is_err());
    }

    #[test]
    fn validate_rejects_bad_subjects() {
        let good = Subject { duration: 1.0, times: vec![0.5], outcomes: vec![vec![1]] };
        assert!(MblDataset::new(1, vec![good.clone()]).is_ok());
        let mut s = good.clone();
        s.times.clear();
        s.outcomes.clear();
        assert!(MblDataset::new(1, vec![s]).is_err());
        let mut s = good.clone();
        s.outcomes[0][0] = 2;
        assert!(MblDataset::new(1, vec![s]).is_err());
        let mut s = good;
        s.duration = 0.0;
        assert!(MblDataset::new(1, vec![s]).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = MblDataset> {
        (1usize..4, prop::collection::vec((1usize..5, 0.5f64..40.0, any::<u64>()), 1..12)).prop_map(|(k, subs)| {
            let subjects = subs
                .into_iter()
                .map(|(n, d, bits)| {
                    // strictly increasing times in (0, 1], so every reset is detectable
                    let times: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
                    let outcomes =
                        (0..n).map(|j| (0..k).map(|kk| ((bits >> ((j * k + kk) % 64)) & 1) as u8).collect()).collect();
                    Subject { duration: d, times, outcomes }
                })
                .collect::<Vec<_>>();
            MblDataset::new(k, subjects).unwrap()
        })
    }

    proptest! {
        #[test]
        fn save_load_roundtrip(ds in arb_dataset()) {
            prop_assume!(ds.has_detectable_boundaries());
            let back = MblDataset::parse(&ds.to_csv_string()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
