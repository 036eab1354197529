//! Observed and simulated opinion data.
//!
//! [`OpinionSeries`] is the aligned on-disk form: row `t` holds the human
//! opinions `x(t)` and target actions `u(t)`. [`Trajectory`] is the paired
//! learning window `(x(k+1), u(k)), …, (x(k+l), u(k+l-1))`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Slack allowed on the `[-1, 1]` bound for values read from files.
const RANGE_SLACK: f64 = 1e-12;

fn check_range(what: &'static str, rows: &[Vec<f64>]) -> Result<(), DynamicsError> {
    for (t, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(v.abs() <= 1.0 + RANGE_SLACK) {
                return Err(DynamicsError::OutOfRange {
                    what,
                    row: t,
                    column: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

fn check_width(what: &'static str, rows: &[Vec<f64>], width: usize) -> Result<(), DynamicsError> {
    match rows.iter().find(|r| r.len() != width) {
        Some(r) => Err(DynamicsError::DimensionMismatch {
            what,
            expected: width,
            got: r.len(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Time `k` of the first action.
    pub start_time: usize,
    n_humans: usize,
    n_targets: usize,
    /// Rows `x(k+1) ..= x(k+l)`.
    x: Vec<Vec<f64>>,
    /// Rows `u(k) ..= u(k+l-1)`.
    u: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(
        start_time: usize,
        n_humans: usize,
        n_targets: usize,
        x: Vec<Vec<f64>>,
        u: Vec<Vec<f64>>,
    ) -> Result<Self, DynamicsError> {
        if x.len() != u.len() {
            return Err(DynamicsError::WindowMismatch {
                expected: u.len(),
                got: x.len(),
            });
        }
        check_width("opinion row", &x, n_humans)?;
        check_width("action row", &u, n_targets)?;
        check_range("opinion", &x)?;
        check_range("action", &u)?;
        Ok(Self {
            start_time,
            n_humans,
            n_targets,
            x,
            u,
        })
    }

    pub fn empty(start_time: usize, n_humans: usize, n_targets: usize) -> Self {
        Self {
            start_time,
            n_humans,
            n_targets,
            x: Vec::new(),
            u: Vec::new(),
        }
    }

    /// Window length.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_humans(&self) -> usize {
        self.n_humans
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn opinions(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub(crate) fn push(&mut self, x_next: Vec<f64>, u_now: Vec<f64>) {
        self.x.push(x_next);
        self.u.push(u_now);
    }
}

/// Aligned opinion/action series, one row per sampling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionSeries {
    pub humans: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    n_humans: usize,
    n_targets: usize,
}

impl OpinionSeries {
    pub fn new(
        n_humans: usize,
        n_targets: usize,
        humans: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
    ) -> Result<Self, DynamicsError> {
        if humans.len() != actions.len() {
            return Err(DynamicsError::DimensionMismatch {
                what: "series rows",
                expected: humans.len(),
                got: actions.len(),
            });
        }
        check_width("opinion row", &humans, n_humans)?;
        check_width("action row", &actions, n_targets)?;
        check_range("opinion", &humans)?;
        check_range("action", &actions)?;
        Ok(Self {
            humans,
            actions,
            n_humans,
            n_targets,
        })
    }

    pub fn len(&self) -> usize {
        self.humans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.humans.is_empty()
    }

    pub fn n_humans(&self) -> usize {
        self.n_humans
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    /// CSV with header `t,x1..xH,u1..uT`; values carry 17 significant
    /// digits, so a write/read cycle is exact.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.n_humans {
            out.push_str(&format!(",x{j}"));
        }
        for j in 1..=self.n_targets {
            out.push_str(&format!(",u{j}"));
        }
        out.push('\n');
        for (t, (x, u)) in self.humans.iter().zip(&self.actions).enumerate() {
            out.push_str(&t.to_string());
            for v in x.iter().chain(u) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DynamicsError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|source| DynamicsError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Parses the CSV form. Column counts come from the header; the `t`
    /// column must count up from 0.
    pub fn from_csv_str(text: &str) -> Result<Self, DynamicsError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| DynamicsError::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let (n_humans, n_targets) = parse_header(&headers)?;

        let mut humans = Vec::new();
        let mut actions = Vec::new();
        for (t, record) in reader.records().enumerate() {
            let line = t + 2;
            let record = record.map_err(|e| DynamicsError::Csv {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 1 + n_humans + n_targets {
                return Err(DynamicsError::Csv {
                    line,
                    message: format!(
                        "expected {} fields, got {}",
                        1 + n_humans + n_targets,
                        record.len()
                    ),
                });
            }
            let stamp: usize = record[0].parse().map_err(|_| DynamicsError::Csv {
                line,
                message: format!("invalid time `{}`", &record[0]),
            })?;
            if stamp != t {
                return Err(DynamicsError::Csv {
                    line,
                    message: format!("expected t={t}, got t={stamp}"),
                });
            }
            let mut values = Vec::with_capacity(n_humans + n_targets);
            for field in record.iter().skip(1) {
                values.push(field.parse::<f64>().map_err(|_| DynamicsError::Csv {
                    line,
                    message: format!("invalid number `{field}`"),
                })?);
            }
            actions.push(values.split_off(n_humans));
            humans.push(values);
        }
        Self::new(n_humans, n_targets, humans, actions)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, DynamicsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DynamicsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }
}

fn parse_header(headers: &csv::StringRecord) -> Result<(usize, usize), DynamicsError> {
    let bad = |message: String| DynamicsError::Csv { line: 1, message };
    let mut fields = headers.iter();
    if fields.next() != Some("t") {
        return Err(bad("first column must be `t`".into()));
    }
    let mut n_humans = 0;
    let mut n_targets = 0;
    for name in fields {
        let (prefix, rest) = name.split_at(name.len().min(1));
        let index: usize = rest
            .parse()
            .map_err(|_| bad(format!("unexpected column `{name}`")))?;
        match prefix {
            "x" if n_targets == 0 && index == n_humans + 1 => n_humans += 1,
            "u" if index == n_targets + 1 => n_targets += 1,
            _ => return Err(bad(format!("unexpected column `{name}`"))),
        }
    }
    Ok((n_humans, n_targets))
}
