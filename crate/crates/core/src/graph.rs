//! Directed influence network with a human/target partition.
//!
//! Individuals are indexed `0..n`. Humans occupy the leading block
//! `0..n_humans` and targets the trailing block, so stacked opinion and action
//! vectors line up with graph indices without any permutation.
//!
//! An edge `(i, j)` means *j influences i*: it contributes the weight `c_ij`
//! to row `i` of the update.
//!
//! # File format
//!
//! ```text
//! # comment
//! n=9 targets=8,9
//! 1 8
//! 1 2
//! ```
//!
//! Indices in files are 1-based. The header lists the target indices, which
//! must form the trailing block `n-|T|+1..=n`.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: index {index} out of range for n={n}")]
    IndexOutOfRange { line: usize, index: usize, n: usize },
    #[error("line {line}: index {index} listed twice in the target partition")]
    PartitionOverlap { line: usize, index: usize },
    #[error("targets must be the trailing index block {expected:?}, got {got:?}")]
    NonContiguousTargets {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("individual index {index} is not valid for a graph of {n} nodes")]
    InvalidIndex { index: usize, n: usize },
    #[error("missing header line `n=<int> targets=<list>`")]
    MissingHeader,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Social network with humans first and targets last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    n: usize,
    n_humans: usize,
    /// `in_adj[i]` holds every `j` with `(i, j)` in the edge set, ascending.
    in_adj: Vec<Vec<usize>>,
}

impl SocialGraph {
    /// Builds a graph from 0-based `(i, j)` pairs ("j influences i").
    pub fn new(
        n: usize,
        n_targets: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if n_targets > n {
            return Err(GraphError::InvalidIndex {
                index: n_targets,
                n,
            });
        }
        let mut in_adj = vec![Vec::new(); n];
        for (i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(GraphError::InvalidIndex { index, n });
                }
            }
            in_adj[i].push(j);
        }
        for row in &mut in_adj {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self {
            n,
            n_humans: n - n_targets,
            in_adj,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.n
    }

    pub fn n_humans(&self) -> usize {
        self.n_humans
    }

    pub fn n_targets(&self) -> usize {
        self.n - self.n_humans
    }

    pub fn humans(&self) -> std::ops::Range<usize> {
        0..self.n_humans
    }

    pub fn targets(&self) -> std::ops::Range<usize> {
        self.n_humans..self.n
    }

    pub fn is_target(&self, i: usize) -> bool {
        i >= self.n_humans && i < self.n
    }

    /// Sorted in-neighbours of `i`: everyone who influences `i`.
    pub fn in_neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.in_adj
            .get(i)
            .map(Vec::as_slice)
            .ok_or(GraphError::InvalidIndex {
                index: i,
                n: self.n,
            })
    }

    /// Iterates the edge set in canonical `(i, j)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.in_adj
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.in_adj.iter().map(Vec::len).sum()
    }

    /// Parses the edge-list text format.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut header: Option<(usize, Vec<usize>)> = None;
        let mut edges = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            match &header {
                None => header = Some(parse_header(line, line_no)?),
                Some((n, _)) => {
                    let mut parts = line.split_whitespace();
                    let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next())
                    else {
                        return Err(GraphError::Parse {
                            line: line_no,
                            message: format!("expected `i j`, got `{line}`"),
                        });
                    };
                    let i = parse_index(a, line_no, *n)?;
                    let j = parse_index(b, line_no, *n)?;
                    edges.push((i - 1, j - 1));
                }
            }
        }

        let (n, targets) = header.ok_or(GraphError::MissingHeader)?;
        let n_targets = targets.len();
        let expected: Vec<usize> = (n - n_targets + 1..=n).collect();
        let mut sorted = targets.clone();
        sorted.sort_unstable();
        if sorted != expected {
            return Err(GraphError::NonContiguousTargets {
                expected,
                got: targets,
            });
        }
        Self::new(n, n_targets, edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Canonical text form: header, then edges sorted by `(i, j)`, 1-based.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        let targets: Vec<String> = self.targets().map(|t| (t + 1).to_string()).collect();
        let _ = writeln!(out, "n={} targets={}", self.n, targets.join(","));
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{} {}", i + 1, j + 1);
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_string()).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, Vec<usize>), GraphError> {
    let mut n = None;
    let mut targets = None;
    for token in line.split_whitespace() {
        let (key, value) = token.split_once('=').ok_or_else(|| GraphError::Parse {
            line: line_no,
            message: format!("expected `key=value`, got `{token}`"),
        })?;
        match key {
            "n" => {
                let parsed = value.parse::<usize>().map_err(|_| GraphError::Parse {
                    line: line_no,
                    message: format!("invalid node count `{value}`"),
                })?;
                if parsed == 0 {
                    return Err(GraphError::Parse {
                        line: line_no,
                        message: "graph needs at least one node".into(),
                    });
                }
                n = Some(parsed);
            }
            "targets" => targets = Some(value),
            other => {
                return Err(GraphError::Parse {
                    line: line_no,
                    message: format!("unknown header key `{other}`"),
                })
            }
        }
    }
    let n = n.ok_or_else(|| GraphError::Parse {
        line: line_no,
        message: "header is missing `n=`".into(),
    })?;
    let targets = targets.ok_or_else(|| GraphError::Parse {
        line: line_no,
        message: "header is missing `targets=`".into(),
    })?;

    let mut list = Vec::new();
    for item in targets.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let index = parse_index(item, line_no, n)?;
        if list.contains(&index) {
            return Err(GraphError::PartitionOverlap {
                line: line_no,
                index,
            });
        }
        list.push(index);
    }
    Ok((n, list))
}

fn parse_index(token: &str, line_no: usize, n: usize) -> Result<usize, GraphError> {
    let index = token.parse::<usize>().map_err(|_| GraphError::Parse {
        line: line_no,
        message: format!("invalid index `{token}`"),
    })?;
    if index == 0 || index > n {
        return Err(GraphError::IndexOutOfRange {
            line: line_no,
            index,
            n,
        });
    }
    Ok(index)
}
