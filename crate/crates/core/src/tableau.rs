//! Butcher tableaux and their flat parameter vectors.
//!
//! Explicit tableaux are strictly lower triangular. The flat layout used by the
//! optimizer is the free part of `a` in row-major order followed by `w`:
//!
//! * explicit: `a21, a31, a32, a41, ..., a_{s,s-1}, w1, ..., ws` (length `s(s+1)/2`)
//! * implicit: `a11, a12, ..., a_{s,s}, w1, ..., ws` (length `s(s+1)`)
//!
//! The nodes `c` are always the row sums of `a` and are never free.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    stages: usize,
    /// Row-major `s x s`.
    a: Vec<f64>,
    w: Vec<f64>,
    c: Vec<f64>,
    explicit: bool,
}

/// Length of the flat parameter vector for `stages` stages.
pub fn parameter_count(stages: usize, explicit: bool) -> usize {
    if explicit {
        stages * (stages + 1) / 2
    } else {
        stages * (stages + 1)
    }
}

/// Inverse of [`parameter_count`] for explicit layouts.
pub fn explicit_stages_for(len: usize) -> Option<usize> {
    (1..64).find(|&s| parameter_count(s, true) == len)
}

impl ButcherTableau {
    /// Builds a tableau from full rows of `a` and the weights.
    ///
    /// For explicit tableaux every entry on or above the diagonal must be zero.
    pub fn new(a: Vec<Vec<f64>>, w: Vec<f64>, explicit: bool) -> Result<Self> {
        let s = w.len();
        if s == 0 {
            return Err(Error::InvalidTableau("a tableau needs at least one stage".into()));
        }
        if a.len() != s {
            return Err(Error::Dimension {
                context: "tableau rows",
                expected: s,
                found: a.len(),
            });
        }
        let mut flat = Vec::with_capacity(s * s);
        for (i, row) in a.into_iter().enumerate() {
            if row.len() != s {
                return Err(Error::Dimension {
                    context: "tableau row length",
                    expected: s,
                    found: row.len(),
                });
            }
            if explicit {
                if let Some(j) = (i..s).find(|&j| row[j] != 0.0) {
                    return Err(Error::InvalidTableau(format!(
                        "explicit tableau has nonzero a[{}][{}] = {}",
                        i + 1,
                        j + 1,
                        row[j]
                    )));
                }
            }
            flat.extend(row);
        }
        if flat.iter().chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTableau("non-finite coefficient".into()));
        }
        Ok(Self::from_parts(s, flat, w, explicit))
    }

    fn from_parts(stages: usize, a: Vec<f64>, w: Vec<f64>, explicit: bool) -> Self {
        let c = a.chunks(stages).map(|row| row.iter().sum()).collect();
        ButcherTableau {
            stages,
            a,
            w,
            c,
            explicit,
        }
    }

    pub fn from_vector(x: &[f64], stages: usize, explicit: bool) -> Result<Self> {
        let expected = parameter_count(stages, explicit);
        if stages == 0 || x.len() != expected {
            return Err(Error::Dimension {
                context: "tableau parameter vector",
                expected,
                found: x.len(),
            });
        }
        let s = stages;
        let mut a = vec![0.0; s * s];
        let n_a = expected - s;
        if explicit {
            let mut k = 0;
            for i in 1..s {
                for j in 0..i {
                    a[i * s + j] = x[k];
                    k += 1;
                }
            }
        } else {
            a.copy_from_slice(&x[..n_a]);
        }
        Ok(Self::from_parts(s, a, x[n_a..].to_vec(), explicit))
    }

    /// Reads an explicit method listed in the upper-triangular convention,
    /// where `a[i][j]` is nonzero only for `i < j` and stage `s` is evaluated
    /// first. `x` holds `a12, a13, ..., a1s, a23, ..., a_{s-1,s}, w1, ..., ws`.
    /// The result is the same method with its stages renumbered in evaluation
    /// order, which makes it strictly lower triangular.
    pub fn from_upper_explicit_vector(x: &[f64], stages: usize) -> Result<Self> {
        let expected = parameter_count(stages, true);
        if stages == 0 || x.len() != expected {
            return Err(Error::Dimension {
                context: "upper-triangular parameter vector",
                expected,
                found: x.len(),
            });
        }
        let s = stages;
        let mut a = vec![0.0; s * s];
        let mut k = 0;
        for i in 0..s {
            for j in (i + 1)..s {
                a[(s - 1 - i) * s + (s - 1 - j)] = x[k];
                k += 1;
            }
        }
        let w = x[k..].iter().rev().copied().collect();
        Ok(Self::from_parts(s, a, w, true))
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let s = self.stages;
        let mut x = Vec::with_capacity(parameter_count(s, self.explicit));
        if self.explicit {
            for i in 1..s {
                x.extend_from_slice(&self.a[i * s..i * s + i]);
            }
        } else {
            x.extend_from_slice(&self.a);
        }
        x.extend_from_slice(&self.w);
        x
    }

    /// Column labels matching [`to_vector`](Self::to_vector), e.g. `a21`, `w1`.
    pub fn parameter_labels(stages: usize, explicit: bool) -> Vec<String> {
        let mut labels = Vec::new();
        for i in 0..stages {
            let cols = if explicit { 0..i } else { 0..stages };
            for j in cols {
                labels.push(format!("a{}_{}", i + 1, j + 1));
            }
        }
        labels.extend((1..=stages).map(|i| format!("w{i}")));
        labels
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stages + j]
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.stages..(i + 1) * self.stages]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn nodes(&self) -> &[f64] {
        &self.c
    }

    /// Full rows of `a`, zeros included.
    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.stages).map(<[f64]>::to_vec).collect()
    }

    pub fn classical_rk4() -> Self {
        Self::new(
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            true,
        )
        .expect("valid tableau")
    }

    pub fn forward_euler() -> Self {
        Self::new(vec![vec![0.0]], vec![1.0], true).expect("valid tableau")
    }

    pub fn heun() -> Self {
        Self::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5], true)
            .expect("valid tableau")
    }

    pub fn explicit_midpoint() -> Self {
        Self::new(vec![vec![0.0, 0.0], vec![0.5, 0.0]], vec![0.0, 1.0], true)
            .expect("valid tableau")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path, source),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableauFile =
            serde_json::from_str(text).map_err(|e| Error::json("<tableau>", e))?;
        if file.w.len() != file.stages {
            return Err(Error::Dimension {
                context: "tableau weights",
                expected: file.stages,
                found: file.w.len(),
            });
        }
        Self::new(file.a, file.w, file.explicit)
    }

    pub fn to_json(&self) -> String {
        let file = TableauFile {
            stages: self.stages,
            explicit: self.explicit,
            a: self.a_rows(),
            w: self.w.clone(),
            c: None,
        };
        let mut text = serde_json::to_string_pretty(&file).expect("serializable");
        text.push('\n');
        text
    }
}

/// On-disk layout. A stored `c` is accepted and ignored.
#[derive(Serialize, Deserialize)]
struct TableauFile {
    stages: usize,
    explicit: bool,
    a: Vec<Vec<f64>>,
    w: Vec<f64>,
    #[serde(default, skip_serializing)]
    #[allow(dead_code)]
    c: Option<Vec<f64>>,
}
