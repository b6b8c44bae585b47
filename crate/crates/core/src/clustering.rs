//! Affinity propagation over a dense similarity matrix.
//!
//! Responsibilities and availabilities are exchanged with damping until the
//! set of exemplar candidates `{i : a(i,i) + r(i,i) > 0}` stops changing.
//! Ties break towards the lowest index everywhere; no noise is added to the
//! similarities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `q × q` similarities; the diagonal holds the preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    q: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(q: usize, data: Vec<f64>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Invalid(
                "similarity matrix needs at least one point".into(),
            ));
        }
        if data.len() != q * q {
            return Err(Error::Invalid(format!(
                "similarity matrix has {} entries, expected {}",
                data.len(),
                q * q
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite similarity at ({}, {})",
                i / q,
                i % q
            )));
        }
        Ok(Self { q, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != q) {
            return Err(Error::Invalid(format!(
                "similarity row {i} has {} entries, expected {q}",
                r.len()
            )));
        }
        Self::new(q, rows.into_iter().flatten().collect())
    }

    pub fn len(&self) -> usize {
        self.q
    }

    pub fn is_empty(&self) -> bool {
        self.q == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.q + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.q + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.q..(i + 1) * self.q]
    }

    pub fn preferences(&self) -> Vec<f64> {
        (0..self.q).map(|i| self.get(i, i)).collect()
    }

    pub fn set_preferences(&mut self, prefs: &[f64]) {
        assert_eq!(prefs.len(), self.q);
        for (i, p) in prefs.iter().enumerate() {
            self.set(i, i, *p);
        }
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        (0..self.q)
            .flat_map(|i| (0..self.q).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }

    /// `Σ_i S(i, c_i)`; exemplars contribute their preference.
    pub fn net_similarity(&self, assignments: &[usize]) -> f64 {
        assignments
            .iter()
            .enumerate()
            .map(|(i, &c)| self.get(i, c))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApcParams {
    /// Weight on the previous message, in `[0.5, 1)`.
    pub damping: f64,
    pub max_iter: usize,
    /// Iterations the exemplar set must stay unchanged to declare convergence.
    pub convergence_window: usize,
    /// Update rows/columns on the rayon pool.
    pub parallel: bool,
}

impl Default for ApcParams {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iter: 200,
            convergence_window: 15,
            parallel: false,
        }
    }
}

impl ApcParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "damping must lie in [0.5, 1), got {}",
                self.damping
            )));
        }
        if self.max_iter == 0 || self.convergence_window == 0 {
            return Err(Error::Config(
                "max_iter and convergence_window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Responsibility and availability matrices, row-major `q × q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Messages {
    pub q: usize,
    pub r: Vec<f64>,
    pub a: Vec<f64>,
}

impl Messages {
    pub fn zeros(q: usize) -> Self {
        Self {
            q,
            r: vec![0.0; q * q],
            a: vec![0.0; q * q],
        }
    }

    /// `a(i,i) + r(i,i)` per point.
    pub fn self_evidence(&self) -> Vec<f64> {
        (0..self.q)
            .map(|i| self.a[i * self.q + i] + self.r[i * self.q + i])
            .collect()
    }

    pub fn candidates(&self) -> Vec<usize> {
        self.self_evidence()
            .iter()
            .enumerate()
            .filter(|(_, e)| **e > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

fn responsibility_row(s: &[f64], a: &[f64], r_old: &[f64], damping: f64, out: &mut [f64]) {
    // Largest and second-largest of s + a, for "max over k != j".
    let (mut first, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, usize::MAX);
    for (k, (sv, av)) in s.iter().zip(a).enumerate() {
        let v = sv + av;
        if v > first {
            second = first;
            first = v;
            arg = k;
        } else if v > second {
            second = v;
        }
    }
    for j in 0..s.len() {
        let competitor = if j == arg { second } else { first };
        let update = s[j] - competitor;
        out[j] = damping * r_old[j] + (1.0 - damping) * update;
    }
}

fn availability_column(
    r: &[f64],
    a_old: &[f64],
    q: usize,
    j: usize,
    damping: f64,
    out: &mut [f64],
) {
    let positive_sum: f64 = (0..q)
        .filter(|&k| k != j)
        .map(|k| r[k * q + j].max(0.0))
        .sum();
    let rjj = r[j * q + j];
    for i in 0..q {
        let update = if i == j {
            positive_sum
        } else {
            (rjj + positive_sum - r[i * q + j].max(0.0)).min(0.0)
        };
        out[i] = damping * a_old[i * q + j] + (1.0 - damping) * update;
    }
}

/// One damped sweep: responsibilities from the current availabilities, then
/// availabilities from the new responsibilities.
pub fn step(s: &SimilarityMatrix, msgs: &Messages, damping: f64, parallel: bool) -> Messages {
    let q = s.len();
    assert_eq!(msgs.q, q);
    let mut r = vec![0.0; q * q];
    if parallel {
        r.par_chunks_mut(q).enumerate().for_each(|(i, out)| {
            let rows = i * q..(i + 1) * q;
            responsibility_row(s.row(i), &msgs.a[rows.clone()], &msgs.r[rows], damping, out)
        });
    } else {
        for (i, out) in r.chunks_mut(q).enumerate() {
            let rows = i * q..(i + 1) * q;
            responsibility_row(s.row(i), &msgs.a[rows.clone()], &msgs.r[rows], damping, out);
        }
    }

    // Columns are computed contiguously and transposed back.
    let mut columns = vec![0.0; q * q];
    if parallel {
        columns
            .par_chunks_mut(q)
            .enumerate()
            .for_each(|(j, out)| availability_column(&r, &msgs.a, q, j, damping, out));
    } else {
        for (j, out) in columns.chunks_mut(q).enumerate() {
            availability_column(&r, &msgs.a, q, j, damping, out);
        }
    }
    let mut a = vec![0.0; q * q];
    for j in 0..q {
        for i in 0..q {
            a[i * q + j] = columns[j * q + i];
        }
    }
    Messages { q, r, a }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Exemplar index chosen by each point.
    pub assignments: Vec<usize>,
    /// Sorted exemplar indices.
    pub exemplars: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Exemplars self-assign; every other point picks its most similar exemplar.
pub fn assign(s: &SimilarityMatrix, exemplars: &[usize]) -> Vec<usize> {
    (0..s.len())
        .map(|i| {
            if exemplars.binary_search(&i).is_ok() {
                return i;
            }
            let mut best = exemplars[0];
            for &e in &exemplars[1..] {
                if s.get(i, e) > s.get(i, best) {
                    best = e;
                }
            }
            best
        })
        .collect()
}

pub fn run(s: &SimilarityMatrix, params: &ApcParams) -> Result<ClusterResult> {
    params.validate()?;
    let q = s.len();
    if q == 1 {
        return Ok(ClusterResult {
            assignments: vec![0],
            exemplars: vec![0],
            iterations: 0,
            converged: true,
        });
    }

    let work = with_index_tie_break(s);
    let s = &work;
    let mut msgs = Messages::zeros(q);
    let mut current: Option<Vec<usize>> = None;
    let mut unchanged = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        msgs = step(s, &msgs, params.damping, params.parallel);
        iterations += 1;
        let candidates = msgs.candidates();
        if current.as_ref() == Some(&candidates) {
            unchanged += 1;
        } else {
            unchanged = 0;
            current = Some(candidates);
        }
        if unchanged >= params.convergence_window {
            converged = true;
            break;
        }
    }

    let mut exemplars = current.unwrap_or_default();
    if exemplars.is_empty() {
        // No point has positive self-evidence (e.g. perfectly symmetric inputs):
        // fall back to the single strongest candidate.
        let evidence = msgs.self_evidence();
        let mut best = 0;
        for (i, e) in evidence.iter().enumerate() {
            if *e > evidence[best] {
                best = i;
            }
        }
        exemplars.push(best);
    }
    let assignments = assign(s, &exemplars);
    Ok(ClusterResult {
        assignments,
        exemplars,
        iterations,
        converged,
    })
}

/// Relative size of the preference offset that orders exact ties by index.
const TIE_BREAK: f64 = 1e-9;

/// Lowers preference `i` by `i · TIE_BREAK · spread` so that symmetric
/// configurations resolve towards the lowest index instead of oscillating.
fn with_index_tie_break(s: &SimilarityMatrix) -> SimilarityMatrix {
    let (lo, hi) = s
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let spread = if hi > lo { hi - lo } else { 1.0 };
    let mut out = s.clone();
    for i in 0..s.q {
        out.set(i, i, s.get(i, i) - i as f64 * TIE_BREAK * spread);
    }
    out
}

/// Median (mean of the middle pair for even lengths); `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
    }
}
