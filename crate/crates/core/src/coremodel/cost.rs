use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Storage (matrix elements) and iteration counts of the detector and its
/// hardware core, for `n` inputs, `Ñ` hidden nodes, `m` outputs and a chunk
/// size `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub n: u64,
    pub n_hidden: u64,
    pub m: u64,
    pub k: u64,
    pub s_parameter: u64,
    pub s_input: u64,
    pub s_train: u64,
    pub s_predict: u64,
    /// Closed-form total as published for the core.
    pub s_onlad: u64,
    pub i_train: u64,
    pub i_predict: u64,
    /// Iterations spent in matrix products for a k-sample update.
    pub i_prod: u64,
    /// Iterations spent inverting the k×k matrix.
    pub i_inv: u64,
    /// `I_k = I_prod + I_inv`.
    pub i_batch_k: u64,
    /// `I_k` at k = 1.
    pub i_batch_1: u64,
}

pub fn cost_report(n: usize, n_hidden: usize, m: usize, k: usize) -> Result<CostReport> {
    if n == 0 || n_hidden == 0 || m == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "cost model needs n, hidden, m, k >= 1 (got {n}, {n_hidden}, {m}, {k})"
        )));
    }
    let (n, nh, m, k) = (n as u64, n_hidden as u64, m as u64, k as u64);
    let i_prod = 4 * k * nh * nh + k * (2 * k + 2 * m + n) * nh;
    let i_inv = k * k * k;
    Ok(CostReport {
        n,
        n_hidden: nh,
        m,
        k,
        s_parameter: nh * nh + (2 * n + 1) * nh,
        s_input: n,
        s_train: 2 * nh * nh + 4 * nh + 2 * n + 1,
        s_predict: nh + n,
        s_onlad: 5 * nh * nh + (5 * n + 4) * nh + 2 * n + 1,
        i_train: 4 * nh * nh + (3 * n + 1) * nh,
        i_predict: 2 * n * nh,
        i_prod,
        i_inv,
        i_batch_k: i_prod + i_inv,
        i_batch_1: 4 * nh * nh + (2 + 2 * m + n) * nh + 1,
    })
}

impl CostReport {
    /// Sum of the four per-module storage terms.
    pub fn component_sum(&self) -> u64 {
        self.s_parameter + self.s_input + self.s_train + self.s_predict
    }

    pub fn decomposition_holds(&self) -> bool {
        self.component_sum() == self.s_onlad
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={} hidden={} m={} k={}", self.n, self.n_hidden, self.m, self.k)?;
        let rows = [
            ("S_parameter", self.s_parameter),
            ("S_input", self.s_input),
            ("S_train", self.s_train),
            ("S_predict", self.s_predict),
            ("S_onlad", self.s_onlad),
            ("I_train", self.i_train),
            ("I_predict", self.i_predict),
            ("I_prod", self.i_prod),
            ("I_inv", self.i_inv),
            ("I_k", self.i_batch_k),
            ("I_1", self.i_batch_1),
        ];
        for (name, v) in rows {
            writeln!(f, "{name:<12} {}", group_thousands(v))?;
        }
        write!(f, "{:<12} {}", "S_sum", group_thousands(self.component_sum()))
    }
}

fn group_thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}
