//! Online sequential extreme learning machine.
//!
//! The input weight `alpha` and bias `b` are drawn once from a seeded
//! generator and never touched again. Learning only moves the output weight
//! `beta` and the covariance-like state `p`, which tracks `(Σ HᵀH)⁻¹` over
//! everything seen so far (weighted by the forgetting factor when one is used).
//!
//! Three sequential update rules are provided:
//!
//! * [`OselmModel::update_chunk`]: the general k-row recursive least squares
//!   step, which inverts a `k x k` matrix.
//! * [`OselmModel::update_rank1`]: the batch-size-1 specialisation where that
//!   inversion collapses to a scalar division.
//! * [`OselmModel::update_forget`]: the rank-1 step applied to `p / ff²`, which
//!   exponentially down-weights older samples.
//!
//! FP-ELM (forgetting plus L2 regularisation, one `Ñ x Ñ` inversion per step)
//! is available on the same type through [`OselmModel::fpelm_init`] and
//! [`OselmModel::fpelm_update`] and serves as the baseline.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Activation, Matrix};

/// Range of the uniform distribution used for `alpha` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitRange {
    pub low: f64,
    pub high: f64,
}

impl InitRange {
    pub const UNIT: InitRange = InitRange { low: 0.0, high: 1.0 };
    pub const SYMMETRIC: InitRange = InitRange { low: -1.0, high: 1.0 };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidArgument(format!(
                "init range [{low}, {high}] must be finite with low < high"
            )));
        }
        Ok(InitRange { low, high })
    }
}

impl Default for InitRange {
    fn default() -> Self {
        InitRange::UNIT
    }
}

impl std::str::FromStr for InitRange {
    type Err = Error;

    /// Parses `low,high`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("init range `{s}` is not `low,high`"));
        let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        InitRange::new(lo, hi)
    }
}

/// Outcome of one sequential update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateStatus {
    Trained,
    /// The update denominator was (near) singular; the model is untouched.
    SkippedSingular,
}

impl UpdateStatus {
    pub fn trained(self) -> bool {
        self == UpdateStatus::Trained
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OselmModel {
    n: usize,
    n_hidden: usize,
    m: usize,
    activation: Activation,
    alpha: Matrix,
    b: Matrix,
    beta: Matrix,
    p: Matrix,
    initialized: bool,
    /// FP-ELM Gram matrix `K`; only present after `fpelm_init`.
    gram: Option<Matrix>,
}

impl OselmModel {
    /// Random model with `alpha`, `b` drawn from `Uniform[0, 1]`.
    pub fn new_random(n: usize, n_hidden: usize, m: usize, activation: Activation, seed: u64) -> Result<Self> {
        Self::with_init_range(n, n_hidden, m, activation, InitRange::UNIT, seed)
    }

    pub fn with_init_range(
        n: usize,
        n_hidden: usize,
        m: usize,
        activation: Activation,
        range: InitRange,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || n_hidden == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive (n={n}, hidden={n_hidden}, m={m})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = Matrix::random_uniform(n, n_hidden, range.low, range.high, &mut rng);
        let b = Matrix::random_uniform(1, n_hidden, range.low, range.high, &mut rng);
        Ok(OselmModel {
            n,
            n_hidden,
            m,
            activation,
            alpha,
            b,
            beta: Matrix::zeros(n_hidden, m),
            p: Matrix::zeros(n_hidden, n_hidden),
            initialized: false,
            gram: None,
        })
    }

    /// Assembles a model from explicit parameters. Shapes are derived from
    /// `alpha` (`n x Ñ`) and `beta` (`Ñ x m`).
    pub fn from_parts(
        activation: Activation,
        alpha: Matrix,
        b: Matrix,
        beta: Matrix,
        p: Matrix,
        initialized: bool,
    ) -> Result<Self> {
        let (n, n_hidden) = alpha.shape();
        let m = beta.cols();
        if n == 0 || n_hidden == 0 || m == 0 {
            return Err(Error::InvalidArgument("empty parameter matrices".into()));
        }
        let expect = |name: &'static str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::dims(name, format!("{}x{}", want.0, want.1), format!("{}x{}", got.0, got.1)))
            }
        };
        expect("from_parts(b)", b.shape(), (1, n_hidden))?;
        expect("from_parts(beta)", beta.shape(), (n_hidden, m))?;
        expect("from_parts(p)", p.shape(), (n_hidden, n_hidden))?;
        Ok(OselmModel {
            n,
            n_hidden,
            m,
            activation,
            alpha,
            b,
            beta,
            p,
            initialized,
            gram: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    pub fn bias(&self) -> &Matrix {
        &self.b
    }

    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn gram(&self) -> Option<&Matrix> {
        self.gram.as_ref()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Overwrites `p`. Used to construct degenerate states in tests and by
    /// the deserializer.
    pub fn set_p(&mut self, p: Matrix) -> Result<()> {
        if p.shape() != (self.n_hidden, self.n_hidden) {
            return Err(Error::dims("set_p", format!("{0}x{0}", self.n_hidden), format!("{:?}", p.shape())));
        }
        self.p = p;
        Ok(())
    }

    pub fn set_beta(&mut self, beta: Matrix) -> Result<()> {
        if beta.shape() != (self.n_hidden, self.m) {
            return Err(Error::dims("set_beta", format!("{}x{}", self.n_hidden, self.m), format!("{:?}", beta.shape())));
        }
        self.beta = beta;
        Ok(())
    }

    pub(crate) fn set_gram(&mut self, gram: Option<Matrix>) {
        self.gram = gram;
    }

    /// `H = G(x·alpha + b)` with the bias broadcast over rows.
    pub fn hidden(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n {
            return Err(Error::dims("hidden", format!("{} input columns", self.n), x.cols()));
        }
        let mut h = x.matmul(&self.alpha)?;
        let b = self.b.as_slice();
        for r in 0..h.rows() {
            for (v, &bias) in h.row_mut(r).iter_mut().zip(b) {
                *v = self.activation.apply(*v + bias);
            }
        }
        Ok(h)
    }

    /// Hidden activation of a single sample.
    pub fn hidden_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::dims("hidden_row", format!("{} inputs", self.n), x.len()));
        }
        let mut h = self.b.as_slice().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (acc, &a) in h.iter_mut().zip(self.alpha.row(i)) {
                *acc += xi * a;
            }
        }
        for v in &mut h {
            *v = self.activation.apply(*v);
        }
        Ok(h)
    }

    /// `h·beta` for a hidden row.
    pub(crate) fn output_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (j, &hj) in h.iter().enumerate() {
            for (acc, &w) in y.iter_mut().zip(self.beta.row(j)) {
                *acc += hj * w;
            }
        }
        y
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if !self.initialized {
            return Err(Error::NotInitialized);
        }
        self.hidden(x)?.matmul(&self.beta)
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.initialized {
            return Err(Error::NotInitialized);
        }
        Ok(self.output_from_hidden(&self.hidden_row(x)?))
    }

    /// Batch initialisation: `p = (H₀ᵀH₀)⁻¹`, `beta = p·H₀ᵀ·t₀`.
    pub fn init_batch(&mut self, x0: &Matrix, t0: &Matrix) -> Result<()> {
        self.check_targets("init_batch", x0, t0)?;
        let k0 = x0.rows();
        if k0 < self.n_hidden {
            return Err(Error::InitTooSmall {
                rows: k0,
                hidden: self.n_hidden,
            });
        }
        if k0 < 2 * self.n_hidden {
            warn!(
                "initial chunk has {k0} rows for {} hidden nodes; H0ᵀH0 may be poorly conditioned",
                self.n_hidden
            );
        }
        let h0 = self.hidden(x0)?;
        let p = symmetrize(h0.t_matmul(&h0)?.inverse()?);
        let beta = p.matmul(&h0.t_matmul(t0)?)?;
        self.p = p;
        self.beta = beta;
        self.gram = None;
        self.initialized = true;
        Ok(())
    }

    /// General chunk update with the `k x k` inversion `(I + H·P·Hᵀ)⁻¹`.
    pub fn update_chunk(&mut self, x: &Matrix, t: &Matrix) -> Result<UpdateStatus> {
        if !self.initialized {
            return Err(Error::NotInitialized);
        }
        self.check_targets("update_chunk", x, t)?;
        let h = self.hidden(x)?;
        let k = h.rows();
        let pht = self.p.matmul(&h.transpose())?;
        let mut s = h.matmul(&pht)?;
        for i in 0..k {
            s[(i, i)] += 1.0;
        }
        let s_inv = match s.inverse() {
            Ok(inv) => inv,
            Err(Error::SingularMatrix { .. }) => return Ok(UpdateStatus::SkippedSingular),
            Err(e) => return Err(e),
        };
        let hp = h.matmul(&self.p)?;
        let correction = pht.matmul(&s_inv)?.matmul(&hp)?;
        let p_new = self.p.sub(&correction)?;
        let residual = t.sub(&h.matmul(&self.beta)?)?;
        let step = p_new.matmul(&h.t_matmul(&residual)?)?;
        if !all_finite(&p_new) || !all_finite(&step) {
            return Ok(UpdateStatus::SkippedSingular);
        }
        self.beta = self.beta.add(&step)?;
        self.p = p_new;
        Ok(UpdateStatus::Trained)
    }

    /// Rank-1 update without any matrix inversion. Skips when
    /// `1 + h·P·hᵀ < epsilon`.
    pub fn update_rank1(&mut self, x: &Matrix, t: &Matrix, epsilon: f64) -> Result<UpdateStatus> {
        self.update_forget(x, t, 1.0, epsilon)
    }

    /// Rank-1 update with forgetting factor `ff`: the rank-1 rule applied to
    /// `P / ff²`.
    pub fn update_forget(&mut self, x: &Matrix, t: &Matrix, ff: f64, epsilon: f64) -> Result<UpdateStatus> {
        if !self.initialized {
            return Err(Error::NotInitialized);
        }
        check_ff(ff)?;
        if x.rows() != 1 || t.rows() != 1 {
            return Err(Error::dims("update_forget", "single-row x and t", format!("{} and {} rows", x.rows(), t.rows())));
        }
        self.check_targets("update_forget", x, t)?;
        let h = self.hidden_row(x.as_slice())?;
        Ok(self.rank1_from_hidden(&h, t.as_slice(), ff, epsilon))
    }

    /// `1 + h·(P/ff²)·hᵀ`, the quantity the stability guard inspects.
    pub fn guard_denominator(&self, h: &[f64], ff: f64) -> f64 {
        let scale = 1.0 / (ff * ff);
        let n = self.n_hidden;
        let p = self.p.as_slice();
        let mut quad = 0.0;
        for i in 0..n {
            let row = &p[i * n..(i + 1) * n];
            let ph_i: f64 = row.iter().zip(h).map(|(a, b)| a * b).sum();
            quad += h[i] * ph_i;
        }
        1.0 + scale * quad
    }

    /// Shared rank-1 kernel. `h` must have length Ñ and `t` length m; `ff`
    /// is assumed validated.
    pub(crate) fn rank1_from_hidden(&mut self, h: &[f64], t: &[f64], ff: f64, epsilon: f64) -> UpdateStatus {
        let n = self.n_hidden;
        let scale = 1.0 / (ff * ff);
        let p = self.p.as_slice();

        // u = (P/ff²)·hᵀ and v = h·(P/ff²); equal when P is symmetric.
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            let row = &p[i * n..(i + 1) * n];
            u[i] = scale * row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            let hi = h[i];
            if hi != 0.0 {
                for (vj, &pij) in v.iter_mut().zip(row) {
                    *vj += hi * pij;
                }
            }
        }
        v.iter_mut().for_each(|x| *x *= scale);
        let denom = 1.0 + h.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        if !(denom >= epsilon) || !denom.is_finite() {
            return UpdateStatus::SkippedSingular;
        }

        let mut p_new = vec![0.0; n * n];
        for i in 0..n {
            let ui = u[i] / denom;
            let src = &p[i * n..(i + 1) * n];
            let dst = &mut p_new[i * n..(i + 1) * n];
            for ((d, &s), &vj) in dst.iter_mut().zip(src).zip(&v) {
                *d = scale * s - ui * vj;
            }
        }

        // beta += P_new·hᵀ·(t - h·beta)
        let y = self.output_from_hidden(h);
        let residual: Vec<f64> = t.iter().zip(&y).map(|(a, b)| a - b).collect();
        let gain: Vec<f64> = (0..n)
            .map(|i| p_new[i * n..(i + 1) * n].iter().zip(h).map(|(a, b)| a * b).sum())
            .collect();
        if !p_new.iter().chain(&gain).all(|v| v.is_finite()) {
            return UpdateStatus::SkippedSingular;
        }
        for (i, &g) in gain.iter().enumerate() {
            for (b, &r) in self.beta.row_mut(i).iter_mut().zip(&residual) {
                *b += g * r;
            }
        }
        self.p.as_mut_slice().copy_from_slice(&p_new);
        UpdateStatus::Trained
    }

    /// FP-ELM initialisation: `K = H₀ᵀH₀`, `beta = (λI + K)⁻¹·H₀ᵀ·t₀`.
    /// Regularisation allows fewer rows than hidden nodes.
    pub fn fpelm_init(&mut self, x0: &Matrix, t0: &Matrix, lambda: f64) -> Result<()> {
        check_lambda(lambda)?;
        self.check_targets("fpelm_init", x0, t0)?;
        if x0.rows() == 0 {
            return Err(Error::InvalidArgument("fpelm_init needs at least one row".into()));
        }
        let h0 = self.hidden(x0)?;
        let gram = h0.t_matmul(&h0)?;
        let reg_inv = symmetrize(regularized(&gram, lambda).inverse()?);
        let beta = reg_inv.matmul(&h0.t_matmul(t0)?)?;
        self.beta = beta;
        self.p = reg_inv;
        self.gram = Some(gram);
        self.initialized = true;
        Ok(())
    }

    /// FP-ELM step:
    /// `K ← ff²K + HᵀH`,
    /// `beta ← beta + (λI + K)⁻¹·(Hᵀ(t − H·beta) − λ(1 − ff²)·beta)`.
    pub fn fpelm_update(&mut self, x: &Matrix, t: &Matrix, ff: f64, lambda: f64) -> Result<UpdateStatus> {
        let gram = self.gram.as_ref().ok_or(Error::NotInitialized)?;
        check_ff(ff)?;
        check_lambda(lambda)?;
        self.check_targets("fpelm_update", x, t)?;
        let h = self.hidden(x)?;
        let gram_new = gram.scale(ff * ff).add(&h.t_matmul(&h)?)?;
        let reg_inv = regularized(&gram_new, lambda).inverse()?;
        let residual = t.sub(&h.matmul(&self.beta)?)?;
        let rhs = h
            .t_matmul(&residual)?
            .sub(&self.beta.scale(lambda * (1.0 - ff * ff)))?;
        let step = reg_inv.matmul(&rhs)?;
        self.beta = self.beta.add(&step)?;
        self.p = reg_inv;
        self.gram = Some(gram_new);
        Ok(UpdateStatus::Trained)
    }

    fn check_targets(&self, op: &'static str, x: &Matrix, t: &Matrix) -> Result<()> {
        if x.cols() != self.n {
            return Err(Error::dims(op, format!("{} input columns", self.n), x.cols()));
        }
        if t.cols() != self.m {
            return Err(Error::dims(op, format!("{} target columns", self.m), t.cols()));
        }
        if x.rows() != t.rows() {
            return Err(Error::dims(op, format!("{} target rows", x.rows()), t.rows()));
        }
        Ok(())
    }
}

pub(crate) fn check_ff(ff: f64) -> Result<()> {
    if ff > 0.0 && ff <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("forgetting factor {ff} outside (0, 1]")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("regularization {lambda} must be finite and >= 0")))
    }
}

fn regularized(gram: &Matrix, lambda: f64) -> Matrix {
    let mut a = gram.clone();
    for i in 0..a.rows() {
        a[(i, i)] += lambda;
    }
    a
}

fn symmetrize(mut a: Matrix) -> Matrix {
    let n = a.rows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    a
}

fn all_finite(m: &Matrix) -> bool {
    m.as_slice().iter().all(|v| v.is_finite())
}

/// Direct evaluations used to cross-check the recursive updates.
pub mod oracle {
    use super::*;

    /// `K = Σⱼ wⱼ²·HⱼᵀHⱼ` with `wⱼ = Π_{l>j} ffₗ`; the forgetting factor of
    /// the first entry never contributes.
    pub fn weighted_gram(history: &[(Matrix, f64)]) -> Result<Matrix> {
        let (first, _) = history
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty history".into()))?;
        let n = first.cols();
        let mut k = Matrix::zeros(n, n);
        for (j, (h, _)) in history.iter().enumerate() {
            let w: f64 = history[j + 1..].iter().map(|(_, ff)| ff).product();
            let term = h.t_matmul(h)?.scale(w * w);
            k = k.add(&term)?;
        }
        Ok(k)
    }

    /// Batch ELM solution `β = (HᵀH)⁻¹Hᵀt` over the stacked chunks.
    pub fn batch_solution(model: &OselmModel, x: &Matrix, t: &Matrix) -> Result<Matrix> {
        let h = model.hidden(x)?;
        h.t_matmul(&h)?.inverse()?.matmul(&h.t_matmul(t)?)
    }
}
