use super::fixed::{dot, Fixed32};
use super::packet::{Mode, OutPacket, Packet};
use crate::error::{Error, Result};
use crate::matrix::{Activation, Matrix};
use crate::onlad::DEFAULT_EPSILON;
use crate::oselm::OselmModel;

#[derive(Debug, Clone, PartialEq)]
struct Buffer {
    data: Vec<Fixed32>,
    written: Vec<bool>,
    missing: usize,
}

impl Buffer {
    fn new(len: usize) -> Self {
        Buffer {
            data: vec![Fixed32::ZERO; len],
            written: vec![false; len],
            missing: len,
        }
    }

    fn set(&mut self, i: usize, v: Fixed32) {
        self.data[i] = v;
        if !self.written[i] {
            self.written[i] = true;
            self.missing -= 1;
        }
    }

    fn loaded(&self) -> bool {
        self.missing == 0
    }
}

/// Intermediate buffers of the training flow.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainScratch {
    pub h: Vec<Fixed32>,
    /// `s·P·hᵀ`, length Ñ.
    pub o1: Vec<Fixed32>,
    /// `s·h·P`, length Ñ.
    pub o2: Vec<Fixed32>,
    /// `1 + h·O1`.
    pub o3: Fixed32,
    /// `O1 ⊗ O2`, Ñ×Ñ.
    pub o4: Vec<Fixed32>,
    /// `s·P − O4/O3`, the updated P.
    pub o5: Vec<Fixed32>,
    /// `h·β`, length n.
    pub o6: Vec<Fixed32>,
    /// `x − O6`, length n.
    pub o7: Vec<Fixed32>,
    /// `O5·hᵀ`, length Ñ.
    pub o8: Vec<Fixed32>,
}

impl TrainScratch {
    fn new(n: usize, nh: usize) -> Self {
        TrainScratch {
            h: vec![Fixed32::ZERO; nh],
            o1: vec![Fixed32::ZERO; nh],
            o2: vec![Fixed32::ZERO; nh],
            o3: Fixed32::ZERO,
            o4: vec![Fixed32::ZERO; nh * nh],
            o5: vec![Fixed32::ZERO; nh * nh],
            o6: vec![Fixed32::ZERO; n],
            o7: vec![Fixed32::ZERO; n],
            o8: vec![Fixed32::ZERO; nh],
        }
    }

    pub fn elements(&self) -> usize {
        self.h.len()
            + self.o1.len()
            + self.o2.len()
            + 1
            + self.o4.len()
            + self.o5.len()
            + self.o6.len()
            + self.o7.len()
            + self.o8.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictScratch {
    pub h: Vec<Fixed32>,
    pub y: Vec<Fixed32>,
}

impl PredictScratch {
    pub fn elements(&self) -> usize {
        self.h.len() + self.y.len()
    }
}

/// Packet-driven fixed-point detector core (identity activation, autoencoder
/// shape `n → Ñ → n`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoreState {
    n: usize,
    n_hidden: usize,
    alpha: Buffer,
    beta: Buffer,
    p: Buffer,
    b: Buffer,
    x: Buffer,
    ff: Fixed32,
    epsilon: Fixed32,
    train: TrainScratch,
    predict: PredictScratch,
    iterations: u64,
}

impl CoreState {
    pub fn new(n: usize, n_hidden: usize) -> Result<Self> {
        if n == 0 || n_hidden == 0 {
            return Err(Error::InvalidArgument("core dimensions must be at least 1".into()));
        }
        let limit = super::packet::INDEX_LIMIT as usize;
        if n * n_hidden > limit || n_hidden * n_hidden > limit {
            return Err(Error::InvalidArgument(format!(
                "core buffers of n={n}, hidden={n_hidden} exceed the packet index range"
            )));
        }
        Ok(CoreState {
            n,
            n_hidden,
            alpha: Buffer::new(n * n_hidden),
            beta: Buffer::new(n_hidden * n),
            p: Buffer::new(n_hidden * n_hidden),
            b: Buffer::new(n_hidden),
            x: Buffer::new(n),
            ff: Fixed32::ONE,
            epsilon: Fixed32::from_f64(DEFAULT_EPSILON),
            train: TrainScratch::new(n, n_hidden),
            predict: PredictScratch {
                h: vec![Fixed32::ZERO; n_hidden],
                y: vec![Fixed32::ZERO; n],
            },
            iterations: 0,
        })
    }

    /// Builds a core and loads it directly from a float model.
    pub fn from_model(model: &OselmModel) -> Result<Self> {
        let mut core = CoreState::new(model.n(), model.n_hidden())?;
        for pkt in parameter_packets(model)? {
            core.step(pkt)?;
        }
        Ok(core)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn alpha(&self) -> &[Fixed32] {
        &self.alpha.data
    }

    pub fn beta(&self) -> &[Fixed32] {
        &self.beta.data
    }

    pub fn p(&self) -> &[Fixed32] {
        &self.p.data
    }

    pub fn b(&self) -> &[Fixed32] {
        &self.b.data
    }

    pub fn x(&self) -> &[Fixed32] {
        &self.x.data
    }

    pub fn ff(&self) -> Fixed32 {
        self.ff
    }

    pub fn epsilon(&self) -> Fixed32 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: Fixed32) {
        self.epsilon = epsilon;
    }

    pub fn train_scratch(&self) -> &TrainScratch {
        &self.train
    }

    pub fn predict_scratch(&self) -> &PredictScratch {
        &self.predict
    }

    /// Multiply-accumulate count of the most recent train or predict flow.
    pub fn last_iterations(&self) -> u64 {
        self.iterations
    }

    pub fn parameter_elements(&self) -> usize {
        self.alpha.data.len() + self.beta.data.len() + self.p.data.len() + self.b.data.len()
    }

    /// True once every element of alpha, beta, P, b and x has been written.
    pub fn is_loaded(&self) -> bool {
        self.alpha.loaded() && self.beta.loaded() && self.p.loaded() && self.b.loaded() && self.x.loaded()
    }

    pub fn beta_matrix(&self) -> Matrix {
        to_matrix(self.n_hidden, self.n, &self.beta.data)
    }

    pub fn p_matrix(&self) -> Matrix {
        to_matrix(self.n_hidden, self.n_hidden, &self.p.data)
    }

    /// Processes one packet. Out-of-range indices are rejected and leave the
    /// state untouched.
    pub fn step(&mut self, packet: Packet) -> Result<Option<OutPacket>> {
        let (mode, index, value) = packet.decode();
        let target = match mode {
            Mode::UpdateAlpha => &mut self.alpha,
            Mode::UpdateBeta => &mut self.beta,
            Mode::UpdateP => &mut self.p,
            Mode::UpdateB => &mut self.b,
            Mode::UpdateInput => &mut self.x,
            Mode::UpdateFf => {
                if index != 0 {
                    return Err(Error::IndexOverflow { index, limit: 1 });
                }
                self.ff = value;
                return Ok(None);
            }
            Mode::DoTraining => return Ok(Some(OutPacket::success(self.do_training()))),
            Mode::DoPrediction => return Ok(Some(OutPacket::score(self.do_prediction()))),
        };
        let len = target.data.len();
        if index >= len as u64 {
            return Err(Error::IndexOverflow {
                index,
                limit: len as u64,
            });
        }
        target.set(index as usize, value);
        Ok(None)
    }

    fn hidden(&self, h: &mut [Fixed32]) {
        let (n, nh) = (self.n, self.n_hidden);
        for (j, hj) in h.iter_mut().enumerate() {
            let col = (0..n).map(|i| self.alpha.data[i * nh + j]);
            *hj = dot(self.x.data.iter().copied(), col) + self.b.data[j];
        }
    }

    /// Runs the training flow; returns false when it was not performed.
    pub fn do_training(&mut self) -> bool {
        self.iterations = 0;
        if !self.is_loaded() {
            return false;
        }
        let (n, nh) = (self.n, self.n_hidden);
        let mut t = std::mem::replace(&mut self.train, TrainScratch::new(0, 0));
        self.hidden(&mut t.h);
        let mut iters = (n * nh) as u64;

        let s = Fixed32::ONE.saturating_div(self.ff * self.ff);
        let p = &self.p.data;
        for i in 0..nh {
            t.o1[i] = s * dot(p[i * nh..(i + 1) * nh].iter().copied(), t.h.iter().copied());
            t.o2[i] = s * dot(t.h.iter().copied(), (0..nh).map(|k| p[k * nh + i]));
        }
        t.o3 = Fixed32::ONE + dot(t.h.iter().copied(), t.o1.iter().copied());
        iters += (2 * nh * nh + nh) as u64;
        if t.o3 < self.epsilon {
            self.train = t;
            self.iterations = iters;
            return false;
        }

        for i in 0..nh {
            for j in 0..nh {
                let k = i * nh + j;
                t.o4[k] = t.o1[i] * t.o2[j];
                t.o5[k] = s * p[k] - t.o4[k].saturating_div(t.o3);
            }
        }
        iters += (nh * nh) as u64;

        let beta = &self.beta.data;
        for j in 0..n {
            t.o6[j] = dot(t.h.iter().copied(), (0..nh).map(|i| beta[i * n + j]));
            t.o7[j] = self.x.data[j] - t.o6[j];
        }
        for i in 0..nh {
            t.o8[i] = dot(t.o5[i * nh..(i + 1) * nh].iter().copied(), t.h.iter().copied());
        }
        iters += (n * nh + nh * nh) as u64;

        self.p.data.copy_from_slice(&t.o5);
        for i in 0..nh {
            for j in 0..n {
                let k = i * n + j;
                self.beta.data[k] = self.beta.data[k] + t.o8[i] * t.o7[j];
            }
        }
        iters += (nh * n) as u64;

        self.train = t;
        self.iterations = iters;
        true
    }

    /// Runs the prediction flow and returns the MSE between x and its
    /// reconstruction.
    pub fn do_prediction(&mut self) -> Fixed32 {
        let (n, nh) = (self.n, self.n_hidden);
        let mut h = std::mem::take(&mut self.predict.h);
        self.hidden(&mut h);
        let beta = &self.beta.data;
        let mut acc = 0i64;
        for j in 0..n {
            let y = dot(h.iter().copied(), (0..nh).map(|i| beta[i * n + j]));
            self.predict.y[j] = y;
            let d = self.x.data[j] - y;
            acc = acc.saturating_add(d.wide_mul(d));
        }
        self.predict.h = h;
        self.iterations = (2 * n * nh) as u64;
        Fixed32::from_wide(acc / n as i64)
    }
}

fn to_matrix(rows: usize, cols: usize, data: &[Fixed32]) -> Matrix {
    Matrix::from_vec(rows, cols, data.iter().map(|v| v.to_f64()).collect()).expect("buffer shape")
}

/// Packets that load alpha, beta, P and b from a float model.
pub fn parameter_packets(model: &OselmModel) -> Result<Vec<Packet>> {
    if model.activation() != Activation::Identity {
        return Err(Error::InvalidArgument("the fixed-point core supports identity activation only".into()));
    }
    if model.m() != model.n() {
        return Err(Error::InvalidArgument("the fixed-point core requires an autoencoder (m == n)".into()));
    }
    let mut out = Vec::new();
    for (mode, m) in [
        (Mode::UpdateAlpha, model.alpha()),
        (Mode::UpdateBeta, model.beta()),
        (Mode::UpdateP, model.p()),
        (Mode::UpdateB, model.bias()),
    ] {
        for (i, &v) in m.as_slice().iter().enumerate() {
            out.push(Packet::encode(mode, i as u64, Fixed32::from_f64(v))?);
        }
    }
    Ok(out)
}

/// Packets that load one input vector.
pub fn input_packets(x: &[f64]) -> Result<Vec<Packet>> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| Packet::encode(Mode::UpdateInput, i as u64, Fixed32::from_f64(v)))
        .collect()
}

pub fn ff_packet(ff: f64) -> Packet {
    Packet::encode(Mode::UpdateFf, 0, Fixed32::from_f64(ff)).expect("index 0")
}
