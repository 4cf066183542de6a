//! Per-cell gated recurrent state with a quality gate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{dot, FeatureMap, Key, C_K};
use crate::error::{Error, Result};
use crate::image::Mask;

/// Gate weights over the concatenated `[h; x]` input (row-major, `c_h × (c_h + c_x)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub c_h: usize,
    pub c_x: usize,
    pub w_z: Vec<f64>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub b_r: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl GruWeights {
    /// Deterministic initializer: small seeded noise everywhere, candidate dominated by
    /// `2·x` on matching channels, update gate near 0.5, reset gate mostly open.
    pub fn seeded(c_h: usize, c_x: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = c_h + c_x;
        let mut noise = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.05..0.05)).collect() };
        let w_z = noise(c_h * cols);
        let w_r = noise(c_h * cols);
        let mut w_c = noise(c_h * cols);
        for i in 0..c_h.min(c_x) {
            w_c[i * cols + c_h + i] += 2.0;
        }
        GruWeights {
            c_h,
            c_x,
            w_z,
            b_z: vec![0.0; c_h],
            w_r,
            b_r: vec![1.0; c_h],
            w_c,
            b_c: vec![0.0; c_h],
        }
    }

    /// Test hook: drives the update gate to exactly 1 (`bias → +∞`) or 0 (`bias → −∞`).
    pub fn with_update_bias(mut self, bias: f64) -> Self {
        self.b_z = vec![bias; self.c_h];
        self
    }

    fn affine(&self, w: &[f64], b: &[f64], h: &[f64], x: &[f64], out: &mut [f64]) {
        let cols = self.c_h + self.c_x;
        for i in 0..self.c_h {
            let row = &w[i * cols..(i + 1) * cols];
            out[i] = b[i] + dot(&row[..self.c_h], h) + dot(&row[self.c_h..], x);
        }
    }

    /// One gated step for a single cell.
    pub fn step(&self, h: &[f64], x: &[f64], out: &mut [f64]) {
        let n = self.c_h;
        let mut z = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut c = vec![0.0; n];
        self.affine(&self.w_z, &self.b_z, h, x, &mut z);
        self.affine(&self.w_r, &self.b_r, h, x, &mut r);
        let rh: Vec<f64> = (0..n).map(|i| sigmoid(r[i]) * h[i]).collect();
        self.affine(&self.w_c, &self.b_c, &rh, x, &mut c);
        for i in 0..n {
            let zi = sigmoid(z[i]);
            out[i] = (1.0 - zi) * h[i] + zi * c[i].tanh();
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensoryState {
    pub cols: usize,
    pub rows: usize,
    pub c_h: usize,
    /// `cells × c_h`, row-major over cells.
    pub hidden: Vec<f64>,
    pub last_mask: Mask,
    pub last_phi: f64,
}

impl SensoryState {
    pub fn zeros(cols: usize, rows: usize, c_h: usize, mask: Mask) -> Self {
        SensoryState {
            cols,
            rows,
            c_h,
            hidden: vec![0.0; cols * rows * c_h],
            last_mask: mask,
            last_phi: 1.0,
        }
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.hidden[c * self.c_h..(c + 1) * self.c_h]
    }
}

/// Recurrent input per cell: the key signed by previous-mask evidence, `(2m − 1)·key`.
pub fn sensory_input(feat: &FeatureMap, mask_fractions: &[f64]) -> Vec<Key> {
    feat.keys
        .iter()
        .zip(mask_fractions)
        .map(|(k, &m)| k.map(|v| (2.0 * m - 1.0) * v))
        .collect()
}

/// Gated update followed by the quality gate `h = Φ·h' + (1 − Φ)·h_prev`.
/// `Φ = 0` returns the input state unchanged.
pub fn sensory_update(state: &SensoryState, gru: &GruWeights, x: &[Key], phi: f64) -> Result<SensoryState> {
    let cells = state.cols * state.rows;
    if gru.c_h != state.c_h || gru.c_x != C_K || x.len() != cells {
        return Err(Error::invalid(format!(
            "sensory update dimension mismatch: state {}x{}x{}, weights c_h={} c_x={}, input {} cells",
            state.cols,
            state.rows,
            state.c_h,
            gru.c_h,
            gru.c_x,
            x.len()
        )));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::invalid("quality factor must lie in [0, 1]"));
    }
    if phi == 0.0 {
        return Ok(state.clone());
    }
    let mut hidden = vec![0.0; state.hidden.len()];
    let mut next = vec![0.0; state.c_h];
    for c in 0..cells {
        let h = state.cell(c);
        gru.step(h, &x[c], &mut next);
        for i in 0..state.c_h {
            let v = if phi == 1.0 {
                next[i]
            } else {
                phi * next[i] + (1.0 - phi) * h[i]
            };
            hidden[c * state.c_h + i] = v;
        }
    }
    Ok(SensoryState {
        hidden,
        last_phi: phi,
        ..state.clone()
    })
}

/// `R_S = (cos(h, key) + 1) / 2` per cell, comparing the hidden state with the first
/// `c_h` key channels (zero-padded when `c_h > C_k`). A zero vector scores 0.5.
pub fn read_sensory(state: &SensoryState, feat: &FeatureMap) -> Result<Vec<f64>> {
    if state.cols != feat.cols || state.rows != feat.rows {
        return Err(Error::invalid("sensory state and features have different grids"));
    }
    Ok((0..feat.cells())
        .map(|c| {
            let h = state.cell(c);
            let k = &feat.keys[c];
            let m = state.c_h.min(C_K);
            let num = dot(&h[..m], &k[..m]);
            let nh = dot(h, h).sqrt();
            let nk = dot(&k[..m], &k[..m]).sqrt();
            let cos = if nh < 1e-12 || nk < 1e-12 {
                0.0
            } else {
                (num / (nh * nk)).clamp(-1.0, 1.0)
            };
            (cos + 1.0) / 2.0
        })
        .collect())
}
