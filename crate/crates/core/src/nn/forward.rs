//! Forward pass and the loss.

use super::{LstmParams, ModelBundle, ModelConfig};
use crate::error::{Error, Result};

/// Probability clamp inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binary cross entropy with the output clamped to [ε, 1-ε].
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    /// Normalized input columns, one per step.
    pub xs: Vec<Vec<f64>>,
    /// Gate activations per step: i, f, g, o concatenated (4·hidden).
    pub gates: Vec<Vec<f64>>,
    pub cells: Vec<Vec<f64>>,
    pub hiddens: Vec<Vec<f64>>,
    pub tanh_cells: Vec<Vec<f64>>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub p: f64,
}

/// Normalize a 5×L feature matrix into per-step input columns.
pub(crate) fn normalized_columns(bundle: &ModelBundle, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let config = &bundle.config;
    if rows.len() != config.input_size {
        return Err(Error::Input(format!(
            "input has {} feature rows, model expects {}",
            rows.len(),
            config.input_size
        )));
    }
    let seq_len = rows[0].len();
    if seq_len != config.seq_len || rows.iter().any(|r| r.len() != seq_len) {
        return Err(Error::Input(format!(
            "input has {seq_len} steps, model expects {}",
            config.seq_len
        )));
    }
    let mut xs = vec![vec![0.0; config.input_size]; seq_len];
    for (f, row) in rows.iter().enumerate() {
        let (mean, std) = (bundle.norm.mean[f], bundle.norm.std[f]);
        for (t, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Input(format!("non-finite input at row {f}, step {t}")));
            }
            xs[t][f] = (v - mean) / std;
        }
    }
    Ok(xs)
}

/// Run the network on normalized input columns, keeping intermediates.
pub(crate) fn forward_trace(
    params: &LstmParams,
    config: &ModelConfig,
    xs: Vec<Vec<f64>>,
) -> ForwardTrace {
    let h_size = config.hidden_size;
    let steps = xs.len();
    let mut h = vec![0.0; h_size];
    let mut c = vec![0.0; h_size];
    let mut gates = Vec::with_capacity(steps);
    let mut cells = Vec::with_capacity(steps);
    let mut hiddens = Vec::with_capacity(steps);
    let mut tanh_cells = Vec::with_capacity(steps);

    for x in &xs {
        let mut z = params.lstm.b.clone();
        for (row, zr) in z.iter_mut().enumerate() {
            let w_ih = &params.lstm.w_ih[row];
            let w_hh = &params.lstm.w_hh[row];
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                acc += w_ih[j] * xj;
            }
            for (k, &hk) in h.iter().enumerate() {
                acc += w_hh[k] * hk;
            }
            *zr += acc;
        }
        let mut gate = vec![0.0; 4 * h_size];
        for u in 0..h_size {
            gate[u] = sigmoid(z[u]); // input
            gate[h_size + u] = sigmoid(z[h_size + u]); // forget
            gate[2 * h_size + u] = z[2 * h_size + u].tanh(); // candidate
            gate[3 * h_size + u] = sigmoid(z[3 * h_size + u]); // output
        }
        let mut c_next = vec![0.0; h_size];
        let mut tanh_c = vec![0.0; h_size];
        let mut h_next = vec![0.0; h_size];
        for u in 0..h_size {
            c_next[u] = gate[h_size + u] * c[u] + gate[u] * gate[2 * h_size + u];
            tanh_c[u] = c_next[u].tanh();
            h_next[u] = gate[3 * h_size + u] * tanh_c[u];
        }
        gates.push(gate);
        cells.push(c_next.clone());
        tanh_cells.push(tanh_c);
        hiddens.push(h_next.clone());
        c = c_next;
        h = h_next;
    }

    let mut z1 = params.fc1.b.clone();
    for (j, zj) in z1.iter_mut().enumerate() {
        for (k, &hk) in h.iter().enumerate() {
            *zj += params.fc1.w[j][k] * hk;
        }
    }
    let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
    let mut z2 = params.fc2.b[0];
    for (j, &aj) in a1.iter().enumerate() {
        z2 += params.fc2.w[0][j] * aj;
    }
    let p = sigmoid(z2);
    ForwardTrace { xs, gates, cells, hiddens, tanh_cells, z1, a1, p }
}

/// Score one 5×L feature matrix: the probability the window is normal.
pub fn forward(bundle: &ModelBundle, rows: &[Vec<f64>]) -> Result<f64> {
    let xs = normalized_columns(bundle, rows)?;
    Ok(forward_trace(&bundle.params, &bundle.config, xs).p)
}
