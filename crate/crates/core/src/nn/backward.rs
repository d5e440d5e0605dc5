//! Backpropagation through time for the mean batch BCE.

use super::forward::{forward_trace, normalized_columns};
use super::{bce_loss, LstmParams, ModelBundle};
use crate::error::{Error, Result};

/// Gradient of the mean BCE over a batch with respect to every parameter,
/// plus the mean loss itself. Deterministic: samples are accumulated in
/// order.
pub fn backward(
    bundle: &ModelBundle,
    batch: &[(&[Vec<f64>], f64)],
) -> Result<(LstmParams, f64)> {
    if batch.is_empty() {
        return Err(Error::Input("backward needs a non-empty batch".into()));
    }
    let config = &bundle.config;
    let params = &bundle.params;
    let h_size = config.hidden_size;
    let inv_batch = 1.0 / batch.len() as f64;
    let mut total = LstmParams::zeros(config);
    let mut loss_sum = 0.0;

    for &(rows, y) in batch {
        // Per-sample gradient, scaled into the total afterwards, so the mean
        // over duplicated samples is exact.
        let mut grads = LstmParams::zeros(config);
        let xs = normalized_columns(bundle, rows)?;
        let trace = forward_trace(params, config, xs);
        let steps = trace.xs.len();
        loss_sum += bce_loss(trace.p, y);

        // Sigmoid + BCE fuse to (p - y) at the last pre-activation.
        let dz2 = trace.p - y;
        let h_last = &trace.hiddens[steps - 1];
        grads.fc2.b[0] += dz2;
        let mut dz1 = vec![0.0; config.fc1_out];
        for j in 0..config.fc1_out {
            grads.fc2.w[0][j] += dz2 * trace.a1[j];
            let da1 = dz2 * params.fc2.w[0][j];
            dz1[j] = if trace.z1[j] > 0.0 { da1 } else { 0.0 };
        }
        let mut dh = vec![0.0; h_size];
        for j in 0..config.fc1_out {
            grads.fc1.b[j] += dz1[j];
            for k in 0..h_size {
                grads.fc1.w[j][k] += dz1[j] * h_last[k];
                dh[k] += dz1[j] * params.fc1.w[j][k];
            }
        }

        let zeros = vec![0.0; h_size];
        let mut dc = vec![0.0; h_size];
        for t in (0..steps).rev() {
            let gate = &trace.gates[t];
            let tanh_c = &trace.tanh_cells[t];
            let c_prev = if t == 0 { &zeros } else { &trace.cells[t - 1] };
            let h_prev = if t == 0 { &zeros } else { &trace.hiddens[t - 1] };
            let mut dz_all = vec![0.0; 4 * h_size];
            for u in 0..h_size {
                let (i_g, f_g, g_g, o_g) =
                    (gate[u], gate[h_size + u], gate[2 * h_size + u], gate[3 * h_size + u]);
                let d_o = dh[u] * tanh_c[u];
                dc[u] += dh[u] * o_g * (1.0 - tanh_c[u] * tanh_c[u]);
                let d_i = dc[u] * g_g;
                let d_f = dc[u] * c_prev[u];
                let d_g = dc[u] * i_g;
                dz_all[u] = d_i * i_g * (1.0 - i_g);
                dz_all[h_size + u] = d_f * f_g * (1.0 - f_g);
                dz_all[2 * h_size + u] = d_g * (1.0 - g_g * g_g);
                dz_all[3 * h_size + u] = d_o * o_g * (1.0 - o_g);
            }
            let x = &trace.xs[t];
            let mut dh_prev = vec![0.0; h_size];
            for (row, &dz) in dz_all.iter().enumerate() {
                grads.lstm.b[row] += dz;
                for (j, &xj) in x.iter().enumerate() {
                    grads.lstm.w_ih[row][j] += dz * xj;
                }
                for k in 0..h_size {
                    grads.lstm.w_hh[row][k] += dz * h_prev[k];
                    dh_prev[k] += dz * params.lstm.w_hh[row][k];
                }
            }
            for u in 0..h_size {
                dc[u] *= gate[h_size + u];
            }
            dh = dh_prev;
        }

        let sample_flat = grads.to_flat();
        let mut idx = 0;
        total.for_each_mut(|g| {
            *g += sample_flat[idx] * inv_batch;
            idx += 1;
        });
    }
    Ok((total, loss_sum * inv_batch))
}

/// Max relative error between the analytic gradient and central finite
/// differences with step `h`, over every parameter, for one sample.
pub fn finite_difference_max_error(
    bundle: &ModelBundle,
    rows: &[Vec<f64>],
    y: f64,
    h: f64,
) -> Result<f64> {
    let (grads, _) = backward(bundle, &[(rows, y)])?;
    let analytic = grads.to_flat();
    let flat = bundle.params.to_flat();
    let mut probe = bundle.clone();
    let mut worst = 0.0f64;
    for idx in 0..flat.len() {
        let mut plus = flat.clone();
        plus[idx] += h;
        probe.params.assign_from_flat(&plus);
        let loss_plus = bce_loss(super::forward(&probe, rows)?, y);
        let mut minus = flat.clone();
        minus[idx] -= h;
        probe.params.assign_from_flat(&minus);
        let loss_minus = bce_loss(super::forward(&probe, rows)?, y);
        let numeric = (loss_plus - loss_minus) / (2.0 * h);
        let rel = (analytic[idx] - numeric).abs() / (analytic[idx].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Seeded gradient check over several random parameter/input draws; returns
/// the worst relative error seen.
pub fn gradient_check(seed: u64, draws: usize) -> Result<f64> {
    use super::{LstmParams, ModelConfig, NormStats};
    use rand::{Rng, SeedableRng};
    let config = ModelConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for draw in 0..draws {
        let bundle = ModelBundle::new(
            config.clone(),
            NormStats::identity(config.input_size),
            LstmParams::init(&config, seed.wrapping_add(draw as u64 + 1)),
        )?;
        let rows: Vec<Vec<f64>> = (0..config.input_size)
            .map(|_| (0..config.seq_len).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y = f64::from(draw % 2 == 0);
        worst = worst.max(finite_difference_max_error(&bundle, &rows, y, 1e-5)?);
    }
    Ok(worst)
}
