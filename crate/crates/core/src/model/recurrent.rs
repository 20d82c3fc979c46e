//! GRU and LSTM cells with backpropagation through time.
//!
//! GRU (reset applied to the previous state before the candidate transform):
//!
//! ```text
//! z  = sigmoid(Wxz x + Whz h + bz)
//! r  = sigmoid(Wxr x + Whr h + br)
//! n  = tanh(Wxn x + Whn (r * h) + bn)
//! h' = z * h + (1 - z) * n
//! ```
//!
//! LSTM:
//!
//! ```text
//! i, f, o = sigmoid(...), g = tanh(...)
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```

use super::config::RnnKind;
use super::params::RecurrentParams;
use super::tensor::{add_outer_rows, matvec_rows, matvec_t_rows_acc, sigmoid, Real};

#[derive(Debug, Clone)]
enum StepCache<T> {
    Gru {
        h_prev: Vec<T>,
        z: Vec<T>,
        r: Vec<T>,
        n: Vec<T>,
    },
    Lstm {
        h_prev: Vec<T>,
        c_prev: Vec<T>,
        gates: Vec<T>,
        tanh_c: Vec<T>,
    },
}

/// Activations of one direction over a sequence, in processing order.
#[derive(Debug, Clone)]
pub(crate) struct DirectionTrace<T> {
    steps: Vec<(usize, StepCache<T>)>,
    pub final_h: Vec<T>,
}

pub(crate) fn run_direction<T: Real>(
    cell: &RecurrentParams<T>,
    kind: RnnKind,
    inputs: &[Vec<T>],
    reverse: bool,
) -> DirectionTrace<T> {
    let hidden = cell.w_hidden.cols;
    let mut h = vec![T::zero(); hidden];
    let mut c = vec![T::zero(); hidden];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    let mut steps = Vec::with_capacity(order.len());
    for t in order {
        let x = &inputs[t];
        let cache = match kind {
            RnnKind::Gru => {
                let (next, cache) = gru_step(cell, x, &h);
                h = next;
                cache
            }
            RnnKind::Lstm => {
                let (next_h, next_c, cache) = lstm_step(cell, x, &h, &c);
                h = next_h;
                c = next_c;
                cache
            }
        };
        steps.push((t, cache));
    }
    DirectionTrace { steps, final_h: h }
}

fn gru_step<T: Real>(cell: &RecurrentParams<T>, x: &[T], h: &[T]) -> (Vec<T>, StepCache<T>) {
    let hd = h.len();
    let mut ax = vec![T::zero(); 3 * hd];
    matvec_rows(&cell.w_input, 0, x, &mut ax);
    let mut ah = vec![T::zero(); 2 * hd];
    matvec_rows(&cell.w_hidden, 0, h, &mut ah);
    let b = &cell.bias.data;
    let z: Vec<T> = (0..hd).map(|k| sigmoid(ax[k] + ah[k] + b[k])).collect();
    let r: Vec<T> = (0..hd).map(|k| sigmoid(ax[hd + k] + ah[hd + k] + b[hd + k])).collect();
    let rh: Vec<T> = r.iter().zip(h).map(|(&r, &h)| r * h).collect();
    let mut an = vec![T::zero(); hd];
    matvec_rows(&cell.w_hidden, 2 * hd, &rh, &mut an);
    let n: Vec<T> = (0..hd).map(|k| (ax[2 * hd + k] + an[k] + b[2 * hd + k]).tanh()).collect();
    let next: Vec<T> = (0..hd).map(|k| z[k] * h[k] + (T::one() - z[k]) * n[k]).collect();
    (
        next,
        StepCache::Gru {
            h_prev: h.to_vec(),
            z,
            r,
            n,
        },
    )
}

fn lstm_step<T: Real>(cell: &RecurrentParams<T>, x: &[T], h: &[T], c: &[T]) -> (Vec<T>, Vec<T>, StepCache<T>) {
    let hd = h.len();
    let mut a = vec![T::zero(); 4 * hd];
    matvec_rows(&cell.w_input, 0, x, &mut a);
    let mut ah = vec![T::zero(); 4 * hd];
    matvec_rows(&cell.w_hidden, 0, h, &mut ah);
    let mut gates = vec![T::zero(); 4 * hd];
    for k in 0..4 * hd {
        let pre = a[k] + ah[k] + cell.bias.data[k];
        gates[k] = if (2 * hd..3 * hd).contains(&k) {
            pre.tanh()
        } else {
            sigmoid(pre)
        };
    }
    let (i, rest) = gates.split_at(hd);
    let (f, rest) = rest.split_at(hd);
    let (g, o) = rest.split_at(hd);
    let next_c: Vec<T> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<T> = next_c.iter().map(|v| v.tanh()).collect();
    let next_h: Vec<T> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    (
        next_h,
        next_c,
        StepCache::Lstm {
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            gates,
            tanh_c,
        },
    )
}

/// Backpropagates `d_final_h` through one direction, accumulating weight
/// gradients into `grad` and input gradients into `d_inputs`.
pub(crate) fn backprop_direction<T: Real>(
    cell: &RecurrentParams<T>,
    grad: &mut RecurrentParams<T>,
    inputs: &[Vec<T>],
    trace: &DirectionTrace<T>,
    d_final_h: &[T],
    d_inputs: &mut [Vec<T>],
) {
    let hd = d_final_h.len();
    let one = T::one();
    let mut dh = d_final_h.to_vec();
    let mut dc = vec![T::zero(); hd];
    for (t, cache) in trace.steps.iter().rev() {
        let x = &inputs[*t];
        match cache {
            StepCache::Gru { h_prev, z, r, n } => {
                let mut da = vec![T::zero(); 3 * hd];
                let mut dh_prev: Vec<T> = (0..hd).map(|k| dh[k] * z[k]).collect();
                for k in 0..hd {
                    let dn = dh[k] * (one - z[k]);
                    da[2 * hd + k] = dn * (one - n[k] * n[k]);
                }
                let mut d_rh = vec![T::zero(); hd];
                matvec_t_rows_acc(&cell.w_hidden, 2 * hd, &da[2 * hd..], &mut d_rh);
                for k in 0..hd {
                    let dz = dh[k] * (h_prev[k] - n[k]);
                    da[k] = dz * z[k] * (one - z[k]);
                    let dr = d_rh[k] * h_prev[k];
                    da[hd + k] = dr * r[k] * (one - r[k]);
                    dh_prev[k] += d_rh[k] * r[k];
                }
                let rh: Vec<T> = r.iter().zip(h_prev).map(|(&r, &h)| r * h).collect();
                add_outer_rows(&mut grad.w_input, 0, &da, x);
                add_outer_rows(&mut grad.w_hidden, 0, &da[..2 * hd], h_prev);
                add_outer_rows(&mut grad.w_hidden, 2 * hd, &da[2 * hd..], &rh);
                for (b, &d) in grad.bias.data.iter_mut().zip(&da) {
                    *b += d;
                }
                matvec_t_rows_acc(&cell.w_input, 0, &da, &mut d_inputs[*t]);
                matvec_t_rows_acc(&cell.w_hidden, 0, &da[..2 * hd], &mut dh_prev);
                dh = dh_prev;
            }
            StepCache::Lstm {
                h_prev,
                c_prev,
                gates,
                tanh_c,
            } => {
                let (i, rest) = gates.split_at(hd);
                let (f, rest) = rest.split_at(hd);
                let (g, o) = rest.split_at(hd);
                let mut da = vec![T::zero(); 4 * hd];
                let mut dc_prev = vec![T::zero(); hd];
                for k in 0..hd {
                    let d_o = dh[k] * tanh_c[k];
                    let dck = dc[k] + dh[k] * o[k] * (one - tanh_c[k] * tanh_c[k]);
                    da[k] = dck * g[k] * i[k] * (one - i[k]);
                    da[hd + k] = dck * c_prev[k] * f[k] * (one - f[k]);
                    da[2 * hd + k] = dck * i[k] * (one - g[k] * g[k]);
                    da[3 * hd + k] = d_o * o[k] * (one - o[k]);
                    dc_prev[k] = dck * f[k];
                }
                add_outer_rows(&mut grad.w_input, 0, &da, x);
                add_outer_rows(&mut grad.w_hidden, 0, &da, h_prev);
                for (b, &d) in grad.bias.data.iter_mut().zip(&da) {
                    *b += d;
                }
                matvec_t_rows_acc(&cell.w_input, 0, &da, &mut d_inputs[*t]);
                let mut dh_prev = vec![T::zero(); hd];
                matvec_t_rows_acc(&cell.w_hidden, 0, &da, &mut dh_prev);
                dh = dh_prev;
                dc = dc_prev;
            }
        }
    }
}
