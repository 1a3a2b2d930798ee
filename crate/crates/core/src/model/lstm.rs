//! Single-layer LSTM in both directions with exact backpropagation through time.
//! Gate blocks are stacked `[input; forget; candidate; output]`.

use crate::numerics::{axpy, dot, sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H x D`
    pub w_input: Tensor,
    /// `4H x H`
    pub w_recurrent: Tensor,
    /// `4H`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_input: Tensor::zeros(&[4 * hidden, input]),
            w_recurrent: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w_input.shape()[1]
    }
}

/// Per-step activations stored in original time order.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub reverse: bool,
    /// Activated gates `i, f, g, o`, `n x 4H`.
    pub gates: Vec<f64>,
    /// Cell states, `n x H`.
    pub cells: Vec<f64>,
    /// Hidden states, `n x H`.
    pub hidden: Vec<f64>,
}

fn step_order(n: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    }
}

/// Runs over `xs` (`n x D`) front-to-back or back-to-front from zero state.
pub fn lstm_forward(params: &LstmParams, xs: &[f64], n: usize, reverse: bool) -> LstmCache {
    let h = params.hidden();
    let d = params.input();
    let wi = params.w_input.data();
    let wr = params.w_recurrent.data();
    let mut gates = vec![0.0; n * 4 * h];
    let mut cells = vec![0.0; n * h];
    let mut hidden = vec![0.0; n * h];
    let mut prev: Option<usize> = None;
    for t in step_order(n, reverse) {
        let x = &xs[t * d..(t + 1) * d];
        let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = params.bias.data()[r] + dot(&wi[r * d..(r + 1) * d], x);
        }
        if let Some(p) = prev {
            let h_prev = &hidden[p * h..(p + 1) * h];
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&wr[r * h..(r + 1) * h], h_prev);
            }
        }
        for u in 0..h {
            let i = sigmoid(z[u]);
            let f = sigmoid(z[h + u]);
            let g = z[2 * h + u].tanh();
            let o = sigmoid(z[3 * h + u]);
            z[u] = i;
            z[h + u] = f;
            z[2 * h + u] = g;
            z[3 * h + u] = o;
            let c_prev = prev.map_or(0.0, |p| cells[p * h + u]);
            let c = f * c_prev + i * g;
            cells[t * h + u] = c;
            hidden[t * h + u] = o * c.tanh();
        }
        prev = Some(t);
    }
    LstmCache {
        reverse,
        gates,
        cells,
        hidden,
    }
}

/// Accumulates parameter gradients into `grads` and returns `dxs` (`n x D`).
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    xs: &[f64],
    d_hidden: &[f64],
    grads: &mut LstmParams,
) -> Vec<f64> {
    let h = params.hidden();
    let d = params.input();
    let n = cache.hidden.len() / h;
    let wi = params.w_input.data();
    let wr = params.w_recurrent.data();
    let mut dxs = vec![0.0; n * d];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    // processing order reversed
    let order: Vec<usize> = step_order(n, cache.reverse).collect();
    for (k, &t) in order.iter().enumerate().rev() {
        let prev = k.checked_sub(1).map(|k| order[k]);
        let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for u in 0..h {
            let (i, f, g, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
            let c = cache.cells[t * h + u];
            let tc = c.tanh();
            let c_prev = prev.map_or(0.0, |p| cache.cells[p * h + u]);
            let dh = d_hidden[t * h + u] + dh_next[u];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[u];
            dz[u] = dc * g * i * (1.0 - i);
            dz[h + u] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + u] = dc * i * (1.0 - g * g);
            dz[3 * h + u] = d_o * o * (1.0 - o);
            dc_next[u] = dc * f;
        }
        let x = &xs[t * d..(t + 1) * d];
        let dx = &mut dxs[t * d..(t + 1) * d];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.bias.data_mut()[r] += g;
            axpy(g, x, &mut grads.w_input.data_mut()[r * d..(r + 1) * d]);
            axpy(g, &wi[r * d..(r + 1) * d], dx);
            if let Some(p) = prev {
                let h_prev = &cache.hidden[p * h..(p + 1) * h];
                axpy(g, h_prev, &mut grads.w_recurrent.data_mut()[r * h..(r + 1) * h]);
                axpy(g, &wr[r * h..(r + 1) * h], &mut dh_next);
            }
        }
    }
    dxs
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
}

/// Returns `n x 2H` rows `[h_fwd_t ; h_bwd_t]`.
pub fn bilstm(
    forward: &LstmParams,
    backward: &LstmParams,
    xs: &[f64],
    n: usize,
) -> (Vec<f64>, BiLstmCache) {
    let h = forward.hidden();
    let fwd = lstm_forward(forward, xs, n, false);
    let bwd = lstm_forward(backward, xs, n, true);
    let mut out = vec![0.0; n * 2 * h];
    for t in 0..n {
        out[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
        out[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.hidden[t * h..(t + 1) * h]);
    }
    (
        out,
        BiLstmCache {
            forward: fwd,
            backward: bwd,
        },
    )
}

pub fn bilstm_backward(
    forward: &LstmParams,
    backward: &LstmParams,
    cache: &BiLstmCache,
    xs: &[f64],
    d_out: &[f64],
    grads_forward: &mut LstmParams,
    grads_backward: &mut LstmParams,
) -> Vec<f64> {
    let h = forward.hidden();
    let n = cache.forward.hidden.len() / h;
    let mut d_fwd = vec![0.0; n * h];
    let mut d_bwd = vec![0.0; n * h];
    for t in 0..n {
        d_fwd[t * h..(t + 1) * h].copy_from_slice(&d_out[t * 2 * h..t * 2 * h + h]);
        d_bwd[t * h..(t + 1) * h].copy_from_slice(&d_out[t * 2 * h + h..(t + 1) * 2 * h]);
    }
    let mut dx = lstm_backward(forward, &cache.forward, xs, &d_fwd, grads_forward);
    let dx_b = lstm_backward(backward, &cache.backward, xs, &d_bwd, grads_backward);
    axpy(1.0, &dx_b, &mut dx);
    dx
}
