//! The spatiotemporal-LSTM cell: convolutional gates over the input and
//! hidden state, a per-layer temporal cell memory, and a spatiotemporal
//! memory that travels up the layer stack within each timestep.

use rand::Rng;

use crate::error::Result;
use crate::numeric::{Tape, Tensor, Var};

/// Convolution weights for one cell. Gate order inside the stacked input
/// convolution is `[i, f, g, i', f', g', o]`; the hidden convolution stacks
/// `[i, f, g, o]` and the memory convolution `[i', f', g']`.
#[derive(Debug, Clone)]
pub struct CellParams {
    /// `[7*hidden, in_channels, k, k]`, the only biased convolution.
    pub w_x: Tensor,
    pub b_x: Tensor,
    /// `[4*hidden, hidden, k, k]` over the previous hidden state.
    pub w_h: Tensor,
    /// `[3*hidden, hidden, k, k]` over the incoming spatiotemporal memory.
    pub w_m: Tensor,
    /// `[hidden, 2*hidden, 1, 1]` mixing (C, M) into the output gate.
    pub w_o: Tensor,
    /// `[hidden, 2*hidden, 1, 1]` mixing (C, M) into the new hidden state.
    pub w_mix: Tensor,
}

impl CellParams {
    /// Uniform `+-sqrt(1/fan_in)` weights, zero biases.
    pub fn init<R: Rng>(in_channels: usize, hidden: usize, kernel: usize, rng: &mut R) -> Self {
        let conv = |co: usize, ci: usize, k: usize, rng: &mut R| {
            let bound = (1.0 / (ci * k * k) as f64).sqrt();
            Tensor::uniform(&[co, ci, k, k], bound, rng)
        };
        Self {
            w_x: conv(7 * hidden, in_channels, kernel, rng),
            b_x: Tensor::zeros(&[7 * hidden]),
            w_h: conv(4 * hidden, hidden, kernel, rng),
            w_m: conv(3 * hidden, hidden, kernel, rng),
            w_o: conv(hidden, 2 * hidden, 1, rng),
            w_mix: conv(hidden, 2 * hidden, 1, rng),
        }
    }

    pub fn zeroed(in_channels: usize, hidden: usize, kernel: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[7 * hidden, in_channels, kernel, kernel]),
            b_x: Tensor::zeros(&[7 * hidden]),
            w_h: Tensor::zeros(&[4 * hidden, hidden, kernel, kernel]),
            w_m: Tensor::zeros(&[3 * hidden, hidden, kernel, kernel]),
            w_o: Tensor::zeros(&[hidden, 2 * hidden, 1, 1]),
            w_mix: Tensor::zeros(&[hidden, 2 * hidden, 1, 1]),
        }
    }
}

/// Cell parameters recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundCell {
    pub(crate) w_x: Var,
    pub(crate) b_x: Var,
    pub(crate) w_h: Var,
    pub(crate) w_m: Var,
    pub(crate) w_o: Var,
    pub(crate) w_mix: Var,
    pub(crate) hidden: usize,
}

impl BoundCell {
    pub fn bind(tape: &mut Tape, params: &CellParams, trainable: bool) -> Self {
        let hidden = params.b_x.shape()[0] / 7;
        Self {
            w_x: tape.leaf(params.w_x.clone(), trainable),
            b_x: tape.leaf(params.b_x.clone(), trainable),
            w_h: tape.leaf(params.w_h.clone(), trainable),
            w_m: tape.leaf(params.w_m.clone(), trainable),
            w_o: tape.leaf(params.w_o.clone(), trainable),
            w_mix: tape.leaf(params.w_mix.clone(), trainable),
            hidden,
        }
    }

    pub fn param_vars(&self) -> [Var; 6] {
        [self.w_x, self.b_x, self.w_h, self.w_m, self.w_o, self.w_mix]
    }

    /// One cell step. `C` is gated by (x, H_prev); `M` by its own gate set
    /// over (x, M_prev_layer); the output gate mixes the fresh (C, M) pair
    /// through a 1x1 convolution.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        h_prev: Var,
        c_prev: Var,
        m_prev: Var,
    ) -> Result<(Var, Var, Var)> {
        let hc = self.hidden;
        let xg = tape.conv2d(x, self.w_x, Some(self.b_x))?;
        let hg = tape.conv2d(h_prev, self.w_h, None)?;
        let mg = tape.conv2d(m_prev, self.w_m, None)?;

        let xs: Vec<Var> = (0..7).map(|k| tape.slice(xg, k * hc, hc)).collect::<Result<_>>()?;
        let hs: Vec<Var> = (0..4).map(|k| tape.slice(hg, k * hc, hc)).collect::<Result<_>>()?;
        let ms: Vec<Var> = (0..3).map(|k| tape.slice(mg, k * hc, hc)).collect::<Result<_>>()?;

        // temporal memory: C = f.C + i.g
        let input_gate = {
            let s = tape.add(xs[0], hs[0])?;
            tape.sigmoid(s)?
        };
        let forget_gate = {
            let s = tape.add(xs[1], hs[1])?;
            tape.sigmoid(s)?
        };
        let candidate = {
            let s = tape.add(xs[2], hs[2])?;
            tape.tanh(s)?
        };
        let retained = tape.mul(forget_gate, c_prev)?;
        let admitted = tape.mul(input_gate, candidate)?;
        let c_new = tape.add(retained, admitted)?;

        // spatiotemporal memory: M = f'.M + i'.g'
        let input_gate_m = {
            let s = tape.add(xs[3], ms[0])?;
            tape.sigmoid(s)?
        };
        let forget_gate_m = {
            let s = tape.add(xs[4], ms[1])?;
            tape.sigmoid(s)?
        };
        let candidate_m = {
            let s = tape.add(xs[5], ms[2])?;
            tape.tanh(s)?
        };
        let retained_m = tape.mul(forget_gate_m, m_prev)?;
        let admitted_m = tape.mul(input_gate_m, candidate_m)?;
        let m_new = tape.add(retained_m, admitted_m)?;

        // output gate mixes both memories through a 1x1 convolution
        let memories = tape.concat(&[c_new, m_new])?;
        let o_mem = tape.conv2d(memories, self.w_o, None)?;
        let o_sum = tape.add(xs[6], hs[3])?;
        let o_sum = tape.add(o_sum, o_mem)?;
        let output_gate = tape.sigmoid(o_sum)?;
        let mixed = tape.conv2d(memories, self.w_mix, None)?;
        let mixed = tape.tanh(mixed)?;
        let h_new = tape.mul(output_gate, mixed)?;

        Ok((h_new, c_new, m_new))
    }
}
