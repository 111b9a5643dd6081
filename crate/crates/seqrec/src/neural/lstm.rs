//! Long short-term memory cell with the standard gate equations:
//! logistic input/forget/output gates, tanh candidate,
//! c' = f (.) c + i (.) g and h' = o (.) tanh(c').

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{glorot_uniform, Matrix, ParamId, ParameterSet};

/// Parameter handles for one gate: input-to-hidden weights `w` (h x d),
/// hidden-to-hidden weights `u` (h x h), and bias `b` (h x 1).
#[derive(Debug, Clone, Copy)]
pub struct GateParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

/// All four gates of one LSTM layer.
#[derive(Debug, Clone)]
pub struct RecurrentCellParams {
    pub input: GateParams,
    pub forget: GateParams,
    pub output: GateParams,
    pub candidate: GateParams,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl RecurrentCellParams {
    /// Registers freshly initialized gate parameters under `prefix`. The
    /// forget-gate bias starts at 1.0 so early training carries memory.
    pub fn init<R: Rng>(
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        params: &mut ParameterSet,
        rng: &mut R,
    ) -> RecurrentCellParams {
        RecurrentCellParams {
            input: init_gate(prefix, "input", false, input_dim, hidden_dim, params, rng),
            forget: init_gate(prefix, "forget", true, input_dim, hidden_dim, params, rng),
            output: init_gate(prefix, "output", false, input_dim, hidden_dim, params, rng),
            candidate: init_gate(prefix, "candidate", false, input_dim, hidden_dim, params, rng),
            input_dim,
            hidden_dim,
        }
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: vec![0.0; self.hidden_dim],
            c: vec![0.0; self.hidden_dim],
        }
    }
}

fn init_gate<R: Rng>(
    prefix: &str,
    name: &str,
    forget: bool,
    input_dim: usize,
    hidden_dim: usize,
    params: &mut ParameterSet,
    rng: &mut R,
) -> GateParams {
    let w = params.register(
        format!("{prefix}.{name}.w"),
        glorot_uniform(hidden_dim, input_dim, rng),
    );
    let u = params.register(
        format!("{prefix}.{name}.u"),
        glorot_uniform(hidden_dim, hidden_dim, rng),
    );
    let bias_value = if forget { 1.0 } else { 0.0 };
    let b = params.register(
        format!("{prefix}.{name}.b"),
        Matrix::from_fn(hidden_dim, 1, |_, _| bias_value),
    );
    GateParams { w, u, b }
}

/// Hidden and cell state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn gate_preactivation(
    params: &ParameterSet,
    gate: &GateParams,
    x: &[f64],
    h_prev: &[f64],
) -> Vec<f64> {
    let mut a = params.value(gate.w).matvec(x);
    let uh = params.value(gate.u).matvec(h_prev);
    let b = params.value(gate.b).data();
    for ((ai, ui), bi) in a.iter_mut().zip(&uh).zip(b) {
        *ai += ui + bi;
    }
    a
}

/// One forward step. Errors if the new state is non-finite.
pub fn lstm_step(
    cell: &RecurrentCellParams,
    params: &ParameterSet,
    x: &[f64],
    state: &LstmState,
) -> Result<(LstmState, LstmStepCache)> {
    assert_eq!(x.len(), cell.input_dim, "lstm input width mismatch");
    assert_eq!(state.h.len(), cell.hidden_dim, "lstm state width mismatch");

    let i = crate::neural::sigmoid(&gate_preactivation(params, &cell.input, x, &state.h));
    let f = crate::neural::sigmoid(&gate_preactivation(params, &cell.forget, x, &state.h));
    let o = crate::neural::sigmoid(&gate_preactivation(params, &cell.output, x, &state.h));
    let g: Vec<f64> = gate_preactivation(params, &cell.candidate, x, &state.h)
        .iter()
        .map(|v| v.tanh())
        .collect();

    let mut c = vec![0.0; cell.hidden_dim];
    for k in 0..cell.hidden_dim {
        c[k] = f[k] * state.c[k] + i[k] * g[k];
    }
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(ov, tv)| ov * tv).collect();

    if !h.iter().chain(&c).all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "lstm step state (h or c)".to_string(),
        });
    }

    let cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        i,
        f,
        o,
        g,
        tanh_c,
    };
    Ok((LstmState { h, c }, cache))
}

/// Exact backward pass for one step. `dh` and `dc` are the gradients flowing
/// into the step's outputs; parameter gradients accumulate into `params` and
/// the gradients w.r.t. the step inputs come back as (dx, dh_prev, dc_prev).
pub fn lstm_step_backward(
    cell: &RecurrentCellParams,
    params: &mut ParameterSet,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = cell.hidden_dim;
    let mut d_out_gate = vec![0.0; n];
    let mut dc_total = vec![0.0; n];
    for k in 0..n {
        d_out_gate[k] = dh[k] * cache.tanh_c[k];
        dc_total[k] = dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
    }

    let mut da_input = vec![0.0; n];
    let mut da_forget = vec![0.0; n];
    let mut da_output = vec![0.0; n];
    let mut da_candidate = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (i, f, o, g) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k]);
        da_input[k] = dc_total[k] * g * i * (1.0 - i);
        da_forget[k] = dc_total[k] * cache.c_prev[k] * f * (1.0 - f);
        da_output[k] = d_out_gate[k] * o * (1.0 - o);
        da_candidate[k] = dc_total[k] * i * (1.0 - g * g);
        dc_prev[k] = dc_total[k] * f;
    }

    let mut dx = vec![0.0; cell.input_dim];
    let mut dh_prev = vec![0.0; n];
    for (gate, da) in [
        (&cell.input, &da_input),
        (&cell.forget, &da_forget),
        (&cell.output, &da_output),
        (&cell.candidate, &da_candidate),
    ] {
        let dxg = params.value(gate.w).matvec_transpose(da);
        for (acc, v) in dx.iter_mut().zip(&dxg) {
            *acc += v;
        }
        let dhg = params.value(gate.u).matvec_transpose(da);
        for (acc, v) in dh_prev.iter_mut().zip(&dhg) {
            *acc += v;
        }
        params.grad_mut(gate.w).add_outer(da, &cache.x);
        params.grad_mut(gate.u).add_outer(da, &cache.h_prev);
        let db = params.grad_mut(gate.b);
        for (slot, v) in db.data_mut().iter_mut().zip(da) {
            *slot += v;
        }
    }
    (dx, dh_prev, dc_prev)
}
