use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{scalar, Tensor};

use super::{glorot_uniform, shape_error, CellKind, ParamMut, ParamRef};

/// Parameters of one recurrent cell.
///
/// Every gate uses a combined weight matrix of shape `(input + units, units)`
/// applied to the concatenated `[x; h]` vector, plus one bias vector per
/// gate. LSTM gate order is `i, f, o, g`; GRU order is `z, r, candidate`.
/// For identical sizes this makes the GRU parameter count exactly 3/4 of
/// the LSTM's.
#[derive(Debug, Clone)]
pub struct CellParams {
    kind: CellKind,
    input_size: usize,
    units: usize,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    dweights: Vec<Tensor>,
    dbiases: Vec<Tensor>,
}

const LSTM_PARAM_NAMES: [(&str, &str); 4] =
    [("w_i", "b_i"), ("w_f", "b_f"), ("w_o", "b_o"), ("w_g", "b_g")];
const GRU_PARAM_NAMES: [(&str, &str); 3] = [("w_z", "b_z"), ("w_r", "b_r"), ("w_h", "b_h")];

impl CellParams {
    pub fn new(kind: CellKind, input_size: usize, units: usize, rng: &mut ChaCha8Rng) -> Self {
        let gates = kind.gate_count();
        let rows = input_size + units;
        let weights = (0..gates)
            .map(|_| glorot_uniform(rng, vec![rows, units], rows, units))
            .collect();
        let biases = (0..gates).map(|_| Tensor::zeros(&[units])).collect();
        CellParams {
            kind,
            input_size,
            units,
            weights,
            biases,
            dweights: (0..gates).map(|_| Tensor::zeros(&[rows, units])).collect(),
            dbiases: (0..gates).map(|_| Tensor::zeros(&[units])).collect(),
        }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn units(&self) -> usize {
        self.units
    }

    /// Exact trainable element count: `gates * (units*(input+units) + units)`.
    pub fn param_count(&self) -> usize {
        self.kind.gate_count() * (self.units * (self.input_size + self.units) + self.units)
    }

    fn check_step_shapes(&self, x: &[f64], h: &[f64]) -> Result<()> {
        if x.len() != self.input_size || h.len() != self.units {
            return Err(Error::ShapeMismatch {
                op: "cell_step",
                lhs: vec![x.len(), h.len()],
                rhs: vec![self.input_size, self.units],
            });
        }
        Ok(())
    }

    /// `pre = b + W [x; h]` for one gate.
    fn gate_preact(&self, gate: usize, x: &[f64], h: &[f64], out: &mut [f64]) {
        let w = &self.weights[gate];
        out.copy_from_slice(self.biases[gate].data());
        for (j, &v) in x.iter().chain(h.iter()).enumerate() {
            let w_row = w.row(j);
            for (o, &wv) in out.iter_mut().zip(w_row) {
                *o += v * wv;
            }
        }
    }

    /// Single LSTM step. `gates` receives the post-activation `i|f|o|g`
    /// values (length `4 * units`) used by backpropagation.
    fn lstm_step_cached(
        &self,
        x: &[f64],
        h: &[f64],
        c: &[f64],
        gates: &mut [f64],
        h_out: &mut [f64],
        c_out: &mut [f64],
    ) {
        let m = self.units;
        for g in 0..4 {
            let slot = &mut gates[g * m..(g + 1) * m];
            self.gate_preact(g, x, h, slot);
            for v in slot.iter_mut() {
                *v = if g == 3 { scalar::tanh(*v) } else { scalar::sigmoid(*v) };
            }
        }
        let (i, rest) = gates.split_at(m);
        let (f, rest) = rest.split_at(m);
        let (o, g) = rest.split_at(m);
        for k in 0..m {
            c_out[k] = f[k] * c[k] + i[k] * g[k];
            h_out[k] = o[k] * scalar::tanh(c_out[k]);
        }
    }

    /// Single GRU step; `gates` receives post-activation `z|r|candidate`.
    fn gru_step_cached(&self, x: &[f64], h: &[f64], gates: &mut [f64], h_out: &mut [f64]) {
        let m = self.units;
        for g in 0..2 {
            let slot = &mut gates[g * m..(g + 1) * m];
            self.gate_preact(g, x, h, slot);
            for v in slot.iter_mut() {
                *v = scalar::sigmoid(*v);
            }
        }
        let rh: Vec<f64> = (0..m).map(|k| gates[m + k] * h[k]).collect();
        {
            let slot = &mut gates[2 * m..3 * m];
            // candidate uses [x; r .* h]
            let w = &self.weights[2];
            slot.copy_from_slice(self.biases[2].data());
            for (j, &v) in x.iter().chain(rh.iter()).enumerate() {
                let w_row = w.row(j);
                for (o, &wv) in slot.iter_mut().zip(w_row) {
                    *o += v * wv;
                }
            }
            for v in slot.iter_mut() {
                *v = scalar::tanh(*v);
            }
        }
        for k in 0..m {
            let z = gates[k];
            h_out[k] = z * h[k] + (1.0 - z) * gates[2 * m + k];
        }
    }

    /// One LSTM step: gate equations, then `c' = f.*c + i.*g`,
    /// `h' = o.*tanh(c')`.
    pub fn lstm_step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        debug_assert_eq!(self.kind, CellKind::Lstm);
        self.check_step_shapes(x, h)?;
        let m = self.units;
        let mut gates = vec![0.0; 4 * m];
        let mut h_out = vec![0.0; m];
        let mut c_out = vec![0.0; m];
        self.lstm_step_cached(x, h, c, &mut gates, &mut h_out, &mut c_out);
        Ok((h_out, c_out))
    }

    /// One GRU step: `h' = z.*h + (1-z).*candidate` with the reset gate
    /// applied to `h` before the candidate.
    pub fn gru_step(&self, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(self.kind, CellKind::Gru);
        self.check_step_shapes(x, h)?;
        let m = self.units;
        let mut gates = vec![0.0; 3 * m];
        let mut h_out = vec![0.0; m];
        self.gru_step_cached(x, h, &mut gates, &mut h_out);
        Ok(h_out)
    }

    /// `dW += outer([xpart; hpart], da)`, `db += da`, and the matching
    /// input gradients accumulated into `dx` / `dh`.
    fn gate_backward(
        &mut self,
        gate: usize,
        xpart: &[f64],
        hpart: &[f64],
        da: &[f64],
        dx: &mut [f64],
        dh: &mut [f64],
    ) {
        let m = self.units;
        let n = xpart.len();
        for (k, &d) in da.iter().enumerate() {
            self.dbiases[gate].data_mut()[k] += d;
        }
        let w = &self.weights[gate];
        let dw = &mut self.dweights[gate];
        for (j, &v) in xpart.iter().enumerate() {
            let w_row = w.row(j);
            let dw_row = dw.row_mut(j);
            let mut acc = 0.0;
            for k in 0..m {
                dw_row[k] += v * da[k];
                acc += w_row[k] * da[k];
            }
            dx[j] += acc;
        }
        for (j, &v) in hpart.iter().enumerate() {
            let w_row = w.row(n + j);
            let dw_row = dw.row_mut(n + j);
            let mut acc = 0.0;
            for k in 0..m {
                dw_row[k] += v * da[k];
                acc += w_row[k] * da[k];
            }
            dh[j] += acc;
        }
    }

    pub fn params(&self) -> Vec<ParamRef<'_>> {
        let names: &[(&'static str, &'static str)] = match self.kind {
            CellKind::Lstm => &LSTM_PARAM_NAMES,
            CellKind::Gru => &GRU_PARAM_NAMES,
        };
        let mut out = Vec::with_capacity(2 * names.len());
        for (g, (wn, bn)) in names.iter().enumerate() {
            out.push(ParamRef {
                name: wn,
                value: &self.weights[g],
                grad: &self.dweights[g],
                is_weight: true,
            });
            out.push(ParamRef {
                name: bn,
                value: &self.biases[g],
                grad: &self.dbiases[g],
                is_weight: false,
            });
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let names: &[(&'static str, &'static str)] = match self.kind {
            CellKind::Lstm => &LSTM_PARAM_NAMES,
            CellKind::Gru => &GRU_PARAM_NAMES,
        };
        let mut out = Vec::with_capacity(2 * names.len());
        for (((w, dw), (b, db)), (wn, bn)) in self
            .weights
            .iter_mut()
            .zip(self.dweights.iter_mut())
            .zip(self.biases.iter_mut().zip(self.dbiases.iter_mut()))
            .zip(names)
        {
            out.push(ParamMut {
                name: wn,
                value: w,
                grad: dw,
                is_weight: true,
            });
            out.push(ParamMut {
                name: bn,
                value: b,
                grad: db,
                is_weight: false,
            });
        }
        out
    }
}

/// A recurrent layer unrolled over the full input sequence.
///
/// The initial state is zero. The backward pass is complete
/// backpropagation through time; no truncation happens inside a window.
#[derive(Debug, Clone)]
pub struct Recurrent {
    cell: CellParams,
    return_sequences: bool,
    cache: Option<RecurrentCache>,
}

#[derive(Debug, Clone)]
struct RecurrentCache {
    input: Tensor,
    /// `T x (gates*units)` post-activation gate values.
    gates: Vec<f64>,
    /// `T x units` hidden states.
    hidden: Vec<f64>,
    /// `T x units` cell states (LSTM only).
    cell_state: Vec<f64>,
}

impl Recurrent {
    pub fn new(
        kind: CellKind,
        input_size: usize,
        units: usize,
        return_sequences: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Recurrent {
            cell: CellParams::new(kind, input_size, units, rng),
            return_sequences,
            cache: None,
        }
    }

    pub fn kind(&self) -> CellKind {
        self.cell.kind()
    }

    pub fn cell(&self) -> &CellParams {
        &self.cell
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [t, n] if *n == self.cell.input_size => {
                if *t == 0 {
                    Err(Error::InvalidArgument(
                        "recurrent layer needs at least one timestep".to_string(),
                    ))
                } else if self.return_sequences {
                    Ok(vec![*t, self.cell.units])
                } else {
                    Ok(vec![self.cell.units])
                }
            }
            _ => Err(shape_error(
                "recurrent",
                input,
                vec![0, self.cell.input_size],
            )),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let t_len = x.rows();
        let m = self.cell.units;
        let gates_per_step = self.cell.kind.gate_count() * m;

        let mut gates = vec![0.0; t_len * gates_per_step];
        let mut hidden = vec![0.0; t_len * m];
        let mut cell_state = if self.cell.kind == CellKind::Lstm {
            vec![0.0; t_len * m]
        } else {
            Vec::new()
        };

        let zero_state = vec![0.0; m];
        for t in 0..t_len {
            let (past, present) = hidden.split_at_mut(t * m);
            let h_prev: &[f64] = if t == 0 {
                &zero_state
            } else {
                &past[(t - 1) * m..]
            };
            let h_out = &mut present[..m];
            let gate_slot = &mut gates[t * gates_per_step..(t + 1) * gates_per_step];
            match self.cell.kind {
                CellKind::Lstm => {
                    let (c_past, c_present) = cell_state.split_at_mut(t * m);
                    let c_prev: &[f64] = if t == 0 {
                        &zero_state
                    } else {
                        &c_past[(t - 1) * m..]
                    };
                    self.cell.lstm_step_cached(
                        x.row(t),
                        h_prev,
                        c_prev,
                        gate_slot,
                        h_out,
                        &mut c_present[..m],
                    );
                }
                CellKind::Gru => {
                    self.cell.gru_step_cached(x.row(t), h_prev, gate_slot, h_out);
                }
            }
        }

        let out = if self.return_sequences {
            Tensor::new(out_shape, hidden.clone())?
        } else {
            Tensor::new(out_shape, hidden[(t_len - 1) * m..].to_vec())?
        };
        self.cache = Some(RecurrentCache {
            input: x.clone(),
            gates,
            hidden,
            cell_state,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().expect("backward before forward");
        let x = &cache.input;
        let t_len = x.rows();
        let n = self.cell.input_size;
        let m = self.cell.units;
        let gates_per_step = self.cell.kind.gate_count() * m;

        let mut dx = vec![0.0; t_len * n];
        let mut dh_next = vec![0.0; m];
        let mut dc_next = vec![0.0; m];
        let zero_state = vec![0.0; m];

        for t in (0..t_len).rev() {
            // Total gradient flowing into h_t.
            let mut dh = dh_next.clone();
            if self.return_sequences {
                for (d, &g) in dh.iter_mut().zip(grad.row(t)) {
                    *d += g;
                }
            } else if t == t_len - 1 {
                for (d, &g) in dh.iter_mut().zip(grad.data()) {
                    *d += g;
                }
            }

            let h_prev: &[f64] = if t == 0 {
                &zero_state
            } else {
                &cache.hidden[(t - 1) * m..t * m]
            };
            let x_t = x.row(t);
            let dx_t = &mut dx[t * n..(t + 1) * n];
            let gates = &cache.gates[t * gates_per_step..(t + 1) * gates_per_step];
            let mut dh_prev = vec![0.0; m];

            match self.cell.kind {
                CellKind::Lstm => {
                    let (i, rest) = gates.split_at(m);
                    let (f, rest) = rest.split_at(m);
                    let (o, g) = rest.split_at(m);
                    let c_t = &cache.cell_state[t * m..(t + 1) * m];
                    let c_prev: &[f64] = if t == 0 {
                        &zero_state
                    } else {
                        &cache.cell_state[(t - 1) * m..t * m]
                    };

                    let mut da_i = vec![0.0; m];
                    let mut da_f = vec![0.0; m];
                    let mut da_o = vec![0.0; m];
                    let mut da_g = vec![0.0; m];
                    let mut dc = vec![0.0; m];
                    for k in 0..m {
                        let tc = scalar::tanh(c_t[k]);
                        da_o[k] = dh[k] * tc * o[k] * (1.0 - o[k]);
                        dc[k] = dc_next[k] + dh[k] * o[k] * (1.0 - tc * tc);
                        da_i[k] = dc[k] * g[k] * i[k] * (1.0 - i[k]);
                        da_f[k] = dc[k] * c_prev[k] * f[k] * (1.0 - f[k]);
                        da_g[k] = dc[k] * i[k] * (1.0 - g[k] * g[k]);
                        dc_next[k] = dc[k] * f[k];
                    }
                    self.cell.gate_backward(0, x_t, h_prev, &da_i, dx_t, &mut dh_prev);
                    self.cell.gate_backward(1, x_t, h_prev, &da_f, dx_t, &mut dh_prev);
                    self.cell.gate_backward(2, x_t, h_prev, &da_o, dx_t, &mut dh_prev);
                    self.cell.gate_backward(3, x_t, h_prev, &da_g, dx_t, &mut dh_prev);
                }
                CellKind::Gru => {
                    let (z, rest) = gates.split_at(m);
                    let (r, hc) = rest.split_at(m);

                    let mut da_z = vec![0.0; m];
                    let mut da_h = vec![0.0; m];
                    let rh: Vec<f64> = (0..m).map(|k| r[k] * h_prev[k]).collect();
                    for k in 0..m {
                        da_z[k] = dh[k] * (h_prev[k] - hc[k]) * z[k] * (1.0 - z[k]);
                        da_h[k] = dh[k] * (1.0 - z[k]) * (1.0 - hc[k] * hc[k]);
                        dh_prev[k] += dh[k] * z[k];
                    }
                    // Candidate gate saw [x; r .* h_prev]; collect the
                    // gradient w.r.t. that product separately.
                    let mut d_rh = vec![0.0; m];
                    self.cell.gate_backward(2, x_t, &rh, &da_h, dx_t, &mut d_rh);
                    let mut da_r = vec![0.0; m];
                    for k in 0..m {
                        da_r[k] = d_rh[k] * h_prev[k] * r[k] * (1.0 - r[k]);
                        dh_prev[k] += d_rh[k] * r[k];
                    }
                    self.cell.gate_backward(0, x_t, h_prev, &da_z, dx_t, &mut dh_prev);
                    self.cell.gate_backward(1, x_t, h_prev, &da_r, dx_t, &mut dh_prev);
                }
            }
            dh_next = dh_prev;
        }

        self.cache = Some(cache);
        Tensor::new(vec![t_len, n], dx)
    }

    pub fn params(&self) -> Vec<ParamRef<'_>> {
        self.cell.params()
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.cell.params_mut()
    }
}
