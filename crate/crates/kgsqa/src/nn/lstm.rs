//! LSTM cells and the stacked uni/bidirectional encoder with residual
//! connections and inverted dropout.

use rand_chacha::ChaCha8Rng;

use super::store::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Forward or eval mode; dropout only fires in [`Mode::Train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One LSTM cell with fused gates [i f g o]: two weight matrices
/// (input-to-hidden 4h×in, hidden-to-hidden 4h×h) and one bias with the
/// forget block initialized to 1.0.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<LstmCell> {
        let w_x = store.add_uniform(&format!("{prefix}.w_x"), 4 * hidden, input_dim, rng)?;
        let w_h = store.add_uniform(&format!("{prefix}.w_h"), 4 * hidden, hidden, rng)?;
        let b = store.add_lstm_bias(&format!("{prefix}.b"), hidden)?;
        Ok(LstmCell { w_x, w_h, b, hidden })
    }

    /// Standard non-peephole LSTM recurrence for one step.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let from_x = tape.matvec(self.w_x, x)?;
        let from_h = tape.matvec(self.w_h, h)?;
        let sum = tape.add(from_x, from_h)?;
        let pre = tape.add_bias(sum, self.b)?;
        let h_sz = self.hidden;
        let i_pre = tape.slice(pre, 0, h_sz)?;
        let f_pre = tape.slice(pre, h_sz, h_sz)?;
        let g_pre = tape.slice(pre, 2 * h_sz, h_sz)?;
        let o_pre = tape.slice(pre, 3 * h_sz, h_sz)?;
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let c_act = tape.tanh(c_next);
        let h_next = tape.mul(o, c_act)?;
        Ok((h_next, c_next))
    }

    /// Run the cell over a full sequence, returning per-step hidden states.
    pub fn run(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Vec<Var>> {
        let mut h = tape.zeros(self.hidden);
        let mut c = tape.zeros(self.hidden);
        let mut states = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let (h2, c2) = self.step(tape, x, h, c)?;
            h = h2;
            c = c2;
            states.push(h);
        }
        Ok(states)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmEncoderConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub residual: bool,
    pub dropout: f64,
}

impl LstmEncoderConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Invalid("hidden dimension must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Invalid("layer count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout rate {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layer {
    fwd: LstmCell,
    bwd: Option<LstmCell>,
}

/// Per-step hidden states plus the final hidden state. For bidirectional
/// encoders the per-step state concatenates forward and backward states
/// (width 2h) and the final state concatenates the forward state at the
/// last step with the backward state at the first step.
pub struct Encoded {
    pub steps: Vec<Var>,
    pub final_state: Var,
}

/// Stacked LSTM encoder. Residual connections add each layer's input to
/// its output wherever the widths match (mismatched layers, typically the
/// first, pass through unchanged). Dropout applies to layer outputs in
/// train mode only.
#[derive(Debug, Clone)]
pub struct LstmEncoder {
    pub cfg: LstmEncoderConfig,
    layers: Vec<Layer>,
}

impl LstmEncoder {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        cfg: LstmEncoderConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LstmEncoder> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.layers);
        let out_width = if cfg.bidirectional { 2 * cfg.hidden } else { cfg.hidden };
        for l in 0..cfg.layers {
            let in_dim = if l == 0 { cfg.input_dim } else { out_width };
            let fwd = LstmCell::init(store, &format!("{prefix}.l{l}.fwd"), in_dim, cfg.hidden, rng)?;
            let bwd = if cfg.bidirectional {
                Some(LstmCell::init(
                    store,
                    &format!("{prefix}.l{l}.bwd"),
                    in_dim,
                    cfg.hidden,
                    rng,
                )?)
            } else {
                None
            };
            layers.push(Layer { fwd, bwd });
        }
        Ok(LstmEncoder { cfg, layers })
    }

    /// Output width of the per-step states.
    pub fn output_width(&self) -> usize {
        if self.cfg.bidirectional {
            2 * self.cfg.hidden
        } else {
            self.cfg.hidden
        }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        inputs: &[Var],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Encoded> {
        if inputs.is_empty() {
            return Err(Error::EmptyInput("lstm_encode of empty sequence".into()));
        }
        for &x in inputs {
            if tape.len_of(x) != self.cfg.input_dim {
                return Err(Error::DimensionMismatch(format!(
                    "encoder input width {} expected {}",
                    tape.len_of(x),
                    self.cfg.input_dim
                )));
            }
        }

        let mut layer_in: Vec<Var> = inputs.to_vec();
        let mut final_state = None;
        for layer in &self.layers {
            let fwd_states = layer.fwd.run(tape, &layer_in)?;
            let bwd_states = match &layer.bwd {
                Some(cell) => {
                    let rev: Vec<Var> = layer_in.iter().rev().copied().collect();
                    let mut states = cell.run(tape, &rev)?;
                    states.reverse();
                    Some(states)
                }
                None => None,
            };
            // final state from the raw direction states of this layer;
            // the top layer's value wins
            final_state = Some(match &bwd_states {
                Some(bwd) => tape.concat(&[*fwd_states.last().unwrap(), bwd[0]])?,
                None => *fwd_states.last().unwrap(),
            });

            let mut out = Vec::with_capacity(layer_in.len());
            for (t, &f) in fwd_states.iter().enumerate() {
                let mut s = match &bwd_states {
                    Some(bwd) => tape.concat(&[f, bwd[t]])?,
                    None => f,
                };
                if self.cfg.residual && tape.len_of(layer_in[t]) == tape.len_of(s) {
                    s = tape.add(s, layer_in[t])?;
                }
                if self.cfg.dropout > 0.0 && mode == Mode::Train {
                    s = tape.dropout(s, self.cfg.dropout, rng)?;
                }
                out.push(s);
            }
            layer_in = out;
        }

        Ok(Encoded {
            steps: layer_in,
            final_state: final_state.unwrap(),
        })
    }
}
