//! LSTM cell and sequence unrolling with backpropagation through time.
//!
//! Gates are stacked in the order input, forget, cell candidate, output:
//!
//! ```text
//! z  = W_ih x + W_hh h + b          (4H)
//! i  = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::layer::{Layer, Mode};
use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::KernelRng;

pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `4H x D`
    pub w_ih: ParamTensor,
    /// `4H x H`
    pub w_hh: ParamTensor,
    /// `1 x 4H`
    pub bias: ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

struct Gates {
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
}

impl LstmParams {
    /// Glorot-uniform weights, zero biases except the forget gate (1.0).
    pub fn new(name: &str, inputs: usize, hidden: usize, rng: &mut KernelRng) -> Self {
        let mut bias = ParamTensor::zeros(format!("{name}.bias"), 1, 4 * hidden);
        bias.values.slice_mut(s![0, hidden..2 * hidden]).fill(FORGET_BIAS_INIT);
        LstmParams {
            w_ih: ParamTensor::glorot(format!("{name}.w_ih"), 4 * hidden, inputs, rng),
            w_hh: ParamTensor::glorot(format!("{name}.w_hh"), 4 * hidden, hidden, rng),
            bias,
        }
    }

    pub fn zeros(name: &str, inputs: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: ParamTensor::zeros(format!("{name}.w_ih"), 4 * hidden, inputs),
            w_hh: ParamTensor::zeros(format!("{name}.w_hh"), 4 * hidden, hidden),
            bias: ParamTensor::zeros(format!("{name}.bias"), 1, 4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.values.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.values.ncols()
    }

    fn gates(&self, state: &LstmState, x: ArrayView1<f64>) -> Result<Gates> {
        let hsz = self.hidden();
        if x.len() != self.inputs() || state.h.len() != hsz || state.c.len() != hsz {
            return Err(Error::contract(format!(
                "lstm step: input {} / state {} incompatible with D={} H={hsz}",
                x.len(),
                state.h.len(),
                self.inputs()
            )));
        }
        Ok(self.activate(self.w_ih.values.dot(&x) + self.w_hh.values.dot(&state.h) + self.bias.values.row(0)))
    }

    fn activate(&self, z: Array1<f64>) -> Gates {
        let hsz = self.hidden();
        Gates {
            i: z.slice(s![0..hsz]).mapv(sigmoid),
            f: z.slice(s![hsz..2 * hsz]).mapv(sigmoid),
            g: z.slice(s![2 * hsz..3 * hsz]).mapv(f64::tanh),
            o: z.slice(s![3 * hsz..]).mapv(sigmoid),
        }
    }
}

/// One LSTM step: `(h, c), x -> (h', c')`.
pub fn lstm_step(params: &LstmParams, state: &LstmState, x: ArrayView1<f64>) -> Result<LstmState> {
    let g = params.gates(state, x)?;
    let c = &g.f * &state.c + &g.i * &g.g;
    let h = &g.o * &c.mapv(f64::tanh);
    Ok(LstmState { h, c })
}

/// An LSTM run over one sequence from a zero state; rows of the input are
/// time steps and rows of the output are the hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub params: LstmParams,
}

struct StepCache {
    gates: Gates,
    c_prev: Array1<f64>,
    tanh_c: Array1<f64>,
}

pub struct LstmCache {
    inputs: Array2<f64>,
    hidden: Array2<f64>,
    steps: Vec<StepCache>,
}

impl Lstm {
    pub fn new(name: &str, inputs: usize, hidden: usize, rng: &mut KernelRng) -> Self {
        Lstm {
            params: LstmParams::new(name, inputs, hidden, rng),
        }
    }

    /// Final state after consuming every row of `xs`; bit-identical to the
    /// last row of `forward`.
    pub fn run(&self, xs: &Array2<f64>) -> Result<LstmState> {
        let projected = self.project(xs)?;
        let mut state = LstmState::zeros(self.params.hidden());
        for t in 0..xs.nrows() {
            let g = self
                .params
                .activate(&projected.row(t) + &self.params.w_hh.values.dot(&state.h));
            state.c = &g.f * &state.c + &g.i * &g.g;
            state.h = &g.o * &state.c.mapv(f64::tanh);
        }
        Ok(state)
    }

    /// `W_ih x_t + b` for every step in one product.
    fn project(&self, xs: &Array2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.params.inputs() {
            return Err(Error::contract(format!(
                "lstm: input width {} does not match D={}",
                xs.ncols(),
                self.params.inputs()
            )));
        }
        Ok(xs.dot(&self.params.w_ih.values.t()) + &self.params.bias.values)
    }
}

impl Layer for Lstm {
    type Cache = LstmCache;

    fn forward(&mut self, input: &Array2<f64>, _mode: Mode, _rng: &mut KernelRng) -> Result<(Array2<f64>, LstmCache)> {
        let hsz = self.params.hidden();
        let projected = self.project(input)?;
        let mut state = LstmState::zeros(hsz);
        let mut out = Array2::zeros((input.nrows(), hsz));
        let mut steps = Vec::with_capacity(input.nrows());
        for t in 0..input.nrows() {
            let gates = self
                .params
                .activate(&projected.row(t) + &self.params.w_hh.values.dot(&state.h));
            let c = &gates.f * &state.c + &gates.i * &gates.g;
            let tanh_c = c.mapv(f64::tanh);
            let h = &gates.o * &tanh_c;
            out.row_mut(t).assign(&h);
            steps.push(StepCache {
                gates,
                c_prev: std::mem::replace(&mut state.c, c),
                tanh_c,
            });
            state.h = h;
        }
        Ok((
            out.clone(),
            LstmCache {
                inputs: input.clone(),
                hidden: out,
                steps,
            },
        ))
    }

    fn backward(&mut self, cache: &LstmCache, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        let hsz = self.params.hidden();
        if grad_out.dim() != cache.hidden.dim() {
            return Err(Error::contract("lstm: gradient shape does not match cached forward"));
        }
        let steps = cache.steps.len();
        let mut dh_next = Array1::<f64>::zeros(hsz);
        let mut dc_next = Array1::<f64>::zeros(hsz);
        let mut dzs = Array2::<f64>::zeros((steps, 4 * hsz));
        for t in (0..steps).rev() {
            let mut dz = dzs.row_mut(t);
            let st = &cache.steps[t];
            let Gates { i, f, g, o } = &st.gates;
            let dh = &grad_out.row(t) + &dh_next;
            let d_o = &dh * &st.tanh_c;
            let dc = &dh * o * &st.tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;
            let di = &dc * g;
            let dg = &dc * i;
            let df = &dc * &st.c_prev;
            dc_next = &dc * f;
            dz.slice_mut(s![0..hsz]).assign(&(&di * &i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![hsz..2 * hsz])
                .assign(&(&df * &f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![2 * hsz..3 * hsz])
                .assign(&(&dg * &g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![3 * hsz..]).assign(&(&d_o * &o.mapv(|v| v * (1.0 - v))));

            dh_next = self.params.w_hh.values.t().dot(&dz);
        }
        self.params.w_ih.grad += &dzs.t().dot(&cache.inputs);
        if steps > 1 {
            let later = dzs.slice(s![1.., ..]);
            self.params.w_hh.grad += &later.t().dot(&cache.hidden.slice(s![..steps - 1, ..]));
        }
        self.params.bias.grad += &dzs.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok(dzs.dot(&self.params.w_ih.values))
    }

    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.params.w_ih, &self.params.w_hh, &self.params.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.params.w_ih, &mut self.params.w_hh, &mut self.params.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, DEFAULT_EPSILON};
    use crate::rng::rng_from_seed;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn zero_weights_keep_zero_state() {
        let p = LstmParams::zeros("l", 3, 4);
        let s = lstm_step(&p, &LstmState::zeros(4), array![1.0, -2.0, 0.5].view()).unwrap();
        assert!(s.h.iter().all(|&v| v == 0.0));
        assert!(s.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let p = LstmParams::new("l", 3, 4, &mut rng_from_seed(0));
        let b = p.bias.values.row(0);
        assert!(b.slice(s![4..8]).iter().all(|&v| v == 1.0));
        assert!(b.slice(s![0..4]).iter().all(|&v| v == 0.0));
        assert!(b.slice(s![8..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_adds_input_term() {
        // H = 2, D = 1; hand-evaluated cell equation with f -> 1.
        let mut p = LstmParams::zeros("l", 1, 2);
        p.w_ih.values = array![[0.5], [-1.0], [0.0], [0.0], [2.0], [0.3], [1.0], [1.0]];
        p.bias.values = array![[0.0, 0.0, 40.0, 40.0, 0.0, 0.0, 0.0, 0.0]];
        let state = LstmState {
            h: array![0.0, 0.0],
            c: array![0.7, -0.2],
        };
        let x = 0.8;
        let next = lstm_step(&p, &state, array![x].view()).unwrap();
        for k in 0..2 {
            let i = 1.0 / (1.0 + (-p.w_ih.values[[k, 0]] * x).exp());
            let g = (p.w_ih.values[[4 + k, 0]] * x).tanh();
            let expected_c = state.c[k] + i * g;
            assert!((next.c[k] - expected_c).abs() < 1e-12, "k={k}");
            let o = 1.0 / (1.0 + (-p.w_ih.values[[6 + k, 0]] * x).exp());
            assert!((next.h[k] - o * expected_c.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn unrolled_backward_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let mut lstm = Lstm::new("l", 3, 4, &mut rng);
            let steps = 1 + (seed as usize % 5);
            let x = Array2::from_shape_simple_fn((steps, 3), || rng.random_range(-1.5..1.5));
            let err = grad_check(&mut lstm, &x, DEFAULT_EPSILON, seed).unwrap();
            assert!(err < 1e-4, "seed {seed}, {steps} steps: {err}");
        }
    }

    #[test]
    fn layer_forward_agrees_with_step_function() {
        let mut rng = rng_from_seed(4);
        let mut lstm = Lstm::new("l", 2, 3, &mut rng);
        let x = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-1.0..1.0));
        let (hs, _) = lstm.forward(&x, Mode::Eval, &mut rng).unwrap();
        let last = lstm.run(&x).unwrap();
        assert_eq!(hs.row(4), last.h);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = LstmParams::zeros("l", 3, 2);
        assert!(lstm_step(&p, &LstmState::zeros(2), array![1.0].view()).is_err());
    }
}
