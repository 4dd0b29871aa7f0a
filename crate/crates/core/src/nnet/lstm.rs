//! Single-direction LSTM cell sequences and the bidirectional layer built
//! from a pair of them, with hand-rolled reverse-mode gradients.
//!
//! Gate packing convention for all `(4H, _)` tensors: rows `[0,H)` input gate,
//! `[H,2H)` forget gate, `[2H,3H)` cell candidate, `[3H,4H)` output gate.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::rngs::StdRng;
use rand::RngExt;

use crate::scalar::Scalar;

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Parameters for one direction of an LSTM layer.
#[derive(Debug, Clone)]
pub struct LstmDir<F: Scalar> {
    /// Input weights, `(4H, D)`.
    pub w: Array2<F>,
    /// Recurrent weights, `(4H, H)`.
    pub u: Array2<F>,
    /// Bias, `(4H,)`.
    pub b: Array1<F>,
}

/// Recorded intermediates of one directional pass, consumed by `backward`.
#[derive(Debug)]
pub struct DirTape<F: Scalar> {
    /// Post-activation gate values `[i f g o]`, `(T, 4H)`.
    gates: Array2<F>,
    /// Cell states, `(T, H)`.
    cells: Array2<F>,
    /// `tanh(c_t)`, `(T, H)`.
    tanh_c: Array2<F>,
    /// Hidden states, `(T, H)`.
    hidden: Array2<F>,
}

/// Gradients for one direction, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct DirGrads<F: Scalar> {
    pub w: Array2<F>,
    pub u: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> LstmDir<F> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden_dim, input_dim)),
            u: Array2::zeros((4 * hidden_dim, hidden_dim)),
            b: Array1::zeros(4 * hidden_dim),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights; forget-gate bias 1, other biases 0.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut StdRng) -> Self {
        let mut dir = Self::zeros(input_dim, hidden_dim);
        let wb = 1.0 / (input_dim as f64).sqrt();
        for v in dir.w.iter_mut() {
            *v = F::from_f64(rng.random_range(-wb..wb));
        }
        let ub = 1.0 / (hidden_dim as f64).sqrt();
        for v in dir.u.iter_mut() {
            *v = F::from_f64(rng.random_range(-ub..ub));
        }
        for j in hidden_dim..2 * hidden_dim {
            dir.b[j] = F::one();
        }
        dir
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.dim().1
    }

    pub fn input_dim(&self) -> usize {
        self.w.dim().1
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    /// Run the cell over `input` rows in order, from zero initial state.
    /// Returns the hidden sequence `(T, H)` and the tape for `backward`.
    pub fn forward(&self, input: ArrayView2<F>) -> (Array2<F>, DirTape<F>) {
        let (t_len, _) = input.dim();
        let h = self.hidden_dim();

        // Input contribution for every step in one product.
        let pre = input.dot(&self.w.t()); // (T, 4H)

        let mut tape = DirTape {
            gates: Array2::zeros((t_len, 4 * h)),
            cells: Array2::zeros((t_len, h)),
            tanh_c: Array2::zeros((t_len, h)),
            hidden: Array2::zeros((t_len, h)),
        };

        let mut h_prev = Array1::<F>::zeros(h);
        let mut c_prev = Array1::<F>::zeros(h);

        for t in 0..t_len {
            let mut z = self.u.dot(&h_prev); // (4H)
            for j in 0..4 * h {
                z[j] += pre[(t, j)] + self.b[j];
            }
            for j in 0..h {
                let ig = sigmoid(z[j]);
                let fg = sigmoid(z[h + j]);
                let gg = z[2 * h + j].tanh();
                let og = sigmoid(z[3 * h + j]);
                let c = fg * c_prev[j] + ig * gg;
                let tc = c.tanh();
                let hv = og * tc;

                tape.gates[(t, j)] = ig;
                tape.gates[(t, h + j)] = fg;
                tape.gates[(t, 2 * h + j)] = gg;
                tape.gates[(t, 3 * h + j)] = og;
                tape.cells[(t, j)] = c;
                tape.tanh_c[(t, j)] = tc;
                tape.hidden[(t, j)] = hv;

                c_prev[j] = c;
                h_prev[j] = hv;
            }
        }

        (tape.hidden.clone(), tape)
    }

    /// Backpropagate `d_hidden` (gradient w.r.t. every hidden output row)
    /// through the recorded pass. Returns parameter gradients and the
    /// gradient w.r.t. the input sequence.
    pub fn backward(
        &self,
        input: ArrayView2<F>,
        tape: &DirTape<F>,
        d_hidden: ArrayView2<F>,
    ) -> (DirGrads<F>, Array2<F>) {
        let (t_len, _) = input.dim();
        let h = self.hidden_dim();

        let mut dz_all = Array2::<F>::zeros((t_len, 4 * h));
        let mut dh_rec = Array1::<F>::zeros(h);
        let mut dc_rec = Array1::<F>::zeros(h);
        let mut dz = Array1::<F>::zeros(4 * h);

        for t in (0..t_len).rev() {
            for j in 0..h {
                let ig = tape.gates[(t, j)];
                let fg = tape.gates[(t, h + j)];
                let gg = tape.gates[(t, 2 * h + j)];
                let og = tape.gates[(t, 3 * h + j)];
                let tc = tape.tanh_c[(t, j)];
                let c_prev = if t == 0 { F::zero() } else { tape.cells[(t - 1, j)] };

                let dh = d_hidden[(t, j)] + dh_rec[j];
                let d_og = dh * tc;
                let dc = dc_rec[j] + dh * og * (F::one() - tc * tc);
                let d_ig = dc * gg;
                let d_gg = dc * ig;
                let d_fg = dc * c_prev;
                dc_rec[j] = dc * fg;

                dz[j] = d_ig * ig * (F::one() - ig);
                dz[h + j] = d_fg * fg * (F::one() - fg);
                dz[2 * h + j] = d_gg * (F::one() - gg * gg);
                dz[3 * h + j] = d_og * og * (F::one() - og);
            }
            dh_rec = self.u.t().dot(&dz);
            dz_all.row_mut(t).assign(&dz);
        }

        // h_prev rows: zero for t = 0, shifted hidden states otherwise.
        let mut h_prev = Array2::<F>::zeros((t_len, h));
        if t_len > 1 {
            h_prev
                .slice_mut(s![1.., ..])
                .assign(&tape.hidden.slice(s![..t_len - 1, ..]));
        }

        let grads = DirGrads {
            w: dz_all.t().dot(&input),
            u: dz_all.t().dot(&h_prev),
            b: dz_all.sum_axis(Axis(0)),
        };
        let d_input = dz_all.dot(&self.w);
        (grads, d_input)
    }
}

impl<F: Scalar> DirGrads<F> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden_dim, input_dim)),
            u: Array2::zeros((4 * hidden_dim, hidden_dim)),
            b: Array1::zeros(4 * hidden_dim),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.w += &other.w;
        self.u += &other.u;
        self.b += &other.b;
    }
}

/// Bidirectional LSTM layer: two independent directional cells whose hidden
/// sequences are concatenated per timestep (forward half first).
#[derive(Debug, Clone)]
pub struct BiLstm<F: Scalar> {
    pub fwd: LstmDir<F>,
    pub bwd: LstmDir<F>,
}

#[derive(Debug)]
pub struct BiTape<F: Scalar> {
    fwd: DirTape<F>,
    bwd: DirTape<F>,
}

#[derive(Debug, Clone)]
pub struct BiGrads<F: Scalar> {
    pub fwd: DirGrads<F>,
    pub bwd: DirGrads<F>,
}

impl<F: Scalar> BiLstm<F> {
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut StdRng) -> Self {
        Self {
            fwd: LstmDir::init(input_dim, hidden_dim, rng),
            bwd: LstmDir::init(input_dim, hidden_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.fwd.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    pub fn num_params(&self) -> usize {
        self.fwd.num_params() + self.bwd.num_params()
    }

    /// `(T, D) -> (T, 2H)`; forward direction reads t = 0..T-1, backward
    /// direction reads t = T-1..0, outputs concatenated per timestep.
    pub fn forward(&self, input: ArrayView2<F>) -> (Array2<F>, BiTape<F>) {
        let (t_len, _) = input.dim();
        let h = self.hidden_dim();

        let (h_f, tape_f) = self.fwd.forward(input);
        let rev_input = input.slice(s![..;-1, ..]).to_owned();
        let (h_b_rev, tape_b) = self.bwd.forward(rev_input.view());

        let mut out = Array2::<F>::zeros((t_len, 2 * h));
        out.slice_mut(s![.., ..h]).assign(&h_f);
        out.slice_mut(s![.., h..]).assign(&h_b_rev.slice(s![..;-1, ..]));

        (out, BiTape { fwd: tape_f, bwd: tape_b })
    }

    pub fn backward(
        &self,
        input: ArrayView2<F>,
        tape: &BiTape<F>,
        d_out: ArrayView2<F>,
    ) -> (BiGrads<F>, Array2<F>) {
        let h = self.hidden_dim();

        let d_hf = d_out.slice(s![.., ..h]);
        let d_hb_rev = d_out.slice(s![..;-1, h..]).to_owned();
        let rev_input = input.slice(s![..;-1, ..]).to_owned();

        let (g_f, dx_f) = self.fwd.backward(input, &tape.fwd, d_hf);
        let (g_b, dx_b_rev) = self.bwd.backward(rev_input.view(), &tape.bwd, d_hb_rev.view());

        let d_input = &dx_f + &dx_b_rev.slice(s![..;-1, ..]);
        (BiGrads { fwd: g_f, bwd: g_b }, d_input)
    }
}

impl<F: Scalar> BiGrads<F> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            fwd: DirGrads::zeros(input_dim, hidden_dim),
            bwd: DirGrads::zeros(input_dim, hidden_dim),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.fwd.add_assign(&other.fwd);
        self.bwd.add_assign(&other.bwd);
    }
}
