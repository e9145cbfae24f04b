//! Standard LSTM layer with hand-derived backpropagation through time.
//!
//! Each gate `g ∈ {f, i, c, o}` owns an `H × (D_in + H)` matrix acting on the
//! concatenation `(x_t, h_{t-1})`. The four matrices are stored as consecutive
//! row blocks of one `4H × (D_in + H)` buffer so a timestep is a single
//! product, and gate `g` is still a contiguous slice of that buffer.
//!
//! Computation is split in two halves so callers can choose how the input
//! side is evaluated:
//!
//! * the input projection `x_t · W_x^T` (done in bulk by [`Lstm::project_inputs`]
//!   or by a caller that knows a cheaper route), and
//! * the recurrence [`Lstm::run`] / [`Lstm::run_backward`], which consumes
//!   projections and returns gradients with respect to them.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{gemm_into, MatMut, MatRef, Scalar, Tensor};

/// Gate order inside the stacked weight buffer.
pub const GATES: [&str; 4] = ["f", "i", "c", "o"];

const F: usize = 0;
const I: usize = 1;
const C: usize = 2;
const O: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    input_dim: usize,
    hidden: usize,
    /// `4H × (D_in + H)`; rows `[g·H, (g+1)·H)` hold gate `g`.
    pub weights: Tensor<T>,
    /// `4H`, same gate blocks.
    pub bias: Tensor<T>,
}

/// Activations cached by a forward run, time-major.
#[derive(Debug, Clone)]
pub struct LstmTape<T> {
    pub(crate) steps: usize,
    pub(crate) batch: usize,
    hidden: usize,
    /// `steps × B × 4H`: f, i, c′, o after their nonlinearities.
    gates: Vec<T>,
    /// `(steps + 1) × B × H`, slot 0 is `c_0`.
    cells: Vec<T>,
    /// `(steps + 1) × B × H`, slot 0 is `h_0`.
    hiddens: Vec<T>,
    /// `steps × B × H`: tanh(c_t).
    tanh_cells: Vec<T>,
}

impl<T: Scalar> LstmTape<T> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Hidden outputs `h_1..h_L`, `steps × B × H`.
    pub fn outputs(&self) -> &[T] {
        &self.hiddens[self.batch * self.hidden..]
    }

    pub fn hidden_at(&self, t: usize) -> &[T] {
        let n = self.batch * self.hidden;
        &self.hiddens[(t + 1) * n..(t + 2) * n]
    }

    pub fn cell_at(&self, t: usize) -> &[T] {
        let n = self.batch * self.hidden;
        &self.cells[(t + 1) * n..(t + 2) * n]
    }

    pub fn final_hidden(&self) -> &[T] {
        self.hidden_at(self.steps - 1)
    }

    pub fn final_cell(&self) -> &[T] {
        self.cell_at(self.steps - 1)
    }

    /// Gate activation `g` (index into [`GATES`]) at step `t`, `B × H`.
    pub fn gate_at(&self, t: usize, g: usize) -> Vec<T> {
        let h = self.hidden;
        let step = &self.gates[t * self.batch * 4 * h..(t + 1) * self.batch * 4 * h];
        step.chunks_exact(4 * h)
            .flat_map(|row| row[g * h..(g + 1) * h].iter().copied())
            .collect()
    }
}

impl<T: Scalar> Lstm<T> {
    /// Glorot-uniform gate weights (fans `D_in + H` and `H`), forget-gate bias
    /// 1, other biases 0.
    pub fn new(input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut layer = Self::zeros(input_dim, hidden)?;
        let block = hidden * (input_dim + hidden);
        for gate in layer.weights.data_mut().chunks_exact_mut(block) {
            rng.fill_glorot(input_dim + hidden, hidden, gate);
        }
        layer.bias.data_mut()[F * hidden..(F + 1) * hidden].fill(T::one());
        Ok(layer)
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "lstm dimensions must be positive, got input {input_dim}, hidden {hidden}"
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            weights: Tensor::zeros(&[4 * hidden, input_dim + hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn width(&self) -> usize {
        self.input_dim + self.hidden
    }

    /// `W_x` for all gates, `4H × D_in`.
    pub(crate) fn input_weights(&self) -> MatRef<'_, T> {
        MatRef::strided(self.weights.data(), 4 * self.hidden, self.input_dim, self.width(), 1)
    }

    /// `W_h` for all gates, `4H × H`.
    fn recurrent_weights(&self) -> MatRef<'_, T> {
        MatRef::strided(
            &self.weights.data()[self.input_dim..],
            4 * self.hidden,
            self.hidden,
            self.width(),
            1,
        )
    }

    pub(crate) fn input_weights_mut(&mut self) -> MatMut<'_, T> {
        let (rows, cols, w) = (4 * self.hidden, self.input_dim, self.width());
        MatMut::strided(self.weights.data_mut(), rows, cols, w, 1)
    }

    fn recurrent_weights_mut(&mut self) -> MatMut<'_, T> {
        let (rows, cols, w, d) = (4 * self.hidden, self.hidden, self.width(), self.input_dim);
        MatMut::strided(&mut self.weights.data_mut()[d..], rows, cols, w, 1)
    }

    /// Gate weight block `g` as an `H × (D_in + H)` slice.
    pub fn gate_weights(&self, g: usize) -> &[T] {
        let block = self.hidden * self.width();
        &self.weights.data()[g * block..(g + 1) * block]
    }

    /// `x · W_x^T` for `n` stacked input rows, giving `n × 4H`.
    pub fn project_inputs(&self, x: &[T], n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n * 4 * self.hidden];
        gemm_into(
            T::one(),
            MatRef::new(x, n, self.input_dim),
            self.input_weights().t(),
            T::zero(),
            MatMut::new(&mut out, n, 4 * self.hidden),
        );
        out
    }

    /// Runs the recurrence over `steps` timesteps for a batch of `batch`
    /// sequences. `projection(t)` must yield the `B × 4H` input projection of
    /// step `t`; the bias is added here. Missing initial states are zero.
    pub fn run<'p>(
        &self,
        steps: usize,
        batch: usize,
        projection: impl Fn(usize) -> &'p [T],
        h0: Option<&[T]>,
        c0: Option<&[T]>,
    ) -> LstmTape<T> {
        let h = self.hidden;
        let n = batch * h;
        let mut tape = LstmTape {
            steps,
            batch,
            hidden: h,
            gates: vec![T::zero(); steps * batch * 4 * h],
            cells: vec![T::zero(); (steps + 1) * n],
            hiddens: vec![T::zero(); (steps + 1) * n],
            tanh_cells: vec![T::zero(); steps * n],
        };
        if let Some(h0) = h0 {
            tape.hiddens[..n].copy_from_slice(h0);
        }
        if let Some(c0) = c0 {
            tape.cells[..n].copy_from_slice(c0);
        }
        let bias = self.bias.data();
        let wh_t = self.recurrent_weights().t();
        for t in 0..steps {
            let z = &mut tape.gates[t * batch * 4 * h..(t + 1) * batch * 4 * h];
            let proj = projection(t);
            debug_assert_eq!(proj.len(), z.len());
            for (zrow, prow) in z.chunks_exact_mut(4 * h).zip(proj.chunks_exact(4 * h)) {
                for ((zv, &pv), &bv) in zrow.iter_mut().zip(prow).zip(bias) {
                    *zv = pv + bv;
                }
            }
            let (prev_h, _) = tape.hiddens[t * n..].split_at(n);
            gemm_into(
                T::one(),
                MatRef::new(prev_h, batch, h),
                wh_t,
                T::one(),
                MatMut::new(z, batch, 4 * h),
            );

            let (prev_cells, next_cells) = tape.cells[t * n..(t + 2) * n].split_at_mut(n);
            let next_h = &mut tape.hiddens[(t + 1) * n..(t + 2) * n];
            let tanh_c = &mut tape.tanh_cells[t * n..(t + 1) * n];
            for b in 0..batch {
                let zrow = &mut z[b * 4 * h..(b + 1) * 4 * h];
                T::sigmoid_in_place(&mut zrow[..C * h]);
                T::tanh_in_place(&mut zrow[C * h..O * h]);
                T::sigmoid_in_place(&mut zrow[O * h..]);
                let (fi, go) = zrow.split_at(C * h);
                let (f, i) = fi.split_at(h);
                let (g, o) = go.split_at(h);
                let k = b * h..(b + 1) * h;
                let (c_prev, c_next) = (&prev_cells[k.clone()], &mut next_cells[k.clone()]);
                for j in 0..h {
                    c_next[j] = i[j] * g[j] + f[j] * c_prev[j];
                }
                let tc = &mut tanh_c[k.clone()];
                tc.copy_from_slice(c_next);
                T::tanh_in_place(tc);
                for ((hv, &ov), &tv) in next_h[k].iter_mut().zip(o).zip(tc.iter()) {
                    *hv = ov * tv;
                }
            }
        }
        tape
    }

    /// Reverse pass of [`Lstm::run`].
    ///
    /// `grad_outputs(t)` supplies `∂L/∂h_t` coming from above (or `None` for
    /// zero); `grad_h_final`/`grad_c_final` are extra gradients on the last
    /// state. Accumulates `W_h` and bias gradients into `grads` and returns
    /// `(∂L/∂z, ∂L/∂h_0, ∂L/∂c_0)` where `∂L/∂z` is `steps × B × 4H` with
    /// respect to the input projections.
    pub fn run_backward<'g>(
        &self,
        tape: &LstmTape<T>,
        grad_outputs: impl Fn(usize) -> Option<&'g [T]>,
        grad_h_final: Option<&[T]>,
        grad_c_final: Option<&[T]>,
        grads: &mut Lstm<T>,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (steps, batch, h) = (tape.steps, tape.batch, self.hidden);
        let n = batch * h;
        let mut dz = vec![T::zero(); steps * batch * 4 * h];
        let mut dh_next = grad_h_final.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
        let mut dc_next = grad_c_final.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
        let wh = self.recurrent_weights();
        let one = T::one();

        for t in (0..steps).rev() {
            if let Some(up) = grad_outputs(t) {
                for (d, &u) in dh_next.iter_mut().zip(up) {
                    *d += u;
                }
            }
            let gates = &tape.gates[t * batch * 4 * h..(t + 1) * batch * 4 * h];
            let prev_c = &tape.cells[t * n..(t + 1) * n];
            let tanh_c = &tape.tanh_cells[t * n..(t + 1) * n];
            let dzt = &mut dz[t * batch * 4 * h..(t + 1) * batch * 4 * h];
            for b in 0..batch {
                let grow = &gates[b * 4 * h..(b + 1) * 4 * h];
                let drow = &mut dzt[b * 4 * h..(b + 1) * 4 * h];
                for j in 0..h {
                    let k = b * h + j;
                    let (f, i, g, o) = (grow[F * h + j], grow[I * h + j], grow[C * h + j], grow[O * h + j]);
                    let tc = tanh_c[k];
                    let dh = dh_next[k];
                    let dc = dc_next[k] + dh * o * (one - tc * tc);
                    drow[F * h + j] = dc * prev_c[k] * f * (one - f);
                    drow[I * h + j] = dc * g * i * (one - i);
                    drow[C * h + j] = dc * i * (one - g * g);
                    drow[O * h + j] = dh * tc * o * (one - o);
                    dc_next[k] = dc * f;
                }
            }
            gemm_into(
                one,
                MatRef::new(dzt, batch, 4 * h),
                wh,
                T::zero(),
                MatMut::new(&mut dh_next, batch, h),
            );
        }

        // dW_h += dz^T · [h_0 .. h_{L-1}], db += column sums of dz
        gemm_into(
            one,
            MatRef::new(&dz, steps * batch, 4 * h).t(),
            MatRef::new(&tape.hiddens[..steps * n], steps * batch, h),
            one,
            grads.recurrent_weights_mut(),
        );
        let db = grads.bias.data_mut();
        for row in dz.chunks_exact(4 * h) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        (dz, dh_next, dc_next)
    }

    /// `dW_x += dz^T · x` and returns `dz · W_x` (gradient w.r.t. `x`), for
    /// `n` stacked rows.
    pub fn input_backward(&self, dz: &[T], x: &[T], n: usize, grads: &mut Lstm<T>) -> Vec<T> {
        let h4 = 4 * self.hidden;
        gemm_into(
            T::one(),
            MatRef::new(dz, n, h4).t(),
            MatRef::new(x, n, self.input_dim),
            T::one(),
            grads.input_weights_mut(),
        );
        let mut dx = vec![T::zero(); n * self.input_dim];
        gemm_into(
            T::one(),
            MatRef::new(dz, n, h4),
            self.input_weights(),
            T::zero(),
            MatMut::new(&mut dx, n, self.input_dim),
        );
        dx
    }

    fn check_rows(&self, what: &'static str, data: &[T], rows: usize, cols: usize) -> Result<()> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                what,
                format!("expected {rows}×{cols} = {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(())
    }

    /// One timestep for a batch: `x` is `B × D_in`, states `B × H`.
    /// Returns `(h_t, c_t, tape)`.
    pub fn step_forward(
        &self,
        x: &[T],
        h_prev: &[T],
        c_prev: &[T],
        batch: usize,
    ) -> Result<(Vec<T>, Vec<T>, LstmTape<T>)> {
        self.check_rows("lstm step input", x, batch, self.input_dim)?;
        self.check_rows("lstm step h_prev", h_prev, batch, self.hidden)?;
        self.check_rows("lstm step c_prev", c_prev, batch, self.hidden)?;
        let proj = self.project_inputs(x, batch);
        let tape = self.run(1, batch, |_| &proj, Some(h_prev), Some(c_prev));
        Ok((tape.hidden_at(0).to_vec(), tape.cell_at(0).to_vec(), tape))
    }

    /// Reverse of [`Lstm::step_forward`]: returns `(∂x, ∂h_prev, ∂c_prev)` and
    /// accumulates parameter gradients.
    pub fn step_backward(
        &self,
        tape: &LstmTape<T>,
        x: &[T],
        grad_h: &[T],
        grad_c: &[T],
        grads: &mut Lstm<T>,
    ) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        if tape.steps != 1 {
            return Err(Error::MissingCache);
        }
        let batch = tape.batch;
        self.check_rows("lstm step input", x, batch, self.input_dim)?;
        self.check_rows("lstm step grad_h", grad_h, batch, self.hidden)?;
        self.check_rows("lstm step grad_c", grad_c, batch, self.hidden)?;
        let (dz, dh_prev, dc_prev) = self.run_backward(tape, |_| None, Some(grad_h), Some(grad_c), grads);
        let dx = self.input_backward(&dz, x, batch, grads);
        Ok((dx, dh_prev, dc_prev))
    }

    /// Full sequence forward over time-major `inputs` (`steps × B × D_in`)
    /// from zero initial state.
    pub fn sequence_forward(&self, inputs: &[T], steps: usize, batch: usize) -> Result<LstmTape<T>> {
        if steps == 0 {
            return Err(Error::InvalidArgument("sequence must have at least one step".into()));
        }
        self.check_rows("lstm sequence input", inputs, steps * batch, self.input_dim)?;
        let proj = self.project_inputs(inputs, steps * batch);
        let stride = batch * 4 * self.hidden;
        Ok(self.run(steps, batch, |t| &proj[t * stride..(t + 1) * stride], None, None))
    }

    /// Reverse of [`Lstm::sequence_forward`] given `∂L/∂h_t` for every step
    /// (`steps × B × H`). Returns `∂L/∂inputs`.
    pub fn sequence_backward(
        &self,
        tape: &LstmTape<T>,
        inputs: &[T],
        grad_outputs: &[T],
        grads: &mut Lstm<T>,
    ) -> Result<Vec<T>> {
        let (steps, batch) = (tape.steps, tape.batch);
        if steps == 0 {
            return Err(Error::MissingCache);
        }
        self.check_rows("lstm sequence input", inputs, steps * batch, self.input_dim)?;
        self.check_rows("lstm sequence grads", grad_outputs, steps * batch, self.hidden)?;
        let n = batch * self.hidden;
        let (dz, _, _) = self.run_backward(tape, |t| Some(&grad_outputs[t * n..(t + 1) * n]), None, None, grads);
        Ok(self.input_backward(&dz, inputs, steps * batch, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::gradcheck::{max_relative_error, numeric_gradient};
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;

    fn random_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_f64(-scale, scale)).collect()
    }

    #[test]
    fn zero_weights_closed_form() {
        let layer = Lstm::<f64>::zeros(3, 2).unwrap();
        let c_prev = [0.8, -1.3];
        let (h, c, tape) = layer.step_forward(&[0.3, -0.2, 0.9], &[0.1, 0.4], &c_prev, 1).unwrap();
        for g in [0, 1, 3] {
            assert!(tape.gate_at(0, g).iter().all(|&v| v == 0.5));
        }
        assert!(tape.gate_at(0, 2).iter().all(|&v| v == 0.0));
        for j in 0..2 {
            assert_abs_diff_eq!(c[j], 0.5 * c_prev[j], epsilon = 1e-15);
            assert_abs_diff_eq!(h[j], 0.5 * (0.5 * c_prev[j]).tanh(), epsilon = 1e-15);
        }
    }

    #[test]
    fn saturated_input_gate_blocks_cell() {
        let mut rng = SeededRng::new(2, Stream::Init);
        let mut layer = Lstm::<f64>::new(3, 4, &mut rng).unwrap();
        layer.bias.data_mut()[4..8].fill(-50.0);
        let (h, c, _) = layer.step_forward(&[0.5, 0.1, -0.3], &[0.0; 4], &[0.0; 4], 1).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-20));
        assert!(h.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(4, Stream::Init);
        let layer = Lstm::<f64>::new(3, 4, &mut rng).unwrap();
        let x = random_vec(&mut rng, 3, 1.0);
        let (_, _, tape) = layer.step_forward(&x, &[0.2; 4], &[0.1; 4], 1).unwrap();
        let mut grads = Lstm::zeros(3, 4).unwrap();
        let (dx, dh, dc) = layer
            .step_backward(&tape, &x, &[0.0; 4], &[0.0; 4], &mut grads)
            .unwrap();
        assert!(grads.weights.data().iter().chain(grads.bias.data()).all(|&g| g == 0.0));
        assert!(dx.iter().chain(&dh).chain(&dc).all(|&g| g == 0.0));
    }

    #[test]
    fn step_backward_rejects_sequence_tape() {
        let layer = Lstm::<f64>::zeros(2, 2).unwrap();
        let tape = layer.sequence_forward(&[0.0; 6], 3, 1).unwrap();
        let mut grads = Lstm::zeros(2, 2).unwrap();
        let err = layer.step_backward(&tape, &[0.0; 2], &[0.0; 2], &[0.0; 2], &mut grads);
        assert!(matches!(err, Err(Error::MissingCache)));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let layer = Lstm::<f32>::zeros(3, 2).unwrap();
        assert!(layer.step_forward(&[0.0; 2], &[0.0; 2], &[0.0; 2], 1).is_err());
        assert!(layer.sequence_forward(&[0.0; 7], 2, 1).is_err());
    }

    #[test]
    fn single_step_sequence_equals_step() {
        let mut rng = SeededRng::new(8, Stream::Init);
        let layer = Lstm::<f64>::new(3, 4, &mut rng).unwrap();
        let x = random_vec(&mut rng, 6, 1.0);
        let seq = layer.sequence_forward(&x, 1, 2).unwrap();
        let (h, c, _) = layer.step_forward(&x, &[0.0; 8], &[0.0; 8], 2).unwrap();
        assert_eq!(seq.outputs(), &h[..]);
        assert_eq!(seq.final_cell(), &c[..]);
    }

    #[test]
    fn gates_in_unit_interval_and_cells_bounded() {
        let mut rng = SeededRng::new(9, Stream::Init);
        let layer = Lstm::<f64>::new(3, 5, &mut rng).unwrap();
        let steps = 12;
        let x = random_vec(&mut rng, steps * 3, 4.0);
        let tape = layer.sequence_forward(&x, steps, 1).unwrap();
        for t in 0..steps {
            for g in [0, 1, 3] {
                assert!(tape.gate_at(t, g).iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(tape.gate_at(t, 2).iter().all(|&v| v > -1.0 && v < 1.0));
            assert!(tape.cell_at(t).iter().all(|c| c.abs() <= (t + 1) as f64));
        }
    }

    /// Checks every parameter and input gradient of a `steps`-long sequence
    /// with loss `Σ_t Σ w_t ⊙ h_t` against central differences.
    fn sequence_gradcheck(seed: u64, steps: usize, batch: usize) -> f64 {
        let (d, h) = (3, 4);
        let mut rng = SeededRng::new(seed, Stream::Custom(11));
        let mut layer = Lstm::<f64>::new(d, h, &mut rng).unwrap();
        for b in layer.bias.data_mut() {
            *b += rng.uniform_f64(-0.5, 0.5);
        }
        let x = random_vec(&mut rng, steps * batch * d, 1.0);
        let w = random_vec(&mut rng, steps * batch * h, 1.0);
        let loss = |layer: &Lstm<f64>, x: &[f64]| -> f64 {
            let tape = layer.sequence_forward(x, steps, batch).unwrap();
            tape.outputs().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let tape = layer.sequence_forward(&x, steps, batch).unwrap();
        let mut grads = Lstm::zeros(d, h).unwrap();
        let dx = layer.sequence_backward(&tape, &x, &w, &mut grads).unwrap();

        let mut worst: f64 = 0.0;
        let mut weights = layer.weights.data().to_vec();
        let num = numeric_gradient(&mut weights, 1e-5, |p| {
            let mut l = layer.clone();
            l.weights.data_mut().copy_from_slice(p);
            loss(&l, &x)
        });
        worst = worst.max(max_relative_error(grads.weights.data(), &num));
        let mut bias = layer.bias.data().to_vec();
        let num = numeric_gradient(&mut bias, 1e-5, |p| {
            let mut l = layer.clone();
            l.bias.data_mut().copy_from_slice(p);
            loss(&l, &x)
        });
        worst = worst.max(max_relative_error(grads.bias.data(), &num));
        let mut xs = x.clone();
        let num = numeric_gradient(&mut xs, 1e-5, |p| loss(&layer, p));
        worst = worst.max(max_relative_error(&dx, &num));
        worst
    }

    #[test]
    fn single_step_gradients_match_finite_differences() {
        let err = sequence_gradcheck(1, 1, 1);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn long_sequence_gradients_match_finite_differences() {
        let err = sequence_gradcheck(2, 25, 1);
        assert!(err < 1e-4, "relative error {err}");
        let err = sequence_gradcheck(3, 5, 3);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn step_backward_state_gradients_match_finite_differences() {
        let (d, h) = (3, 4);
        let mut rng = SeededRng::new(21, Stream::Custom(1));
        let layer = Lstm::<f64>::new(d, h, &mut rng).unwrap();
        let x = random_vec(&mut rng, d, 1.0);
        let hp = random_vec(&mut rng, h, 1.0);
        let cp = random_vec(&mut rng, h, 1.0);
        let wh = random_vec(&mut rng, h, 1.0);
        let wc = random_vec(&mut rng, h, 1.0);
        let loss = |hp: &[f64], cp: &[f64]| {
            let (ht, ct, _) = layer.step_forward(&x, hp, cp, 1).unwrap();
            ht.iter().zip(&wh).map(|(a, b)| a * b).sum::<f64>() + ct.iter().zip(&wc).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, _, tape) = layer.step_forward(&x, &hp, &cp, 1).unwrap();
        let mut grads = Lstm::zeros(d, h).unwrap();
        let (_, dh, dc) = layer.step_backward(&tape, &x, &wh, &wc, &mut grads).unwrap();
        let mut hp2 = hp.clone();
        let num_h = numeric_gradient(&mut hp2, 1e-5, |p| loss(p, &cp));
        let mut cp2 = cp.clone();
        let num_c = numeric_gradient(&mut cp2, 1e-5, |p| loss(&hp, p));
        assert!(max_relative_error(&dh, &num_h) < 1e-5);
        assert!(max_relative_error(&dc, &num_c) < 1e-5);
    }
}
