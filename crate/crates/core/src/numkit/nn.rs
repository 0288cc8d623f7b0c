//! Parameter storage and the few layers the embedders are built from.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::tape::sigmoid;
use crate::numkit::{Matrix, Tape, Var};

/// Uniform initialisation range for every weight.
pub const INIT_SCALE: f64 = 0.08;

/// Layer sizes of an encoder/decoder pair: a bidirectional encoder with
/// `encoder_hidden` units per direction and a two-layer decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AutoencoderDims {
    pub encoder_hidden: usize,
    pub decoder_hidden1: usize,
    pub decoder_hidden2: usize,
}

impl Default for AutoencoderDims {
    fn default() -> Self {
        Self {
            encoder_hidden: 256,
            decoder_hidden1: 512,
            decoder_hidden2: 256,
        }
    }
}

impl AutoencoderDims {
    /// Small sizes for synthetic, single-core runs.
    pub fn desk() -> Self {
        Self {
            encoder_hidden: 32,
            decoder_hidden1: 64,
            decoder_hidden2: 32,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.encoder_hidden
    }
}

/// Splits `0..n` into shuffled mini-batches.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect();
    // A trailing singleton has no pairs; fold it into the previous batch.
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let last = batches.pop().unwrap_or_default();
        if let Some(prev) = batches.last_mut() {
            prev.extend(last);
        }
    }
    batches
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of weight matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let m = Matrix::from_fn(rows, cols, |_, _| {
            rng.random_range(-INIT_SCALE..=INIT_SCALE)
        });
        self.add(name, m)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn position(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Sets every weight to zero.
    pub fn zero_all(&mut self) {
        for v in &mut self.values {
            v.data_mut().fill(0.0);
        }
    }

    /// Replaces each named weight with the one in `other`, checking shapes.
    pub fn load_from(&mut self, other: &[(String, Matrix)]) -> Result<()> {
        for (name, value) in other {
            let id = self
                .position(name)
                .ok_or_else(|| Error::Contract(format!("unexpected parameter `{name}`")))?;
            if self.get(id).shape() != value.shape() {
                return Err(Error::shape(
                    "ParamStore::load_from",
                    format!("{name} {:?}", self.get(id).shape()),
                    format!("{:?}", value.shape()),
                ));
            }
            self.values[id.0] = value.clone();
        }
        if other.len() != self.len() {
            return Err(Error::Contract(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }
}

/// Tape handles for the parameters of one [`ParamStore`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Affine layer `x W + b` with `W: in × out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), input, output, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, output, rng);
        Self {
            w,
            b,
            input,
            output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, p.var(self.w))?;
        tape.add_row(xw, p.var(self.b))
    }
}

/// Single GRU layer.
///
/// Gates are stacked as `[z | r | candidate]` along the columns of `w` and `b`:
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// h~ = tanh(x W_h + (r ∘ h) U_h + b_h)
/// h' = (1 - z) ∘ h + z ∘ h~
/// ```
#[derive(Clone, Copy, Debug)]
pub struct Gru {
    pub w: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// One time step of a batched, masked GRU input.
pub struct GruStep {
    /// `batch × 3H` input projection `x W + b`.
    pub projected: Var,
    /// `batch × H` mask; 1 where the step is real, 0 for padding.
    pub mask: Option<Var>,
}

impl Gru {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), input, 3 * hidden, rng);
        let u_zr = store.add_uniform(format!("{name}.u_zr"), hidden, 2 * hidden, rng);
        let u_h = store.add_uniform(format!("{name}.u_h"), hidden, hidden, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, 3 * hidden, rng);
        Self {
            w,
            u_zr,
            u_h,
            b,
            input,
            hidden,
        }
    }

    /// Input projection `x W + b` for a stacked block of inputs.
    pub fn project(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.input {
            return Err(Error::shape("gru input", self.input, cols));
        }
        let xw = tape.matmul(x, p.var(self.w))?;
        tape.add_row(xw, p.var(self.b))
    }

    /// Advances the state by one step given an already projected input.
    pub fn step(&self, tape: &mut Tape, p: &Bound, step: &GruStep, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let hu = tape.matmul(h, p.var(self.u_zr))?;
        let x_zr = tape.slice_cols(step.projected, 0, 2 * hd)?;
        let pre_zr = tape.add(x_zr, hu)?;
        let gates = tape.sigmoid(pre_zr);
        let z = tape.slice_cols(gates, 0, hd)?;
        let r = tape.slice_cols(gates, hd, hd)?;
        let rh = tape.mul(r, h)?;
        let rhu = tape.matmul(rh, p.var(self.u_h))?;
        let x_h = tape.slice_cols(step.projected, 2 * hd, hd)?;
        let pre_h = tape.add(x_h, rhu)?;
        let cand = tape.tanh(pre_h);
        let next = tape.blend(h, cand, z)?;
        match step.mask {
            Some(mask) => tape.blend(h, next, mask),
            None => Ok(next),
        }
    }

    /// Runs the layer over a sequence of `batch × input` inputs recorded on
    /// `tape`, returning every hidden state.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        p: &Bound,
        inputs: &[Var],
        h0: Var,
        masks: Option<&[Var]>,
    ) -> Result<Vec<Var>> {
        let (_, hcols) = tape.shape(h0);
        if hcols != self.hidden {
            return Err(Error::shape("gru h0", self.hidden, hcols));
        }
        let mut h = h0;
        let mut out = Vec::with_capacity(inputs.len());
        for (t, &x) in inputs.iter().enumerate() {
            let projected = self.project(tape, p, x)?;
            let step = GruStep {
                projected,
                mask: masks.map(|m| m[t]),
            };
            h = self.step(tape, p, &step, h)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Plain forward pass over a single sequence, without recording.
    pub fn forward(
        &self,
        store: &ParamStore,
        inputs: &[Vec<f64>],
        h0: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let hd = self.hidden;
        if h0.len() != hd {
            return Err(Error::shape("gru h0", hd, h0.len()));
        }
        let w = store.get(self.w);
        let u_zr = store.get(self.u_zr);
        let u_h = store.get(self.u_h);
        let b = store.get(self.b).data();
        let mut h = h0.to_vec();
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            if x.len() != self.input {
                return Err(Error::shape("gru input", self.input, x.len()));
            }
            let xw = Matrix::row_vector(x.clone()).matmul(w)?;
            let hu = Matrix::row_vector(h.clone()).matmul(u_zr)?;
            let mut z = vec![0.0; hd];
            let mut rh = vec![0.0; hd];
            for j in 0..hd {
                z[j] = sigmoid(xw.get(0, j) + b[j] + hu.get(0, j));
                let r = sigmoid(xw.get(0, hd + j) + b[hd + j] + hu.get(0, hd + j));
                rh[j] = r * h[j];
            }
            let rhu = Matrix::row_vector(rh).matmul(u_h)?;
            for j in 0..hd {
                let cand = (xw.get(0, 2 * hd + j) + b[2 * hd + j] + rhu.get(0, j)).tanh();
                h[j] = (1.0 - z[j]) * h[j] + z[j] * cand;
            }
            out.push(h.clone());
        }
        Ok(out)
    }
}

/// Batch of variable-length sequences padded to a common length.
pub struct PaddedBatch {
    /// Per time step, `batch × dim` inputs in forward order.
    pub forward: Vec<Matrix>,
    /// Per time step, each sequence reversed and left-aligned.
    pub backward: Vec<Matrix>,
    /// Per time step, `batch × 1` validity indicators.
    pub mask: Vec<Vec<f64>>,
    pub lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn new(seqs: &[&Matrix]) -> Result<Self> {
        let batch = seqs.len();
        let dim = seqs.first().map_or(0, |s| s.cols());
        if let Some(bad) = seqs.iter().find(|s| s.cols() != dim) {
            return Err(Error::shape("PaddedBatch", dim, bad.cols()));
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.rows()).collect();
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        let mut forward = Vec::with_capacity(max_len);
        let mut backward = Vec::with_capacity(max_len);
        let mut mask = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let mut f = Matrix::zeros(batch, dim);
            let mut b = Matrix::zeros(batch, dim);
            let mut m = vec![0.0; batch];
            for (i, s) in seqs.iter().enumerate() {
                let len = s.rows();
                if t < len {
                    f.row_mut(i).copy_from_slice(s.row(t));
                    b.row_mut(i).copy_from_slice(s.row(len - 1 - t));
                    m[i] = 1.0;
                }
            }
            forward.push(f);
            backward.push(b);
            mask.push(m);
        }
        Ok(Self {
            forward,
            backward,
            mask,
            lengths,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.forward.len()
    }

    /// Mask for step `t` broadcast to `width` columns.
    pub fn mask_matrix(&self, t: usize, width: usize) -> Matrix {
        let m = &self.mask[t];
        Matrix::from_fn(m.len(), width, |r, _| m[r])
    }

    pub fn all_full_length(&self) -> bool {
        self.lengths.iter().all(|&l| l == self.max_len())
    }
}

/// Bidirectional single-layer GRU whose summary is the concatenation of the
/// final forward and final backward states.
#[derive(Clone, Copy, Debug)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

impl BiGru {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fwd: Gru::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Gru::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    /// Encodes a padded batch into `batch × 2H` summaries.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, batch: &PaddedBatch) -> Result<Var> {
        let n = batch.batch_size();
        let fwd = self.run_direction(tape, p, &self.fwd, &batch.forward, batch, n)?;
        let bwd = self.run_direction(tape, p, &self.bwd, &batch.backward, batch, n)?;
        tape.concat_cols(&[fwd, bwd])
    }

    fn run_direction(
        &self,
        tape: &mut Tape,
        p: &Bound,
        gru: &Gru,
        steps: &[Matrix],
        batch: &PaddedBatch,
        n: usize,
    ) -> Result<Var> {
        let mut h = tape.leaf(Matrix::zeros(n, gru.hidden));
        if steps.is_empty() {
            return Ok(h);
        }
        // One projection for all steps, then row slices per step.
        let refs: Vec<&Matrix> = steps.iter().collect();
        let stacked = tape.leaf(Matrix::vstack(&refs)?);
        let projected = gru.project(tape, p, stacked)?;
        let need_mask = !batch.all_full_length();
        for t in 0..steps.len() {
            let proj_t = tape.slice_rows(projected, t * n, n)?;
            let mask = if need_mask {
                Some(tape.leaf(batch.mask_matrix(t, gru.hidden)))
            } else {
                None
            };
            let step = GruStep {
                projected: proj_t,
                mask,
            };
            h = gru.step(tape, p, &step, h)?;
        }
        Ok(h)
    }

    /// Plain encoding of a single `T × input` sequence.
    pub fn encode_one(&self, store: &ParamStore, seq: &Matrix) -> Result<Vec<f64>> {
        let fwd_in: Vec<Vec<f64>> = seq.row_iter().map(<[f64]>::to_vec).collect();
        let bwd_in: Vec<Vec<f64>> = fwd_in.iter().rev().cloned().collect();
        let hf = self
            .fwd
            .forward(store, &fwd_in, &vec![0.0; self.fwd.hidden])?;
        let hb = self
            .bwd
            .forward(store, &bwd_in, &vec![0.0; self.bwd.hidden])?;
        let mut out = hf
            .last()
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.fwd.hidden]);
        out.extend(
            hb.last()
                .cloned()
                .unwrap_or_else(|| vec![0.0; self.bwd.hidden]),
        );
        Ok(out)
    }
}

/// Two stacked GRU layers unrolled autoregressively: the input at each step
/// is the previous output frame (zeros at the first step).
#[derive(Clone, Copy, Debug)]
pub struct SeqDecoder {
    pub init: Linear,
    pub layer1: Gru,
    pub layer2: Gru,
    pub out: Linear,
}

impl SeqDecoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        code_dim: usize,
        hidden1: usize,
        hidden2: usize,
        frame_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            init: Linear::new(
                store,
                &format!("{name}.init"),
                code_dim,
                hidden1 + hidden2,
                rng,
            ),
            layer1: Gru::new(store, &format!("{name}.l1"), frame_dim, hidden1, rng),
            layer2: Gru::new(store, &format!("{name}.l2"), hidden1, hidden2, rng),
            out: Linear::new(store, &format!("{name}.out"), hidden2, frame_dim, rng),
        }
    }

    pub fn frame_dim(&self) -> usize {
        self.out.output
    }

    /// Unrolls `steps` frames from a `batch × code_dim` code.
    pub fn decode(&self, tape: &mut Tape, p: &Bound, code: Var, steps: usize) -> Result<Vec<Var>> {
        let (n, _) = tape.shape(code);
        let init = self.init.forward(tape, p, code)?;
        let mut h1 = tape.slice_cols(init, 0, self.layer1.hidden)?;
        let mut h2 = tape.slice_cols(init, self.layer1.hidden, self.layer2.hidden)?;
        let mut prev = tape.leaf(Matrix::zeros(n, self.frame_dim()));
        let mut frames = Vec::with_capacity(steps);
        for _ in 0..steps {
            let p1 = self.layer1.project(tape, p, prev)?;
            h1 = self.layer1.step(
                tape,
                p,
                &GruStep {
                    projected: p1,
                    mask: None,
                },
                h1,
            )?;
            let p2 = self.layer2.project(tape, p, h1)?;
            h2 = self.layer2.step(
                tape,
                p,
                &GruStep {
                    projected: p2,
                    mask: None,
                },
                h2,
            )?;
            let frame = self.out.forward(tape, p, h2)?;
            frames.push(frame);
            prev = frame;
        }
        Ok(frames)
    }

    /// Masked mean-square error between decoded frames and a padded target
    /// batch, averaged over real frames and dimensions.
    pub fn reconstruction_loss(
        &self,
        tape: &mut Tape,
        frames: &[Var],
        target: &PaddedBatch,
    ) -> Result<Var> {
        let dim = self.frame_dim();
        let real: f64 = target.lengths.iter().sum::<usize>() as f64 * dim as f64;
        let mut total: Option<Var> = None;
        for (t, &frame) in frames.iter().enumerate() {
            let tgt = tape.leaf(target.forward[t].clone());
            let diff = tape.sub(frame, tgt)?;
            let masked = if target.lengths.iter().all(|&l| l > t) {
                diff
            } else {
                let m = tape.leaf(target.mask_matrix(t, dim));
                tape.mul(diff, m)?
            };
            let sq = tape.square(masked);
            let s = tape.sum(sq);
            total = Some(match total {
                Some(acc) => tape.add(acc, s)?,
                None => s,
            });
        }
        let total = total.ok_or(Error::Empty("decoder frames"))?;
        Ok(tape.scale(total, 1.0 / real.max(1.0)))
    }
}
