use rand::Rng;

use super::{add_assign, check_len, sigmoid, Matrix, TensorError};

/// Weights of one LSTM cell. Gate blocks are stacked in the order
/// input, forget, cell candidate, output (`i, f, g, o`), each `hidden` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type CellGrads = LstmCellParams;

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCellParams {
            w_x: Matrix::zeros(4 * hidden, input),
            w_h: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform weights in `±1/√fan_in` per matrix, zero biases except the
    /// forget-gate slice which starts at 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_x = Matrix::uniform(4 * hidden, input, 1.0 / (input as f64).sqrt(), rng);
        let w_h = Matrix::uniform(4 * hidden, hidden, 1.0 / (hidden as f64).sqrt(), rng);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmCellParams { w_x, w_h, b }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size())
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input_size(&self) -> usize {
        self.w_x.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w_x.as_slice().len() + self.w_h.as_slice().len() + self.b.len()
    }

    /// Tensors in serialization order: `w_x`, `w_h`, `b`.
    pub fn tensors(&self) -> [&[f64]; 3] {
        [self.w_x.as_slice(), self.w_h.as_slice(), &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [self.w_x.as_mut_slice(), self.w_h.as_mut_slice(), &mut self.b]
    }

    fn check_state(&self, op: &'static str, x: &[f64], h: &[f64], c: &[f64]) -> Result<(), TensorError> {
        check_len(op, self.input_size(), x.len())?;
        check_len(op, self.hidden_size(), h.len())?;
        check_len(op, self.hidden_size(), c.len())
    }
}

/// Activations of one cell step kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step: `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmCellParams,
) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache), TensorError> {
    p.check_state("lstm_cell_forward", x, h_prev, c_prev)?;
    Ok(cell_forward(x, h_prev, c_prev, p))
}

fn cell_forward(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCellParams) -> (Vec<f64>, Vec<f64>, LstmStepCache) {
    let hs = p.hidden_size();
    let mut z = p.b.clone();
    p.w_x.matvec_acc(x, &mut z);
    p.w_h.matvec_acc(h_prev, &mut z);

    let i: Vec<f64> = z[..hs].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hs..2 * hs].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * hs..3 * hs].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * hs..].iter().map(|&v| sigmoid(v)).collect();

    let c: Vec<f64> = (0..hs).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hs).map(|k| o[k] * tanh_c[k]).collect();

    let cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        c: c.clone(),
        tanh_c,
    };
    (h, c, cache)
}

/// Gradients flowing out of one backward cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBackward {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub params: CellGrads,
}

/// Exact gradients of [`lstm_cell_forward`] given upstream `grad_h` and `grad_c`.
pub fn lstm_cell_backward(
    grad_h: &[f64],
    grad_c: &[f64],
    cache: &LstmStepCache,
    p: &LstmCellParams,
) -> Result<CellBackward, TensorError> {
    p.check_state("lstm_cell_backward", &cache.x, grad_h, grad_c)?;
    let mut params = p.zeros_like();
    let (x, h_prev, c_prev) = cell_backward_acc(grad_h, grad_c, cache, p, &mut params);
    Ok(CellBackward {
        x,
        h_prev,
        c_prev,
        params,
    })
}

/// Backward step accumulating parameter gradients into `acc`.
/// Returns gradients for `(x, h_prev, c_prev)`.
fn cell_backward_acc(
    grad_h: &[f64],
    grad_c: &[f64],
    cache: &LstmStepCache,
    p: &LstmCellParams,
    acc: &mut CellGrads,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = p.hidden_size();
    let mut dz = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for k in 0..hs {
        let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
        let dc = grad_c[k] + grad_h[k] * o * (1.0 - tc * tc);
        let d_o = grad_h[k] * tc;
        let d_i = dc * g;
        let d_g = dc * i;
        let d_f = dc * cache.c_prev[k];
        dc_prev[k] = dc * f;
        dz[k] = d_i * i * (1.0 - i);
        dz[hs + k] = d_f * f * (1.0 - f);
        dz[2 * hs + k] = d_g * (1.0 - g * g);
        dz[3 * hs + k] = d_o * o * (1.0 - o);
    }
    acc.w_x.add_outer(&dz, &cache.x);
    acc.w_h.add_outer(&dz, &cache.h_prev);
    add_assign(&mut acc.b, &dz);

    let mut dx = vec![0.0; p.input_size()];
    p.w_x.matvec_t_acc(&dz, &mut dx);
    let mut dh_prev = vec![0.0; hs];
    p.w_h.matvec_t_acc(&dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

/// A forward-direction and a backward-direction cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmCellParams,
    pub bwd: LstmCellParams,
}

pub type BiLstmGrads = BiLstmParams;

impl BiLstmParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let fwd = LstmCellParams::init(input, hidden, rng);
        let bwd = LstmCellParams::init(input, hidden, rng);
        BiLstmParams { fwd, bwd }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmParams {
            fwd: LstmCellParams::zeros(input, hidden),
            bwd: LstmCellParams::zeros(input, hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fwd.input_size(), self.fwd.hidden_size())
    }

    pub fn hidden_size(&self) -> usize {
        self.fwd.hidden_size()
    }

    pub fn output_size(&self) -> usize {
        2 * self.fwd.hidden_size()
    }

    pub fn param_count(&self) -> usize {
        self.fwd.param_count() + self.bwd.param_count()
    }
}

/// Output of a bidirectional layer: one `2H` vector per timestep, or the
/// concatenated final states.
#[derive(Debug, Clone, PartialEq)]
pub enum BiLstmOutput {
    Sequence(Vec<Vec<f64>>),
    Final(Vec<f64>),
}

impl BiLstmOutput {
    pub fn into_sequence(self) -> Option<Vec<Vec<f64>>> {
        match self {
            BiLstmOutput::Sequence(s) => Some(s),
            BiLstmOutput::Final(_) => None,
        }
    }

    pub fn into_final(self) -> Option<Vec<f64>> {
        match self {
            BiLstmOutput::Final(v) => Some(v),
            BiLstmOutput::Sequence(_) => None,
        }
    }
}

/// Per-timestep caches for both directions, indexed by sequence position.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmCache {
    pub fwd: Vec<LstmStepCache>,
    pub bwd: Vec<LstmStepCache>,
    pub return_sequences: bool,
}

impl BiLstmCache {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }
}

/// Runs the forward cell left to right and the backward cell right to left.
///
/// Position `t` of a sequence output is `[h_fwd_t ; h_bwd_t]`. The final-state
/// output is `[h_fwd_{T-1} ; h_bwd_0]`, i.e. each direction's last step.
pub fn bilstm_layer_forward(
    seq: &[Vec<f64>],
    p: &BiLstmParams,
    return_sequences: bool,
) -> Result<(BiLstmOutput, BiLstmCache), TensorError> {
    if seq.is_empty() {
        return Err(TensorError::Empty("bilstm_layer_forward"));
    }
    for x in seq {
        check_len("bilstm_layer_forward", p.fwd.input_size(), x.len())?;
    }
    check_len("bilstm_layer_forward", p.fwd.hidden_size(), p.bwd.hidden_size())?;
    check_len("bilstm_layer_forward", p.fwd.input_size(), p.bwd.input_size())?;
    let hs = p.hidden_size();
    let steps = seq.len();

    let mut fwd_cache = Vec::with_capacity(steps);
    let mut fwd_h = Vec::with_capacity(steps);
    let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
    for x in seq {
        let (nh, nc, cache) = cell_forward(x, &h, &c, &p.fwd);
        fwd_h.push(nh.clone());
        fwd_cache.push(cache);
        h = nh;
        c = nc;
    }

    let mut bwd_cache: Vec<Option<LstmStepCache>> = vec![None; steps];
    let mut bwd_h = vec![Vec::new(); steps];
    let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
    for t in (0..steps).rev() {
        let (nh, nc, cache) = cell_forward(&seq[t], &h, &c, &p.bwd);
        bwd_h[t] = nh.clone();
        bwd_cache[t] = Some(cache);
        h = nh;
        c = nc;
    }
    let bwd_cache: Vec<LstmStepCache> = bwd_cache.into_iter().map(|c| c.expect("every step visited")).collect();

    let output = if return_sequences {
        BiLstmOutput::Sequence(
            fwd_h
                .into_iter()
                .zip(bwd_h)
                .map(|(mut f, b)| {
                    f.extend(b);
                    f
                })
                .collect(),
        )
    } else {
        let mut out = fwd_h.pop().expect("non-empty");
        out.extend_from_slice(&bwd_h[0]);
        BiLstmOutput::Final(out)
    };
    Ok((
        output,
        BiLstmCache {
            fwd: fwd_cache,
            bwd: bwd_cache,
            return_sequences,
        },
    ))
}

/// Backpropagation through time for both directions.
///
/// `grad_out` must have the same variant and shape as the forward output.
/// Returns the gradient for every input position and the parameter gradients.
pub fn bilstm_layer_backward(
    grad_out: &BiLstmOutput,
    cache: &BiLstmCache,
    p: &BiLstmParams,
) -> Result<(Vec<Vec<f64>>, BiLstmGrads), TensorError> {
    let hs = p.hidden_size();
    let steps = cache.len();
    if steps == 0 {
        return Err(TensorError::Empty("bilstm_layer_backward"));
    }
    // Per-position upstream gradient split into (fwd half, bwd half).
    let zero = vec![0.0; hs];
    let mut up_fwd: Vec<&[f64]> = vec![&zero; steps];
    let mut up_bwd: Vec<&[f64]> = vec![&zero; steps];
    match (grad_out, cache.return_sequences) {
        (BiLstmOutput::Sequence(g), true) => {
            check_len("bilstm_layer_backward steps", steps, g.len())?;
            for (t, gt) in g.iter().enumerate() {
                check_len("bilstm_layer_backward", 2 * hs, gt.len())?;
                up_fwd[t] = &gt[..hs];
                up_bwd[t] = &gt[hs..];
            }
        }
        (BiLstmOutput::Final(g), false) => {
            check_len("bilstm_layer_backward", 2 * hs, g.len())?;
            up_fwd[steps - 1] = &g[..hs];
            up_bwd[0] = &g[hs..];
        }
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "bilstm_layer_backward",
                expected: if cache.return_sequences { "sequence gradient" } else { "final-state gradient" }.into(),
                got: if cache.return_sequences { "final-state gradient" } else { "sequence gradient" }.into(),
            })
        }
    }

    let mut grads = p.zeros_like();
    let mut grad_seq = vec![vec![0.0; p.fwd.input_size()]; steps];

    let (mut dh_next, mut dc_next) = (vec![0.0; hs], vec![0.0; hs]);
    for t in (0..steps).rev() {
        let mut dh = dh_next;
        add_assign(&mut dh, up_fwd[t]);
        let (dx, dh_prev, dc_prev) = cell_backward_acc(&dh, &dc_next, &cache.fwd[t], &p.fwd, &mut grads.fwd);
        add_assign(&mut grad_seq[t], &dx);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    let (mut dh_next, mut dc_next) = (vec![0.0; hs], vec![0.0; hs]);
    for t in 0..steps {
        let mut dh = dh_next;
        add_assign(&mut dh, up_bwd[t]);
        let (dx, dh_prev, dc_prev) = cell_backward_acc(&dh, &dc_next, &cache.bwd[t], &p.bwd, &mut grads.bwd);
        add_assign(&mut grad_seq[t], &dx);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    Ok((grad_seq, grads))
}
