//! The feature-learning trunk and the classifier, with forward and
//! reverse-mode passes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{
    Architecture, ConvShape, FcShape, Variant, CANVAS_COLS, CANVAS_LEN, CANVAS_ROWS, FEATURE_LEN,
    NUM_CLASSES,
};
use crate::columns::{BatchLayout, ColumnPlan, Transition, CENTER};
use crate::error::{NnError, Result};
use crate::real::{matmul, MatRef, Real};

/// Positions processed per im2col chunk.
const CHUNK: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { name, shape, data: vec![T::zero(); len] }
    }
}

/// Ordered parameter tensors. Gradients and optimizer moments use the
/// same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn zeros_like(&self) -> Self {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn find(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    shape: ConvShape,
    weight: usize,
    bias: usize,
    /// Channel offset of this layer's output inside its stage's concatenation.
    out_offset: usize,
}

#[derive(Clone, Debug)]
struct DenseLayer {
    shape: FcShape,
    weight: usize,
    bias: usize,
}

/// One sample: a 4x132 canvas (row-major, values in [0,1]) and the 73
/// hand-crafted features.
#[derive(Clone, Copy, Debug)]
pub struct Input<'a> {
    pub canvas: &'a [f32],
    pub features: &'a [f32],
}

/// Dropout applied to hidden classifier outputs during training.
pub struct Dropout<'a, R: Rng> {
    pub rate: f32,
    pub rng: &'a mut R,
}

/// Activations retained for the reverse pass.
pub struct ForwardPass<T> {
    batch: usize,
    /// Layout of every stage input, then of the trunk output.
    layouts: Vec<BatchLayout>,
    /// `transitions[s]` reads stage `s` outputs from its input layout.
    transitions: Vec<Transition>,
    /// Input of every stage; entry 0 is the one-channel canvas.
    stage_inputs: Vec<Vec<T>>,
    trunk_out: Vec<T>,
    side: Vec<T>,
    /// Previous-layer input of each dense layer (after ReLU and dropout).
    dense_inputs: Vec<Vec<T>>,
    /// Inverted-dropout scale per hidden unit, when dropout was active.
    masks: Vec<Option<Vec<T>>>,
    probs: Vec<T>,
}

impl<T: Real> ForwardPass<T> {
    /// Softmax output, `batch x 67` row-major.
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// On/off state of every ReLU unit, in a fixed order. Two passes with
    /// equal patterns lie on the same linear piece of the network.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let hidden = self.stage_inputs.iter().skip(1).chain(std::iter::once(&self.trunk_out));
        let dense = self.dense_inputs.iter().skip(1);
        hidden.chain(dense).flat_map(|v| v.iter().map(|&x| x > T::zero())).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    variant: Variant,
    arch: Architecture,
    stages: Vec<Vec<ConvLayer>>,
    dense: Vec<DenseLayer>,
    params: ParamSet<T>,
}

impl<T: Real> Network<T> {
    /// All-zero parameters.
    pub fn zeros(variant: Variant) -> Self {
        let arch = variant.architecture();
        let mut tensors = Vec::new();
        let mut stages = Vec::new();
        for stage in arch.stages() {
            let mut layers = Vec::new();
            let mut offset = 0;
            for shape in stage {
                let rows = shape.kernel * shape.kernel * shape.in_channels;
                tensors.push(Tensor::zeros(
                    format!("{}.weight", shape.name),
                    vec![rows, shape.out_channels],
                ));
                tensors.push(Tensor::zeros(format!("{}.bias", shape.name), vec![shape.out_channels]));
                layers.push(ConvLayer {
                    weight: tensors.len() - 2,
                    bias: tensors.len() - 1,
                    out_offset: offset,
                    shape: shape.clone(),
                });
                offset += shape.out_channels;
            }
            stages.push(layers);
        }
        let mut dense = Vec::new();
        for shape in arch.fc_layers() {
            tensors.push(Tensor::zeros(
                format!("{}.weight", shape.name),
                vec![shape.inputs(), shape.out],
            ));
            tensors.push(Tensor::zeros(format!("{}.bias", shape.name), vec![shape.out]));
            dense.push(DenseLayer { weight: tensors.len() - 2, bias: tensors.len() - 1, shape });
        }
        Network { variant, arch, stages, dense, params: ParamSet { tensors } }
    }

    /// He-style uniform initialization (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn new(variant: Variant, seed: u64) -> Self {
        let mut net = Self::zeros(variant);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut net.params.tensors {
            if t.shape.len() == 2 {
                let limit = (6.0 / t.shape[0] as f64).sqrt();
                for v in &mut t.data {
                    *v = T::from_f64(rng.gen_range(-limit..limit)).unwrap();
                }
            }
        }
        net
    }

    /// Builds a network from explicit tensors, checking every shape.
    pub fn from_params(variant: Variant, params: ParamSet<T>) -> Result<Self> {
        let mut net = Self::zeros(variant);
        if params.tensors.len() != net.params.tensors.len() {
            return Err(NnError::InvalidParams(format!(
                "{} expects {} tensors, got {}",
                variant,
                net.params.tensors.len(),
                params.tensors.len()
            )));
        }
        for (want, got) in net.params.tensors.iter().zip(&params.tensors) {
            if want.name != got.name || want.shape != got.shape || got.data.len() != want.data.len()
            {
                return Err(NnError::InvalidParams(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        net.params = params;
        Ok(net)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let tensors = self
            .params
            .tensors
            .iter()
            .map(|t| Tensor {
                name: t.name.clone(),
                shape: t.shape.clone(),
                data: t.data.iter().map(|&v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
            })
            .collect();
        Network {
            variant: self.variant,
            arch: self.arch,
            stages: self.stages.clone(),
            dense: self.dense.clone(),
            params: ParamSet { tensors },
        }
    }

    /// Class probabilities for a single sample, with dropout disabled.
    pub fn predict(&self, input: Input<'_>) -> Result<Vec<T>> {
        Ok(self.forward::<ChaCha8Rng>(&[input], None)?.probs)
    }

    pub fn forward<R: Rng>(
        &self,
        inputs: &[Input<'_>],
        mut dropout: Option<Dropout<'_, R>>,
    ) -> Result<ForwardPass<T>> {
        let batch = inputs.len();
        if batch == 0 {
            return Err(NnError::ShapeMismatch("empty batch".into()));
        }
        for (i, inp) in inputs.iter().enumerate() {
            if inp.canvas.len() != CANVAS_LEN || inp.features.len() != FEATURE_LEN {
                return Err(NnError::ShapeMismatch(format!(
                    "sample {i}: canvas {} (want {CANVAS_LEN}), features {} (want {FEATURE_LEN})",
                    inp.canvas.len(),
                    inp.features.len()
                )));
            }
        }

        let side_range = self.arch.side.range();
        let side_len = side_range.len();
        let mut side = Vec::with_capacity(batch * side_len);
        for inp in inputs {
            side.extend(inp.features[side_range.clone()].iter().map(|&v| T::of_f32(v)));
        }

        let mut stage_inputs = Vec::new();
        let mut layouts = Vec::new();
        let mut transitions = Vec::new();
        let mut trunk_out = Vec::new();
        let mut flat = Vec::new();
        if !self.stages.is_empty() {
            let mut margin = 0;
            layouts.push(self.layout(inputs, margin));
            for stage in &self.stages {
                if stage.iter().any(|l| l.shape.kernel > 1) {
                    margin += 1;
                }
                let next = self.layout(inputs, margin);
                transitions.push(Transition::new(layouts.last().unwrap(), &next));
                layouts.push(next);
            }
            let lay = &layouts[0];
            let mut x = vec![T::zero(); lay.positions];
            for (s, inp) in inputs.iter().enumerate() {
                let start = lay.base[s];
                let end = start + lay.plans[s].len() * CANVAS_ROWS;
                for (p, v) in x[start..end].iter_mut().enumerate() {
                    let (r, c) = lay.source_cell(s, start + p);
                    *v = T::of_f32(inp.canvas[r * CANVAS_COLS + c]);
                }
            }
            for (si, stage) in self.stages.iter().enumerate() {
                let c_out: usize = stage.iter().map(|l| l.shape.out_channels).sum();
                let positions = layouts[si + 1].positions;
                let mut out = vec![T::zero(); positions * c_out];
                for layer in stage {
                    self.conv_forward(layer, &transitions[si], positions, &x, &mut out, c_out);
                }
                relu(&mut out);
                stage_inputs.push(std::mem::replace(&mut x, out));
            }
            trunk_out = x;
            let lay = layouts.last().unwrap();
            let channels = self.arch.trunk_channels();
            let flat_dim = self.arch.flat_dim();
            flat = vec![T::zero(); batch * flat_dim];
            for s in 0..batch {
                let dst = &mut flat[s * flat_dim..(s + 1) * flat_dim];
                for r in 0..CANVAS_ROWS {
                    for c in 0..CANVAS_COLS {
                        let p = lay.position(s, r, c);
                        let o = (r * CANVAS_COLS + c) * channels;
                        dst[o..o + channels]
                            .copy_from_slice(&trunk_out[p * channels..(p + 1) * channels]);
                    }
                }
            }
        }

        let mut dense_inputs = Vec::with_capacity(self.dense.len());
        let mut masks = Vec::with_capacity(self.dense.len());
        let mut prev = flat;
        masks.push(None);
        let last = self.dense.len() - 1;
        let mut probs = Vec::new();
        for (i, layer) in self.dense.iter().enumerate() {
            let sh = &layer.shape;
            let w = &self.params.tensors[layer.weight].data;
            let b = &self.params.tensors[layer.bias].data;
            let mut out = vec![T::zero(); batch * sh.out];
            for row in out.chunks_mut(sh.out) {
                row.copy_from_slice(b);
            }
            if sh.prev > 0 {
                matmul(
                    MatRef::new(&prev, batch, sh.prev, sh.prev),
                    MatRef::new(&w[..sh.prev * sh.out], sh.prev, sh.out, sh.out),
                    T::one(),
                    &mut out,
                    sh.out,
                );
            }
            if sh.side > 0 {
                matmul(
                    MatRef::new(&side, batch, side_len, side_len),
                    MatRef::new(&w[sh.prev * sh.out..], sh.side, sh.out, sh.out),
                    T::one(),
                    &mut out,
                    sh.out,
                );
            }
            dense_inputs.push(prev);
            if i == last {
                softmax_rows(&mut out, sh.out);
                probs = out;
                break;
            }
            relu(&mut out);
            let mask = dropout.as_mut().filter(|d| d.rate > 0.0).map(|d| {
                let keep = 1.0 - d.rate;
                let scale = T::of_f32(1.0 / keep);
                (0..out.len())
                    .map(|_| if d.rng.gen::<f32>() < keep { scale } else { T::zero() })
                    .collect::<Vec<T>>()
            });
            if let Some(m) = &mask {
                for (v, &s) in out.iter_mut().zip(m) {
                    *v = *v * s;
                }
            }
            masks.push(mask);
            prev = out;
        }

        Ok(ForwardPass { batch, layouts, transitions, stage_inputs, trunk_out, side, dense_inputs, masks, probs })
    }

    fn layout(&self, inputs: &[Input<'_>], margin: usize) -> BatchLayout {
        BatchLayout::new(inputs.iter().map(|inp| ColumnPlan::compress(inp.canvas, margin)).collect())
    }

    fn conv_forward(
        &self,
        layer: &ConvLayer,
        tr: &Transition,
        positions: usize,
        x: &[T],
        out: &mut [T],
        ldc: usize,
    ) {
        let sh = &layer.shape;
        let w = &self.params.tensors[layer.weight].data;
        let b = &self.params.tensors[layer.bias].data;
        let c_in = sh.in_channels;
        let k_rows = sh.kernel * sh.kernel * c_in;
        let mut col = vec![T::zero(); CHUNK.min(positions) * k_rows];
        let mut p0 = 0;
        while p0 < positions {
            let p1 = (p0 + CHUNK).min(positions);
            let n = p1 - p0;
            let dst = &mut out[p0 * ldc + layer.out_offset..];
            for row in dst.chunks_mut(ldc).take(n) {
                row[..sh.out_channels].copy_from_slice(b);
            }
            im2col(tr, x, c_in, sh.kernel, p0, p1, &mut col);
            matmul(
                MatRef::new(&col[..n * k_rows], n, k_rows, k_rows),
                MatRef::new(w, k_rows, sh.out_channels, sh.out_channels),
                T::one(),
                dst,
                ldc,
            );
            p0 = p1;
        }
    }

    /// Gradients of the mean cross-entropy w.r.t. every parameter.
    pub fn backward(&self, pass: &ForwardPass<T>, labels: &[usize]) -> Result<ParamSet<T>> {
        let batch = pass.batch;
        if labels.len() != batch {
            return Err(NnError::ShapeMismatch(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(NnError::CorruptDataset(format!("label {bad} out of range")));
        }
        let mut grads = self.params.zeros_like();
        let inv_n = T::one() / T::from_usize(batch).unwrap();
        let mut dz: Vec<T> = pass.probs.iter().map(|&p| p * inv_n).collect();
        for (s, &l) in labels.iter().enumerate() {
            dz[s * NUM_CLASSES + l] = dz[s * NUM_CLASSES + l] - inv_n;
        }

        let side_len = self.arch.side.len();
        let mut d_trunk = Vec::new();
        for (i, layer) in self.dense.iter().enumerate().rev() {
            let sh = &layer.shape;
            let prev = &pass.dense_inputs[i];
            let w = &self.params.tensors[layer.weight].data;
            {
                let gw = &mut grads.tensors[layer.weight].data;
                if sh.prev > 0 {
                    matmul(
                        MatRef::new(prev, batch, sh.prev, sh.prev).t(),
                        MatRef::new(&dz, batch, sh.out, sh.out),
                        T::one(),
                        &mut gw[..sh.prev * sh.out],
                        sh.out,
                    );
                }
                if sh.side > 0 {
                    matmul(
                        MatRef::new(&pass.side, batch, side_len, side_len).t(),
                        MatRef::new(&dz, batch, sh.out, sh.out),
                        T::one(),
                        &mut gw[sh.prev * sh.out..],
                        sh.out,
                    );
                }
            }
            column_sums_into(&dz, sh.out, &mut grads.tensors[layer.bias].data);
            if sh.prev == 0 || (i == 0 && self.stages.is_empty()) {
                break;
            }
            let mut dprev = vec![T::zero(); batch * sh.prev];
            matmul(
                MatRef::new(&dz, batch, sh.out, sh.out),
                MatRef::new(&w[..sh.prev * sh.out], sh.prev, sh.out, sh.out).t(),
                T::zero(),
                &mut dprev,
                sh.prev,
            );
            if i == 0 {
                d_trunk = dprev;
                break;
            }
            let mask = pass.masks[i].as_deref();
            for (j, (d, &v)) in dprev.iter_mut().zip(prev).enumerate() {
                *d = if v > T::zero() { mask.map_or(*d, |m| *d * m[j]) } else { T::zero() };
            }
            dz = dprev;
        }

        let Some(lay) = pass.layouts.last() else {
            return Ok(grads);
        };
        // Fold the flattened gradient back onto compressed positions.
        let channels = self.arch.trunk_channels();
        let flat_dim = self.arch.flat_dim();
        let mut d_out = vec![T::zero(); lay.positions * channels];
        for s in 0..batch {
            let src = &d_trunk[s * flat_dim..(s + 1) * flat_dim];
            for r in 0..CANVAS_ROWS {
                for c in 0..CANVAS_COLS {
                    let p = lay.position(s, r, c);
                    let o = (r * CANVAS_COLS + c) * channels;
                    for (d, &g) in d_out[p * channels..(p + 1) * channels]
                        .iter_mut()
                        .zip(&src[o..o + channels])
                    {
                        *d += g;
                    }
                }
            }
        }
        relu_backward(&mut d_out, &pass.trunk_out);

        for (si, stage) in self.stages.iter().enumerate().rev() {
            let x = &pass.stage_inputs[si];
            let c_out: usize = stage.iter().map(|l| l.shape.out_channels).sum();
            let c_in = stage[0].shape.in_channels;
            let positions = pass.layouts[si + 1].positions;
            let need_dx = si > 0;
            let mut d_in =
                if need_dx { vec![T::zero(); pass.layouts[si].positions * c_in] } else { Vec::new() };
            for layer in stage {
                self.conv_backward(
                    layer,
                    &pass.transitions[si],
                    positions,
                    x,
                    &d_out,
                    c_out,
                    &mut grads,
                    need_dx.then_some(&mut d_in[..]),
                );
            }
            if need_dx {
                relu_backward(&mut d_in, x);
                d_out = d_in;
            }
        }
        Ok(grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        layer: &ConvLayer,
        tr: &Transition,
        positions: usize,
        x: &[T],
        d_out: &[T],
        ldd: usize,
        grads: &mut ParamSet<T>,
        mut d_in: Option<&mut [T]>,
    ) {
        let sh = &layer.shape;
        let c_in = sh.in_channels;
        let c_out = sh.out_channels;
        let k_rows = sh.kernel * sh.kernel * c_in;
        let w = &self.params.tensors[layer.weight].data;
        let mut col = vec![T::zero(); CHUNK.min(positions) * k_rows];
        let mut dcol = if d_in.is_some() { vec![T::zero(); CHUNK.min(positions) * k_rows] } else { Vec::new() };
        let mut p0 = 0;
        while p0 < positions {
            let p1 = (p0 + CHUNK).min(positions);
            let n = p1 - p0;
            let dy = MatRef::new(&d_out[p0 * ldd + layer.out_offset..], n, c_out, ldd);
            {
                let gb = &mut grads.tensors[layer.bias].data;
                for row in d_out[p0 * ldd..].chunks(ldd).take(n) {
                    for (g, &v) in gb.iter_mut().zip(&row[layer.out_offset..layer.out_offset + c_out]) {
                        *g += v;
                    }
                }
            }
            im2col(tr, x, c_in, sh.kernel, p0, p1, &mut col);
            let a = MatRef::new(&col[..n * k_rows], n, k_rows, k_rows);
            matmul(a.t(), dy, T::one(), &mut grads.tensors[layer.weight].data, c_out);
            if let Some(d_in) = d_in.as_deref_mut() {
                let wt = MatRef::new(w, k_rows, c_out, c_out).t();
                matmul(dy, wt, T::zero(), &mut dcol[..n * k_rows], k_rows);
                for p in p0..p1 {
                    let row = &dcol[(p - p0) * k_rows..(p - p0 + 1) * k_rows];
                    for (t, g) in row.chunks(c_in).enumerate() {
                        let tap = if sh.kernel == 1 { CENTER } else { t };
                        if let Some(q) = tr.neighbor(p, tap) {
                            for (d, &g) in d_in[q * c_in..(q + 1) * c_in].iter_mut().zip(g) {
                                *d += g;
                            }
                        }
                    }
                }
            }
            p0 = p1;
        }
    }
}

/// Gathers the `kernel x kernel` (1 or 3) input neighborhoods of output
/// positions `p0..p1` into rows of `col`.
fn im2col<T: Real>(tr: &Transition, x: &[T], c_in: usize, kernel: usize, p0: usize, p1: usize, col: &mut [T]) {
    let taps = kernel * kernel;
    let k_rows = taps * c_in;
    for p in p0..p1 {
        let row = &mut col[(p - p0) * k_rows..(p - p0 + 1) * k_rows];
        for t in 0..taps {
            let dst = &mut row[t * c_in..(t + 1) * c_in];
            match tr.neighbor(p, if kernel == 1 { CENTER } else { t }) {
                Some(q) => dst.copy_from_slice(&x[q * c_in..(q + 1) * c_in]),
                None => dst.fill(T::zero()),
            }
        }
    }
}

fn relu<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn relu_backward<T: Real>(d: &mut [T], out: &[T]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

fn column_sums_into<T: Real>(m: &[T], cols: usize, dst: &mut [T]) {
    for row in m.chunks(cols) {
        for (d, &v) in dst.iter_mut().zip(row) {
            *d += v;
        }
    }
}

fn softmax_rows<T: Real>(v: &mut [T], cols: usize) {
    for row in v.chunks_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
}

/// Mean cross-entropy of one-hot labels; probabilities are clamped to
/// `1e-12` before the logarithm.
pub fn cross_entropy<T: Real>(probs: &[T], labels: &[usize]) -> Result<T> {
    if labels.is_empty() || probs.len() != labels.len() * NUM_CLASSES {
        return Err(NnError::ShapeMismatch(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let floor = T::from_f64(1e-12).unwrap();
    let mut total = T::zero();
    for (row, &l) in probs.chunks(NUM_CLASSES).zip(labels) {
        if l >= NUM_CLASSES {
            return Err(NnError::CorruptDataset(format!("label {l} out of range")));
        }
        total += -(row[l].max(floor)).ln();
    }
    Ok(total / T::from_usize(labels.len()).unwrap())
}

/// Index of the largest probability; ties resolve to the smaller index.
pub fn argmax<T: Real>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
