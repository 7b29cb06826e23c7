use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layer::LayerSpec;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Scalar, Tensor};

static NEXT_NETWORK_ID: AtomicUsize = AtomicUsize::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout disabled. Forward passes are pure.
    Eval,
    /// Dropout enabled; masks are derived from `seed` and the layer index.
    Train { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    fn fan_in(&self) -> usize {
        self.params
            .first()
            .map(|w| w.shape()[1..].iter().product())
            .unwrap_or(0)
    }
}

#[derive(Debug)]
enum LayerCache<T> {
    Conv { cols: Vec<T> },
    Pool { argmax: Vec<u32> },
    Relu { output: Vec<T> },
    Flatten,
    Dropout { mask: Option<Vec<T>> },
    Dense { input: Vec<T> },
    Softmax { output: Vec<T> },
}

/// Activations recorded by a training forward pass, consumed by `backward`.
#[derive(Debug)]
pub struct Cache<T> {
    network_id: usize,
    generation: u64,
    batch: usize,
    layers: Vec<LayerCache<T>>,
}

impl<T> Cache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients, one list per layer in the same order as the layer's
/// parameters. Layers without parameters, or excluded from the backward pass,
/// carry an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    layers: Vec<Vec<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn layer(&self, index: usize) -> &[Tensor<T>] {
        &self.layers[index]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Tensor<T>]> {
        self.layers.iter().map(Vec::as_slice)
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flatten().all(Tensor::all_finite)
    }
}

#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    id: usize,
    generation: u64,
}

/// Equal when shapes and parameters match; cache bookkeeping is ignored.
impl<T: PartialEq> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl<T: Scalar> Network<T> {
    /// Assembles a network with zeroed parameters for per-sample inputs of
    /// `input_shape`.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (index, spec) in specs.iter().enumerate() {
            let output_shape = spec.output_shape(index, &shape)?;
            let params = spec
                .param_shapes(&shape)
                .iter()
                .map(|s| Tensor::zeros(s))
                .collect();
            layers.push(Layer {
                spec: *spec,
                input_shape: core::mem::replace(&mut shape, output_shape.clone()),
                output_shape,
                params,
            });
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init_he(&mut self, seed: u64) {
        let mut rng = rng::rng(seed);
        for layer in &mut self.layers {
            let fan_in = layer.fan_in();
            if let Some((weights, rest)) = layer.params.split_first_mut() {
                let std = (2.0 / fan_in as f64).sqrt();
                for w in weights.data_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *w = T::from_f64(z * std);
                }
                for b in rest {
                    b.data_mut().fill(T::zero());
                }
            }
        }
        self.generation += 1;
    }

    /// Uniform random parameters in `[-scale, scale]`, biases included.
    pub fn init_uniform(&mut self, seed: u64, scale: f64) {
        let mut rng = rng::rng(seed);
        for p in self.layers.iter_mut().flat_map(|l| l.params.iter_mut()) {
            for v in p.data_mut() {
                *v = T::from_f64(rng.random_range(-scale..=scale));
            }
        }
        self.generation += 1;
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.output_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params.iter())
            .map(Tensor::len)
            .sum()
    }

    /// Mutable access to one layer's parameters. Invalidates existing caches.
    pub fn params_mut(&mut self, layer: usize) -> &mut [Tensor<T>] {
        self.generation += 1;
        &mut self.layers[layer].params
    }

    /// Same network evaluated in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    input_shape: l.input_shape.clone(),
                    output_shape: l.output_shape.clone(),
                    params: l.params.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let shape = input.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::ShapeMismatch {
                layer: 0,
                kind: self.layers.first().map_or("input", |l| l.spec.kind().name()),
                expected,
                found: shape.to_vec(),
            });
        }
        if !input.all_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(shape[0])
    }

    fn batched(&self, batch: usize, per_sample: &[usize]) -> Vec<usize> {
        let mut s = Vec::with_capacity(per_sample.len() + 1);
        s.push(batch);
        s.extend_from_slice(per_sample);
        s
    }

    /// Forward pass recording everything `backward` needs.
    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Cache<T>)> {
        let batch = self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let out = self.run(input.data().to_vec(), batch, mode, Some(&mut caches));
        let output = Tensor::new(self.batched(batch, self.output_shape()), out)?;
        Ok((
            output,
            Cache {
                network_id: self.id,
                generation: self.generation,
                batch,
                layers: caches,
            },
        ))
    }

    /// Eval-mode forward pass without recording activations.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check_input(input)?;
        let out = self.run(input.data().to_vec(), batch, Mode::Eval, None);
        Tensor::new(self.batched(batch, self.output_shape()), out)
    }

    fn run(
        &self,
        mut x: Vec<T>,
        batch: usize,
        mode: Mode,
        mut caches: Option<&mut Vec<LayerCache<T>>>,
    ) -> Vec<T> {
        for (index, layer) in self.layers.iter().enumerate() {
            let record = caches.is_some();
            let (y, cache) = match layer.spec {
                LayerSpec::Conv2d { filters, kernel } => {
                    let (y, cols) = conv_forward(
                        &x,
                        batch,
                        &layer.input_shape,
                        &layer.params[0],
                        &layer.params[1],
                        filters,
                        kernel,
                        record,
                    );
                    (y, LayerCache::Conv { cols })
                }
                LayerSpec::Maxpool2d { size } => {
                    let (y, argmax) = pool_forward(&x, batch, &layer.input_shape, size);
                    (y, LayerCache::Pool { argmax })
                }
                LayerSpec::Relu => {
                    for v in &mut x {
                        if !(*v > T::zero()) {
                            *v = T::zero();
                        }
                    }
                    let output = if record { x.clone() } else { Vec::new() };
                    (x, LayerCache::Relu { output })
                }
                LayerSpec::Flatten => (x, LayerCache::Flatten),
                LayerSpec::Dropout { rate } => match mode {
                    Mode::Train { seed } if rate > 0.0 => {
                        let keep = 1.0 - rate;
                        let scale = T::from_f64(1.0 / keep);
                        let mut rng = rng::rng_for(seed, index as u64);
                        let mask: Vec<T> = (0..x.len())
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    scale
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        for (v, m) in x.iter_mut().zip(&mask) {
                            *v = *v * *m;
                        }
                        (x, LayerCache::Dropout { mask: Some(mask) })
                    }
                    _ => (x, LayerCache::Dropout { mask: None }),
                },
                LayerSpec::Dense { units } => {
                    let y = dense_forward(
                        &x,
                        batch,
                        layer.input_shape[0],
                        units,
                        &layer.params[0],
                        &layer.params[1],
                    );
                    let input = if record { x } else { Vec::new() };
                    (y, LayerCache::Dense { input })
                }
                LayerSpec::Softmax => {
                    softmax_in_place(&mut x, layer.input_shape[0]);
                    let output = if record { x.clone() } else { Vec::new() };
                    (x, LayerCache::Softmax { output })
                }
            };
            x = y;
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
        }
        x
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, cache: &Cache<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>> {
        Ok(self.backward_impl(cache, grad_output, false, 0, false)?.0)
    }

    /// Gradient of the loss with respect to the network input.
    pub fn input_gradient(&self, cache: &Cache<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, dx) = self.backward_impl(cache, grad_output, false, 0, true)?;
        Tensor::new(self.batched(cache.batch, &self.input_shape), dx)
    }

    /// Like [`backward`](Self::backward) but `grad_logits` is the gradient
    /// with respect to the input of a trailing softmax layer, as produced by
    /// [`cross_entropy_loss`](super::cross_entropy_loss).
    pub fn backward_from_logits(
        &self,
        cache: &Cache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        Ok(self.backward_impl(cache, grad_logits, true, 0, false)?.0)
    }

    /// Backward pass that stops before `first_layer`; earlier layers get
    /// empty gradient lists.
    pub(crate) fn backward_impl(
        &self,
        cache: &Cache<T>,
        grad: &Tensor<T>,
        from_logits: bool,
        first_layer: usize,
        want_input: bool,
    ) -> Result<(Gradients<T>, Vec<T>)> {
        if cache.network_id != self.id
            || cache.generation != self.generation
            || cache.layers.len() != self.layers.len()
        {
            return Err(Error::StaleCache);
        }
        let batch = cache.batch;
        let skip_softmax =
            from_logits && matches!(self.layers.last().map(|l| l.spec), Some(LayerSpec::Softmax));
        let expected = self.batched(batch, self.output_shape());
        if grad.shape() != expected.as_slice() {
            let last = self.layers.len().saturating_sub(1);
            return Err(Error::ShapeMismatch {
                layer: last,
                kind: self.layers.get(last).map_or("output", |l| l.spec.kind().name()),
                expected,
                found: grad.shape().to_vec(),
            });
        }

        let mut grads: Vec<Vec<Tensor<T>>> = vec![Vec::new(); self.layers.len()];
        let mut g = grad.data().to_vec();
        for index in (first_layer..self.layers.len()).rev() {
            let layer = &self.layers[index];
            let need_input_grad = index > first_layer || want_input;
            match (&layer.spec, &cache.layers[index]) {
                (LayerSpec::Conv2d { filters, kernel }, LayerCache::Conv { cols }) => {
                    let (dw, db, dx) = conv_backward(
                        &g,
                        cols,
                        batch,
                        &layer.input_shape,
                        &layer.params[0],
                        *filters,
                        *kernel,
                        need_input_grad,
                    );
                    grads[index] = vec![dw, db];
                    g = dx;
                }
                (LayerSpec::Maxpool2d { .. }, LayerCache::Pool { argmax }) => {
                    let mut dx = vec![T::zero(); batch * layer.input_shape.iter().product::<usize>()];
                    for (&a, &d) in argmax.iter().zip(&g) {
                        dx[a as usize] = dx[a as usize] + d;
                    }
                    g = dx;
                }
                (LayerSpec::Relu, LayerCache::Relu { output }) => {
                    for (d, &o) in g.iter_mut().zip(output) {
                        if !(o > T::zero()) {
                            *d = T::zero();
                        }
                    }
                }
                (LayerSpec::Flatten, LayerCache::Flatten) => {}
                (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
                    if let Some(mask) = mask {
                        for (d, &m) in g.iter_mut().zip(mask) {
                            *d = *d * m;
                        }
                    }
                }
                (LayerSpec::Dense { units }, LayerCache::Dense { input }) => {
                    let (dw, db, dx) = dense_backward(
                        &g,
                        input,
                        batch,
                        layer.input_shape[0],
                        *units,
                        &layer.params[0],
                        need_input_grad,
                    );
                    grads[index] = vec![dw, db];
                    g = dx;
                }
                (LayerSpec::Softmax, LayerCache::Softmax { output }) => {
                    if !(skip_softmax && index + 1 == self.layers.len()) {
                        softmax_backward(&mut g, output, layer.input_shape[0]);
                    }
                }
                _ => return Err(Error::StaleCache),
            }
        }
        Ok((Gradients { layers: grads }, g))
    }
}

fn softmax_in_place<T: Scalar>(x: &mut [T], width: usize) {
    for row in x.chunks_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

fn softmax_backward<T: Scalar>(g: &mut [T], output: &[T], width: usize) {
    for (grow, prow) in g.chunks_mut(width).zip(output.chunks(width)) {
        let dot: T = grow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
        for (d, &p) in grow.iter_mut().zip(prow) {
            *d = p * (*d - dot);
        }
    }
}

fn dense_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    inputs: usize,
    units: usize,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Vec<T> {
    let mut y = Vec::with_capacity(batch * units);
    for _ in 0..batch {
        y.extend_from_slice(bias.data());
    }
    // y[N, O] += x[N, I] * W^T, W stored [O, I]
    T::gemm(
        batch,
        inputs,
        units,
        T::one(),
        (x, inputs, 1),
        (weight.data(), 1, inputs),
        T::one(),
        (&mut y, units, 1),
    );
    y
}

fn dense_backward<T: Scalar>(
    g: &[T],
    x: &[T],
    batch: usize,
    inputs: usize,
    units: usize,
    weight: &Tensor<T>,
    need_input_grad: bool,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let mut dw = Tensor::zeros(&[units, inputs]);
    // dW[O, I] = g^T[O, N] * x[N, I]
    T::gemm(
        units,
        batch,
        inputs,
        T::one(),
        (g, 1, units),
        (x, inputs, 1),
        T::zero(),
        (dw.data_mut(), inputs, 1),
    );
    let mut db = Tensor::zeros(&[units]);
    for row in g.chunks(units) {
        for (b, &d) in db.data_mut().iter_mut().zip(row) {
            *b = *b + d;
        }
    }
    let dx = if need_input_grad {
        let mut dx = vec![T::zero(); batch * inputs];
        // dx[N, I] = g[N, O] * W[O, I]
        T::gemm(
            batch,
            units,
            inputs,
            T::one(),
            (g, units, 1),
            (weight.data(), inputs, 1),
            T::zero(),
            (&mut dx, inputs, 1),
        );
        dx
    } else {
        Vec::new()
    };
    (dw, db, dx)
}

/// Unrolls one `[C, H, W]` sample into `[C*k*k, OH*OW]` patch columns.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut cols[((ch * k + ki) * k + kj) * p..][..p];
                for oy in 0..oh {
                    let src = &plane[(oy + ki) * w + kj..][..ow];
                    row[oy * ow..(oy + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &cols[((ch * k + ki) * k + kj) * p..][..p];
                for oy in 0..oh {
                    let dst = &mut plane[(oy + ki) * w + kj..][..ow];
                    for (d, &s) in dst.iter_mut().zip(&row[oy * ow..(oy + 1) * ow]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    input_shape: &[usize],
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    filters: usize,
    k: usize,
    keep_cols: bool,
) -> (Vec<T>, Vec<T>) {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    let ckk = c * k * k;
    let mut out = vec![T::zero(); batch * filters * p];
    let mut cols = vec![T::zero(); if keep_cols { batch * ckk * p } else { ckk * p }];
    for s in 0..batch {
        let col = if keep_cols {
            &mut cols[s * ckk * p..(s + 1) * ckk * p]
        } else {
            &mut cols[..]
        };
        im2col(&x[s * c * h * w..(s + 1) * c * h * w], c, h, w, k, col);
        let y = &mut out[s * filters * p..(s + 1) * filters * p];
        for (row, &b) in y.chunks_mut(p).zip(bias.data()) {
            row.fill(b);
        }
        T::gemm(
            filters,
            ckk,
            p,
            T::one(),
            (weight.data(), ckk, 1),
            (col, p, 1),
            T::one(),
            (y, p, 1),
        );
    }
    if !keep_cols {
        cols = Vec::new();
    }
    (out, cols)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    g: &[T],
    cols: &[T],
    batch: usize,
    input_shape: &[usize],
    weight: &Tensor<T>,
    filters: usize,
    k: usize,
    need_input_grad: bool,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let p = (h - k + 1) * (w - k + 1);
    let ckk = c * k * k;
    let mut dw = Tensor::zeros(&[filters, c, k, k]);
    let mut db = Tensor::zeros(&[filters]);
    let mut dx = if need_input_grad {
        vec![T::zero(); batch * c * h * w]
    } else {
        Vec::new()
    };
    let mut dcol = if need_input_grad {
        vec![T::zero(); ckk * p]
    } else {
        Vec::new()
    };
    for s in 0..batch {
        let gs = &g[s * filters * p..(s + 1) * filters * p];
        let col = &cols[s * ckk * p..(s + 1) * ckk * p];
        // dW[F, CKK] += g_s[F, P] * col_s^T[P, CKK]
        T::gemm(
            filters,
            p,
            ckk,
            T::one(),
            (gs, p, 1),
            (col, 1, p),
            T::one(),
            (dw.data_mut(), ckk, 1),
        );
        for (b, row) in db.data_mut().iter_mut().zip(gs.chunks(p)) {
            *b = *b + row.iter().copied().sum();
        }
        if need_input_grad {
            // dcol[CKK, P] = W^T[CKK, F] * g_s[F, P]
            T::gemm(
                ckk,
                filters,
                p,
                T::one(),
                (weight.data(), 1, ckk),
                (gs, p, 1),
                T::zero(),
                (&mut dcol, p, 1),
            );
            col2im(&dcol, c, h, w, k, &mut dx[s * c * h * w..(s + 1) * c * h * w]);
        }
    }
    (dw, db, dx)
}

/// Max-pool with stride equal to the window. Ties go to the first position
/// in row-major scan order.
fn pool_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    input_shape: &[usize],
    size: usize,
) -> (Vec<T>, Vec<u32>) {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    let mut argmax = Vec::with_capacity(batch * c * oh * ow);
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best as u32);
            }
        }
    }
    (out, argmax)
}
