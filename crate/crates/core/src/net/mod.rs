//! The hashing network: a 1-D convolutional trunk mapping a signal to a
//! latent vector, an affine projection to `B` reals that are sign-quantized
//! into the hash code, and a parallel softmax head used for pretraining.
//!
//! Activations are stored frame-major: a batch is `[N, L, C]` row-major.
//! Dense weights are stored `[out, in]`; convolution kernels `[out, 3, in]`
//! with tap 0 reading frame `t - 1`.

mod adam;
mod io;
pub mod loss;
mod real;

use std::ops::Range;

use rand::Rng;

pub use adam::Adam;
pub use io::{decode_model, encode_model, MODEL_MAGIC};
pub use real::Real;

use crate::code::HashCode;
use crate::error::{Error, Result};
use crate::signal::{CHANNELS, SIGNAL_LEN};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const KERNEL: usize = 3;
pub const DEFAULT_LATENT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub pool: Pool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_len: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvSpec>,
    pub latent: usize,
    pub hash_bits: usize,
    pub classes: usize,
}

impl Architecture {
    /// Five conv-pool stages 48/96/128/192/256 (max pooling for the first
    /// three, average for the last two) and a 512-wide latent layer.
    pub fn fmhashnet(hash_bits: usize, classes: usize) -> Self {
        let conv = [
            (48, Pool::Max),
            (96, Pool::Max),
            (128, Pool::Max),
            (192, Pool::Avg),
            (256, Pool::Avg),
        ]
        .into_iter()
        .map(|(out_channels, pool)| ConvSpec { out_channels, pool })
        .collect();
        Architecture {
            input_len: SIGNAL_LEN,
            input_channels: CHANNELS,
            conv,
            latent: DEFAULT_LATENT,
            hash_bits,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Architecture(msg));
        if self.conv.is_empty() || self.conv.len() > 16 {
            return fail(format!("{} conv layers", self.conv.len()));
        }
        if self.input_len == 0 || !self.input_len.is_multiple_of(1 << self.conv.len()) {
            return fail(format!(
                "input length {} is not divisible by 2^{}",
                self.input_len,
                self.conv.len()
            ));
        }
        if self.input_channels == 0 || self.conv.iter().any(|c| c.out_channels == 0) {
            return fail("zero channel count".into());
        }
        if self.latent == 0 || self.classes == 0 {
            return fail("zero latent or class count".into());
        }
        if self.hash_bits == 0 || self.hash_bits > HashCode::MAX_BITS {
            return fail(format!("hash size {} outside 1..=64", self.hash_bits));
        }
        Ok(())
    }

    /// `(frames, channels)` after each conv-pool stage.
    pub fn stage_shapes(&self) -> Vec<(usize, usize)> {
        let mut len = self.input_len;
        self.conv
            .iter()
            .map(|c| {
                len /= 2;
                (len, c.out_channels)
            })
            .collect()
    }

    pub fn flat_features(&self) -> usize {
        let (len, ch) = *self.stage_shapes().last().unwrap();
        len * ch
    }

    pub fn input_size(&self) -> usize {
        self.input_len * self.input_channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Trunk,
    Projection,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub group: Group,
    /// Xavier fan sum; zero for biases.
    fan: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Where every named tensor lives inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    slots: Vec<Slot>,
    total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, group, fan| {
            let len: usize = shape.iter().product();
            slots.push(Slot {
                name,
                shape,
                offset,
                group,
                fan,
            });
            offset += len;
        };
        let mut cin = arch.input_channels;
        for (i, c) in arch.conv.iter().enumerate() {
            let cout = c.out_channels;
            push(
                format!("conv{}.weight", i + 1),
                vec![cout, KERNEL, cin],
                Group::Trunk,
                KERNEL * (cin + cout),
            );
            push(format!("conv{}.bias", i + 1), vec![cout], Group::Trunk, 0);
            cin = cout;
        }
        let flat = arch.flat_features();
        push("fc.weight".into(), vec![arch.latent, flat], Group::Trunk, flat + arch.latent);
        push("fc.bias".into(), vec![arch.latent], Group::Trunk, 0);
        push(
            "projection.weight".into(),
            vec![arch.hash_bits, arch.latent],
            Group::Projection,
            arch.latent + arch.hash_bits,
        );
        push("projection.bias".into(), vec![arch.hash_bits], Group::Projection, 0);
        push(
            "softmax.weight".into(),
            vec![arch.classes, arch.latent],
            Group::Softmax,
            arch.latent + arch.classes,
        );
        push("softmax.bias".into(), vec![arch.classes], Group::Softmax, 0);
        Layout {
            slots,
            total: offset,
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Contiguous ranges covering the given groups, merged where adjacent.
    pub fn ranges(&self, groups: &[Group]) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for s in self.slots.iter().filter(|s| groups.contains(&s.group)) {
            match out.last_mut() {
                Some(r) if r.end == s.offset => r.end = s.range().end,
                _ => out.push(s.range()),
            }
        }
        out
    }

    fn conv_weight(&self, i: usize) -> &Slot {
        &self.slots[2 * i]
    }

    fn conv_bias(&self, i: usize) -> &Slot {
        &self.slots[2 * i + 1]
    }

    fn named(&self, name: &str) -> &Slot {
        self.slot(name).expect("layout slot")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Real> {
    arch: Architecture,
    layout: Layout,
    params: Vec<T>,
}

struct ConvCache<T> {
    col: Vec<T>,
    pre: Vec<T>,
    /// Max pooling only: 1 where the second frame of the window won.
    second: Vec<u8>,
}

/// Intermediates of a batched trunk forward pass, consumed by the backward pass.
pub struct Forward<T: Real> {
    arch: Architecture,
    batch: usize,
    convs: Vec<ConvCache<T>>,
    flat: Vec<T>,
    fc_pre: Vec<T>,
    latent: Vec<T>,
}

impl<T: Real> Forward<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `[N, latent]` row-major.
    pub fn latent(&self) -> &[T] {
        &self.latent
    }

    /// `(frames, channels)` after each conv-pool stage as produced by this
    /// pass, then `(1, latent)`.
    pub fn trace(&self) -> Vec<(usize, usize)> {
        let n = self.batch;
        let mut out: Vec<(usize, usize)> = self
            .convs
            .iter()
            .zip(&self.arch.conv)
            .map(|(c, spec)| (c.pre.len() / (n * spec.out_channels) / 2, spec.out_channels))
            .collect();
        if let Some(&(_, ch)) = out.last() {
            debug_assert_eq!(self.flat.len(), n * out.last().unwrap().0 * ch);
        }
        out.push((1, self.latent.len() / n));
        out
    }
}

fn leaky<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * T::of(LEAKY_SLOPE)
    }
}

fn leaky_grad<T: Real>(pre: T) -> T {
    if pre > T::zero() {
        T::one()
    } else {
        T::of(LEAKY_SLOPE)
    }
}

fn check_finite<T: Real>(values: &[T], layer: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation {
            layer: layer.to_string(),
        })
    }
}

/// Adds `bias` to every row of a `[rows, bias.len()]` matrix.
fn add_bias<T: Real>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(o, b)| *o = *o + *b);
    }
}

/// Column sums of a `[rows, width]` matrix accumulated in double precision,
/// added into `acc`.
fn add_column_sums<T: Real>(acc: &mut [T], m: &[T]) {
    let width = acc.len();
    let mut sums = vec![0.0f64; width];
    for row in m.chunks_exact(width) {
        sums.iter_mut().zip(row).for_each(|(s, v)| *s += v.as_f64());
    }
    acc.iter_mut()
        .zip(sums)
        .for_each(|(a, s)| *a = *a + T::of(s));
}

impl<T: Real> Network<T> {
    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![T::zero(); layout.total()];
        for slot in layout.slots() {
            if slot.fan == 0 {
                continue;
            }
            let bound = (6.0 / slot.fan as f64).sqrt();
            for p in &mut params[slot.range()] {
                *p = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(Network {
            arch,
            layout,
            params,
        })
    }

    pub fn from_parts(arch: Architecture, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if params.len() != layout.total() {
            return Err(Error::Architecture(format!(
                "expected {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        Ok(Network {
            arch,
            layout,
            params,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.slot(name).map(|s| &self.params[s.range()])
    }

    pub fn hash_bits(&self) -> usize {
        self.arch.hash_bits
    }

    pub fn zero_grads(&self) -> Vec<T> {
        vec![T::zero(); self.layout.total()]
    }

    fn p(&self, slot: &Slot) -> &[T] {
        &self.params[slot.range()]
    }

    /// Trunk forward pass for a batch of `inputs.len() / input_size` signals.
    pub fn forward_latent(&self, inputs: &[T]) -> Result<Forward<T>> {
        let size = self.arch.input_size();
        if inputs.is_empty() || !inputs.len().is_multiple_of(size) {
            return Err(Error::InvalidSignal(format!(
                "input length {} is not a positive multiple of {size}",
                inputs.len()
            )));
        }
        check_finite(inputs, "input")?;
        let n = inputs.len() / size;
        let mut len = self.arch.input_len;
        let mut cin = self.arch.input_channels;
        let mut x = inputs.to_vec();
        let mut convs = Vec::with_capacity(self.arch.conv.len());

        for (i, spec) in self.arch.conv.iter().enumerate() {
            let cout = spec.out_channels;
            let width = KERNEL * cin;
            let rows = n * len;
            let mut col = vec![T::zero(); rows * width];
            for b in 0..n {
                for t in 0..len {
                    let dst = &mut col[(b * len + t) * width..][..width];
                    for tap in 0..KERNEL {
                        let src_t = t as isize + tap as isize - 1;
                        if src_t < 0 || src_t >= len as isize {
                            continue;
                        }
                        let src = &x[(b * len + src_t as usize) * cin..][..cin];
                        dst[tap * cin..][..cin].copy_from_slice(src);
                    }
                }
            }
            let mut pre = vec![T::zero(); rows * cout];
            let w = self.p(self.layout.conv_weight(i));
            T::gemm(false, true, rows, cout, width, T::one(), &col, w, T::zero(), &mut pre);
            add_bias(&mut pre, self.p(self.layout.conv_bias(i)));

            let half = len / 2;
            let mut pooled = vec![T::zero(); n * half * cout];
            let mut second = Vec::new();
            if spec.pool == Pool::Max {
                second = vec![0u8; n * half * cout];
            }
            for b in 0..n {
                for t in 0..half {
                    let r0 = &pre[(b * len + 2 * t) * cout..][..cout];
                    let r1 = &pre[(b * len + 2 * t + 1) * cout..][..cout];
                    let out_off = (b * half + t) * cout;
                    for c in 0..cout {
                        let (a0, a1) = (leaky(r0[c]), leaky(r1[c]));
                        pooled[out_off + c] = match spec.pool {
                            Pool::Max => {
                                if a1 > a0 {
                                    second[out_off + c] = 1;
                                    a1
                                } else {
                                    a0
                                }
                            }
                            Pool::Avg => (a0 + a1) * T::of(0.5),
                        };
                    }
                }
            }
            check_finite(&pooled, &format!("conv{}", i + 1))?;
            convs.push(ConvCache { col, pre, second });
            x = pooled;
            len = half;
            cin = cout;
        }

        let flat = x;
        let features = len * cin;
        let latent_dim = self.arch.latent;
        let mut fc_pre = vec![T::zero(); n * latent_dim];
        T::gemm(
            false,
            true,
            n,
            latent_dim,
            features,
            T::one(),
            &flat,
            self.p(self.layout.named("fc.weight")),
            T::zero(),
            &mut fc_pre,
        );
        add_bias(&mut fc_pre, self.p(self.layout.named("fc.bias")));
        let latent: Vec<T> = fc_pre.iter().map(|&v| leaky(v)).collect();
        check_finite(&latent, "fc")?;
        Ok(Forward {
            arch: self.arch.clone(),
            batch: n,
            convs,
            flat,
            fc_pre,
            latent,
        })
    }

    fn affine_head(&self, h: &[T], weight: &str, bias: &str, out_dim: usize) -> Result<Vec<T>> {
        let d = self.arch.latent;
        if h.is_empty() || !h.len().is_multiple_of(d) {
            return Err(Error::InvalidSignal(format!(
                "latent length {} is not a positive multiple of {d}",
                h.len()
            )));
        }
        let n = h.len() / d;
        let mut out = vec![T::zero(); n * out_dim];
        T::gemm(
            false,
            true,
            n,
            out_dim,
            d,
            T::one(),
            h,
            self.p(self.layout.named(weight)),
            T::zero(),
            &mut out,
        );
        add_bias(&mut out, self.p(self.layout.named(bias)));
        Ok(out)
    }

    /// `z = W h + c` for each latent row; `[N, B]`.
    pub fn forward_projection(&self, h: &[T]) -> Result<Vec<T>> {
        self.affine_head(h, "projection.weight", "projection.bias", self.arch.hash_bits)
    }

    /// Softmax-head logits for each latent row; `[N, classes]`.
    pub fn forward_logits(&self, h: &[T]) -> Result<Vec<T>> {
        self.affine_head(h, "softmax.weight", "softmax.bias", self.arch.classes)
    }

    fn affine_head_backward(
        &self,
        h: &[T],
        dout: &[T],
        weight: &str,
        bias: &str,
        out_dim: usize,
        grads: &mut [T],
    ) -> Result<Vec<T>> {
        let d = self.arch.latent;
        let n = h.len() / d;
        if h.len() != n * d || dout.len() != n * out_dim || grads.len() != self.layout.total() {
            return Err(Error::CacheMismatch(format!(
                "head backward with {} latent values, {} output gradients",
                h.len(),
                dout.len()
            )));
        }
        let ws = self.layout.named(weight).clone();
        let bs = self.layout.named(bias).clone();
        T::gemm(true, false, out_dim, d, n, T::one(), dout, h, T::one(), &mut grads[ws.range()]);
        add_column_sums(&mut grads[bs.range()], dout);
        let mut dh = vec![T::zero(); n * d];
        T::gemm(false, false, n, d, out_dim, T::one(), dout, self.p(&ws), T::zero(), &mut dh);
        Ok(dh)
    }

    /// Accumulates projection gradients into `grads`; returns `dL/dh`.
    pub fn backward_projection(&self, h: &[T], dz: &[T], grads: &mut [T]) -> Result<Vec<T>> {
        self.affine_head_backward(
            h,
            dz,
            "projection.weight",
            "projection.bias",
            self.arch.hash_bits,
            grads,
        )
    }

    /// Accumulates softmax-head gradients into `grads`; returns `dL/dh`.
    pub fn backward_logits(&self, h: &[T], dlogits: &[T], grads: &mut [T]) -> Result<Vec<T>> {
        self.affine_head_backward(
            h,
            dlogits,
            "softmax.weight",
            "softmax.bias",
            self.arch.classes,
            grads,
        )
    }

    /// Backpropagates `dL/dh` through the trunk, accumulating into `grads`.
    pub fn backward(&self, cache: &Forward<T>, dh: &[T], grads: &mut [T]) -> Result<()> {
        let n = cache.batch;
        if cache.arch != self.arch
            || cache.convs.len() != self.arch.conv.len()
            || dh.len() != n * self.arch.latent
            || grads.len() != self.layout.total()
        {
            return Err(Error::CacheMismatch(format!(
                "batch {n}, {} latent gradients, {} gradient slots",
                dh.len(),
                grads.len()
            )));
        }
        let latent_dim = self.arch.latent;
        let features = self.arch.flat_features();

        let dpre: Vec<T> = dh
            .iter()
            .zip(&cache.fc_pre)
            .map(|(&g, &p)| g * leaky_grad(p))
            .collect();
        let fw = self.layout.named("fc.weight").clone();
        let fb = self.layout.named("fc.bias").clone();
        T::gemm(true, false, latent_dim, features, n, T::one(), &dpre, &cache.flat, T::one(), &mut grads[fw.range()]);
        add_column_sums(&mut grads[fb.range()], &dpre);
        let mut dx = vec![T::zero(); n * features];
        T::gemm(false, false, n, features, latent_dim, T::one(), &dpre, self.p(&fw), T::zero(), &mut dx);

        let shapes = self.arch.stage_shapes();
        for i in (0..self.arch.conv.len()).rev() {
            let spec = self.arch.conv[i];
            let cache_i = &cache.convs[i];
            let (half, cout) = shapes[i];
            let len = half * 2;
            let cin = if i == 0 {
                self.arch.input_channels
            } else {
                shapes[i - 1].1
            };
            let width = KERNEL * cin;
            let rows = n * len;

            // Unpool and apply the activation derivative.
            let mut dpre = vec![T::zero(); rows * cout];
            for b in 0..n {
                for t in 0..half {
                    let up = (b * half + t) * cout;
                    let r0 = (b * len + 2 * t) * cout;
                    let r1 = r0 + cout;
                    for c in 0..cout {
                        let g = dx[up + c];
                        match spec.pool {
                            Pool::Max => {
                                let r = if cache_i.second[up + c] == 1 { r1 } else { r0 };
                                dpre[r + c] = g * leaky_grad(cache_i.pre[r + c]);
                            }
                            Pool::Avg => {
                                let g = g * T::of(0.5);
                                dpre[r0 + c] = g * leaky_grad(cache_i.pre[r0 + c]);
                                dpre[r1 + c] = g * leaky_grad(cache_i.pre[r1 + c]);
                            }
                        }
                    }
                }
            }

            let ws = self.layout.conv_weight(i).clone();
            let bs = self.layout.conv_bias(i).clone();
            T::gemm(true, false, cout, width, rows, T::one(), &dpre, &cache_i.col, T::one(), &mut grads[ws.range()]);
            add_column_sums(&mut grads[bs.range()], &dpre);

            if i == 0 {
                break;
            }
            let mut dcol = vec![T::zero(); rows * width];
            T::gemm(false, false, rows, width, cout, T::one(), &dpre, self.p(&ws), T::zero(), &mut dcol);
            let mut dinput = vec![T::zero(); rows * cin];
            for b in 0..n {
                for t in 0..len {
                    let src = &dcol[(b * len + t) * width..][..width];
                    for tap in 0..KERNEL {
                        let dst_t = t as isize + tap as isize - 1;
                        if dst_t < 0 || dst_t >= len as isize {
                            continue;
                        }
                        let dst = &mut dinput[(b * len + dst_t as usize) * cin..][..cin];
                        dst.iter_mut()
                            .zip(&src[tap * cin..][..cin])
                            .for_each(|(d, s)| *d = *d + *s);
                    }
                }
            }
            dx = dinput;
        }
        Ok(())
    }
}

impl Network<f32> {
    /// Latent vectors of many signals, computed in fixed-size chunks.
    pub fn latents(&self, inputs: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        const CHUNK: usize = 64;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(CHUNK) {
            let batch: Vec<f32> = chunk.iter().flatten().copied().collect();
            let fwd = self.forward_latent(&batch)?;
            out.extend(fwd.latent().chunks_exact(self.arch.latent).map(|r| r.to_vec()));
        }
        Ok(out)
    }

    /// Hash code of one latent vector.
    pub fn code_of(&self, h: &[f32]) -> Result<HashCode> {
        Ok(HashCode::quantize(&self.forward_projection(h)?))
    }
}
