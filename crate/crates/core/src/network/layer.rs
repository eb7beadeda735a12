//! Layer zoo. Every layer acts on a batch `[N, C, H, W]` and provides an exact
//! vector-Jacobian product for its input and parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{self, Geometry};
use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-sample shape `(C, H, W)`.
pub type Shape3 = [usize; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns on the output of a transposed convolution; must be
    /// smaller than the stride. Ignored by plain convolutions.
    #[serde(default)]
    pub output_padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected on the flattened sample; output shape `(output, 1, 1)`.
    Dense { input: usize, output: usize },
    Conv2d(ConvSpec),
    TransposedConv2d(ConvSpec),
    /// Non-overlapping max pooling; stride equals the window.
    Maxpool2d { window: usize },
    /// Nearest-neighbour upsampling.
    Upsample2d { factor: usize },
    Activation { function: Activation },
    /// Reinterprets the sample shape without moving data.
    Reshape { shape: Shape3 },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d(ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding: 0,
        })
    }

    pub fn deconv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        LayerSpec::TransposedConv2d(ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
        })
    }

    pub fn act(function: Activation) -> Self {
        LayerSpec::Activation { function }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv2d(_) | LayerSpec::TransposedConv2d(_)
        )
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. })
    }

    fn check_positive(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { input, output } => input > 0 && output > 0,
            LayerSpec::Conv2d(c) | LayerSpec::TransposedConv2d(c) => {
                c.in_channels > 0 && c.out_channels > 0 && c.kernel > 0 && c.stride > 0
            }
            LayerSpec::Maxpool2d { window } => window > 0,
            LayerSpec::Upsample2d { factor } => factor > 0,
            LayerSpec::Activation { .. } => true,
            LayerSpec::Reshape { shape } => shape.iter().all(|&d| d > 0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("{self:?}: sizes must be positive")))
        }
    }

    /// Output sample shape for a given input sample shape.
    pub fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        self.check_positive()?;
        let [c, h, w] = input;
        let bad = |why: String| dim_err("LayerSpec::output_shape", format!("{self:?} on {input:?}: {why}"));
        match *self {
            LayerSpec::Dense { input: n_in, output } => {
                if c * h * w != n_in {
                    return Err(bad(format!("expects {n_in} features")));
                }
                Ok([output, 1, 1])
            }
            LayerSpec::Conv2d(s) => {
                if c != s.in_channels {
                    return Err(bad(format!("expects {} channels", s.in_channels)));
                }
                if h + 2 * s.padding < s.kernel || w + 2 * s.padding < s.kernel {
                    return Err(bad("kernel larger than padded input".into()));
                }
                Ok([
                    s.out_channels,
                    (h + 2 * s.padding - s.kernel) / s.stride + 1,
                    (w + 2 * s.padding - s.kernel) / s.stride + 1,
                ])
            }
            LayerSpec::TransposedConv2d(s) => {
                if c != s.in_channels {
                    return Err(bad(format!("expects {} channels", s.in_channels)));
                }
                if s.output_padding >= s.stride {
                    return Err(bad("output_padding must be smaller than stride".into()));
                }
                let grow = |n: usize| ((n - 1) * s.stride + s.kernel + s.output_padding).checked_sub(2 * s.padding);
                match (grow(h), grow(w)) {
                    (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok([s.out_channels, oh, ow]),
                    _ => Err(bad("padding exceeds output".into())),
                }
            }
            LayerSpec::Maxpool2d { window } => {
                if h < window || w < window {
                    return Err(bad("window larger than input".into()));
                }
                Ok([c, h / window, w / window])
            }
            LayerSpec::Upsample2d { factor } => Ok([c, h * factor, w * factor]),
            LayerSpec::Activation { .. } => Ok(input),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != c * h * w {
                    return Err(bad("element count changes".into()));
                }
                Ok(shape)
            }
        }
    }

    /// Parameter tensor shapes, weight first then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { input, output } => vec![vec![output, input], vec![output]],
            LayerSpec::Conv2d(s) => vec![
                vec![s.out_channels, s.in_channels, s.kernel, s.kernel],
                vec![s.out_channels],
            ],
            LayerSpec::TransposedConv2d(s) => vec![
                vec![s.in_channels, s.out_channels, s.kernel, s.kernel],
                vec![s.out_channels],
            ],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, .. } => input,
            LayerSpec::Conv2d(s) | LayerSpec::TransposedConv2d(s) => s.in_channels * s.kernel * s.kernel,
            _ => 1,
        }
    }

    fn geometry(&self, input: Shape3) -> Result<Geometry> {
        let out = self.output_shape(input)?;
        let (s, large, small) = match *self {
            LayerSpec::Conv2d(s) => (s, input, out),
            LayerSpec::TransposedConv2d(s) => (s, out, input),
            _ => unreachable!("geometry requested for a non-convolution"),
        };
        Ok(Geometry {
            large_ch: large[0],
            small_ch: small[0],
            kernel: s.kernel,
            stride: s.stride,
            padding: s.padding,
            h: large[1],
            w: large[2],
            oh: small[1],
            ow: small[2],
        })
    }
}

/// Whatever the backward pass of one layer needs from its forward pass.
#[derive(Clone, Debug)]
pub enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Argmax { input_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// `[weight, bias]` for parametric layers, empty otherwise.
    pub params: Vec<Tensor<T>>,
}

fn sample_shape<T: Scalar>(x: &Tensor<T>) -> Result<Shape3> {
    match *x.shape() {
        [_, c, h, w] => Ok([c, h, w]),
        ref s => Err(dim_err("layer forward", format!("expected [N, C, H, W], got {s:?}"))),
    }
}

fn batch_shape(n: usize, s: Shape3) -> [usize; 4] {
    [n, s[0], s[1], s[2]]
}

impl<T: Scalar> Layer<T> {
    /// Uniform initialisation on `[-a, a]` with `a = sqrt(1 / fan_in)`.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let a = (1.0 / spec.fan_in() as f64).sqrt();
        let params = spec
            .param_shapes()
            .iter()
            .map(|s| Tensor::from_fn(s, |_| T::lit(rng.random_range(-a..=a))))
            .collect();
        Layer { spec, params }
    }

    pub fn with_params(spec: LayerSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        let want = spec.param_shapes();
        if want.len() != params.len() || want.iter().zip(&params).any(|(w, p)| w.as_slice() != p.shape()) {
            return Err(dim_err(
                "Layer::with_params",
                format!("{spec:?} expects parameter shapes {want:?}"),
            ));
        }
        Ok(Layer { spec, params })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>)> {
        let input = sample_shape(x)?;
        let out_shape = self.spec.output_shape(input)?;
        let n = x.outer();
        let out_dims = batch_shape(n, out_shape);
        match self.spec {
            LayerSpec::Dense { input: n_in, output } => {
                let (w, b) = (self.params[0].data(), self.params[1].data());
                let mut y = Vec::with_capacity(n * output);
                for i in 0..n {
                    let xi = x.row(i);
                    for o in 0..output {
                        let wr = &w[o * n_in..(o + 1) * n_in];
                        y.push(b[o] + crate::tensor::dot(wr, xi));
                    }
                }
                Ok((Tensor::new(out_dims.to_vec(), y)?, Cache::Input(x.clone())))
            }
            LayerSpec::Conv2d(_) => {
                let g = self.spec.geometry(input)?;
                let mut y = conv::gather(&g, n, x.data(), self.params[0].data());
                add_channel_bias(&mut y, self.params[1].data(), out_shape);
                Ok((Tensor::new(out_dims.to_vec(), y)?, Cache::Input(x.clone())))
            }
            LayerSpec::TransposedConv2d(_) => {
                let g = self.spec.geometry(input)?;
                let mut y = conv::scatter(&g, n, x.data(), self.params[0].data());
                add_channel_bias(&mut y, self.params[1].data(), out_shape);
                Ok((Tensor::new(out_dims.to_vec(), y)?, Cache::Input(x.clone())))
            }
            LayerSpec::Maxpool2d { window } => {
                let [c, h, w] = input;
                let [_, oh, ow] = out_shape;
                let xd = x.data();
                let mut y = Vec::with_capacity(n * c * oh * ow);
                let mut argmax = Vec::with_capacity(y.capacity());
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + oy * window * w + ox * window;
                            for dy in 0..window {
                                for dx in 0..window {
                                    let idx = base + (oy * window + dy) * w + ox * window + dx;
                                    if xd[idx] > xd[best] {
                                        best = idx;
                                    }
                                }
                            }
                            argmax.push(best);
                            y.push(xd[best]);
                        }
                    }
                }
                let cache = Cache::Argmax {
                    input_shape: x.shape().to_vec(),
                    argmax,
                };
                Ok((Tensor::new(out_dims.to_vec(), y)?, cache))
            }
            LayerSpec::Upsample2d { factor } => {
                let [c, h, w] = input;
                let (oh, ow) = (h * factor, w * factor);
                let xd = x.data();
                let mut y = Vec::with_capacity(n * c * oh * ow);
                for plane in 0..n * c {
                    for oy in 0..oh {
                        let row = &xd[plane * h * w + (oy / factor) * w..][..w];
                        y.extend((0..ow).map(|ox| row[ox / factor]));
                    }
                }
                Ok((Tensor::new(out_dims.to_vec(), y)?, Cache::Shape(x.shape().to_vec())))
            }
            LayerSpec::Activation { function } => match function {
                Activation::Relu => Ok((x.map(|v| v.max(T::zero())), Cache::Input(x.clone()))),
                Activation::Sigmoid => {
                    let y = x.map(|v| T::one() / (T::one() + (-v).exp()));
                    Ok((y.clone(), Cache::Output(y)))
                }
                Activation::Tanh => {
                    let y = x.map(T::tanh);
                    Ok((y.clone(), Cache::Output(y)))
                }
            },
            LayerSpec::Reshape { .. } => Ok((x.reshaped(&out_dims)?, Cache::Shape(x.shape().to_vec()))),
        }
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Vector-Jacobian product: returns the input gradient and one gradient
    /// per parameter tensor (same order as `params`).
    pub fn vjp(&self, cache: &Cache<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let missing = || Error::Usage(format!("{:?}: cache does not come from this layer's forward", self.spec));
        match (self.spec, cache) {
            (LayerSpec::Dense { input: n_in, output }, Cache::Input(x)) => {
                let n = x.outer();
                self.expect_upstream(upstream, &[n, output, 1, 1])?;
                let w = self.params[0].data();
                let g = upstream.data();
                let mut gx = vec![T::zero(); n * n_in];
                let mut gw = vec![T::zero(); output * n_in];
                let mut gb = vec![T::zero(); output];
                for i in 0..n {
                    let xi = x.row(i);
                    let gxi = &mut gx[i * n_in..(i + 1) * n_in];
                    for o in 0..output {
                        let go = g[i * output + o];
                        gb[o] += go;
                        let wr = &w[o * n_in..(o + 1) * n_in];
                        let gwr = &mut gw[o * n_in..(o + 1) * n_in];
                        for j in 0..n_in {
                            gxi[j] += go * wr[j];
                            gwr[j] += go * xi[j];
                        }
                    }
                }
                Ok((
                    Tensor::new(x.shape().to_vec(), gx)?,
                    vec![Tensor::new(vec![output, n_in], gw)?, Tensor::new(vec![output], gb)?],
                ))
            }
            (LayerSpec::Conv2d(_), Cache::Input(x)) => {
                let input = sample_shape(x)?;
                let g = self.spec.geometry(input)?;
                let n = x.outer();
                let out = self.spec.output_shape(input)?;
                self.expect_upstream(upstream, &batch_shape(n, out))?;
                let gx = conv::scatter(&g, n, upstream.data(), self.params[0].data());
                let gw = conv::weight_grad(&g, n, x.data(), upstream.data());
                let gb = channel_sums(upstream.data(), out);
                Ok((
                    Tensor::new(x.shape().to_vec(), gx)?,
                    vec![Tensor::new(self.params[0].shape().to_vec(), gw)?, Tensor::new(vec![out[0]], gb)?],
                ))
            }
            (LayerSpec::TransposedConv2d(_), Cache::Input(x)) => {
                let input = sample_shape(x)?;
                let g = self.spec.geometry(input)?;
                let n = x.outer();
                let out = self.spec.output_shape(input)?;
                self.expect_upstream(upstream, &batch_shape(n, out))?;
                let gx = conv::gather(&g, n, upstream.data(), self.params[0].data());
                let gw = conv::weight_grad(&g, n, upstream.data(), x.data());
                let gb = channel_sums(upstream.data(), out);
                Ok((
                    Tensor::new(x.shape().to_vec(), gx)?,
                    vec![Tensor::new(self.params[0].shape().to_vec(), gw)?, Tensor::new(vec![out[0]], gb)?],
                ))
            }
            (LayerSpec::Maxpool2d { .. }, Cache::Argmax { input_shape, argmax }) => {
                if upstream.len() != argmax.len() {
                    return Err(dim_err("maxpool vjp", "upstream does not match cached output"));
                }
                let mut gx = Tensor::zeros(input_shape);
                let gd = gx.data_mut();
                for (&idx, &g) in argmax.iter().zip(upstream.data()) {
                    gd[idx] += g;
                }
                Ok((gx, Vec::new()))
            }
            (LayerSpec::Upsample2d { factor }, Cache::Shape(input_shape)) => {
                let &[n, c, h, w] = input_shape.as_slice() else {
                    return Err(missing());
                };
                self.expect_upstream(upstream, &[n, c, h * factor, w * factor])?;
                let (oh, ow) = (h * factor, w * factor);
                let gu = upstream.data();
                let mut gx = vec![T::zero(); n * c * h * w];
                for plane in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            gx[plane * h * w + (oy / factor) * w + ox / factor] += gu[plane * oh * ow + oy * ow + ox];
                        }
                    }
                }
                Ok((Tensor::new(input_shape.clone(), gx)?, Vec::new()))
            }
            (LayerSpec::Activation { function: Activation::Relu }, Cache::Input(x)) => {
                let gx = upstream.zip_map(x, |g, v| if v > T::zero() { g } else { T::zero() })?;
                Ok((gx, Vec::new()))
            }
            (LayerSpec::Activation { function: Activation::Sigmoid }, Cache::Output(y)) => {
                Ok((upstream.zip_map(y, |g, s| g * s * (T::one() - s))?, Vec::new()))
            }
            (LayerSpec::Activation { function: Activation::Tanh }, Cache::Output(y)) => {
                Ok((upstream.zip_map(y, |g, t| g * (T::one() - t * t))?, Vec::new()))
            }
            (LayerSpec::Reshape { .. }, Cache::Shape(input_shape)) => Ok((upstream.reshaped(input_shape)?, Vec::new())),
            _ => Err(missing()),
        }
    }

    fn expect_upstream(&self, upstream: &Tensor<T>, want: &[usize]) -> Result<()> {
        if upstream.shape() != want {
            return Err(dim_err(
                "layer vjp",
                format!("{:?}: upstream {:?}, expected {want:?}", self.spec, upstream.shape()),
            ));
        }
        Ok(())
    }
}

fn add_channel_bias<T: Scalar>(y: &mut [T], bias: &[T], out: Shape3) {
    let plane = out[1] * out[2];
    for (i, chunk) in y.chunks_mut(plane).enumerate() {
        let b = bias[i % out[0]];
        for v in chunk {
            *v += b;
        }
    }
}

fn channel_sums<T: Scalar>(g: &[T], out: Shape3) -> Vec<T> {
    let plane = out[1] * out[2];
    let mut sums = vec![T::zero(); out[0]];
    for (i, chunk) in g.chunks(plane).enumerate() {
        sums[i % out[0]] += chunk.iter().fold(T::zero(), |a, &v| a + v);
    }
    sums
}

/// Runs layers in order, keeping every cache.
pub fn forward_all<T: Scalar>(layers: &[Layer<T>], x: &Tensor<T>) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers {
        let (y, c) = layer.forward(&cur)?;
        caches.push(c);
        cur = y;
    }
    Ok((cur, caches))
}

pub fn infer_all<T: Scalar>(layers: &[Layer<T>], x: &Tensor<T>) -> Result<Tensor<T>> {
    layers.iter().try_fold(x.clone(), |cur, layer| layer.infer(&cur))
}

/// Backpropagates through `layers`; returns the input gradient and the
/// parameter gradients per layer.
pub fn backward_all<T: Scalar>(
    layers: &[Layer<T>],
    caches: &[Cache<T>],
    upstream: Tensor<T>,
) -> Result<(Tensor<T>, Vec<Vec<Tensor<T>>>)> {
    if caches.len() != layers.len() {
        return Err(Error::Usage(format!(
            "{} caches for {} layers",
            caches.len(),
            layers.len()
        )));
    }
    let mut grads = vec![Vec::new(); layers.len()];
    let mut g = upstream;
    for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
        let (gx, gp) = layer.vjp(cache, &g)?;
        grads[i] = gp;
        g = gx;
    }
    Ok((g, grads))
}

/// Output shape after a chain of layers.
pub fn chain_shape(layers: &[LayerSpec], input: Shape3) -> Result<Shape3> {
    layers.iter().try_fold(input, |s, l| l.output_shape(s))
}
