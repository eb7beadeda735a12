//! Symmetric stacked autoencoder built from independent units.
//!
//! Each unit owns an encoder and a decoder; the decoder maps the encoder's
//! output back to the unit's input shape. The first half of the units do not
//! expand their input and the second half do not contract it, so that the
//! composition of all encoders maps an input back to its own shape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{chain_shape, infer_all, Activation, Layer, LayerSpec, Shape3};
use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_shape: Shape3,
    pub units: Vec<UnitSpec>,
}

fn numel(s: Shape3) -> usize {
    s[0] * s[1] * s[2]
}

impl AutoencoderSpec {
    /// Checks every structural invariant and returns the representation
    /// shapes `[input, after encoder 1, …, after encoder L]`.
    pub fn validate(&self) -> Result<Vec<Shape3>> {
        let l = self.units.len();
        if l == 0 || !l.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "a symmetric stack needs an even, nonzero number of units; got {l}"
            )));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::Validation("input shape entries must be positive".into()));
        }
        let mut shapes = vec![self.input_shape];
        for (i, unit) in self.units.iter().enumerate() {
            let input = *shapes.last().unwrap();
            let hidden = chain_shape(&unit.encoder, input)
                .map_err(|e| Error::Validation(format!("unit {} encoder: {e}", i + 1)))?;
            let back = chain_shape(&unit.decoder, hidden)
                .map_err(|e| Error::Validation(format!("unit {} decoder: {e}", i + 1)))?;
            if back != input {
                return Err(dim_err(
                    "AutoencoderSpec::validate",
                    format!("unit {} reconstructs {back:?} from input {input:?}", i + 1),
                ));
            }
            let (inp, hid) = (numel(input), numel(hidden));
            if i < l / 2 && hid > inp {
                return Err(Error::Validation(format!(
                    "unit {} is in the encoding half but expands {inp} -> {hid} features",
                    i + 1
                )));
            }
            if i >= l / 2 && hid < inp {
                return Err(Error::Validation(format!(
                    "unit {} is in the decoding half but contracts {inp} -> {hid} features",
                    i + 1
                )));
            }
            shapes.push(hidden);
        }
        if shapes[l] != self.input_shape {
            return Err(dim_err(
                "AutoencoderSpec::validate",
                format!("stack maps {:?} to {:?}", self.input_shape, shapes[l]),
            ));
        }
        Ok(shapes)
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    /// Shape of the embedding produced by the first half of the stack.
    pub fn embedding_shape(&self) -> Result<Shape3> {
        Ok(self.validate()?[self.units.len() / 2])
    }

    /// True when every parametric layer is dense.
    pub fn is_dense_only(&self) -> bool {
        let mut layers = self.units.iter().flat_map(|u| u.encoder.iter().chain(&u.decoder));
        layers.clone().any(LayerSpec::is_parametric) && layers.all(|l| !l.is_parametric() || l.is_dense())
    }

    /// Strided convolutional stack: each width in `widths` adds one
    /// `conv(k3, s2, p1)` unit to the encoding half, mirrored by a transposed
    /// convolution in the decoding half.
    ///
    /// `hidden` follows every hidden representation; `recon` (if any) ends every
    /// decoder and the final encoder, i.e. every tensor compared against a
    /// reconstruction target.
    pub fn conv_preset(input: Shape3, widths: &[usize], hidden: Activation, recon: Option<Activation>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::Validation("conv preset needs at least one width".into()));
        }
        let mut channels = vec![input[0]];
        channels.extend_from_slice(widths);
        // spatial size at every level plus the output padding restoring it
        let mut sizes = vec![[input[1], input[2]]];
        let mut pads = Vec::new();
        for _ in widths {
            let [h, w] = *sizes.last().unwrap();
            let down = |n: usize| (n - 1) / 2 + 1;
            let (oh, ow) = (down(h), down(w));
            let (ph, pw) = (h + 1 - 2 * oh, w + 1 - 2 * ow);
            if ph != pw {
                return Err(Error::Validation(format!(
                    "conv preset needs matching height/width parity at level {h}x{w}"
                )));
            }
            sizes.push([oh, ow]);
            pads.push(ph);
        }
        let act = |a: Option<Activation>| a.map(LayerSpec::act).into_iter();
        let k = widths.len();
        let mut units = Vec::with_capacity(2 * k);
        for i in 0..k {
            let (cin, cout) = (channels[i], channels[i + 1]);
            let encoder = std::iter::once(LayerSpec::conv(cin, cout, 3, 2, 1)).chain(act(Some(hidden))).collect();
            let decoder = std::iter::once(LayerSpec::deconv(cout, cin, 3, 2, 1, pads[i])).chain(act(recon)).collect();
            units.push(UnitSpec { encoder, decoder });
        }
        for j in 0..k {
            let level = k - j;
            let (cin, cout) = (channels[level], channels[level - 1]);
            let enc_act = if j + 1 == k { recon } else { Some(hidden) };
            let encoder = std::iter::once(LayerSpec::deconv(cin, cout, 3, 2, 1, pads[level - 1]))
                .chain(act(enc_act))
                .collect();
            let decoder = std::iter::once(LayerSpec::conv(cout, cin, 3, 2, 1)).chain(act(recon)).collect();
            units.push(UnitSpec { encoder, decoder });
        }
        let spec = AutoencoderSpec { input_shape: input, units };
        spec.validate()?;
        Ok(spec)
    }

    /// Fully connected stack over the flattened input with hidden sizes
    /// `widths` (non-increasing), mirrored back to the input size.
    pub fn dense_preset(input: Shape3, widths: &[usize], hidden: Activation, recon: Option<Activation>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::Validation("dense preset needs at least one width".into()));
        }
        let mut sizes = vec![numel(input)];
        sizes.extend_from_slice(widths);
        let act = |a: Option<Activation>| a.map(LayerSpec::act).into_iter();
        let k = widths.len();
        let shape_of = |level: usize| if level == 0 { input } else { [sizes[level], 1, 1] };
        let dense = |from: usize, to: usize| {
            let mut v = vec![LayerSpec::Dense { input: sizes[from], output: sizes[to] }];
            if to == 0 && input[1] * input[2] != 1 {
                v.push(LayerSpec::Reshape { shape: shape_of(0) });
            }
            v
        };
        let mut units = Vec::with_capacity(2 * k);
        for i in 0..k {
            let encoder = dense(i, i + 1).into_iter().chain(act(Some(hidden))).collect();
            let decoder = dense(i + 1, i).into_iter().chain(act(recon)).collect();
            units.push(UnitSpec { encoder, decoder });
        }
        for j in 0..k {
            let level = k - j;
            let enc_act = if j + 1 == k { recon } else { Some(hidden) };
            let encoder = dense(level, level - 1).into_iter().chain(act(enc_act)).collect();
            let decoder = dense(level - 1, level).into_iter().chain(act(recon)).collect();
            units.push(UnitSpec { encoder, decoder });
        }
        let spec = AutoencoderSpec { input_shape: input, units };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubAe<T> {
    pub encoder: Vec<Layer<T>>,
    pub decoder: Vec<Layer<T>>,
}

impl<T: Scalar> SubAe<T> {
    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.encoder.iter().chain(&self.decoder).flat_map(|l| &l.params)
    }
}

/// An initialised (or trained) stacked autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedAutoencoder<T> {
    pub spec: AutoencoderSpec,
    pub units: Vec<SubAe<T>>,
    pub seed: u64,
}

impl<T: Scalar> StackedAutoencoder<T> {
    /// Deterministic initialisation: layers draw from one seeded stream in
    /// declaration order (unit by unit, encoder before decoder).
    pub fn init(spec: AutoencoderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units = spec
            .units
            .iter()
            .map(|u| SubAe {
                encoder: u.encoder.iter().map(|&s| Layer::init(s, &mut rng)).collect(),
                decoder: u.decoder.iter().map(|&s| Layer::init(s, &mut rng)).collect(),
            })
            .collect();
        Ok(Self { spec, units, seed })
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.spec.input_shape;
        match x.shape() {
            [_, c, h, w] if [*c, *h, *w] == s => Ok(()),
            other => Err(dim_err(
                "StackedAutoencoder",
                format!("expected a batch of {s:?} samples, got {other:?}"),
            )),
        }
    }

    /// Applies the first `through` encoders (`0` returns the input).
    pub fn encode_stack(&self, x: &Tensor<T>, through: usize) -> Result<Tensor<T>> {
        if through > self.units.len() {
            return Err(Error::Validation(format!(
                "cannot encode through {through} of {} units",
                self.units.len()
            )));
        }
        self.check_input(x)?;
        self.units[..through]
            .iter()
            .try_fold(x.clone(), |cur, unit| infer_all(&unit.encoder, &cur))
    }

    /// Feature extraction: the first half of the stack.
    pub fn embed(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.encode_stack(x, self.units.len() / 2)
    }

    /// Output of the full encoder stack, shaped like `x`.
    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.encode_stack(x, self.units.len())
    }

    pub fn param_count(&self) -> usize {
        self.units.iter().flat_map(SubAe::params).map(Tensor::len).sum()
    }

    /// Every parameter tensor in declaration order.
    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.units.iter().flat_map(SubAe::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.units
            .iter_mut()
            .flat_map(|u| u.encoder.iter_mut().chain(u.decoder.iter_mut()))
            .flat_map(|l| l.params.iter_mut())
    }
}
