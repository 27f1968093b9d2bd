use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use super::arch::{ArchConfig, ModelKind};
use crate::adm::{adm_encode, AdmConfig, EventFrame};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::neural::{
    avgpool_global, avgpool_global_backward, l1_penalty, l1_subgradient, relu, relu_backward, softmax_cross_entropy,
    Activation, BatchNorm1d, BnMode, Conv1d, Dense, ParamMut,
};
use crate::real::Real;
use crate::snn::{LifParams, SpikingNetwork, StepTrace};

/// One stored tensor of a model, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
    /// Weight matrices and kernels, as opposed to biases and normalization state.
    pub is_weight: bool,
}

impl NamedTensor {
    fn new(name: &str, dims: Vec<usize>, values: Vec<f32>, is_weight: bool) -> Self {
        Self { name: name.to_string(), dims, values, is_weight }
    }
}

fn take<'a>(tensors: &'a [NamedTensor], name: &str, len: usize) -> Result<&'a [f32]> {
    let t = tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Data(format!("checkpoint is missing tensor {name}")))?;
    if t.values.len() != len {
        return Err(Error::shape(format!("tensor {name} holds {} values, expected {len}", t.values.len())));
    }
    Ok(&t.values)
}

fn fill(dst: &mut [f32], tensors: &[NamedTensor], name: &str) -> Result<()> {
    let src = take(tensors, name, dst.len())?;
    dst.copy_from_slice(src);
    Ok(())
}

/// Index of the larger logit; ties go to F.
pub fn argmax_label<T: Real>(scores: &[T]) -> Label {
    if scores[1] > scores[0] {
        Label::M
    } else {
        Label::F
    }
}

/// Convolution, optional batch norm, global average pooling and a two-layer
/// head. With batch norm this is the phase-A network; without it, the
/// reference CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnClassifier<T> {
    pub conv: Conv1d<T>,
    pub bn: Option<BatchNorm1d<T>>,
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

pub type ReferenceCnn<T> = CnnClassifier<T>;

/// Gradients in the order of [`CnnClassifier::params_mut`].
pub struct CnnGrads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> CnnGrads<T> {
    pub fn views(&self) -> Vec<&[T]> {
        self.tensors.iter().map(Vec::as_slice).collect()
    }
}

struct HeadPass<T> {
    loss: T,
    grad_features: Array2<T>,
    fc1: Vec<Vec<T>>,
    fc2: Vec<Vec<T>>,
}

impl<T: Real> CnnClassifier<T> {
    pub fn init(cfg: &ArchConfig, with_bn: bool, rng: &mut impl Rng) -> Self {
        let (i, h, o) = cfg.head_dims();
        let conv = Conv1d::init(cfg.input_channels(), cfg.conv_out, cfg.kernel, cfg.stride, rng);
        let fc1 = Dense::init(i, h, Activation::Relu, rng);
        let fc2 = Dense::init(h, o, Activation::None, rng);
        let bn = with_bn.then(|| BatchNorm1d::new(cfg.conv_out));
        Self { conv, bn, fc1, fc2 }
    }

    /// Conv output, normalized with running statistics when batch norm is present.
    pub fn features(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let y = self.conv.forward(x)?;
        match &self.bn {
            Some(bn) => bn.forward_eval(&y),
            None => Ok(y),
        }
    }

    pub fn logits(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let pooled = avgpool_global(self.features(x)?.view())?;
        let h = self.fc1.forward(pooled.as_slice().unwrap())?;
        self.fc2.linear(h.as_slice().unwrap())
    }

    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Label> {
        Ok(argmax_label(self.logits(x)?.as_slice().unwrap()))
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut p = self.conv.params_mut("conv");
        if let Some(bn) = &mut self.bn {
            p.extend(bn.params_mut("bn"));
        }
        p.extend(self.fc1.params_mut("fc1"));
        p.extend(self.fc2.params_mut("fc2"));
        p
    }

    fn weight_tensors(&self) -> [&[T]; 3] {
        [
            self.conv.weights.as_slice().unwrap(),
            self.fc1.weights.as_slice().unwrap(),
            self.fc2.weights.as_slice().unwrap(),
        ]
    }

    fn head_pass(&self, features: &Array2<T>, label: Label, scale: T) -> Result<HeadPass<T>> {
        let pooled = avgpool_global(features.view())?;
        let p = pooled.as_slice().unwrap();
        let z1 = self.fc1.linear(p)?;
        let h = relu(&z1);
        let logits = self.fc2.linear(h.as_slice().unwrap())?;
        let (loss, _, grad_logits) = softmax_cross_entropy(&logits, label.index());
        let grad_logits = grad_logits.mapv(|g| g * scale);
        let (grad_h, g2) = self.fc2.backward_linear(h.as_slice().unwrap(), &grad_logits)?;
        let grad_z1 = relu_backward(&z1, &grad_h);
        let (grad_p, g1) = self.fc1.backward_linear(p, &grad_z1)?;
        Ok(HeadPass {
            loss,
            grad_features: avgpool_global_backward(&grad_p, features.ncols()),
            fc1: vec![g1.weights.into_raw_vec_and_offset().0, g1.bias.to_vec()],
            fc2: vec![g2.weights.into_raw_vec_and_offset().0, g2.bias.to_vec()],
        })
    }

    /// Mean cross-entropy (plus the L1 penalty on weight tensors) of one
    /// mini-batch and its gradients. Batch norm runs in training mode and
    /// updates its running statistics.
    pub fn batch_grads(&mut self, xs: &[ArrayView2<'_, T>], labels: &[Label], lambda_l1: T) -> Result<(T, CnnGrads<T>)> {
        if xs.is_empty() || xs.len() != labels.len() {
            return Err(Error::shape(format!("batch of {} inputs and {} labels", xs.len(), labels.len())));
        }
        let scale = T::one() / T::lit(xs.len() as f64);
        let conv_out: Vec<Array2<T>> = xs.par_iter().map(|x| self.conv.forward(*x)).collect::<Result<_>>()?;
        let (features, bn_cache) = match &mut self.bn {
            Some(bn) => {
                let (y, cache) = bn.forward_train(&conv_out)?;
                (y, Some(cache))
            }
            None => (conv_out, None),
        };
        let this = &*self;
        let heads: Vec<HeadPass<T>> = features
            .par_iter()
            .zip(labels.par_iter())
            .map(|(f, &l)| this.head_pass(f, l, scale))
            .collect::<Result<_>>()?;

        let mut loss = T::zero();
        let mut fc1 = vec![vec![T::zero(); self.fc1.weights.len()], vec![T::zero(); self.fc1.bias.len()]];
        let mut fc2 = vec![vec![T::zero(); self.fc2.weights.len()], vec![T::zero(); self.fc2.bias.len()]];
        for h in &heads {
            loss += h.loss * scale;
            for (acc, g) in fc1.iter_mut().chain(fc2.iter_mut()).zip(h.fc1.iter().chain(&h.fc2)) {
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += *v);
            }
        }
        let grad_features: Vec<Array2<T>> = heads.into_iter().map(|h| h.grad_features).collect();

        let mut bn_grads = Vec::new();
        let grad_conv = match (&self.bn, bn_cache) {
            (Some(bn), Some(cache)) => {
                let (gx, dgamma, dbeta) = bn.backward(&cache, &grad_features)?;
                bn_grads = vec![dgamma.to_vec(), dbeta.to_vec()];
                gx
            }
            _ => grad_features,
        };
        let conv_grads: Vec<_> = xs
            .par_iter()
            .zip(grad_conv.par_iter())
            .map(|(x, g)| self.conv.param_grads(*x, g.view()))
            .collect::<Result<_>>()?;
        let mut cw = vec![T::zero(); self.conv.weights.len()];
        let mut cb = vec![T::zero(); self.conv.bias.len()];
        for g in &conv_grads {
            cw.iter_mut().zip(g.weights.iter()).for_each(|(a, v)| *a += *v);
            cb.iter_mut().zip(g.bias.iter()).for_each(|(a, v)| *a += *v);
        }

        if lambda_l1 > T::zero() {
            let [w_conv, w_fc1, w_fc2] = self.weight_tensors();
            loss += l1_penalty(&[w_conv, w_fc1, w_fc2], lambda_l1);
            l1_subgradient(w_conv, lambda_l1, &mut cw);
            l1_subgradient(w_fc1, lambda_l1, &mut fc1[0]);
            l1_subgradient(w_fc2, lambda_l1, &mut fc2[0]);
        }
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite training loss {loss}")));
        }

        let mut tensors = vec![cw, cb];
        tensors.extend(bn_grads);
        tensors.extend(fc1);
        tensors.extend(fc2);
        Ok((loss, CnnGrads { tensors }))
    }

    /// Mean absolute value over all weight tensors.
    pub fn mean_abs_weight(&self) -> f64 {
        let w = self.weight_tensors();
        let n: usize = w.iter().map(|t| t.len()).sum();
        w.iter().flat_map(|t| t.iter()).map(|v| v.as_f64().abs()).sum::<f64>() / n as f64
    }
}

impl CnnClassifier<f32> {
    pub fn state(&self) -> Vec<NamedTensor> {
        let mut out = vec![
            NamedTensor::new("conv.weight", self.conv.weights.shape().to_vec(), self.conv.weights.iter().copied().collect(), true),
            NamedTensor::new("conv.bias", vec![self.conv.bias.len()], self.conv.bias.to_vec(), false),
        ];
        if let Some(bn) = &self.bn {
            out.extend(bn_state(bn));
        }
        for (name, d) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            out.push(NamedTensor::new(&format!("{name}.weight"), d.weights.shape().to_vec(), d.weights.iter().copied().collect(), true));
            out.push(NamedTensor::new(&format!("{name}.bias"), vec![d.bias.len()], d.bias.to_vec(), false));
        }
        out
    }

    pub fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        fill(self.conv.weights.as_slice_mut().unwrap(), tensors, "conv.weight")?;
        fill(self.conv.bias.as_slice_mut().unwrap(), tensors, "conv.bias")?;
        if let Some(bn) = &mut self.bn {
            load_bn(bn, tensors)?;
        }
        fill(self.fc1.weights.as_slice_mut().unwrap(), tensors, "fc1.weight")?;
        fill(self.fc1.bias.as_slice_mut().unwrap(), tensors, "fc1.bias")?;
        fill(self.fc2.weights.as_slice_mut().unwrap(), tensors, "fc2.weight")?;
        fill(self.fc2.bias.as_slice_mut().unwrap(), tensors, "fc2.bias")
    }
}

fn bn_state(bn: &BatchNorm1d<f32>) -> Vec<NamedTensor> {
    let n = bn.channels();
    vec![
        NamedTensor::new("bn.gamma", vec![n], bn.gamma.to_vec(), false),
        NamedTensor::new("bn.beta", vec![n], bn.beta.to_vec(), false),
        NamedTensor::new("bn.running_mean", vec![n], bn.running_mean.to_vec(), false),
        NamedTensor::new("bn.running_var", vec![n], bn.running_var.to_vec(), false),
    ]
}

fn load_bn(bn: &mut BatchNorm1d<f32>, tensors: &[NamedTensor]) -> Result<()> {
    fill(bn.gamma.as_slice_mut().unwrap(), tensors, "bn.gamma")?;
    fill(bn.beta.as_slice_mut().unwrap(), tensors, "bn.beta")?;
    fill(bn.running_mean.as_slice_mut().unwrap(), tensors, "bn.running_mean")?;
    fill(bn.running_var.as_slice_mut().unwrap(), tensors, "bn.running_var")
}

/// Conv front end, frozen batch norm, delta modulator and spiking classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel<T> {
    pub conv: Conv1d<T>,
    pub bn: BatchNorm1d<T>,
    pub adm: AdmConfig,
    pub snn: SpikingNetwork<T>,
}

/// Full record of one inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference<T> {
    pub class: Label,
    pub trace: Vec<StepTrace<T>>,
    pub frames: Vec<EventFrame>,
}

impl<T> Inference<T> {
    pub fn synaptic_events(&self) -> usize {
        self.trace.iter().map(|s| s.synaptic_events).sum()
    }
}

impl<T: Real> HybridModel<T> {
    /// Untrained model with the given front end and a zero spiking part.
    pub fn from_front_end(conv: Conv1d<T>, mut bn: BatchNorm1d<T>, adm: AdmConfig, lif: LifParams) -> Self {
        bn.mode = BnMode::Eval;
        let k = conv.out_channels();
        Self { conv, bn, adm, snn: SpikingNetwork::zeros(2 * k, 2 * k, lif) }
    }

    pub fn zeros(cfg: &ArchConfig, adm: AdmConfig) -> Self {
        let conv = Conv1d::zeros(cfg.input_channels(), cfg.conv_out, cfg.kernel, cfg.stride);
        Self::from_front_end(conv, BatchNorm1d::new(cfg.conv_out), adm, LifParams::for_stride(cfg.stride))
    }

    pub fn features(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.bn.forward_eval(&self.conv.forward(x)?)
    }

    pub fn encode(&self, x: ArrayView2<'_, T>) -> Result<Vec<EventFrame>> {
        adm_encode(self.features(x)?.view(), T::lit(self.adm.threshold))
    }

    pub fn infer(&self, x: ArrayView2<'_, T>) -> Result<Inference<T>> {
        let frames = self.encode(x)?;
        let out = crate::snn::snn_forward_sequence(&self.snn, &frames)?;
        Ok(Inference { class: out.class, trace: out.steps, frames })
    }
}

impl HybridModel<f32> {
    pub fn state(&self) -> Vec<NamedTensor> {
        let mut out = vec![
            NamedTensor::new("conv.weight", self.conv.weights.shape().to_vec(), self.conv.weights.iter().copied().collect(), true),
            NamedTensor::new("conv.bias", vec![self.conv.bias.len()], self.conv.bias.to_vec(), false),
        ];
        out.extend(bn_state(&self.bn));
        for (name, l) in [("snn.hidden", &self.snn.hidden), ("snn.output", &self.snn.output)] {
            out.push(NamedTensor::new(&format!("{name}.weight"), l.weights.shape().to_vec(), l.weights.iter().copied().collect(), true));
            out.push(NamedTensor::new(&format!("{name}.bias"), vec![l.bias.len()], l.bias.to_vec(), false));
        }
        out
    }

    pub fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        fill(self.conv.weights.as_slice_mut().unwrap(), tensors, "conv.weight")?;
        fill(self.conv.bias.as_slice_mut().unwrap(), tensors, "conv.bias")?;
        load_bn(&mut self.bn, tensors)?;
        fill(self.snn.hidden.weights.as_slice_mut().unwrap(), tensors, "snn.hidden.weight")?;
        fill(self.snn.hidden.bias.as_slice_mut().unwrap(), tensors, "snn.hidden.bias")?;
        fill(self.snn.output.weights.as_slice_mut().unwrap(), tensors, "snn.output.weight")?;
        fill(self.snn.output.bias.as_slice_mut().unwrap(), tensors, "snn.output.bias")
    }
}

/// Either trained architecture, at working precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hybrid(HybridModel<f32>),
    Reference(CnnClassifier<f32>),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Hybrid(_) => ModelKind::Hybrid,
            Model::Reference(_) => ModelKind::Reference,
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f32>) -> Result<Label> {
        match self {
            Model::Hybrid(m) => Ok(m.infer(x)?.class),
            Model::Reference(m) => m.predict(x),
        }
    }

    pub fn state(&self) -> Vec<NamedTensor> {
        match self {
            Model::Hybrid(m) => m.state(),
            Model::Reference(m) => m.state(),
        }
    }

    pub fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        match self {
            Model::Hybrid(m) => m.load_state(tensors),
            Model::Reference(m) => m.load_state(tensors),
        }
    }
}
