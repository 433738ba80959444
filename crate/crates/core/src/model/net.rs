use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, global_avg_pool, global_avg_pool_backward, linear_backward,
    linear_forward, maxpool_backward, maxpool_forward, relu, relu_backward,
};
use super::{ModelError, Tensor, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub channels: usize,
    pub blocks: usize,
    /// Stride of the first block in the stage.
    pub stride: usize,
}

/// Stem conv + max-pool, residual stages, global average pool and a linear head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stages: Vec<StageSpec>,
    pub n_classes: usize,
}

impl ModelSpec {
    /// Stem with 8 channels, then one block at 8 and one stride-2 block at 16.
    pub fn compact() -> Self {
        ModelSpec {
            in_channels: 1,
            stem_channels: 8,
            stem_kernel: 7,
            stages: vec![
                StageSpec {
                    channels: 8,
                    blocks: 1,
                    stride: 1,
                },
                StageSpec {
                    channels: 16,
                    blocks: 1,
                    stride: 2,
                },
            ],
            n_classes: N_CLASSES,
        }
    }

    /// ResNet-18 layout (without batch norm) for imported weights.
    pub fn resnet18() -> Self {
        ModelSpec {
            in_channels: 1,
            stem_channels: 64,
            stem_kernel: 7,
            stages: vec![
                StageSpec {
                    channels: 64,
                    blocks: 2,
                    stride: 1,
                },
                StageSpec {
                    channels: 128,
                    blocks: 2,
                    stride: 2,
                },
                StageSpec {
                    channels: 256,
                    blocks: 2,
                    stride: 2,
                },
                StageSpec {
                    channels: 512,
                    blocks: 2,
                    stride: 2,
                },
            ],
            n_classes: N_CLASSES,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "compact" => Some(Self::compact()),
            "resnet18" => Some(Self::resnet18()),
            _ => None,
        }
    }

    /// `(name, shape)` of every parameter, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let k = self.stem_kernel;
        out.push((
            "stem.w".into(),
            vec![self.stem_channels, self.in_channels, k, k],
        ));
        out.push(("stem.b".into(), vec![self.stem_channels]));
        let mut c = self.stem_channels;
        for block in self.blocks() {
            let p = &block.prefix;
            let o = block.out_c;
            out.push((format!("{p}.conv1.w"), vec![o, c, 3, 3]));
            out.push((format!("{p}.conv1.b"), vec![o]));
            out.push((format!("{p}.conv2.w"), vec![o, o, 3, 3]));
            out.push((format!("{p}.conv2.b"), vec![o]));
            if block.projected {
                out.push((format!("{p}.proj.w"), vec![o, c, 1, 1]));
                out.push((format!("{p}.proj.b"), vec![o]));
            }
            c = o;
        }
        out.push(("fc.w".into(), vec![self.n_classes, c]));
        out.push(("fc.b".into(), vec![self.n_classes]));
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::ShapeMismatch(what.to_string()));
        if self.in_channels == 0 || self.stem_channels == 0 || self.stem_kernel == 0 {
            return bad("stem dimensions must be positive");
        }
        if self.n_classes != N_CLASSES {
            return bad("head must predict 4 classes");
        }
        if self
            .stages
            .iter()
            .any(|s| s.channels == 0 || s.blocks == 0 || s.stride == 0)
        {
            return bad("every stage needs channels, blocks and stride ≥ 1");
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<BlockLayout> {
        let mut out = Vec::new();
        let mut c = self.stem_channels;
        for (s, st) in self.stages.iter().enumerate() {
            for b in 0..st.blocks {
                let stride = if b == 0 { st.stride } else { 1 };
                out.push(BlockLayout {
                    prefix: format!("s{s}.b{b}"),
                    out_c: st.channels,
                    stride,
                    projected: stride != 1 || c != st.channels,
                });
                c = st.channels;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct BlockLayout {
    prefix: String,
    out_c: usize,
    stride: usize,
    projected: bool,
}

/// Parameter indices of one residual block.
#[derive(Debug, Clone, Copy)]
struct BlockParams {
    conv1: usize,
    conv2: usize,
    proj: Option<usize>,
    stride: usize,
}

/// Parameters are stored as `(weight, bias)` pairs; `params[i]` with even `i`
/// is a weight and `params[i + 1]` its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
}

pub type Gradients = Vec<Tensor>;

impl Model {
    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in spec.param_shapes() {
            let mut t = Tensor::zeros(&shape);
            if shape.len() > 1 {
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                for v in &mut t.data {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            names.push(name);
            params.push(t);
        }
        Ok(Model {
            spec,
            names,
            params,
        })
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        self.params
            .iter()
            .map(|p| Tensor::zeros(&p.shape))
            .collect()
    }

    fn block_params(&self) -> Vec<BlockParams> {
        let mut idx = 2;
        self.spec
            .blocks()
            .into_iter()
            .map(|b| {
                let bp = BlockParams {
                    conv1: idx,
                    conv2: idx + 2,
                    proj: b.projected.then_some(idx + 4),
                    stride: b.stride,
                };
                idx += if b.projected { 6 } else { 4 };
                bp
            })
            .collect()
    }

    fn fc_index(&self) -> usize {
        self.params.len() - 2
    }

    /// Logits only, without keeping activations.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.forward_traced(x)?.0)
    }

    fn conv(&self, x: &Tensor, i: usize, stride: usize, pad: usize) -> Result<Tensor, ModelError> {
        conv2d_forward(x, &self.params[i], &self.params[i + 1], stride, pad)
    }

    fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, Trace), ModelError> {
        if x.shape.len() != 4 || x.shape[1] != self.spec.in_channels {
            return Err(ModelError::ShapeMismatch(format!(
                "input {:?}, model expects N x {} x H x W",
                x.shape, self.spec.in_channels
            )));
        }
        let k = self.spec.stem_kernel;
        let stem_pre = self.conv(x, 0, 2, k / 2)?;
        let stem_act = relu(&stem_pre);
        let (mut h, pool_arg) = maxpool_forward(&stem_act, 3, 2, 1);
        let mut blocks = Vec::new();
        for bp in self.block_params() {
            let input = h;
            let pre1 = self.conv(&input, bp.conv1, bp.stride, 1)?;
            let act1 = relu(&pre1);
            let mut sum = self.conv(&act1, bp.conv2, 1, 1)?;
            match bp.proj {
                Some(p) => sum.add_assign(&self.conv(&input, p, bp.stride, 0)?),
                None => sum.add_assign(&input),
            }
            h = relu(&sum);
            blocks.push(BlockTrace {
                input,
                pre1,
                act1,
                sum,
            });
        }
        let pooled = global_avg_pool(&h);
        let fc = self.fc_index();
        let logits = linear_forward(&pooled, &self.params[fc], &self.params[fc + 1]);
        let trace = Trace {
            input: x.clone(),
            stem_pre,
            stem_act_shape: stem_act.shape.clone(),
            pool_arg,
            blocks,
            last_shape: h.shape.clone(),
            pooled,
        };
        Ok((logits, trace))
    }

    fn backward(&self, t: &Trace, dlogits: &Tensor) -> Result<(Gradients, Tensor), ModelError> {
        let mut grads = self.zero_grads();
        let fc = self.fc_index();
        let (dw, rest) = grads[fc..].split_at_mut(1);
        let dpooled = linear_backward(
            &t.pooled,
            &self.params[fc],
            dlogits,
            &mut dw[0],
            &mut rest[0],
        );
        let mut dh = global_avg_pool_backward(&t.last_shape, &dpooled);
        let bps = self.block_params();
        for (bp, bt) in bps.iter().zip(&t.blocks).rev() {
            let dsum = relu_backward(&bt.sum, &dh);
            let dact1 = self.conv_back(&bt.act1, bp.conv2, 1, 1, &dsum, &mut grads, true)?;
            let dpre1 = relu_backward(&bt.pre1, &dact1.expect("requested"));
            let mut dinput = self
                .conv_back(&bt.input, bp.conv1, bp.stride, 1, &dpre1, &mut grads, true)?
                .expect("requested");
            match bp.proj {
                Some(p) => {
                    let ds = self.conv_back(&bt.input, p, bp.stride, 0, &dsum, &mut grads, true)?;
                    dinput.add_assign(&ds.expect("requested"));
                }
                None => dinput.add_assign(&dsum),
            }
            dh = dinput;
        }
        let dstem_act = maxpool_backward(&t.stem_act_shape, &t.pool_arg, &dh);
        let dstem_pre = relu_backward(&t.stem_pre, &dstem_act);
        let k = self.spec.stem_kernel;
        let dx = self
            .conv_back(&t.input, 0, 2, k / 2, &dstem_pre, &mut grads, true)?
            .expect("requested");
        Ok((grads, dx))
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_back(
        &self,
        x: &Tensor,
        i: usize,
        stride: usize,
        pad: usize,
        dout: &Tensor,
        grads: &mut Gradients,
        want_dx: bool,
    ) -> Result<Option<Tensor>, ModelError> {
        let (dw, db) = grads[i..i + 2].split_at_mut(1);
        conv2d_backward(
            x,
            &self.params[i],
            dout,
            stride,
            pad,
            &mut dw[0],
            &mut db[0],
            want_dx,
        )
    }
}

#[derive(Debug, Clone)]
struct BlockTrace {
    input: Tensor,
    pre1: Tensor,
    act1: Tensor,
    sum: Tensor,
}

#[derive(Debug, Clone)]
struct Trace {
    input: Tensor,
    stem_pre: Tensor,
    stem_act_shape: Vec<usize>,
    pool_arg: Vec<usize>,
    blocks: Vec<BlockTrace>,
    last_shape: Vec<usize>,
    pooled: Tensor,
}

/// A forward pass whose activations are kept for one backward pass.
pub struct Graph<'m> {
    model: &'m Model,
    trace: Option<Trace>,
}

impl<'m> Graph<'m> {
    pub fn new(model: &'m Model) -> Self {
        Graph { model, trace: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, ModelError> {
        let (logits, trace) = self.model.forward_traced(x)?;
        self.trace = Some(trace);
        Ok(logits)
    }

    /// Parameter gradients and the input gradient for `dlogits`.
    pub fn backward(&self, dlogits: &Tensor) -> Result<(Gradients, Tensor), ModelError> {
        let trace = self.trace.as_ref().ok_or(ModelError::GraphNotEvaluated)?;
        let n = trace.input.shape[0];
        if dlogits.shape != [n, self.model.spec.n_classes] {
            return Err(ModelError::ShapeMismatch(format!(
                "logit gradient {:?} for batch of {n}",
                dlogits.shape
            )));
        }
        self.model.backward(trace, dlogits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::softmax_xent;

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
    }

    fn loss_of(model: &Model, x: &Tensor, labels: &[usize]) -> f64 {
        softmax_xent(&model.forward(x).unwrap(), labels).0
    }

    #[test]
    fn compact_shapes() {
        let m = Model::new(ModelSpec::compact(), 0).unwrap();
        let shapes: Vec<_> = m.params.iter().map(|p| p.shape.clone()).collect();
        assert_eq!(shapes[0], vec![8, 1, 7, 7]);
        assert_eq!(m.names.last().unwrap(), "fc.b");
        assert!(m.names.contains(&"s1.b0.proj.w".to_string()));
        assert!(!m.names.contains(&"s0.b0.proj.w".to_string()));
        let y = m.forward(&random_input(&[2, 1, 224, 224], 1)).unwrap();
        assert_eq!(y.shape, vec![2, 4]);
        assert!(y.all_finite());
    }

    #[test]
    fn resnet18_layout() {
        let spec = ModelSpec::resnet18();
        let shapes = spec.param_shapes();
        // stem + 8 blocks * 2 convs + 3 projections + fc, each weight and bias
        assert_eq!(shapes.len(), 2 * (1 + 16 + 3 + 1));
        assert_eq!(shapes[shapes.len() - 2].1, vec![4, 512]);
        let w: usize = shapes
            .iter()
            .filter(|(n, _)| n.ends_with(".w"))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        // torchvision's ResNet-18 has 11,166,912 conv weights with an RGB stem.
        assert_eq!(w, 11_166_912 - 2 * 64 * 49 + 4 * 512);
    }

    #[test]
    fn backward_needs_forward() {
        let m = Model::new(ModelSpec::compact(), 0).unwrap();
        let g = Graph::new(&m);
        assert_eq!(
            g.backward(&Tensor::zeros(&[1, 4])).unwrap_err(),
            ModelError::GraphNotEvaluated
        );
    }

    #[test]
    fn zero_and_doubled_loss_gradient() {
        let m = Model::new(ModelSpec::compact(), 3).unwrap();
        let x = random_input(&[2, 1, 32, 32], 4);
        let mut g = Graph::new(&m);
        let logits = g.forward(&x).unwrap();
        let (zero, _) = g.backward(&Tensor::zeros(&logits.shape)).unwrap();
        assert!(zero.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
        let (_, dl) = softmax_xent(&logits, &[0, 2]);
        let (g1, _) = g.backward(&dl).unwrap();
        let mut dl2 = dl.clone();
        dl2.scale(2.0);
        let (g2, _) = g.backward(&dl2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((2.0 * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = Model::new(ModelSpec::compact(), 11).unwrap();
        let x = random_input(&[1, 1, 32, 32], 12);
        let labels = [2];
        let mut g = Graph::new(&m);
        let logits = g.forward(&x).unwrap();
        let (_, dl) = softmax_xent(&logits, &labels);
        let (grads, dx) = g.backward(&dl).unwrap();
        let h = 1e-3;
        let mut checked = 0;
        let mut bad = 0;
        let mut probe = m.clone();
        for (pi, p) in m.params.iter().enumerate() {
            // every bias and a stride over weights keeps this a quick unit test
            let step = if p.shape.len() == 1 { 1 } else { 7 };
            for j in (0..p.len()).step_by(step) {
                probe.params[pi].data[j] = p.data[j] + h;
                let up = loss_of(&probe, &x, &labels);
                probe.params[pi].data[j] = p.data[j] - h;
                let down = loss_of(&probe, &x, &labels);
                probe.params[pi].data[j] = p.data[j];
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[pi].data[j];
                checked += 1;
                if relative_error(analytic, numeric) >= 1e-4 {
                    bad += 1;
                }
            }
        }
        assert!(checked > 500);
        assert!(bad * 1000 <= checked, "{bad} of {checked} parameters off");
        // input gradient, a few pixels
        let mut xp = x.clone();
        for j in [0, 100, 517, 1023] {
            xp.data[j] = x.data[j] + h;
            let up = loss_of(&m, &xp, &labels);
            xp.data[j] = x.data[j] - h;
            let down = loss_of(&m, &xp, &labels);
            xp.data[j] = x.data[j];
            assert!(relative_error(dx.data[j], (up - down) / (2.0 * h)) < 1e-4);
        }
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < 1e-10 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    }

    #[test]
    fn head_ignores_spatial_size_for_constant_maps() {
        // Global average pooling followed by the linear layer only sees channel means.
        let m = Model::new(ModelSpec::compact(), 5).unwrap();
        let fc = m.params.len() - 2;
        let head = |h: usize, w: usize| {
            let mut x = Tensor::zeros(&[1, 16, h, w]);
            for (c, plane) in x.data.chunks_mut(h * w).enumerate() {
                plane.fill(c as f64 * 0.25 - 1.0);
            }
            linear_forward(&global_avg_pool(&x), &m.params[fc], &m.params[fc + 1])
        };
        let a = head(7, 7);
        let b = head(28, 13);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = Model::new(ModelSpec::compact(), 1).unwrap();
        assert_eq!(a, Model::new(ModelSpec::compact(), 1).unwrap());
        assert_ne!(a, Model::new(ModelSpec::compact(), 2).unwrap());
        assert!(a
            .params
            .iter()
            .skip(1)
            .step_by(2)
            .all(|b| b.data.iter().all(|&v| v == 0.0)));
        let bound = (6.0f64 / 49.0).sqrt();
        assert!(a.params[0].data.iter().all(|v| v.abs() <= bound));
    }
}
