//! Fibonacci-Net graph: construction from a [`ModelConfig`], forward
//! execution with an activation cache, and reverse-mode backward.
//!
//! The graph is a list of nodes in topological order. Each node reads the
//! outputs of earlier nodes; fan-out (a block output feeding both the next
//! block and a pcb) is handled by summing gradients in backward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    avg2max_backward, avg2max_forward, global_avg_pool, global_avg_pool_backward, relu_backward,
    relu_forward, ArgMax, BatchNorm, BatchNormCache, Conv2d, Dense, Dwsc, DwscParams, Mode, Pool2d,
};
use crate::model::config::{BlockKind, ModelConfig, PcbOrder, PcbSpec};
use crate::model::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{concat_channels, split_channels, Shape, Tensor};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Conv {
        layer: Conv2d,
        weights: ParamId,
        bias: ParamId,
    },
    Dwsc {
        layer: Dwsc,
        depthwise: ParamId,
        depthwise_bias: ParamId,
        pointwise: ParamId,
        pointwise_bias: ParamId,
    },
    BatchNorm {
        layer: BatchNorm,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
    },
    Relu,
    MaxPool(Pool2d),
    Avg2Max,
    Concat,
    GlobalAvgPool,
    Dense {
        layer: Dense,
        weights: ParamId,
        bias: ParamId,
    },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv { .. } => "conv3x3",
            Op::Dwsc { .. } => "dwsc",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Relu => "relu",
            Op::MaxPool(_) => "maxpool",
            Op::Avg2Max => "avg2max",
            Op::Concat => "concat",
            Op::GlobalAvgPool => "gap",
            Op::Dense { .. } => "dense",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    /// Per-item output shape (`n` is 1).
    pub shape: Shape,
}

/// A built Fibonacci-Net. Parameters live in a separate [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ModelConfig,
    nodes: Vec<Node>,
    last_use: Vec<NodeId>,
}

/// Per-node data retained for backward.
#[derive(Debug, Clone)]
enum Aux<T> {
    None,
    ArgMax(ArgMax),
    BatchNorm(BatchNormCache<T>),
    DwscMid(Tensor<T>),
}

/// Activations of one forward pass. Consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    mode: Mode,
    outputs: Vec<Option<Tensor<T>>>,
    aux: Vec<Aux<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Output of `node`, if retained.
    pub fn output(&self, node: NodeId) -> Option<&Tensor<T>> {
        self.outputs.get(node).and_then(|o| o.as_ref())
    }

    pub fn logits(&self) -> &Tensor<T> {
        self.outputs
            .last()
            .and_then(|o| o.as_ref())
            .expect("logits are always retained")
    }
}

/// Gradients of one backward pass, before they are written to a store.
#[derive(Debug, Clone)]
pub struct Backprop<T> {
    pub params: Vec<(ParamId, Vec<T>)>,
    /// Gradient with respect to the output of the requested tap node.
    pub tap: Option<Tensor<T>>,
}

struct Builder<'a, T> {
    nodes: Vec<Node>,
    store: ParamStore<T>,
    rng: ChaCha8Rng,
    cfg: &'a ModelConfig,
}

impl<T: Real> Builder<'_, T> {
    fn add(&mut self, name: String, op: Op, inputs: Vec<NodeId>, shape: Shape) -> NodeId {
        self.nodes.push(Node {
            name,
            op,
            inputs,
            shape,
        });
        self.nodes.len() - 1
    }

    /// Uniform in `[-limit, limit)`, drawn in construction order.
    fn uniform(&mut self, name: String, shape: Vec<usize>, limit: f64) -> Result<ParamId> {
        let len = shape.iter().product();
        let values = (0..len)
            .map(|_| T::of((2.0 * self.rng.gen::<f64>() - 1.0) * limit))
            .collect();
        self.store.push(name, shape, values, true)
    }

    fn constant(&mut self, name: String, len: usize, value: f64, trainable: bool) -> Result<ParamId> {
        self.store.push(name, vec![len], vec![T::of(value); len], trainable)
    }

    fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].shape
    }

    fn conv(&mut self, prefix: &str, input: NodeId, out_c: usize) -> Result<NodeId> {
        let s = self.shape(input);
        let layer = Conv2d::same3x3(s.c, out_c);
        let fan_in = 9 * s.c;
        let weights = self.uniform(format!("{prefix}/w"), layer.weight_shape().to_vec(), (6.0 / fan_in as f64).sqrt())?;
        let bias = self.constant(format!("{prefix}/b"), out_c, 0.0, true)?;
        Ok(self.add(
            prefix.to_string(),
            Op::Conv { layer, weights, bias },
            vec![input],
            s.with_c(out_c),
        ))
    }

    fn dwsc(&mut self, prefix: &str, input: NodeId, out_c: usize) -> Result<NodeId> {
        let s = self.shape(input);
        let layer = Dwsc { in_c: s.c, out_c };
        let depthwise = self.uniform(format!("{prefix}/depthwise_w"), layer.depthwise().weight_shape().to_vec(), (6.0f64 / 9.0).sqrt())?;
        let depthwise_bias = self.constant(format!("{prefix}/depthwise_b"), s.c, 0.0, true)?;
        let pointwise = self.uniform(format!("{prefix}/pointwise_w"), layer.pointwise().weight_shape().to_vec(), (6.0 / s.c as f64).sqrt())?;
        let pointwise_bias = self.constant(format!("{prefix}/pointwise_b"), out_c, 0.0, true)?;
        Ok(self.add(
            prefix.to_string(),
            Op::Dwsc {
                layer,
                depthwise,
                depthwise_bias,
                pointwise,
                pointwise_bias,
            },
            vec![input],
            s.with_c(out_c),
        ))
    }

    fn bn_relu(&mut self, bn_name: String, relu_name: String, input: NodeId) -> Result<NodeId> {
        let s = self.shape(input);
        let layer = BatchNorm {
            channels: s.c,
            momentum: self.cfg.bn_momentum,
            epsilon: self.cfg.bn_epsilon,
        };
        let gamma = self.constant(format!("{bn_name}/gamma"), s.c, 1.0, true)?;
        let beta = self.constant(format!("{bn_name}/beta"), s.c, 0.0, true)?;
        let running_mean = self.constant(format!("{bn_name}/running_mean"), s.c, 0.0, false)?;
        let running_var = self.constant(format!("{bn_name}/running_var"), s.c, 1.0, false)?;
        let bn = self.add(
            bn_name,
            Op::BatchNorm {
                layer,
                gamma,
                beta,
                running_mean,
                running_var,
            },
            vec![input],
            s,
        );
        Ok(self.add(relu_name, Op::Relu, vec![bn], s))
    }

    fn avg2max(&mut self, name: String, input: NodeId) -> Result<NodeId> {
        let shape = Pool2d::avg2max_window().output_shape(self.shape(input))?;
        Ok(self.add(name, Op::Avg2Max, vec![input], shape))
    }

    fn pcb_branch(&mut self, pcb: &PcbSpec, source: NodeId) -> Result<NodeId> {
        let label = pcb.label();
        let Some(filters) = pcb.pre_pool_filters else {
            return self.avg2max(format!("{label}/avg2max"), source);
        };
        let conv_unit = |b: &mut Self, input: NodeId| -> Result<NodeId> {
            let conv = b.conv(&format!("{label}/conv"), input, filters)?;
            b.bn_relu(format!("{label}/bn"), format!("{label}/relu"), conv)
        };
        match self.cfg.pcb_order {
            PcbOrder::ConvThenPool => {
                let c = conv_unit(self, source)?;
                self.avg2max(format!("{label}/avg2max"), c)
            }
            PcbOrder::PoolThenConv => {
                let p = self.avg2max(format!("{label}/avg2max"), source)?;
                conv_unit(self, p)
            }
        }
    }
}

/// Builds the network and its parameters, initialized from `seed`:
/// fan-in-scaled uniform weights (`±√(6/fan_in)` before ReLU,
/// `±√(3/fan_in)` for the classifier), zero biases, `γ=1, β=0`, running
/// statistics `(0, 1)`.
pub fn build_model<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<(Network, ParamStore<T>)> {
    cfg.validate()?;
    let mut b = Builder {
        nodes: Vec::new(),
        store: ParamStore::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        cfg,
    };
    let mut cur = b.add(
        "input".into(),
        Op::Input,
        Vec::new(),
        Shape::new(1, cfg.input_size, cfg.input_size, cfg.input_channels),
    );
    let mut branches: Vec<(PcbSpec, NodeId)> = Vec::new();

    for block in cfg.blocks() {
        let i = block.index;
        for (pcb, branch) in branches.iter().filter(|(p, _)| p.merge_before_block == i) {
            let (main, side) = (b.shape(cur), b.shape(*branch));
            if (main.h, main.w) != (side.h, side.w) {
                return Err(Error::Config(format!(
                    "{}: spatial sides disagree at merge ({}x{} vs {}x{})",
                    pcb.label(),
                    main.h,
                    main.w,
                    side.h,
                    side.w
                )));
            }
            let name = if cfg.pcbs.iter().filter(|p| p.merge_before_block == i).count() > 1 {
                format!("concat{i}/{}", pcb.label())
            } else {
                format!("concat{i}")
            };
            cur = b.add(name, Op::Concat, vec![cur, *branch], main.with_c(main.c + side.c));
        }

        match block.kind {
            BlockKind::StandardConv => {
                for k in 1..=block.convs_per_block {
                    let conv = b.conv(&format!("block{i}/conv{k}"), cur, block.filters)?;
                    cur = b.bn_relu(format!("block{i}/bn{k}"), format!("block{i}/relu{k}"), conv)?;
                }
            }
            BlockKind::Dwsc => {
                let d = b.dwsc(&format!("block{i}/dwsc"), cur, block.filters)?;
                cur = b.bn_relu(format!("block{i}/bn"), format!("block{i}/relu"), d)?;
            }
        }
        if block.downsample {
            let pool = Pool2d::downsample();
            let shape = pool.output_shape(b.shape(cur))?;
            cur = b.add(format!("block{i}/pool"), Op::MaxPool(pool), vec![cur], shape);
        }

        for pcb in cfg.pcbs.iter().filter(|p| p.source_block == i) {
            let out = b.pcb_branch(pcb, cur)?;
            branches.push((*pcb, out));
        }
    }

    let s = b.shape(cur);
    let gap = b.add("gap".into(), Op::GlobalAvgPool, vec![cur], Shape::new(1, 1, 1, s.c));
    let layer = Dense {
        inputs: s.c,
        outputs: cfg.num_classes,
    };
    let weights = b.uniform("dense/w".into(), vec![s.c, cfg.num_classes], (3.0 / s.c as f64).sqrt())?;
    let bias = b.constant("dense/b".into(), cfg.num_classes, 0.0, true)?;
    b.add(
        "dense".into(),
        Op::Dense { layer, weights, bias },
        vec![gap],
        Shape::new(1, 1, 1, cfg.num_classes),
    );

    let nodes = b.nodes;
    let mut last_use: Vec<NodeId> = (0..nodes.len()).collect();
    for (j, node) in nodes.iter().enumerate() {
        for &i in &node.inputs {
            last_use[i] = last_use[i].max(j);
        }
    }
    Ok((
        Network {
            config: cfg.clone(),
            nodes,
            last_use,
        },
        b.store,
    ))
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn dwsc_params<T: Real>(store: &ParamStore<T>, ids: [ParamId; 4]) -> DwscParams<T> {
    DwscParams {
        depthwise: store.values(ids[0]).to_vec(),
        depthwise_bias: store.values(ids[1]).to_vec(),
        pointwise: store.values(ids[2]).to_vec(),
        pointwise_bias: store.values(ids[3]).to_vec(),
    }
}

impl Network {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        Shape { n: batch, ..self.nodes[0].shape }
    }

    /// The tensor entering global average pooling.
    pub fn gap_input(&self) -> NodeId {
        self.nodes[self.nodes.len() - 2].inputs[0]
    }

    /// Names of nodes with a spatial output before global pooling.
    pub fn spatial_layers(&self) -> Vec<String> {
        let gap = self.nodes.len() - 2;
        self.nodes[1..gap].iter().map(|n| n.name.clone()).collect()
    }

    /// Output of the last ReLU of the deepest standard-conv block.
    pub fn default_cam_layer(&self) -> String {
        let last_std = self
            .config
            .blocks()
            .into_iter()
            .rfind(|b| b.kind == BlockKind::StandardConv);
        match last_std {
            Some(b) => format!("block{}/relu{}", b.index, b.convs_per_block),
            None => self.nodes[self.gap_input()].name.clone(),
        }
    }

    /// Channel count entering `block` (after any pcb concatenation).
    pub fn block_input_channels(&self, block: usize) -> Option<usize> {
        let first = self
            .nodes
            .iter()
            .find(|n| n.name.starts_with(&format!("block{block}/")))?;
        Some(self.nodes[first.inputs[0]].shape.c)
    }

    /// Runs the graph. With `retain` false, activations are dropped after
    /// their last use and the cache is only good for reading the logits.
    fn execute<T: Real>(
        &self,
        params: &ParamStore<T>,
        x: &Tensor<T>,
        mode: Mode,
        retain: bool,
    ) -> Result<ForwardCache<T>> {
        x.shape().expect_eq(&self.input_shape(x.shape().n), "network input")?;
        let n = self.nodes.len();
        let mut outputs: Vec<Option<Tensor<T>>> = Vec::with_capacity(n);
        let mut aux = Vec::with_capacity(n);
        for (j, node) in self.nodes.iter().enumerate() {
            let input = |k: usize| -> &Tensor<T> {
                outputs[node.inputs[k]]
                    .as_ref()
                    .expect("inputs are alive until their last use")
            };
            let (out, extra) = match &node.op {
                Op::Input => (x.clone(), Aux::None),
                Op::Conv { layer, weights, bias } => (
                    layer.forward(input(0), params.values(*weights), params.values(*bias))?,
                    Aux::None,
                ),
                Op::Dwsc {
                    layer,
                    depthwise,
                    depthwise_bias,
                    pointwise,
                    pointwise_bias,
                } => {
                    let p = dwsc_params(params, [*depthwise, *depthwise_bias, *pointwise, *pointwise_bias]);
                    let (out, mid) = layer.forward(input(0), &p)?;
                    (out, if retain { Aux::DwscMid(mid) } else { Aux::None })
                }
                Op::BatchNorm {
                    layer,
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    let (out, cache) = layer.forward(
                        input(0),
                        params.values(*gamma),
                        params.values(*beta),
                        params.values(*running_mean),
                        params.values(*running_var),
                        mode,
                    )?;
                    (out, Aux::BatchNorm(cache))
                }
                Op::Relu => (relu_forward(input(0)), Aux::None),
                Op::MaxPool(pool) => {
                    let (out, arg) = pool.max_forward(input(0))?;
                    (out, Aux::ArgMax(arg))
                }
                Op::Avg2Max => {
                    let (out, arg) = avg2max_forward(input(0))?;
                    (out, Aux::ArgMax(arg))
                }
                Op::Concat => (concat_channels(input(0), input(1))?, Aux::None),
                Op::GlobalAvgPool => (global_avg_pool(input(0)), Aux::None),
                Op::Dense { layer, weights, bias } => (
                    layer.forward(input(0), params.values(*weights), params.values(*bias))?,
                    Aux::None,
                ),
            };
            outputs.push(Some(out));
            if retain {
                aux.push(extra);
            } else {
                aux.push(Aux::None);
                for &i in &node.inputs {
                    if self.last_use[i] == j {
                        outputs[i] = None;
                    }
                }
            }
        }
        Ok(ForwardCache { mode, outputs, aux })
    }

    /// Full forward pass retaining every activation for backward.
    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        x: &Tensor<T>,
        mode: Mode,
    ) -> Result<ForwardCache<T>> {
        self.execute(params, x, mode, true)
    }

    /// Inference-mode logits with activations freed as soon as possible.
    pub fn predict<T: Real>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cache = self.execute(params, x, Mode::Infer, false)?;
        Ok(cache.outputs.pop().flatten().expect("logits retained"))
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics.
    pub fn commit_running_stats<T: Real>(&self, params: &mut ParamStore<T>, cache: &ForwardCache<T>) {
        for (node, aux) in self.nodes.iter().zip(&cache.aux) {
            if let (
                Op::BatchNorm {
                    layer,
                    running_mean,
                    running_var,
                    ..
                },
                Aux::BatchNorm(c),
            ) = (&node.op, aux)
            {
                let mut mean = params.values(*running_mean).to_vec();
                let mut var = params.values(*running_var).to_vec();
                layer.update_running(c, &mut mean, &mut var);
                params.values_mut(*running_mean).copy_from_slice(&mean);
                params.values_mut(*running_var).copy_from_slice(&var);
            }
        }
    }

    /// Reverse pass from `grad_logits`. Optionally returns the gradient
    /// with respect to the output of node `tap`.
    pub fn backprop<T: Real>(
        &self,
        params: &ParamStore<T>,
        mut cache: ForwardCache<T>,
        grad_logits: &Tensor<T>,
        tap: Option<NodeId>,
    ) -> Result<Backprop<T>> {
        let n = self.nodes.len();
        if cache.outputs.iter().any(|o| o.is_none()) {
            return Err(Error::Mismatch("backward needs a retained forward cache".into()));
        }
        grad_logits
            .shape()
            .expect_eq(&cache.logits().shape(), "backward seed")?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[n - 1] = Some(grad_logits.clone());
        let mut param_grads = Vec::new();
        let mut tap_grad = None;

        for j in (1..n).rev() {
            let Some(g) = grads[j].take() else { continue };
            if tap == Some(j) {
                tap_grad = Some(g.clone());
            }
            let node = &self.nodes[j];
            let out = |k: usize| cache.outputs[node.inputs[k]].as_ref().expect("retained");
            match &node.op {
                Op::Input => unreachable!("input is node 0"),
                Op::Conv { layer, weights, bias } => {
                    let r = layer.backward(out(0), params.values(*weights), &g)?;
                    param_grads.push((*weights, r.weights));
                    param_grads.push((*bias, r.bias));
                    accumulate(&mut grads[node.inputs[0]], r.input)?;
                }
                Op::Dwsc {
                    layer,
                    depthwise,
                    depthwise_bias,
                    pointwise,
                    pointwise_bias,
                } => {
                    let Aux::DwscMid(mid) = &cache.aux[j] else {
                        unreachable!("dwsc aux retained")
                    };
                    let p = dwsc_params(params, [*depthwise, *depthwise_bias, *pointwise, *pointwise_bias]);
                    let r = layer.backward(out(0), mid, &p, &g)?;
                    param_grads.push((*depthwise, r.depthwise));
                    param_grads.push((*depthwise_bias, r.depthwise_bias));
                    param_grads.push((*pointwise, r.pointwise));
                    param_grads.push((*pointwise_bias, r.pointwise_bias));
                    accumulate(&mut grads[node.inputs[0]], r.input)?;
                }
                Op::BatchNorm { layer, gamma, beta, .. } => {
                    let Aux::BatchNorm(c) = &cache.aux[j] else {
                        unreachable!("batchnorm aux retained")
                    };
                    let r = layer.backward(c, params.values(*gamma), &g)?;
                    param_grads.push((*gamma, r.gamma));
                    param_grads.push((*beta, r.beta));
                    accumulate(&mut grads[node.inputs[0]], r.input)?;
                }
                Op::Relu => {
                    let gx = relu_backward(out(0), &g)?;
                    accumulate(&mut grads[node.inputs[0]], gx)?;
                }
                Op::MaxPool(pool) => {
                    let Aux::ArgMax(arg) = &cache.aux[j] else { unreachable!() };
                    let gx = pool.max_backward(out(0).shape(), arg, &g)?;
                    accumulate(&mut grads[node.inputs[0]], gx)?;
                }
                Op::Avg2Max => {
                    let Aux::ArgMax(arg) = &cache.aux[j] else { unreachable!() };
                    let gx = avg2max_backward(out(0).shape(), arg, &g)?;
                    accumulate(&mut grads[node.inputs[0]], gx)?;
                }
                Op::Concat => {
                    let (ga, gb) = split_channels(&g, out(0).shape().c);
                    accumulate(&mut grads[node.inputs[0]], ga)?;
                    accumulate(&mut grads[node.inputs[1]], gb)?;
                }
                Op::GlobalAvgPool => {
                    let gx = global_avg_pool_backward(out(0).shape(), &g)?;
                    accumulate(&mut grads[node.inputs[0]], gx)?;
                }
                Op::Dense { layer, weights, bias } => {
                    let r = layer.backward(out(0), params.values(*weights), &g)?;
                    param_grads.push((*weights, r.weights));
                    param_grads.push((*bias, r.bias));
                    accumulate(&mut grads[node.inputs[0]], r.input)?;
                }
            }
            // activations below `j` are still needed; only this node's output can go
            cache.outputs[j] = None;
            cache.aux[j] = Aux::None;
        }
        Ok(Backprop {
            params: param_grads,
            tap: tap_grad,
        })
    }

    /// Reverse pass writing a gradient into every trainable entry of
    /// `params`.
    pub fn backward<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        cache: ForwardCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<()> {
        let bp = self.backprop(params, cache, grad_logits, None)?;
        for (id, g) in bp.params {
            params.set_grad(id, g)?;
        }
        Ok(())
    }
}
