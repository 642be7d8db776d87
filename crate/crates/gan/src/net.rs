//! U-Net generator and patch discriminator built from conv blocks.

use psim_autonet::norm::InstanceNormCache;
use psim_autonet::{
    concat_channels, split_channels, Activation, Conv2d, ConvTranspose2d, InstanceNorm, LayerKind, Tensor, INIT_STD,
    LEAKY_SLOPE,
};
use psim_core::SimRng;

use crate::error::Result;
use crate::spec::{level_channels, DiscriminatorSpec, GanSpec, GeneratorSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum ConvLayer {
    Conv(Conv2d),
    Transpose(ConvTranspose2d),
}

impl ConvLayer {
    fn forward(&self, x: &Tensor) -> psim_autonet::Result<Tensor> {
        match self {
            ConvLayer::Conv(c) => c.forward(x),
            ConvLayer::Transpose(c) => c.forward(x),
        }
    }

    fn backward(&self, x: &Tensor, dy: &Tensor) -> psim_autonet::Result<psim_autonet::ConvGrads> {
        match self {
            ConvLayer::Conv(c) => c.backward(x, dy),
            ConvLayer::Transpose(c) => c.backward(x, dy),
        }
    }

    fn params(&self) -> [&Tensor; 2] {
        match self {
            ConvLayer::Conv(c) => [&c.weight, &c.bias],
            ConvLayer::Transpose(c) => [&c.weight, &c.bias],
        }
    }

    fn params_mut(&mut self) -> [&mut Tensor; 2] {
        match self {
            ConvLayer::Conv(c) => [&mut c.weight, &mut c.bias],
            ConvLayer::Transpose(c) => [&mut c.weight, &mut c.bias],
        }
    }

    fn kind(&self) -> LayerKind {
        match self {
            ConvLayer::Conv(_) => LayerKind::Conv,
            ConvLayer::Transpose(_) => LayerKind::ConvTranspose,
        }
    }
}

/// conv -> optional instance norm -> optional activation. A conv feeding a
/// norm has no trainable bias: the mean removal would cancel it.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub conv: ConvLayer,
    pub norm: Option<InstanceNorm>,
    pub act: Option<Activation>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    x: Tensor,
    norm: Option<InstanceNormCache>,
    pre: Tensor,
    out: Tensor,
}

impl BlockCache {
    pub fn output(&self) -> &Tensor {
        &self.out
    }

    /// Side of the kink for every unit of a piecewise-linear activation.
    fn kink_sides(&self, act: Option<Activation>, out: &mut Vec<bool>) {
        if matches!(act, Some(Activation::Relu | Activation::LeakyRelu(_))) {
            out.extend(self.pre.data().iter().map(|&v| v > 0.0));
        }
    }
}

impl Block {
    fn new(conv: ConvLayer, out_ch: usize, norm: bool, act: Option<Activation>) -> Self {
        Self {
            conv,
            norm: norm.then(|| InstanceNorm::new(out_ch)),
            act,
        }
    }

    pub fn forward(&self, x: &Tensor, layer: usize) -> Result<BlockCache> {
        let mut pre = self.conv.forward(x)?.check_finite(layer, "conv")?;
        let mut norm_cache = None;
        if let Some(n) = &self.norm {
            let (y, c) = n.forward(&pre)?;
            pre = y.check_finite(layer, "instance_norm")?;
            norm_cache = Some(c);
        }
        let out = match self.act {
            Some(a) => a.forward(&pre).check_finite(layer, "activation")?,
            None => pre.clone(),
        };
        Ok(BlockCache {
            x: x.clone(),
            norm: norm_cache,
            pre,
            out,
        })
    }

    /// Returns the input gradient and parameter gradients in [`Block::params`] order.
    pub fn backward(&self, cache: &BlockCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut g = match self.act {
            Some(a) => a.backward(&cache.pre, &cache.out, dy)?,
            None => dy.clone(),
        };
        let mut norm_grads = None;
        if let (Some(n), Some(c)) = (&self.norm, &cache.norm) {
            let ng = n.backward(c, &g)?;
            g = ng.input;
            norm_grads = Some([ng.gamma, ng.beta]);
        }
        let cg = self.conv.backward(&cache.x, &g)?;
        let mut grads = vec![cg.weight];
        match norm_grads {
            Some(ng) => grads.extend(ng),
            None => grads.push(cg.bias),
        }
        Ok((cg.input, grads))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let [w, b] = self.conv.params();
        match &self.norm {
            Some(n) => vec![w, &n.gamma, &n.beta],
            None => vec![w, b],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let [w, b] = self.conv.params_mut();
        match &mut self.norm {
            Some(n) => vec![w, &mut n.gamma, &mut n.beta],
            None => vec![w, b],
        }
    }

    fn param_names(&self, prefix: &str) -> Vec<String> {
        let tail: &[&str] = match self.norm {
            Some(_) => &["weight", "gamma", "beta"],
            None => &["weight", "bias"],
        };
        tail.iter().map(|t| format!("{prefix}.{t}")).collect()
    }

    fn kinds(&self) -> Vec<LayerKind> {
        let mut k = vec![self.conv.kind()];
        if self.norm.is_some() {
            k.push(LayerKind::InstanceNorm);
        }
        k.extend(self.act.map(|a| match a {
            Activation::LeakyRelu(_) => LayerKind::LeakyRelu,
            Activation::Relu => LayerKind::Relu,
            Activation::Tanh => LayerKind::Tanh,
            Activation::Sigmoid => LayerKind::Sigmoid,
        }));
        k
    }

    fn init(&mut self, rng: &mut SimRng) {
        let w = &mut self.conv.params_mut()[0];
        **w = Tensor::randn(w.shape(), INIT_STD, rng);
    }
}

fn down_block(in_ch: usize, out_ch: usize, norm: bool) -> Block {
    Block::new(
        ConvLayer::Conv(Conv2d::new(in_ch, out_ch, 4, 2, 1)),
        out_ch,
        norm,
        Some(Activation::LeakyRelu(LEAKY_SLOPE)),
    )
}

/// Encoder-decoder with optional skip connections.
///
/// Down level `i` halves the side and has `base * 2^min(i, 3)` channels. Each
/// up level doubles the side and, with skips on, concatenates the matching
/// encoder output; the outermost level concatenates the network input. A
/// 3x3 conv and tanh produce the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub down: Vec<Block>,
    /// Innermost level first.
    pub up: Vec<Block>,
    pub out: Block,
    pub skip: bool,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratorCache {
    down: Vec<BlockCache>,
    up: Vec<BlockCache>,
    out: BlockCache,
}

impl GeneratorCache {
    pub fn output(&self) -> &Tensor {
        self.out.output()
    }

    /// Which side of zero each relu / leaky relu input fell on. Two forward
    /// passes with equal patterns lie on the same linear piece of the network.
    pub fn activation_pattern(&self, net: &Generator) -> Vec<bool> {
        let mut out = Vec::new();
        for (c, b) in self.down.iter().zip(&net.down).chain(self.up.iter().zip(&net.up)) {
            c.kink_sides(b.act, &mut out);
        }
        self.out.kink_sides(net.out.act, &mut out);
        out
    }
}

impl Generator {
    /// Zero-initialized network with unit norm scale.
    pub fn new(spec: &GeneratorSpec, channels: usize) -> Self {
        let GeneratorSpec { depth, base, skip } = *spec;
        let ch = |l: usize| level_channels(base, l);
        let down = (0..depth)
            .map(|i| down_block(if i == 0 { channels } else { ch(i - 1) }, ch(i), true))
            .collect();
        let up = (0..depth)
            .rev()
            .map(|i| {
                let in_ch = if i == depth - 1 || !skip { ch(i) } else { 2 * ch(i) };
                let out_ch = if i == 0 { base } else { ch(i - 1) };
                Block::new(
                    ConvLayer::Transpose(ConvTranspose2d::new(in_ch, out_ch, 4, 2, 1)),
                    out_ch,
                    true,
                    Some(Activation::Relu),
                )
            })
            .collect();
        let out_in = if skip { base + channels } else { base };
        let out = Block::new(
            ConvLayer::Conv(Conv2d::new(out_in, channels, 3, 1, 1)),
            channels,
            false,
            Some(Activation::Tanh),
        );
        Self {
            down,
            up,
            out,
            skip,
            channels,
        }
    }

    pub fn depth(&self) -> usize {
        self.down.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<GeneratorCache> {
        let depth = self.depth();
        let mut down = Vec::with_capacity(depth);
        let mut h = x.clone();
        for (i, b) in self.down.iter().enumerate() {
            let c = b.forward(&h, i)?;
            h = c.output().clone();
            down.push(c);
        }
        let mut up = Vec::with_capacity(depth);
        for (j, b) in self.up.iter().enumerate() {
            let i = depth - 1 - j;
            let c = b.forward(&h, depth + j)?;
            h = if self.skip {
                let s = if i == 0 { x } else { down[i - 1].output() };
                concat_channels(c.output(), s)?
            } else {
                c.output().clone()
            };
            up.push(c);
        }
        let out = self.out.forward(&h, 2 * depth)?;
        Ok(GeneratorCache { down, up, out })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.out.out)
    }

    /// Input gradient and parameter gradients in [`Generator::params`] order.
    pub fn backward(&self, cache: &GeneratorCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let depth = self.depth();
        let (mut g, out_grads) = self.out.backward(&cache.out, dy)?;
        let mut dx = Tensor::zeros(cache.down[0].x.shape());
        let mut d_down: Vec<Option<Tensor>> = vec![None; depth];
        let mut up_grads = Vec::with_capacity(depth);
        // outermost up level first
        for (j, b) in self.up.iter().enumerate().rev() {
            let i = depth - 1 - j;
            let d_out = if self.skip {
                let c_out = cache.up[j].output().shape()[1];
                let (d_out, d_skip) = split_channels(&g, c_out)?;
                if i == 0 {
                    dx.add_assign(&d_skip)?;
                } else {
                    accumulate(&mut d_down[i - 1], d_skip)?;
                }
                d_out
            } else {
                g
            };
            let (d_in, grads) = b.backward(&cache.up[j], &d_out)?;
            g = d_in;
            up_grads.push(grads);
        }
        up_grads.reverse();
        accumulate(&mut d_down[depth - 1], g)?;
        let mut down_grads = Vec::with_capacity(depth);
        for i in (0..depth).rev() {
            let d = d_down[i].take().expect("every level receives a gradient");
            let (d_in, grads) = self.down[i].backward(&cache.down[i], &d)?;
            if i == 0 {
                dx.add_assign(&d_in)?;
            } else {
                accumulate(&mut d_down[i - 1], d_in)?;
            }
            down_grads.push(grads);
        }
        down_grads.reverse();
        let grads = down_grads
            .into_iter()
            .flatten()
            .chain(up_grads.into_iter().flatten())
            .chain(out_grads)
            .collect();
        Ok((dx, grads))
    }

    fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.down.iter().chain(&self.up).chain(std::iter::once(&self.out))
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Block> {
        self.down
            .iter_mut()
            .chain(self.up.iter_mut())
            .chain(std::iter::once(&mut self.out))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.blocks().flat_map(Block::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks_mut().flat_map(Block::params_mut).collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let depth = self.depth();
        let mut names = Vec::new();
        for (i, b) in self.down.iter().enumerate() {
            names.extend(b.param_names(&format!("down{i}")));
        }
        for (j, b) in self.up.iter().enumerate() {
            names.extend(b.param_names(&format!("up{}", depth - 1 - j)));
        }
        names.extend(self.out.param_names("out"));
        names
    }

    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        let mut kinds = Vec::new();
        for b in &self.down {
            kinds.extend(b.kinds());
        }
        for b in &self.up {
            kinds.extend(b.kinds());
            if self.skip {
                kinds.push(LayerKind::ConcatSkip);
            }
        }
        kinds.extend(self.out.kinds());
        kinds
    }

    pub fn init(&mut self, rng: &mut SimRng) {
        for b in self.blocks_mut() {
            b.init(rng);
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g)?,
        None => *slot = Some(g),
    }
    Ok(())
}

/// Patch discriminator over the channel-concatenated (input, candidate) pair.
/// Emits raw logits; the first block has no normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub blocks: Vec<Block>,
    pub head: Block,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorCache {
    blocks: Vec<BlockCache>,
    head: BlockCache,
}

impl DiscriminatorCache {
    pub fn logits(&self) -> &Tensor {
        self.head.output()
    }

    /// See [`GeneratorCache::activation_pattern`].
    pub fn activation_pattern(&self, net: &Discriminator) -> Vec<bool> {
        let mut out = Vec::new();
        for (c, b) in self.blocks.iter().zip(&net.blocks) {
            c.kink_sides(b.act, &mut out);
        }
        self.head.kink_sides(net.head.act, &mut out);
        out
    }
}

impl Discriminator {
    pub fn new(spec: &DiscriminatorSpec, channels: usize) -> Self {
        let ch = |l: usize| level_channels(spec.base, l);
        let blocks = (0..spec.layers)
            .map(|i| down_block(if i == 0 { 2 * channels } else { ch(i - 1) }, ch(i), i > 0))
            .collect();
        let head = Block::new(
            ConvLayer::Conv(Conv2d::new(ch(spec.layers - 1), 1, 3, 1, 1)),
            1,
            false,
            None,
        );
        Self { blocks, head, channels }
    }

    pub fn forward(&self, input: &Tensor, candidate: &Tensor) -> Result<DiscriminatorCache> {
        let mut h = concat_channels(input, candidate)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.forward(&h, i)?;
            h = c.output().clone();
            blocks.push(c);
        }
        let head = self.head.forward(&h, self.blocks.len())?;
        Ok(DiscriminatorCache { blocks, head })
    }

    pub fn logits(&self, input: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        Ok(self.forward(input, candidate)?.head.out)
    }

    /// Gradient with respect to the candidate, and parameter gradients.
    pub fn backward(&self, cache: &DiscriminatorCache, d_logits: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (mut g, head_grads) = self.head.backward(&cache.head, d_logits)?;
        let mut grads = Vec::with_capacity(self.blocks.len());
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (d_in, bg) = b.backward(c, &g)?;
            g = d_in;
            grads.push(bg);
        }
        grads.reverse();
        let (_, d_candidate) = split_channels(&g, self.channels)?;
        let grads = grads.into_iter().flatten().chain(head_grads).collect();
        Ok((d_candidate, grads))
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Block> {
        self.blocks.iter_mut().chain(std::iter::once(&mut self.head))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.blocks
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(Block::params)
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks_mut().flat_map(Block::params_mut).collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            names.extend(b.param_names(&format!("block{i}")));
        }
        names.extend(self.head.param_names("head"));
        names
    }

    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        let mut kinds = vec![LayerKind::ConcatSkip];
        for b in self.blocks.iter().chain(std::iter::once(&self.head)) {
            kinds.extend(b.kinds());
        }
        kinds
    }

    pub fn init(&mut self, rng: &mut SimRng) {
        for b in self.blocks_mut() {
            b.init(rng);
        }
    }
}

/// Builds both networks with seeded `N(0, 0.02^2)` conv weights.
pub fn build_networks(spec: &GanSpec, seed: u64) -> (Generator, Discriminator) {
    let mut rng = SimRng::new(seed, psim_core::rng::STREAM_INIT);
    let mut g = Generator::new(&spec.generator, 1);
    let mut d = Discriminator::new(&spec.discriminator, 1);
    g.init(&mut rng);
    d.init(&mut rng);
    (g, d)
}
