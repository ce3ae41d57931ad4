use ndarray::{Array1, Array2, Array4, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use crate::nn::{self, sigmoid, Activation, Conv2d, ConvCache, Linear, Params, ResBlock, ResBlockCache};
use crate::real::Real;

/// Discriminator outputs are clamped into `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Initial decoder output bias; softplus(-4) ≈ 0.018.
pub const OUTPUT_BIAS: f64 = -4.0;

/// Input convolution followed by stride-2 residual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk<T> {
    pub input: Conv2d<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct TrunkCache<T> {
    input: ConvCache<T>,
    input_pre: Array4<T>,
    blocks: Vec<ResBlockCache<T>>,
}

impl<T: Real> Trunk<T> {
    pub fn new(channels: &[usize], act: Activation, rng: &mut impl Rng) -> Self {
        let input = Conv2d::new(1, channels[0], 3, 1, 1, act.init_gain(), rng);
        let mut prev = channels[0];
        let blocks = channels
            .iter()
            .map(|&c| {
                let block = ResBlock::new(prev, c, 2, act, rng);
                prev = c;
                block
            })
            .collect();
        Self { input, blocks, act }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, TrunkCache<T>) {
        let (input_pre, input) = self.input.forward(x);
        let mut h = self.act.forward(&input_pre);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = block.forward(&h);
            blocks.push(cache);
            h = out;
        }
        (
            h,
            TrunkCache {
                input,
                input_pre,
                blocks,
            },
        )
    }

    pub fn backward(&self, cache: &TrunkCache<T>, dy: Array4<T>, grad: Option<&mut Trunk<T>>, want_dx: bool) -> Option<Array4<T>> {
        let (gi, mut gb): (Option<&mut Conv2d<T>>, Option<&mut Vec<ResBlock<T>>>) = match grad {
            Some(g) => (Some(&mut g.input), Some(&mut g.blocks)),
            None => (None, None),
        };
        let mut d = dy;
        for (idx, (block, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let g = gb.as_mut().map(|v| &mut v[idx]);
            d = block.backward(bc, &d, g, true).expect("requested");
        }
        let d_pre = self.act.backward(&cache.input_pre, &d);
        self.input.backward(&cache.input, &d_pre, gi, want_dx)
    }
}

impl<T: Real> Params<T> for Trunk<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        self.input.collect(&format!("{prefix}input"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect(&format!("{prefix}block{i}"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        self.input.collect_mut(out);
        for b in &mut self.blocks {
            b.collect_mut(out);
        }
    }
}

fn flatten<T: Real>(x: Array4<T>) -> Array2<T> {
    let b = x.dim().0;
    let n = x.len() / b.max(1);
    x.as_standard_layout().into_owned().into_shape_with_order((b, n)).expect("flatten")
}

fn unflatten<T: Real>(x: Array2<T>, dim: (usize, usize, usize, usize)) -> Array4<T> {
    x.as_standard_layout().into_owned().into_shape_with_order(dim).expect("unflatten")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub trunk: Trunk<T>,
    pub head: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    trunk: TrunkCache<T>,
    flat: Array2<T>,
    feat_dim: (usize, usize, usize, usize),
}

impl<T: Real> Encoder<T> {
    pub fn new(channels: &[usize], feat_hw: (usize, usize), latent: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let trunk = Trunk::new(channels, act, rng);
        let flat = channels[channels.len() - 1] * feat_hw.0 * feat_hw.1;
        let head = Linear::new(flat, latent, 1.0, rng);
        Self { trunk, head }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array2<T>, EncoderCache<T>) {
        let (feat, trunk) = self.trunk.forward(x);
        let feat_dim = feat.dim();
        let flat = flatten(feat);
        let z = self.head.forward(&flat);
        (z, EncoderCache { trunk, flat, feat_dim })
    }

    pub fn backward(&self, cache: &EncoderCache<T>, dz: &Array2<T>, grad: Option<&mut Encoder<T>>, want_dx: bool) -> Option<Array4<T>> {
        let (gt, gh) = match grad {
            Some(g) => (Some(&mut g.trunk), Some(&mut g.head)),
            None => (None, None),
        };
        let dflat = self.head.backward(&cache.flat, dz, gh, true).expect("requested");
        self.trunk.backward(&cache.trunk, unflatten(dflat, cache.feat_dim), gt, want_dx)
    }
}

impl<T: Real> Params<T> for Encoder<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        self.trunk.collect(&format!("{prefix}trunk."), out);
        self.head.collect(&format!("{prefix}head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        self.trunk.collect_mut(out);
        self.head.collect_mut(out);
    }
}

/// Mirror of the encoder: linear seed map, upsampling residual blocks,
/// crop to the target size, output convolution and softplus.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub fc: Linear<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub out: Conv2d<T>,
    pub act: Activation,
    seed_dim: (usize, usize, usize),
    out_hw: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    z: Array2<T>,
    fc_pre: Array2<T>,
    blocks: Vec<ResBlockCache<T>>,
    uncropped_hw: (usize, usize),
    out: ConvCache<T>,
    out_pre: Array4<T>,
}

impl<T: Real> Decoder<T> {
    pub fn new(
        channels: &[usize],
        seed_hw: (usize, usize),
        out_hw: (usize, usize),
        latent: usize,
        act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let top = channels[channels.len() - 1];
        let fc = Linear::new(latent, top * seed_hw.0 * seed_hw.1, act.init_gain(), rng);
        // Block i maps channels[n-1-i] to channels[n-2-i]; the last keeps channels[0].
        let n = channels.len();
        let blocks = (0..n)
            .map(|i| {
                let cin = channels[n - 1 - i];
                let cout = if i + 1 < n { channels[n - 2 - i] } else { channels[0] };
                ResBlock::new(cin, cout, 1, act, rng)
            })
            .collect();
        let mut out = Conv2d::new(channels[0], 1, 3, 1, 1, 1.0, rng);
        // Magnitude spectrograms are mostly near zero; start outputs there
        // rather than at softplus(0) = ln 2.
        out.bias.fill(T::lit(OUTPUT_BIAS));
        Self {
            fc,
            blocks,
            out,
            act,
            seed_dim: (top, seed_hw.0, seed_hw.1),
            out_hw,
        }
    }

    pub fn forward(&self, z: &Array2<T>) -> (Array4<T>, DecoderCache<T>) {
        let b = z.nrows();
        let fc_pre = self.fc.forward(z);
        let (c, h, w) = self.seed_dim;
        let mut x = unflatten(self.act.forward(&fc_pre), (b, c, h, w));
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&nn::upsample2x(&x));
            blocks.push(cache);
            x = y;
        }
        let uncropped_hw = (x.dim().2, x.dim().3);
        let x = nn::crop(&x, self.out_hw.0, self.out_hw.1);
        let (out_pre, out) = self.out.forward(&x);
        let y = Activation::Softplus.forward(&out_pre);
        (
            y,
            DecoderCache {
                z: z.clone(),
                fc_pre,
                blocks,
                uncropped_hw,
                out,
                out_pre,
            },
        )
    }

    pub fn backward(&self, cache: &DecoderCache<T>, dy: &Array4<T>, grad: Option<&mut Decoder<T>>, want_dz: bool) -> Option<Array2<T>> {
        let (gfc, mut gb, gout) = match grad {
            Some(g) => (Some(&mut g.fc), Some(&mut g.blocks), Some(&mut g.out)),
            None => (None, None, None),
        };
        let d_pre = Activation::Softplus.backward(&cache.out_pre, dy);
        let d = self.out.backward(&cache.out, &d_pre, gout, true).expect("requested");
        let mut d = nn::crop_backward(&d, cache.uncropped_hw.0, cache.uncropped_hw.1);
        for (idx, (block, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let g = gb.as_mut().map(|v| &mut v[idx]);
            let dup = block.backward(bc, &d, g, true).expect("requested");
            d = nn::upsample2x_backward(&dup);
        }
        let dflat = flatten(d);
        let dfc = self.act.backward(&cache.fc_pre, &dflat);
        self.fc.backward(&cache.z, &dfc, gfc, want_dz)
    }
}

impl<T: Real> Params<T> for Decoder<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        self.fc.collect(&format!("{prefix}fc"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect(&format!("{prefix}block{i}"), out);
        }
        self.out.collect(&format!("{prefix}out"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        self.fc.collect_mut(out);
        for b in &mut self.blocks {
            b.collect_mut(out);
        }
        self.out.collect_mut(out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub trunk: Trunk<T>,
    pub head: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorCache<T> {
    trunk: TrunkCache<T>,
    flat: Array2<T>,
    feat_dim: (usize, usize, usize, usize),
    logits: Array1<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(channels: &[usize], feat_hw: (usize, usize), act: Activation, rng: &mut impl Rng) -> Self {
        let trunk = Trunk::new(channels, act, rng);
        let flat = channels[channels.len() - 1] * feat_hw.0 * feat_hw.1;
        // A small head keeps fresh outputs near 0.5.
        let head = Linear::new(flat, 1, 0.1, rng);
        Self { trunk, head }
    }

    /// Clamped probabilities, one per batch item.
    pub fn forward(&self, x: &Array4<T>) -> (Array1<T>, DiscriminatorCache<T>) {
        let (feat, trunk) = self.trunk.forward(x);
        let feat_dim = feat.dim();
        let flat = flatten(feat);
        let logits = self.head.forward(&flat).index_axis_move(Axis(1), 0);
        let probs = logits.mapv(|l| clamp_prob(sigmoid(l)));
        (
            probs,
            DiscriminatorCache {
                trunk,
                flat,
                feat_dim,
                logits,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &DiscriminatorCache<T>,
        dp: &Array1<T>,
        grad: Option<&mut Discriminator<T>>,
        want_dx: bool,
    ) -> Option<Array4<T>> {
        let (gt, gh) = match grad {
            Some(g) => (Some(&mut g.trunk), Some(&mut g.head)),
            None => (None, None),
        };
        let (lo, hi) = (T::lit(PROB_EPS), T::one() - T::lit(PROB_EPS));
        let dlogit = ndarray::Zip::from(&cache.logits).and(dp).map_collect(|&l, &g| {
            let s = sigmoid(l);
            if s <= lo || s >= hi {
                T::zero()
            } else {
                g * s * (T::one() - s)
            }
        });
        let dlogit = dlogit.insert_axis(Axis(1));
        let dflat = self.head.backward(&cache.flat, &dlogit, gh, true).expect("requested");
        self.trunk.backward(&cache.trunk, unflatten(dflat, cache.feat_dim), gt, want_dx)
    }
}

impl<T: Real> Params<T> for Discriminator<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        self.trunk.collect(&format!("{prefix}trunk."), out);
        self.head.collect(&format!("{prefix}head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        self.trunk.collect_mut(out);
        self.head.collect_mut(out);
    }
}

#[inline]
pub fn clamp_prob<T: Real>(p: T) -> T {
    p.max(T::lit(PROB_EPS)).min(T::one() - T::lit(PROB_EPS))
}
