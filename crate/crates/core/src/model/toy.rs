//! Reference stereo network, small enough to train on a desktop CPU.
//!
//! ```text
//! features  f = softplus(conv3x3(softplus(conv3x3(x))))      shared by both views
//! cost      c(x, y, d) = -Σ_ch f_L(x, y) · f_R(x - d, y)     d = 0..=d_max
//! disparity D(x, y) = Σ_d d · softmax_d(-β c(x, y, d)),      β = exp(log_beta)
//! ```
//!
//! Intensities are centred and divided by [`INPUT_SPREAD`]. Candidates whose right
//! sample falls left of the image take the pixel's worst in-bounds cost.

use super::{Layout, ModelParams, ParamGrad, StereoModel, TensorSpec};
use crate::rng::Rng;
use crate::types::{DisparityMap, Field, Image};
use crate::{Error, Result};

/// Channel width of both convolution layers.
pub const TOY_FEATURES: usize = 8;

/// Intensities enter the network as `(v - 127.5) / INPUT_SPREAD`.
pub const INPUT_SPREAD: f64 = 16.0;

const MODEL_NAME: &str = "toy-corr-softargmin";

#[derive(Debug, Clone)]
pub struct ToyModel {
    in_channels: usize,
    max_disparity: usize,
    layout: Layout,
}

impl ToyModel {
    pub fn new(in_channels: usize, max_disparity: usize) -> Self {
        let f = TOY_FEATURES;
        let layout = Layout {
            model: MODEL_NAME.to_string(),
            in_channels,
            max_disparity,
            tensors: vec![
                TensorSpec::new("conv1.weight", &[f, in_channels, 3, 3]),
                TensorSpec::new("conv1.bias", &[f]),
                TensorSpec::new("conv2.weight", &[f, f, 3, 3]),
                TensorSpec::new("conv2.bias", &[f]),
                TensorSpec::new("log_beta", &[1]),
            ],
        };
        Self {
            in_channels,
            max_disparity,
            layout,
        }
    }

    /// The model matching a checkpoint's layout.
    pub fn for_params(params: &ModelParams) -> Result<Self> {
        let l = params.layout();
        if l.model != MODEL_NAME {
            return Err(Error::InvalidArgument(format!("unknown model '{}'", l.model)));
        }
        let model = Self::new(l.in_channels, l.max_disparity);
        if model.layout != *l {
            return Err(Error::InvalidArgument(
                "checkpoint layout does not match the toy model".into(),
            ));
        }
        Ok(model)
    }

    fn check(&self, left: &Image, right: &Image, params: &ModelParams) -> Result<()> {
        if params.layout() != &self.layout {
            return Err(Error::InvalidArgument(
                "parameters do not match the model layout".into(),
            ));
        }
        if !left.same_shape(right) {
            return Err(Error::Dimension("left and right views differ in shape".into()));
        }
        if left.channels() != self.in_channels {
            return Err(Error::Dimension(format!(
                "model expects {} channels, got {}",
                self.in_channels,
                left.channels()
            )));
        }
        Ok(())
    }

    fn run(&self, left: &Image, right: &Image, params: &ModelParams) -> Result<Tape> {
        self.check(left, right, params)?;
        let w = Weights::new(params);
        let left = ViewTape::forward(left, &w, "left")?;
        let right = ViewTape::forward(right, &w, "right")?;
        let beta = w.log_beta.exp();
        let volume = CostVolume::forward(&left.feat, &right.feat, self.max_disparity, beta)?;
        Ok(Tape { left, right, volume })
    }

    fn backprop(&self, tape: &Tape, params: &ModelParams, cotangent: &Field) -> Result<ParamGrad> {
        let (h, wd) = (tape.left.feat.h, tape.left.feat.w);
        if cotangent.height() != h || cotangent.width() != wd {
            return Err(Error::Dimension(format!(
                "cotangent {}x{} vs prediction {h}x{wd}",
                cotangent.height(),
                cotangent.width()
            )));
        }
        let w = Weights::new(params);
        let mut grad = vec![0.0; self.layout.len()];
        let (g_feat_l, g_feat_r, g_log_beta) =
            tape.volume
                .backward(&tape.left.feat, &tape.right.feat, cotangent.data());
        let mut gw = GradSlices::new(&self.layout, &mut grad);
        tape.left.backward(&w, g_feat_l, &mut gw);
        tape.right.backward(&w, g_feat_r, &mut gw);
        *gw.log_beta = g_log_beta;
        ParamGrad::new(self.layout.clone(), grad)
    }
}

impl StereoModel for ToyModel {
    fn max_disparity(&self) -> usize {
        self.max_disparity
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Conv weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases 0, β = 1.
    fn init_params(&self, rng: &mut Rng) -> ModelParams {
        let mut values = Vec::with_capacity(self.layout.len());
        for t in &self.layout.tensors {
            if t.name.ends_with(".weight") {
                let fan_in = (t.shape[1] * 9) as f64;
                let fan_out = (t.shape[0] * 9) as f64;
                let bound = (6.0 / (fan_in + fan_out)).sqrt();
                values.extend((0..t.len()).map(|_| rng.uniform(-bound, bound)));
            } else {
                values.extend(std::iter::repeat_n(0.0, t.len()));
            }
        }
        ModelParams::new(self.layout.clone(), values).expect("layout length")
    }

    fn forward(&self, left: &Image, right: &Image, params: &ModelParams) -> Result<DisparityMap> {
        Ok(self.run(left, right, params)?.disparity())
    }

    fn backward(&self, left: &Image, right: &Image, params: &ModelParams, cotangent: &Field) -> Result<ParamGrad> {
        let tape = self.run(left, right, params)?;
        self.backprop(&tape, params, cotangent)
    }

    fn forward_backward(
        &self,
        left: &Image,
        right: &Image,
        params: &ModelParams,
        loss: &mut dyn FnMut(&DisparityMap) -> Result<Field>,
    ) -> Result<(DisparityMap, ParamGrad)> {
        let tape = self.run(left, right, params)?;
        let pred = tape.disparity();
        let cot = loss(&pred)?;
        let grad = self.backprop(&tape, params, &cot)?;
        Ok((pred, grad))
    }
}

/// Planar `c × h × w` activations.
#[derive(Debug, Clone)]
struct Planes {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Planes {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[c * n..(c + 1) * n]
    }

    fn check_finite(&self, layer: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("activations of layer {layer}")));
        }
        Ok(())
    }
}

struct Weights<'a> {
    conv1_w: &'a [f64],
    conv1_b: &'a [f64],
    conv2_w: &'a [f64],
    conv2_b: &'a [f64],
    log_beta: f64,
}

impl<'a> Weights<'a> {
    fn new(p: &'a ModelParams) -> Self {
        Self {
            conv1_w: p.tensor("conv1.weight").expect("conv1.weight"),
            conv1_b: p.tensor("conv1.bias").expect("conv1.bias"),
            conv2_w: p.tensor("conv2.weight").expect("conv2.weight"),
            conv2_b: p.tensor("conv2.bias").expect("conv2.bias"),
            log_beta: p.tensor("log_beta").expect("log_beta")[0],
        }
    }
}

struct GradSlices<'a> {
    conv1_w: &'a mut [f64],
    conv1_b: &'a mut [f64],
    conv2_w: &'a mut [f64],
    conv2_b: &'a mut [f64],
    log_beta: &'a mut f64,
}

impl<'a> GradSlices<'a> {
    fn new(layout: &Layout, grad: &'a mut [f64]) -> Self {
        // tensors are laid out in declaration order
        let (c1w, rest) = grad.split_at_mut(layout.range("conv1.weight").expect("layout").len());
        let (c1b, rest) = rest.split_at_mut(layout.range("conv1.bias").expect("layout").len());
        let (c2w, rest) = rest.split_at_mut(layout.range("conv2.weight").expect("layout").len());
        let (c2b, rest) = rest.split_at_mut(layout.range("conv2.bias").expect("layout").len());
        Self {
            conv1_w: c1w,
            conv1_b: c1b,
            conv2_w: c2w,
            conv2_b: c2b,
            log_beta: &mut rest[0],
        }
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Valid output range `[lo, hi)` along an axis of length `n` for tap offset `off`.
#[inline]
fn tap_range(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

/// 3×3 convolution, stride 1, zero padding.
fn conv3x3_forward(input: &Planes, weight: &[f64], bias: &[f64], out_c: usize) -> Planes {
    let (ic, h, w) = (input.c, input.h, input.w);
    let mut out = Planes::zeros(out_c, h, w);
    for o in 0..out_c {
        let dst = out.plane_mut(o);
        dst.fill(bias[o]);
        for i in 0..ic {
            let src = input.plane(i);
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y_lo, y_hi) = tap_range(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x_lo, x_hi) = tap_range(w, dx);
                    let wv = weight[((o * ic + i) * 3 + ky) * 3 + kx];
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let s0 = sy * w + (x_lo as isize + dx) as usize;
                        let d_row = &mut dst[y * w + x_lo..y * w + x_hi];
                        let s_row = &src[s0..s0 + (x_hi - x_lo)];
                        for (d, s) in d_row.iter_mut().zip(s_row) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and optionally the input gradient.
fn conv3x3_backward(
    input: &Planes,
    weight: &[f64],
    g_out: &Planes,
    g_weight: &mut [f64],
    g_bias: &mut [f64],
    mut g_input: Option<&mut Planes>,
) {
    let (ic, h, w) = (input.c, input.h, input.w);
    for (o, gb) in g_bias.iter_mut().enumerate().take(g_out.c) {
        let go = g_out.plane(o);
        *gb += go.iter().sum::<f64>();
        for i in 0..ic {
            let src = input.plane(i);
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y_lo, y_hi) = tap_range(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x_lo, x_hi) = tap_range(w, dx);
                    let widx = ((o * ic + i) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let s0 = sy * w + (x_lo as isize + dx) as usize;
                        let g_row = &go[y * w + x_lo..y * w + x_hi];
                        let s_row = &src[s0..s0 + (x_hi - x_lo)];
                        acc += g_row.iter().zip(s_row).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gi) = g_input.as_deref_mut() {
                            let gi_row = &mut gi.plane_mut(i)[s0..s0 + (x_hi - x_lo)];
                            for (d, g) in gi_row.iter_mut().zip(g_row) {
                                *d += wv * g;
                            }
                        }
                    }
                    g_weight[widx] += acc;
                }
            }
        }
    }
}

/// Forward intermediates of the shared feature extractor for one view.
struct ViewTape {
    x0: Planes,
    z1: Planes,
    a1: Planes,
    z2: Planes,
    feat: Planes,
}

impl ViewTape {
    fn forward(img: &Image, w: &Weights, view: &str) -> Result<Self> {
        let (h, wd, c) = (img.height(), img.width(), img.channels());
        let mut x0 = Planes::zeros(c, h, wd);
        for (i, px) in img.data().chunks_exact(c).enumerate() {
            for (ch, v) in px.iter().enumerate() {
                x0.data[ch * h * wd + i] = (v - 127.5) / INPUT_SPREAD;
            }
        }
        let z1 = conv3x3_forward(&x0, w.conv1_w, w.conv1_b, TOY_FEATURES);
        z1.check_finite(&format!("conv1 ({view})"))?;
        let a1 = Planes {
            data: z1.data.iter().map(|&z| softplus(z)).collect(),
            ..z1.clone()
        };
        let z2 = conv3x3_forward(&a1, w.conv2_w, w.conv2_b, TOY_FEATURES);
        z2.check_finite(&format!("conv2 ({view})"))?;
        let feat = Planes {
            data: z2.data.iter().map(|&z| softplus(z)).collect(),
            ..z2.clone()
        };
        Ok(Self { x0, z1, a1, z2, feat })
    }

    fn backward(&self, w: &Weights, mut g_feat: Planes, g: &mut GradSlices) {
        for (gv, z) in g_feat.data.iter_mut().zip(&self.z2.data) {
            *gv *= sigmoid(*z);
        }
        let g_z2 = g_feat;
        let mut g_a1 = Planes::zeros(self.a1.c, self.a1.h, self.a1.w);
        conv3x3_backward(&self.a1, w.conv2_w, &g_z2, g.conv2_w, g.conv2_b, Some(&mut g_a1));
        for (gv, z) in g_a1.data.iter_mut().zip(&self.z1.data) {
            *gv *= sigmoid(*z);
        }
        conv3x3_backward(&self.x0, w.conv1_w, &g_a1, g.conv1_w, g.conv1_b, None);
    }
}

/// Correlation cost volume with soft-argmin readout.
struct CostVolume {
    ndisp: usize,
    h: usize,
    w: usize,
    beta: f64,
    /// `[d][y][x]`, out-of-bounds entries already replaced.
    cost: Vec<f64>,
    /// Softmax probabilities, same layout.
    prob: Vec<f64>,
    /// Candidate index supplying the cost of out-of-bounds entries, per pixel.
    worst: Vec<u16>,
    disp: Vec<f64>,
}

impl CostVolume {
    fn forward(fl: &Planes, fr: &Planes, max_disparity: usize, beta: f64) -> Result<Self> {
        let (c, h, w) = (fl.c, fl.h, fl.w);
        let nd = max_disparity + 1;
        let n = h * w;
        let mut cost = vec![0.0; nd * n];
        for d in 0..nd.min(w) {
            let slab = &mut cost[d * n..(d + 1) * n];
            for ch in 0..c {
                let (pl, pr) = (fl.plane(ch), fr.plane(ch));
                for y in 0..h {
                    let row = y * w;
                    let dst = &mut slab[row + d..row + w];
                    let a = &pl[row + d..row + w];
                    let b = &pr[row..row + w - d];
                    for ((o, l), r) in dst.iter_mut().zip(a).zip(b) {
                        *o -= l * r;
                    }
                }
            }
        }
        let mut worst = vec![0u16; n];
        for y in 0..h {
            for x in 0..w.min(max_disparity) {
                let i = y * w + x;
                let mut best = 0;
                for d in 1..=x {
                    if cost[d * n + i] > cost[best * n + i] {
                        best = d;
                    }
                }
                worst[i] = best as u16;
                let v = cost[best * n + i];
                for d in x + 1..nd {
                    cost[d * n + i] = v;
                }
            }
        }
        if cost.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activations of layer cost volume".into()));
        }
        let mut prob = vec![0.0; nd * n];
        let mut disp = vec![0.0; n];
        for i in 0..n {
            let mut m = f64::NEG_INFINITY;
            for d in 0..nd {
                m = m.max(-beta * cost[d * n + i]);
            }
            let mut z = 0.0;
            for d in 0..nd {
                let e = (-beta * cost[d * n + i] - m).exp();
                prob[d * n + i] = e;
                z += e;
            }
            let mut acc = 0.0;
            for d in 0..nd {
                let p = prob[d * n + i] / z;
                prob[d * n + i] = p;
                acc += d as f64 * p;
            }
            disp[i] = acc.clamp(0.0, max_disparity as f64);
        }
        if disp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activations of layer soft-argmin".into()));
        }
        Ok(Self {
            ndisp: nd,
            h,
            w,
            beta,
            cost,
            prob,
            worst,
            disp,
        })
    }

    /// Returns feature gradients for both views and the `log_beta` gradient.
    fn backward(&self, fl: &Planes, fr: &Planes, g_disp: &[f64]) -> (Planes, Planes, f64) {
        let (nd, h, w) = (self.ndisp, self.h, self.w);
        let n = h * w;
        let mut g_cost = vec![0.0; nd * n];
        let mut g_beta = 0.0;
        for i in 0..n {
            let g = g_disp[i];
            if g == 0.0 {
                continue;
            }
            let x = i % w;
            let dbar = self.disp[i];
            for d in 0..nd {
                let p = self.prob[d * n + i];
                // ∂D/∂logit_d = p_d (d - D), logit = -β c
                let g_logit = g * p * (d as f64 - dbar);
                g_beta -= g_logit * self.cost[d * n + i];
                let gc = -self.beta * g_logit;
                let target = if d > x { self.worst[i] as usize } else { d };
                g_cost[target * n + i] += gc;
            }
        }
        let mut gl = Planes::zeros(fl.c, h, w);
        let mut gr = Planes::zeros(fr.c, h, w);
        for d in 0..nd.min(w) {
            let slab = &g_cost[d * n..(d + 1) * n];
            for ch in 0..fl.c {
                let (pl, pr) = (fl.plane(ch), fr.plane(ch));
                for y in 0..h {
                    let row = y * w;
                    let gcs = &slab[row + d..row + w];
                    {
                        let dst = &mut gl.plane_mut(ch)[row + d..row + w];
                        let b = &pr[row..row + w - d];
                        for ((o, g), r) in dst.iter_mut().zip(gcs).zip(b) {
                            *o -= g * r;
                        }
                    }
                    let dst = &mut gr.plane_mut(ch)[row..row + w - d];
                    let a = &pl[row + d..row + w];
                    for ((o, g), l) in dst.iter_mut().zip(gcs).zip(a) {
                        *o -= g * l;
                    }
                }
            }
        }
        (gl, gr, g_beta * self.beta)
    }
}

struct Tape {
    left: ViewTape,
    right: ViewTape,
    volume: CostVolume,
}

impl Tape {
    fn disparity(&self) -> DisparityMap {
        DisparityMap::from_field(Field::from_raw(self.volume.h, self.volume.w, self.volume.disp.clone()))
            .expect("soft-argmin output is finite and nonnegative")
    }
}
