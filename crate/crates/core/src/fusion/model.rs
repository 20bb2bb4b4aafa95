use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::InContextInput;
use super::schedule::NoiseSchedule;
use super::tensor::LatentTensor;
use crate::math;
use crate::{Error, Result};

/// Per-pixel linear map (a 1x1 convolution): `out = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub out_channels: usize,
    pub in_channels: usize,
    /// Row-major `out x in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            weight: vec![0.0; out_channels * in_channels],
            bias: vec![0.0; out_channels],
        }
    }

    /// Uniform in `[-1/sqrt(in), 1/sqrt(in)]`, zero bias.
    pub fn seeded(out_channels: usize, in_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / math::sqrt(in_channels as f64);
        let mut l = Self::zeros(out_channels, in_channels);
        for w in &mut l.weight {
            *w = bound * (2.0 * rng.gen::<f64>() - 1.0);
        }
        l
    }

    pub fn apply(&self, x: &LatentTensor) -> LatentTensor {
        debug_assert_eq!(x.channels, self.in_channels);
        let plane = x.height * x.width;
        let mut out = LatentTensor::zeros(self.out_channels, x.height, x.width);
        for o in 0..self.out_channels {
            let dst = &mut out.values[o * plane..(o + 1) * plane];
            dst.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let w = self.weight[o * self.in_channels + i];
                let src = &x.values[i * plane..(i + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// `W^T g`, the input gradient for output gradient `g`.
    pub fn apply_transpose(&self, g: &LatentTensor) -> LatentTensor {
        let plane = g.height * g.width;
        let mut out = LatentTensor::zeros(self.in_channels, g.height, g.width);
        for o in 0..self.out_channels {
            let src = &g.values[o * plane..(o + 1) * plane];
            for i in 0..self.in_channels {
                let w = self.weight[o * self.in_channels + i];
                let dst = &mut out.values[i * plane..(i + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Accumulates `sum_p g[:, p] x[:, p]^T` into `dw` and `sum_p g[:, p]` into `db`.
    pub(crate) fn accumulate_grads(&self, g: &LatentTensor, x: &LatentTensor, dw: &mut [f64], db: Option<&mut [f64]>) {
        let plane = g.height * g.width;
        for o in 0..self.out_channels {
            let go = &g.values[o * plane..(o + 1) * plane];
            for i in 0..self.in_channels {
                let xi = &x.values[i * plane..(i + 1) * plane];
                dw[o * self.in_channels + i] += go.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        if let Some(db) = db {
            for (o, d) in db.iter_mut().enumerate() {
                *d += g.values[o * plane..(o + 1) * plane].iter().sum::<f64>();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Latent channels `c`.
    pub latent_channels: usize,
    /// Splatted feature dimension `d`.
    pub feature_dim: usize,
    /// Number of resolution levels.
    pub levels: usize,
    /// Hidden channels at level 0; doubled at each deeper level.
    pub base_hidden: usize,
    /// Fusion strength.
    pub omega: f64,
    /// Diffusion steps `T`.
    pub steps: usize,
    pub seed: u64,
    pub p_omega: f64,
    pub p_feat: f64,
    pub p_vae: f64,
    /// Identity-loss weight at the start and end of training.
    pub lambda_id: (f64, f64),
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            latent_channels: 4,
            feature_dim: 8,
            levels: 2,
            base_hidden: 4,
            omega: 1.0,
            steps: 10,
            seed: 0,
            p_omega: 0.1,
            p_feat: 0.1,
            p_vae: 0.1,
            lambda_id: (1.0, 0.6),
        }
    }
}

/// Parameters of one resolution level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Pooling factor `2^i`.
    pub factor: usize,
    /// Foreground projection of the pooled in-context input.
    pub fg: Linear,
    /// Timestep embedding added to foreground features, scaled by `t / T`.
    pub fg_time: Vec<f64>,
    pub bg: Linear,
    pub bg_time: Vec<f64>,
    /// Zero-initialized fusion gate.
    pub gate: Linear,
    /// Background features back to latent channels.
    pub decoder: Linear,
    /// Foreground features back to latent channels (identity head).
    pub fg_head: Linear,
}

/// Deterministic toy dual-branch network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessState {
    pub config: HarnessConfig,
    pub levels: Vec<Level>,
    pub omega: f64,
    pub schedule: NoiseSchedule,
}

/// Parameter groups exposed to gradient checks, in flattening order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Omega,
    GateWeight,
    GateBias,
    FgWeight,
    FgBias,
    FgTime,
    FgHead,
    BgWeight,
    Decoder,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Omega => "omega",
            ParamKind::GateWeight => "gate_weight",
            ParamKind::GateBias => "gate_bias",
            ParamKind::FgWeight => "fg_weight",
            ParamKind::FgBias => "fg_bias",
            ParamKind::FgTime => "fg_time",
            ParamKind::FgHead => "fg_head",
            ParamKind::BgWeight => "bg_weight",
            ParamKind::Decoder => "decoder",
        }
    }
}

/// A named parameter group: `kind` at `level` (`None` for omega).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub kind: ParamKind,
    pub level: Option<usize>,
}

impl ParamId {
    pub fn name(&self) -> String {
        match self.level {
            Some(l) => alloc::format!("{}[{l}]", self.kind.as_str()),
            None => self.kind.as_str().into(),
        }
    }
}

/// Per-level outputs of one branch.
pub type LevelFeatures = Vec<LatentTensor>;

impl HarnessState {
    /// Seeded parameters with zero fusion gates.
    pub fn new(config: HarnessConfig) -> Result<Self> {
        if config.levels == 0 || config.latent_channels == 0 || config.base_hidden == 0 {
            return Err(Error::Domain("levels, latent channels and hidden width must be positive"));
        }
        if !(0.0..=1.0).contains(&config.omega) {
            return Err(Error::Domain("omega must lie in [0, 1]"));
        }
        for p in [config.p_omega, config.p_feat, config.p_vae] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain("dropout probabilities must lie in [0, 1]"));
            }
        }
        let schedule = NoiseSchedule::linear(config.steps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.latent_channels;
        let fg_in = c + 1 + config.feature_dim;
        let bg_in = c + 1;
        let levels = (0..config.levels)
            .map(|i| {
                let hidden = config.base_hidden << i;
                let time = |rng: &mut ChaCha8Rng| (0..hidden).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
                Level {
                    factor: 1 << i,
                    fg: Linear::seeded(hidden, fg_in, &mut rng),
                    fg_time: time(&mut rng),
                    bg: Linear::seeded(hidden, bg_in, &mut rng),
                    bg_time: time(&mut rng),
                    gate: Linear::zeros(hidden, hidden),
                    decoder: Linear::seeded(c, hidden, &mut rng),
                    fg_head: Linear::seeded(c, hidden, &mut rng),
                }
            })
            .collect();
        Ok(Self {
            omega: config.omega,
            config,
            levels,
            schedule,
        })
    }

    /// Fills every gate with seeded values, as if fusion had been trained.
    pub fn randomize_gates(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut self.levels {
            let hidden = l.gate.in_channels;
            l.gate = Linear::seeded(hidden, hidden, &mut rng);
            for b in &mut l.gate.bias {
                *b = 0.1 * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
    }

    /// Zeroes every bias and timestep embedding.
    pub fn zero_biases(&mut self) {
        for l in &mut self.levels {
            for v in l
                .fg
                .bias
                .iter_mut()
                .chain(l.bg.bias.iter_mut())
                .chain(l.gate.bias.iter_mut())
                .chain(l.fg_time.iter_mut())
                .chain(l.bg_time.iter_mut())
                .chain(l.decoder.bias.iter_mut())
                .chain(l.fg_head.bias.iter_mut())
            {
                *v = 0.0;
            }
        }
    }

    pub fn gates_are_zero(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.gate.weight.iter().chain(&l.gate.bias).all(|&v| v == 0.0))
    }

    /// Checks that an input of the given spatial size pools cleanly.
    pub fn check_input(&self, x: &InContextInput, expected_channels: usize) -> Result<()> {
        if x.tensor.channels != expected_channels {
            return Err(Error::Shape(alloc::format!(
                "in-context input has {} channels, branch expects {expected_channels}",
                x.tensor.channels
            )));
        }
        let k = 1usize << (self.levels.len() - 1);
        if !x.tensor.height.is_multiple_of(k) || !x.tensor.width.is_multiple_of(k) {
            return Err(Error::Shape(alloc::format!(
                "input {}x{} is not divisible by the coarsest pooling factor {k}",
                x.tensor.height,
                x.tensor.width
            )));
        }
        Ok(())
    }

    pub fn fg_channels(&self) -> usize {
        self.config.latent_channels + 1 + self.config.feature_dim
    }

    pub fn bg_channels(&self) -> usize {
        self.config.latent_channels + 1
    }

    pub(crate) fn time_fraction(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.schedule.steps() {
            return Err(Error::Domain("timestep outside 1..=T"));
        }
        Ok(t as f64 / self.schedule.steps() as f64)
    }

    pub(crate) fn branch(&self, x: &InContextInput, t: usize, fg: bool) -> Result<(LevelFeatures, Vec<LatentTensor>)> {
        let tau = self.time_fraction(t)?;
        let mut feats = Vec::with_capacity(self.levels.len());
        let mut pooled = Vec::with_capacity(self.levels.len());
        for l in &self.levels {
            let p = x.tensor.avg_pool(l.factor);
            let (map, time) = if fg { (&l.fg, &l.fg_time) } else { (&l.bg, &l.bg_time) };
            let mut f = map.apply(&p);
            let plane = f.height * f.width;
            for (ch, &e) in time.iter().enumerate() {
                for v in &mut f.values[ch * plane..(ch + 1) * plane] {
                    *v += e * tau;
                }
            }
            feats.push(f);
            pooled.push(p);
        }
        Ok((feats, pooled))
    }

    /// Decodes per-level features to a latent over the noisy half.
    pub(crate) fn decode(&self, feats: &[LatentTensor], head: impl Fn(&Level) -> &Linear, half_width: usize) -> LatentTensor {
        let mut full: Option<LatentTensor> = None;
        for (l, f) in self.levels.iter().zip(feats) {
            let d = head(l).apply(&f.upsample(l.factor));
            match &mut full {
                Some(acc) => acc.add_assign(&d),
                None => full = Some(d),
            }
        }
        let full = full.expect("at least one level");
        full.slice(0, full.channels, half_width, half_width)
    }

    /// Foreground features at every level and the identity-head prediction.
    pub fn fg_features(&self, x1: &InContextInput, t: usize) -> Result<(LevelFeatures, LatentTensor)> {
        self.check_input(x1, self.fg_channels())?;
        let (feats, _) = self.branch(x1, t, true)?;
        let pred = self.decode(&feats, |l| &l.fg_head, x1.layout.half_width);
        Ok((feats, pred))
    }

    pub fn bg_features(&self, x0: &InContextInput, t: usize) -> Result<LevelFeatures> {
        self.check_input(x0, self.bg_channels())?;
        Ok(self.branch(x0, t, false)?.0)
    }

    /// Background-only noise prediction (no fusion).
    pub fn bg_prediction(&self, x0: &InContextInput, t: usize) -> Result<LatentTensor> {
        let feats = self.bg_features(x0, t)?;
        Ok(self.decode(&feats, |l| &l.decoder, x0.layout.half_width))
    }

    /// `bg_i + omega * Z_i(fg_i)` at every level.
    pub fn fused_features(&self, x0: &InContextInput, x1: &InContextInput, t: usize) -> Result<LevelFeatures> {
        if x0.tensor.height != x1.tensor.height || x0.tensor.width != x1.tensor.width {
            return Err(Error::Shape("foreground and background inputs differ in size".into()));
        }
        let bg = self.bg_features(x0, t)?;
        let (fg, _) = self.fg_features(x1, t)?;
        Ok(bg
            .into_iter()
            .zip(&fg)
            .zip(&self.levels)
            .map(|((mut b, f), l)| {
                let z = l.gate.apply(f);
                for (v, g) in b.values.iter_mut().zip(&z.values) {
                    *v += self.omega * g;
                }
                b
            })
            .collect())
    }

    /// Fused noise prediction over the noisy half.
    pub fn fused_prediction(&self, x0: &InContextInput, x1: &InContextInput, t: usize) -> Result<LatentTensor> {
        let feats = self.fused_features(x0, x1, t)?;
        Ok(self.decode(&feats, |l| &l.decoder, x0.layout.half_width))
    }

    /// Parameter groups in flattening order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![ParamId {
            kind: ParamKind::Omega,
            level: None,
        }];
        for i in 0..self.levels.len() {
            for kind in [
                ParamKind::GateWeight,
                ParamKind::GateBias,
                ParamKind::FgWeight,
                ParamKind::FgBias,
                ParamKind::FgTime,
                ParamKind::FgHead,
                ParamKind::BgWeight,
                ParamKind::Decoder,
            ] {
                ids.push(ParamId { kind, level: Some(i) });
            }
        }
        ids
    }

    pub fn param(&self, id: ParamId) -> &[f64] {
        let Some(i) = id.level else {
            return core::slice::from_ref(&self.omega);
        };
        let l = &self.levels[i];
        match id.kind {
            ParamKind::Omega => core::slice::from_ref(&self.omega),
            ParamKind::GateWeight => &l.gate.weight,
            ParamKind::GateBias => &l.gate.bias,
            ParamKind::FgWeight => &l.fg.weight,
            ParamKind::FgBias => &l.fg.bias,
            ParamKind::FgTime => &l.fg_time,
            ParamKind::FgHead => &l.fg_head.weight,
            ParamKind::BgWeight => &l.bg.weight,
            ParamKind::Decoder => &l.decoder.weight,
        }
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut [f64] {
        let Some(i) = id.level else {
            return core::slice::from_mut(&mut self.omega);
        };
        let l = &mut self.levels[i];
        match id.kind {
            ParamKind::Omega => core::slice::from_mut(&mut self.omega),
            ParamKind::GateWeight => &mut l.gate.weight,
            ParamKind::GateBias => &mut l.gate.bias,
            ParamKind::FgWeight => &mut l.fg.weight,
            ParamKind::FgBias => &mut l.fg.bias,
            ParamKind::FgTime => &mut l.fg_time,
            ParamKind::FgHead => &mut l.fg_head.weight,
            ParamKind::BgWeight => &mut l.bg.weight,
            ParamKind::Decoder => &mut l.decoder.weight,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.param_ids().iter().map(|&id| self.param(id).len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Linear::seeded(3, 5, &mut rng);
        let x = LatentTensor::gaussian(5, 2, 3, 2);
        let g = LatentTensor::gaussian(3, 2, 3, 3);
        let lhs: f64 = l.apply(&x).values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.values.iter().zip(&l.apply_transpose(&g).values).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn fresh_state_has_zero_gates() {
        let s = HarnessState::new(HarnessConfig::default()).unwrap();
        assert!(s.gates_are_zero());
        assert_eq!(s.levels.len(), 2);
        assert_eq!(s.levels[1].factor, 2);
        assert!(HarnessState::new(HarnessConfig {
            omega: 1.5,
            ..Default::default()
        })
        .is_err());
    }
}
