//! The asymmetric detection head: per-level 1x1 detection convolutions whose
//! outputs branch through identity / (1,2) pooling / (2,1) pooling, emitting
//! nine prediction maps, each paired with the anchor that decodes it. The
//! baseline three-map head is kept alongside for A/B comparison.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchors::{new_anchor_set, original_anchor_set, AnchorSpec, Level, PREDICTION_CHANNELS};
use crate::boxes::ShapeClass;
use crate::error::{Error, Result};
use crate::tensor::{avg_pool, conv1x1, Matrix, Tensor};

/// Which head architecture to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadVariant {
    /// Baseline: one conv per level with three anchors sharing 255 channels.
    Original,
    /// Asymmetric: one 85-channel conv per level, three pooling branches.
    Asym,
}

impl HeadVariant {
    pub fn output_channels(self) -> usize {
        match self {
            HeadVariant::Original => 3 * PREDICTION_CHANNELS,
            HeadVariant::Asym => PREDICTION_CHANNELS,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            HeadVariant::Original => "original",
            HeadVariant::Asym => "asym",
        }
    }

    pub fn from_tag(tag: &str) -> Option<HeadVariant> {
        match tag {
            "original" => Some(HeadVariant::Original),
            "asym" => Some(HeadVariant::Asym),
            _ => None,
        }
    }
}

/// Detection convolution of one level.
#[derive(Debug, Clone)]
pub struct LevelConv {
    pub level: Level,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LevelConv {
    /// Learnable parameter count of this convolution.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// The three neck feature maps the head consumes.
#[derive(Debug, Clone)]
pub struct NeckMaps {
    pub p3: Tensor,
    pub p4: Tensor,
    pub p5: Tensor,
}

impl NeckMaps {
    pub fn by_level(&self, level: Level) -> &Tensor {
        match level {
            Level::P3 => &self.p3,
            Level::P4 => &self.p4,
            Level::P5 => &self.p5,
        }
    }

    /// Loads `neck_p3.ast`, `neck_p4.ast`, `neck_p5.ast` from a fixture dir.
    pub fn load(dir: &Path) -> Result<NeckMaps> {
        Ok(NeckMaps {
            p3: Tensor::load(&dir.join("neck_p3.ast"))?,
            p4: Tensor::load(&dir.join("neck_p4.ast"))?,
            p5: Tensor::load(&dir.join("neck_p5.ast"))?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.p3.save(&dir.join("neck_p3.ast"))?;
        self.p4.save(&dir.join("neck_p4.ast"))?;
        self.p5.save(&dir.join("neck_p5.ast"))?;
        Ok(())
    }
}

/// Head weights, anchor set, and input geometry.
#[derive(Debug, Clone)]
pub struct HeadConfig {
    pub input_size: u32,
    pub variant: HeadVariant,
    /// Convolutions in `Level::ALL` order (P3, P4, P5).
    convs: Vec<LevelConv>,
    /// The anchor set this head decodes against: the nine-anchor set for the
    /// asymmetric variant, the baseline three-per-level set otherwise.
    anchors: Vec<AnchorSpec>,
}

impl HeadConfig {
    pub fn new(
        input_size: u32,
        variant: HeadVariant,
        convs: Vec<LevelConv>,
        anchors: Vec<AnchorSpec>,
    ) -> Result<Self> {
        for level in Level::ALL {
            if input_size == 0 || !input_size.is_multiple_of(level.stride()) {
                return Err(Error::Config(format!(
                    "input size {input_size} is not divisible by stride {}",
                    level.stride()
                )));
            }
        }
        if convs.len() != 3 || convs.iter().map(|c| c.level).collect::<Vec<_>>() != Level::ALL {
            return Err(Error::Config(
                "head needs exactly one convolution per level, in (P3, P4, P5) order".into(),
            ));
        }
        for conv in &convs {
            let want_out = variant.output_channels();
            if conv.weights.rows() != want_out
                || conv.weights.cols() != conv.level.neck_channels()
                || conv.bias.len() != want_out
            {
                return Err(Error::shape(
                    format!("{} detection convolution", conv.level),
                    format!("{}x{} weights", want_out, conv.level.neck_channels()),
                    format!("{}x{} weights", conv.weights.rows(), conv.weights.cols()),
                ));
            }
        }
        if anchors.len() != 9 {
            return Err(Error::Config(format!(
                "head needs 9 anchors, got {}",
                anchors.len()
            )));
        }
        if variant == HeadVariant::Asym {
            let mut pairs: Vec<(Level, ShapeClass)> =
                anchors.iter().map(|a| (a.level, a.branch)).collect();
            pairs.sort();
            pairs.dedup();
            if pairs.len() != 9 {
                return Err(Error::Config(
                    "asymmetric head needs one anchor per (level, branch) pair".into(),
                ));
            }
        } else {
            for level in Level::ALL {
                let n = anchors.iter().filter(|a| a.level == level).count();
                if n != 3 {
                    return Err(Error::Config(format!(
                        "baseline head needs 3 anchors at {level}, got {n}"
                    )));
                }
            }
        }
        Ok(HeadConfig {
            input_size,
            variant,
            convs,
            anchors,
        })
    }

    /// Randomly initialized head: weights and biases drawn from
    /// `uniform(-k, k)` with `k = 1/sqrt(fan_in)`, from a seeded stream, so
    /// the same seed always yields the same head.
    pub fn seeded(seed: u64, variant: HeadVariant, input_size: u32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = variant.output_channels();
        let convs = Level::ALL
            .iter()
            .map(|&level| {
                let fan_in = level.neck_channels();
                let k = 1.0 / (fan_in as f64).sqrt();
                let weights = Matrix::new(
                    out,
                    fan_in,
                    (0..out * fan_in).map(|_| rng.random_range(-k..k)).collect(),
                )?;
                let bias = (0..out).map(|_| rng.random_range(-k..k)).collect();
                Ok(LevelConv {
                    level,
                    weights,
                    bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HeadConfig::new(input_size, variant, convs, Self::default_anchors(variant))
    }

    /// All-zero head; useful for fixtures with a known decode result.
    pub fn zeros(variant: HeadVariant, input_size: u32) -> Result<Self> {
        let out = variant.output_channels();
        let convs = Level::ALL
            .iter()
            .map(|&level| {
                Ok(LevelConv {
                    level,
                    weights: Matrix::zeros(out, level.neck_channels())?,
                    bias: vec![0.0; out],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HeadConfig::new(input_size, variant, convs, Self::default_anchors(variant))
    }

    fn default_anchors(variant: HeadVariant) -> Vec<AnchorSpec> {
        match variant {
            HeadVariant::Asym => new_anchor_set(),
            HeadVariant::Original => original_anchor_set(),
        }
    }

    pub fn convs(&self) -> &[LevelConv] {
        &self.convs
    }

    pub fn conv(&self, level: Level) -> &LevelConv {
        self.convs
            .iter()
            .find(|c| c.level == level)
            .expect("one conv per level by construction")
    }

    pub fn anchors(&self) -> &[AnchorSpec] {
        &self.anchors
    }

    fn anchor_for(&self, level: Level, branch: ShapeClass) -> AnchorSpec {
        *self
            .anchors
            .iter()
            .find(|a| a.level == level && a.branch == branch)
            .expect("asym anchor set covers every (level, branch) pair")
    }

    /// Anchors of one level in their listing order (baseline variant).
    fn level_anchors(&self, level: Level) -> [AnchorSpec; 3] {
        let v: Vec<AnchorSpec> = self
            .anchors
            .iter()
            .filter(|a| a.level == level)
            .copied()
            .collect();
        [v[0], v[1], v[2]]
    }

    /// Total learnable parameters of the head. Only the detection
    /// convolutions carry parameters; every pooling branch contributes the
    /// explicit zero accounted for here.
    pub fn parameter_count(&self) -> usize {
        let conv_params: usize = self.convs.iter().map(LevelConv::parameter_count).sum();
        let pooling_params: usize = match self.variant {
            HeadVariant::Original => 0,
            // two pooled branches per level, zero parameters each
            HeadVariant::Asym => Level::ALL
                .iter()
                .map(|_| pooling_parameter_count((1, 2)) + pooling_parameter_count((2, 1)))
                .sum(),
        };
        conv_params + pooling_params
    }

    fn weight_paths(&self, dir: &Path, level: Level) -> (std::path::PathBuf, std::path::PathBuf) {
        let infix = match self.variant {
            HeadVariant::Asym => String::new(),
            HeadVariant::Original => "orig_".to_string(),
        };
        (
            dir.join(format!("head_w_{infix}{}.ast", level.tag())),
            dir.join(format!("head_b_{infix}{}.ast", level.tag())),
        )
    }

    /// Writes `head_w_<level>.ast` / `head_b_<level>.ast` fixtures (the
    /// baseline variant uses an `orig_` infix so both sets can coexist).
    pub fn save_fixtures(&self, dir: &Path) -> Result<()> {
        for conv in &self.convs {
            let (w_path, b_path) = self.weight_paths(dir, conv.level);
            let w = Tensor::new(
                conv.weights.rows(),
                conv.weights.cols(),
                1,
                conv.weights.data().to_vec(),
            )?;
            w.save(&w_path)?;
            let b = Tensor::new(conv.bias.len(), 1, 1, conv.bias.clone())?;
            b.save(&b_path)?;
        }
        Ok(())
    }

    /// Loads head weights written by [`HeadConfig::save_fixtures`].
    pub fn load_fixtures(dir: &Path, variant: HeadVariant, input_size: u32) -> Result<Self> {
        let infix = match variant {
            HeadVariant::Asym => "",
            HeadVariant::Original => "orig_",
        };
        let convs = Level::ALL
            .iter()
            .map(|&level| {
                let w = Tensor::load(&dir.join(format!("head_w_{infix}{}.ast", level.tag())))?;
                let b = Tensor::load(&dir.join(format!("head_b_{infix}{}.ast", level.tag())))?;
                let weights = Matrix::new(w.channels(), w.height(), w.data().to_vec())?;
                Ok(LevelConv {
                    level,
                    weights,
                    bias: b.data().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HeadConfig::new(input_size, variant, convs, Self::default_anchors(variant))
    }
}

/// Average pooling is parameter-free; kept explicit so head parameter
/// accounting names every stage.
pub fn pooling_parameter_count(_kernel: (usize, usize)) -> usize {
    0
}

/// The nine prediction maps of the asymmetric head, each paired with its
/// anchor, ordered (P5 square, P5 wide, P5 tall, P4 ..., P3 ...).
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub maps: Vec<(Tensor, AnchorSpec)>,
}

fn check_neck_shape(level: Level, map: &Tensor, input_size: u32) -> Result<()> {
    let side = (input_size / level.stride()) as usize;
    let want = (level.neck_channels(), side, side);
    if map.shape() != want {
        return Err(Error::shape(
            format!("{level} neck map"),
            format!("{}x{}x{}", want.0, want.1, want.2),
            format!("{}x{}x{}", map.shape().0, map.shape().1, map.shape().2),
        ));
    }
    Ok(())
}

/// Runs the asymmetric head: per level, one 85-channel 1x1 convolution whose
/// output is emitted unpooled (square branch) and through (1,2) / (2,1)
/// average pooling (wide / tall branches).
pub fn run_head(neck: &NeckMaps, config: &HeadConfig) -> Result<HeadOutput> {
    if config.variant != HeadVariant::Asym {
        return Err(Error::Config(
            "run_head requires an asymmetric-variant config".into(),
        ));
    }
    let mut maps = Vec::with_capacity(9);
    for level in [Level::P5, Level::P4, Level::P3] {
        let x = neck.by_level(level);
        check_neck_shape(level, x, config.input_size)?;
        let conv = config.conv(level);
        let y = conv1x1(x, &conv.weights, &conv.bias)?;
        let wide = avg_pool(&y, (1, 2), (1, 1))?;
        let tall = avg_pool(&y, (2, 1), (1, 1))?;
        maps.push((y, config.anchor_for(level, ShapeClass::Square)));
        maps.push((wide, config.anchor_for(level, ShapeClass::Wide)));
        maps.push((tall, config.anchor_for(level, ShapeClass::Tall)));
    }
    Ok(HeadOutput { maps })
}

/// Runs the baseline head: one 255-channel convolution per level, no
/// pooling; returns each map with its three anchors in listing order
/// (channels `[85k, 85(k+1))` decode against anchor `k`). Ordered P5 first.
pub fn run_original_head(
    neck: &NeckMaps,
    config: &HeadConfig,
) -> Result<Vec<(Tensor, [AnchorSpec; 3])>> {
    if config.variant != HeadVariant::Original {
        return Err(Error::Config(
            "run_original_head requires an original-variant config".into(),
        ));
    }
    let mut out = Vec::with_capacity(3);
    for level in [Level::P5, Level::P4, Level::P3] {
        let x = neck.by_level(level);
        check_neck_shape(level, x, config.input_size)?;
        let conv = config.conv(level);
        let y = conv1x1(x, &conv.weights, &conv.bias)?;
        out.push((y, config.level_anchors(level)));
    }
    Ok(out)
}

/// Seeded synthetic neck maps shaped for the given input size. Raw values
/// are passed through SiLU, mirroring the activation the real network ends
/// with, so fixtures have a realistic value distribution.
pub fn synthetic_neck_maps(rng: &mut ChaCha8Rng, input_size: u32) -> Result<NeckMaps> {
    let mut level_map = |level: Level| -> Result<Tensor> {
        let side = (input_size / level.stride()) as usize;
        let raw = Tensor::from_fn(level.neck_channels(), side, side, |_, _, _| {
            rng.random_range(-3.0..3.0)
        })?;
        Ok(crate::tensor::silu(&raw))
    };
    let p3 = level_map(Level::P3)?;
    let p4 = level_map(Level::P4)?;
    let p5 = level_map(Level::P5)?;
    Ok(NeckMaps { p3, p4, p5 })
}
