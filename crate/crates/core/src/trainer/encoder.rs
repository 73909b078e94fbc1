use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpixel::SeedGrid;
use crate::tape::{NodeId, Tape, TapePyramid};
use crate::tensor::FeatureMap;

use super::adam::Params;

/// Architecture of [`ToyEncoder`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Channel width per level; the level count is the length.
    pub widths: Vec<usize>,
    pub classes: usize,
    /// Width of the pixel and seed embeddings fed to the assignment heads.
    pub embed: usize,
    /// Number of assignment levels, counted from the coarsest, that get a
    /// learned head. The others use a fixed spatial assignment.
    pub learned_levels: usize,
    /// Softmax temperature of the assignments.
    pub temperature: f64,
}

impl EncoderConfig {
    pub fn new(classes: usize) -> Self {
        Self {
            widths: vec![8, 16, 32],
            classes,
            embed: 8,
            learned_levels: 2,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Parameter(format!("invalid level widths {:?}", self.widths)));
        }
        if self.classes < 2 || self.classes > 255 {
            return Err(Error::Parameter(format!("class count must be in 2..=255, got {}", self.classes)));
        }
        if self.embed == 0 {
            return Err(Error::Parameter("embedding width must be positive".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Output of a forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Class scores decoded to full resolution.
    pub logits: NodeId,
    /// Class scores on the coarsest grid.
    pub coarse: NodeId,
    pub pyramid: TapePyramid,
}

/// A small fully convolutional encoder whose class scores are decoded to
/// full resolution through a pyramid of soft superpixel assignments.
///
/// Level `l` applies a 3×3 conv block, then a stride-2 conv block that
/// produces the seed features of level `l + 1`. Learned assignment heads embed
/// pixel and seed features with 1×1 convs and assign by embedding distance.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEncoder {
    config: EncoderConfig,
    names: Vec<String>,
    shapes: Vec<(usize, usize, usize)>,
}

impl ToyEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut add = |n: String, s| {
            names.push(n);
            shapes.push(s);
        };
        let w = &config.widths;
        let levels = w.len();
        for l in 0..levels {
            let input = if l == 0 { 3 } else { w[l] };
            add(format!("g{l}.w"), (3, 3, w[l] * input));
            add(format!("g{l}.b"), (1, 1, w[l]));
            if l + 1 < levels {
                add(format!("d{l}.w"), (3, 3, w[l + 1] * w[l]));
                add(format!("d{l}.b"), (1, 1, w[l + 1]));
                if l + config.learned_levels >= levels - 1 {
                    let e = config.embed;
                    add(format!("a{l}.pixel.w"), (1, 1, e * w[l]));
                    add(format!("a{l}.pixel.b"), (1, 1, e));
                    add(format!("a{l}.seed.w"), (1, 1, e * w[l + 1]));
                    add(format!("a{l}.seed.b"), (1, 1, e));
                }
            }
        }
        add("phi.w".into(), (1, 1, config.classes * w[levels - 1]));
        add("phi.b".into(), (1, 1, config.classes));
        Ok(Self { config, names, shapes })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn levels(&self) -> usize {
        self.config.widths.len()
    }

    /// Ratio between the input size and the coarsest grid.
    pub fn stride(&self) -> usize {
        1 << (self.levels() - 1)
    }

    /// Parameter names in registration order.
    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_shapes(&self) -> &[(usize, usize, usize)] {
        &self.shapes
    }

    fn is_learned(&self, level: usize) -> bool {
        level + self.config.learned_levels >= self.levels() - 1
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`) and zero biases.
    pub fn init(&self, seed: u64) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.names
            .iter()
            .zip(&self.shapes)
            .map(|(name, &(h, w, c))| {
                let mut v = FeatureMap::zeros(h, w, c);
                if name.ends_with(".w") {
                    let out = self.output_width(name);
                    let fan_in = h * w * c / out;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for x in v.data_mut() {
                        *x = rng.random_range(-bound..bound);
                    }
                }
                (name.clone(), v)
            })
            .collect()
    }

    fn output_width(&self, weight: &str) -> usize {
        let bias = weight.replace(".w", ".b");
        let i = self.names.iter().position(|n| *n == bias).expect("every weight has a bias");
        self.shapes[i].2
    }

    /// Checks that `params` match this architecture by name and shape.
    pub fn check_params(&self, params: &Params) -> Result<()> {
        if params.len() != self.names.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.names.len(), params.len())));
        }
        for ((name, v), (n, s)) in params.iter().zip(self.names.iter().zip(&self.shapes)) {
            if name != n || v.dims() != *s {
                return Err(Error::Shape(format!("parameter {name} {:?} where {n} {s:?} was expected", v.dims())));
            }
        }
        Ok(())
    }

    /// Input must be a non-empty sRGB image whose sides are multiples of
    /// [`ToyEncoder::stride`].
    pub fn check_input(&self, image: &FeatureMap) -> Result<()> {
        let (h, w, c) = image.dims();
        if c != 3 {
            return Err(Error::Shape(format!("encoder input needs 3 channels, got {c}")));
        }
        let s = self.stride();
        if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
            return Err(Error::Data(format!("image size {h}x{w} is not a positive multiple of {s}")));
        }
        Ok(())
    }

    /// Registers `params` on `tape` in order.
    pub fn register(&self, tape: &mut Tape, params: &Params) -> Result<Vec<NodeId>> {
        self.check_params(params)?;
        Ok(params.iter().map(|(n, v)| tape.parameter(n.clone(), v.clone())).collect())
    }

    /// Builds the forward graph; `ids` are the parameter nodes in
    /// [`ToyEncoder::param_names`] order.
    pub fn forward(&self, tape: &mut Tape, ids: &[NodeId], image: &FeatureMap) -> Result<Forward> {
        self.check_input(image)?;
        if ids.len() != self.names.len() {
            return Err(Error::Shape(format!("expected {} parameter nodes, got {}", self.names.len(), ids.len())));
        }
        let p = |name: &str| ids[self.names.iter().position(|n| n == name).expect("known parameter")];
        let x = tape.constant(image.map(|v| v - 0.5));
        let mut f = self.block(tape, x, p("g0.w"), p("g0.b"), 1, true)?;
        let mut pyramid = TapePyramid::new();
        let (mut h, mut w) = (image.height(), image.width());
        for l in 0..self.levels() - 1 {
            let s = self.block(tape, f, p(&format!("d{l}.w")), p(&format!("d{l}.b")), 2, true)?;
            let grid = SeedGrid::for_level(h, w);
            let weights = if self.is_learned(l) {
                let pe = self.block(tape, f, p(&format!("a{l}.pixel.w")), p(&format!("a{l}.pixel.b")), 1, false)?;
                let se = self.block(tape, s, p(&format!("a{l}.seed.w")), p(&format!("a{l}.seed.b")), 1, false)?;
                tape.soft_assign(pe, se, &grid, self.config.temperature)?
            } else {
                spatial_assignment(tape, &grid, self.config.temperature)?
            };
            pyramid.push(grid, weights);
            f = self.block(tape, s, p(&format!("g{}.w", l + 1)), p(&format!("g{}.b", l + 1)), 1, true)?;
            (h, w) = (grid.seed_height, grid.seed_width);
        }
        let coarse = self.block(tape, f, p("phi.w"), p("phi.b"), 1, false)?;
        let logits = tape.decode(coarse, &pyramid)?;
        Ok(Forward { logits, coarse, pyramid })
    }

    fn block(&self, tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId, stride: usize, relu: bool) -> Result<NodeId> {
        let pad = tape.value(w).height() / 2;
        let c = tape.conv2d(x, w, stride, pad)?;
        let c = tape.add_bias(c, b)?;
        Ok(if relu { tape.relu(c) } else { c })
    }
}

// Assignment by distance between pixel centres and seed-cell centres.
fn spatial_assignment(tape: &mut Tape, grid: &SeedGrid, temperature: f64) -> Result<NodeId> {
    let px = FeatureMap::from_fn(grid.pixel_height, grid.pixel_width, 2, |y, x, c| {
        if c == 0 {
            y as f64 + 0.5
        } else {
            x as f64 + 0.5
        }
    });
    let seeds = FeatureMap::from_fn(grid.seed_height, grid.seed_width, 2, |y, x, c| {
        2.0 * if c == 0 { y as f64 } else { x as f64 } + 1.0
    });
    let (a, b) = (tape.constant(px), tape.constant(seeds));
    tape.soft_assign(a, b, grid, temperature)
}
