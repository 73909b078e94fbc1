use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

/// Named trainable maps, in a fixed order.
pub type Params = Vec<(String, FeatureMap)>;

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<FeatureMap>,
    second: Vec<FeatureMap>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    /// Completed update count.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[FeatureMap], &[FeatureMap]) {
        (&self.first, &self.second)
    }

    /// Applies one update. Returns `false`, leaving parameters and moments
    /// untouched, when any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<bool> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        for ((pn, p), (gn, g)) in params.iter().zip(grads) {
            if pn != gn || !p.same_dims(g) {
                return Err(Error::Shape(format!("gradient {gn} {:?} does not match parameter {pn} {:?}", g.dims(), p.dims())));
            }
        }
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            log::warn!("non-finite gradient for {name}; skipping step {}", self.step + 1);
            return Ok(false);
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|(_, p)| FeatureMap::zeros(p.height(), p.width(), p.channels())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, ((_, p), (_, g))) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.epsilon);
            }
        }
        Ok(true)
    }
}
