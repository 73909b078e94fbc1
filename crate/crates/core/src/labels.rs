use crate::error::{Error, Result};

/// Reserved id for pixels without supervision.
pub const UNLABELED: u8 = 255;

/// Per-pixel class ids, row-major. Superpixel ids can exceed the 8-bit range,
/// so ids are stored as `u32`; class maps use `0..class_count` plus
/// [`UNLABELED`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    ids: Vec<u32>,
}

impl LabelMap {
    pub fn filled(height: usize, width: usize, id: u32) -> Self {
        Self {
            height,
            width,
            ids: vec![id; height * width],
        }
    }

    pub fn unlabeled(height: usize, width: usize) -> Self {
        Self::filled(height, width, UNLABELED as u32)
    }

    pub fn from_vec(height: usize, width: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != height * width {
            return Err(Error::Shape(format!(
                "{} ids cannot fill a {}x{} label map",
                ids.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, ids })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let mut ids = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                ids.push(f(y, x));
            }
        }
        Self { height, width, ids }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn ids_mut(&mut self) -> &mut [u32] {
        &mut self.ids
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.ids[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, id: u32) {
        self.ids[y * self.width + x] = id;
    }

    #[inline]
    pub fn is_labeled(&self, y: usize, x: usize) -> bool {
        self.get(y, x) != UNLABELED as u32
    }

    pub fn unlabeled_fraction(&self) -> f64 {
        if self.ids.is_empty() {
            return 0.0;
        }
        let n = self.ids.iter().filter(|&&v| v == UNLABELED as u32).count();
        n as f64 / self.ids.len() as f64
    }

    /// Checks every id is a class below `class_count` or [`UNLABELED`].
    pub fn validate_classes(&self, class_count: usize) -> Result<()> {
        if let Some((i, &v)) = self
            .ids
            .iter()
            .enumerate()
            .find(|(_, &v)| v != UNLABELED as u32 && v as usize >= class_count)
        {
            return Err(Error::Data(format!(
                "label {v} at pixel ({}, {}) is not below class count {class_count}",
                i / self.width.max(1),
                i % self.width.max(1)
            )));
        }
        Ok(())
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "label maps differ in size: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Number of distinct ids present.
    pub fn distinct(&self) -> usize {
        let mut v = self.ids.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}
