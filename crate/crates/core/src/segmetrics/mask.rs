use crate::{Error, Result};

fn check_shape(shape: &[usize]) -> Result<usize> {
    if !(2..=3).contains(&shape.len()) || shape.contains(&0) {
        return Err(Error::invalid(format!("masks are 2D or 3D and non-empty, got shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

pub(crate) fn check_spacing(shape: &[usize], spacing: &[f64]) -> Result<()> {
    if spacing.len() != shape.len() {
        return Err(Error::invalid(format!(
            "spacing has {} components for a {}-D mask",
            spacing.len(),
            shape.len()
        )));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing:?}")));
    }
    Ok(())
}

/// Integer label image with physical voxel spacing (mm), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    shape: Vec<usize>,
    labels: Vec<u8>,
    spacing: Vec<f64>,
    num_classes: u8,
}

impl LabelMask {
    pub fn new(shape: &[usize], labels: Vec<u8>, spacing: &[f64], num_classes: u8) -> Result<Self> {
        let len = check_shape(shape)?;
        check_spacing(shape, spacing)?;
        if labels.len() != len {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} labels, got {}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!("label {bad} is outside 0..{num_classes}")));
        }
        Ok(LabelMask {
            shape: shape.to_vec(),
            labels,
            spacing: spacing.to_vec(),
            num_classes,
        })
    }

    /// Unit spacing.
    pub fn isotropic(shape: &[usize], labels: Vec<u8>, num_classes: u8) -> Result<Self> {
        Self::new(shape, labels, &vec![1.0; shape.len()], num_classes)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn num_classes(&self) -> u8 {
        self.num_classes
    }

    /// Foreground where the label is one of `set`.
    pub fn select(&self, set: &[u8]) -> BinaryMask {
        BinaryMask {
            shape: self.shape.clone(),
            data: self.labels.iter().map(|l| set.contains(l)).collect(),
        }
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Foreground/background image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Vec<usize>,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: &[usize], data: Vec<bool>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} voxels, got {}",
                data.len()
            )));
        }
        Ok(BinaryMask {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn empty(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Self::new(shape, vec![false; len])
    }

    /// Marks the voxels at the given multi-indices.
    pub fn from_indices(shape: &[usize], indices: &[&[usize]]) -> Result<Self> {
        let mut m = Self::empty(shape)?;
        for idx in indices {
            let flat = m.flat_index(idx)?;
            m.data[flat] = true;
        }
        Ok(m)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() || idx.iter().zip(&self.shape).any(|(i, n)| i >= n) {
            return Err(Error::invalid(format!("index {idx:?} outside shape {:?}", self.shape)));
        }
        Ok(idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i))
    }

    pub(crate) fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for (o, &n) in out.iter_mut().zip(&self.shape).rev() {
            *o = flat % n;
            flat /= n;
        }
    }

    pub(crate) fn same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "mask shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// `2|A∩B| / (|A|+|B|)`, and 1 when both masks are empty.
pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    pred.same_shape(truth)?;
    let inter = pred.data.iter().zip(&truth.data).filter(|(a, b)| **a && **b).count();
    let total = pred.count() + truth.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}
