use super::mask::{check_spacing, BinaryMask};
use crate::Result;

/// Physical centres (mm) of the boundary voxels of one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    dim: usize,
    coords: Vec<f64>,
    flat: Vec<usize>,
}

impl SurfacePointSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Row-major voxel indices of the points.
    pub fn voxels(&self) -> &[usize] {
        &self.flat
    }
}

/// Foreground voxels with at least one background face neighbour, where
/// outside the image counts as background. Returns `None` for an empty mask.
pub fn extract_surface(mask: &BinaryMask, spacing: &[f64]) -> Result<Option<SurfacePointSet>> {
    let shape = mask.shape();
    check_spacing(shape, spacing)?;
    let dim = shape.len();
    let mut strides = vec![1; dim];
    for a in (0..dim - 1).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let data = mask.data();
    let mut idx = vec![0; dim];
    let mut set = SurfacePointSet {
        dim,
        coords: Vec::new(),
        flat: Vec::new(),
    };
    let mut any = false;
    for (flat, &fg) in data.iter().enumerate() {
        if !fg {
            continue;
        }
        any = true;
        mask.unravel(flat, &mut idx);
        let boundary = (0..dim).any(|a| {
            idx[a] == 0
                || idx[a] + 1 == shape[a]
                || !data[flat - strides[a]]
                || !data[flat + strides[a]]
        });
        if boundary {
            set.flat.push(flat);
            set.coords.extend(idx.iter().zip(spacing).map(|(&i, s)| i as f64 * s));
        }
    }
    Ok(any.then_some(set))
}

/// Squared distance to the lower envelope of parabolas rooted at `pos[i]`
/// with heights `f[i]`, evaluated at every `pos`; infinite heights are
/// ignored.
fn envelope_1d(f: &[f64], pos: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    z.push(f64::NEG_INFINITY);
                    v.push(q);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + pos[q] * pos[q]) - (f[p] + pos[p] * pos[p]))
                        / (2.0 * (pos[q] - pos[p]));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        z.push(s);
                        v.push(q);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < pos[q] {
            k += 1;
        }
        let d = pos[q] - pos[v[k]];
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (mm²) from every voxel to the nearest
/// site, separably along each axis.
pub(crate) fn squared_edt(sites: &[bool], shape: &[usize], spacing: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let dim = shape.len();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in 0..dim {
        let n = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let pos: Vec<f64> = (0..n).map(|i| i as f64 * spacing[axis]).collect();
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let outer = d.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = d[base + i * stride];
                }
                envelope_1d(&line, &pos, &mut out, &mut v, &mut z);
                for (i, &val) in out.iter().enumerate() {
                    d[base + i * stride] = val;
                }
            }
        }
    }
    d
}

/// Distances from each surface point of `from` to the nearest surface point
/// of `to`, in the order of `from`'s points.
fn directed(from: &SurfacePointSet, to: &SurfacePointSet, shape: &[usize], spacing: &[f64]) -> Vec<f64> {
    let mut sites = vec![false; shape.iter().product()];
    for &f in to.voxels() {
        sites[f] = true;
    }
    let d2 = squared_edt(&sites, shape, spacing);
    from.voxels().iter().map(|&f| d2[f].sqrt()).collect()
}

/// Both directed surface-distance lists, or `None` if either mask is empty.
pub fn surface_distances(
    pred: &BinaryMask,
    truth: &BinaryMask,
    spacing: &[f64],
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    pred.same_shape(truth)?;
    let (Some(a), Some(b)) = (extract_surface(pred, spacing)?, extract_surface(truth, spacing)?) else {
        return Ok(None);
    };
    let shape = pred.shape();
    Ok(Some((directed(&a, &b, shape, spacing), directed(&b, &a, shape, spacing))))
}

/// Nearest-rank percentile: the value of rank `ceil(p/100 · n)`.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// 95th-percentile Hausdorff distance (mm): the larger of the two directed
/// 95th percentiles. `None` when either mask is empty.
pub fn hd95(pred: &BinaryMask, truth: &BinaryMask, spacing: &[f64]) -> Result<Option<f64>> {
    Ok(surface_distances(pred, truth, spacing)?.map(|(ab, ba)| {
        let a = percentile_nearest_rank(&ab, 95.0).unwrap();
        let b = percentile_nearest_rank(&ba, 95.0).unwrap();
        a.max(b)
    }))
}

/// Average surface distance (mm): the mean of both directed distance lists
/// pooled together. `None` when either mask is empty.
pub fn asd(pred: &BinaryMask, truth: &BinaryMask, spacing: &[f64]) -> Result<Option<f64>> {
    Ok(surface_distances(pred, truth, spacing)?.map(|(ab, ba)| {
        let total: f64 = ab.iter().chain(&ba).sum();
        total / (ab.len() + ba.len()) as f64
    }))
}

/// Classic (100th percentile) symmetric Hausdorff distance.
pub fn hausdorff(pred: &BinaryMask, truth: &BinaryMask, spacing: &[f64]) -> Result<Option<f64>> {
    Ok(surface_distances(pred, truth, spacing)?
        .map(|(ab, ba)| ab.iter().chain(&ba).copied().fold(0.0, f64::max)))
}
