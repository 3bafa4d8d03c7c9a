use std::fmt::{Debug, Display};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::path::Path;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::{Error, Result};

/// Floating-point element type of a [`Tensor`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Byte width, also the TSR1 precision flag.
    const BYTES: u8;

    /// `c ← alpha·a·b + beta·c` for an `m×k` by `k×n` product with explicit
    /// row and column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_scalar {
    ($t:ty, $bytes:expr, $gemm:path) => {
        impl Scalar for $t {
            const BYTES: u8 = $bytes;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                (rsa, csa): (usize, usize),
                b: &[Self],
                (rsb, csb): (usize, usize),
                beta: Self,
                c: &mut [Self],
                (rsc, csc): (usize, usize),
            ) {
                assert!(span(m, k, rsa, csa) <= a.len(), "gemm: a too short");
                assert!(span(k, n, rsb, csb) <= b.len(), "gemm: b too short");
                assert!(span(m, n, rsc, csc) <= c.len(), "gemm: c too short");
                // SAFETY: the asserts above keep every strided access in bounds.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    )
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("scalar width"))
            }
        }
    };
}

impl_scalar!(f32, 4, matrixmultiply::sgemm);
impl_scalar!(f64, 8, matrixmultiply::dgemm);

/// Dense row-major array. Image tensors use the (batch, channels, height,
/// width) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("invalid tensor shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![value; len]).expect("valid shape")
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Self::new(shape, (0..len).map(&mut f).collect()).expect("valid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// (n, c, h, w) of a 4-D tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::invalid(format!("expected a 4-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    /// Encodes the tensor in the TSR1 format: magic `TSR1`, a precision byte
    /// (4 or 8), a rank byte, the dimensions as little-endian `u32`, then the
    /// row-major little-endian payload.
    pub fn to_tsr1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.shape.len() + self.data.len() * T::BYTES as usize);
        out.extend_from_slice(b"TSR1");
        out.push(T::BYTES);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn write_tsr1<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_tsr1_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        self.write_tsr1(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a TSR1 file of either precision, converting to `T`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_tsr1_bytes(&bytes).map_err(|e| match e {
            Error::InvalidArgument(reason) => Error::Format {
                what: "TSR1",
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_tsr1_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::invalid(m.to_string());
        if bytes.len() < 6 || &bytes[..4] != b"TSR1" {
            return Err(err("missing TSR1 magic"));
        }
        let precision = bytes[4];
        let ndim = bytes[5] as usize;
        let header = 6 + 4 * ndim;
        if bytes.len() < header {
            return Err(err("truncated header"));
        }
        let shape: Vec<usize> = bytes[6..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let len: usize = shape.iter().product();
        let payload = &bytes[header..];
        if payload.len() != len * precision as usize {
            return Err(err("payload length does not match the shape"));
        }
        match precision {
            4 => Tensor::<f32>::new(
                &shape,
                payload.chunks_exact(4).map(f32::read_le).collect(),
            )
            .map(|t| t.cast()),
            8 => Tensor::<f64>::new(
                &shape,
                payload.chunks_exact(8).map(f64::read_le).collect(),
            )
            .map(|t| t.cast()),
            p => Err(err(&format!("unknown precision flag {p}"))),
        }
    }
}
