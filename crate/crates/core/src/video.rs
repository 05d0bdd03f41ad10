//! Frame, video and mask containers.
//!
//! Frames are stored column-major, so the length-`mn` vectorization of a frame
//! is its raw storage slice. A video of `p` frames is an `mn x p` matrix whose
//! column `k` is frame `k`; pixel `(i, j)` of frame `k` sits at row `i + m*j`
//! (0-based).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A single grayscale frame with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    data: DMatrix<f64>,
}

impl Frame {
    /// Build a frame from a `height x width` matrix, clamping into `[0, 1]`.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Dimension("frame must be at least 1x1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("frame contains non-finite intensities".into()));
        }
        Ok(Frame {
            data: data.map(|v| v.clamp(0.0, 1.0)),
        })
    }

    /// Build a frame from row-major intensities, which is how images are laid out on disk.
    pub fn from_row_major(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "expected {} intensities for {height}x{width}, got {}",
                height * width,
                values.len()
            )));
        }
        Frame::new(DMatrix::from_row_slice(height, width, values))
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Frame::new(DMatrix::from_element(height, width, value))
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// An `m x n x p` stack of frames held as its `mn x p` matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    m: usize,
    n: usize,
    data: DMatrix<f64>,
}

impl VideoTensor {
    pub fn zeros(m: usize, n: usize, p: usize) -> Self {
        VideoTensor {
            m,
            n,
            data: DMatrix::zeros(m * n, p),
        }
    }

    /// Wrap an `mn x p` matrix as a video with `m x n` frames.
    pub fn from_matrix(m: usize, n: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != m * n {
            return Err(Error::Dimension(format!(
                "matrix has {} rows, expected m*n = {}",
                data.nrows(),
                m * n
            )));
        }
        Ok(VideoTensor { m, n, data })
    }

    /// Stack equally sized frame planes (any real values) into a video.
    pub fn from_planes(planes: &[DMatrix<f64>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Dimension("video needs at least one frame".into()))?;
        let (m, n) = first.shape();
        let mut data = DMatrix::zeros(m * n, planes.len());
        for (k, plane) in planes.iter().enumerate() {
            if plane.shape() != (m, n) {
                return Err(Error::Dimension(format!(
                    "frame {k} is {:?}, expected {:?}",
                    plane.shape(),
                    (m, n)
                )));
            }
            data.column_mut(k).copy_from_slice(plane.as_slice());
        }
        Ok(VideoTensor { m, n, data })
    }

    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let planes: Vec<DMatrix<f64>> = frames.iter().map(|f| f.as_matrix().clone()).collect();
        VideoTensor::from_planes(&planes)
    }

    pub fn height(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.data.ncols())
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i + self.m * j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i + self.m * j, k)] = value;
    }

    /// Frame `k` as an `m x n` matrix.
    pub fn plane(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.m, self.n, self.data.column(k).as_slice())
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Flattened `mnp` vector (frame-major, column-major within frames).
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }
}

/// Column-stack each frame and place frame `k` in column `k`.
pub fn vec_video(v: &VideoTensor) -> DMatrix<f64> {
    v.data.clone()
}

/// Inverse of [`vec_video`].
pub fn unvec_video(x: &DMatrix<f64>, m: usize, n: usize) -> Result<VideoTensor> {
    VideoTensor::from_matrix(m, n, x.clone())
}

/// Binary observation mask with the same layout as [`VideoTensor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTensor {
    m: usize,
    n: usize,
    p: usize,
    data: Vec<bool>,
}

impl MaskTensor {
    pub fn all_ones(m: usize, n: usize, p: usize) -> Self {
        MaskTensor {
            m,
            n,
            p,
            data: vec![true; m * n * p],
        }
    }

    pub fn all_zeros(m: usize, n: usize, p: usize) -> Self {
        MaskTensor {
            m,
            n,
            p,
            data: vec![false; m * n * p],
        }
    }

    /// Build from flattened entries in video order.
    pub fn from_vec(m: usize, n: usize, p: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != m * n * p {
            return Err(Error::Dimension(format!(
                "mask has {} entries, expected {}",
                data.len(),
                m * n * p
            )));
        }
        Ok(MaskTensor { m, n, p, data })
    }

    /// Build from an `mn x p` matrix whose entries must be exactly 0 or 1.
    pub fn from_matrix(m: usize, n: usize, x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != m * n {
            return Err(Error::Dimension(format!(
                "mask matrix has {} rows, expected {}",
                x.nrows(),
                m * n
            )));
        }
        let mut data = Vec::with_capacity(x.len());
        for &v in x.iter() {
            if v == 1.0 {
                data.push(true);
            } else if v == 0.0 {
                data.push(false);
            } else {
                return Err(Error::Argument(format!("mask entry {v} is not binary")));
            }
        }
        Ok(MaskTensor {
            m,
            n,
            p: x.ncols(),
            data,
        })
    }

    /// Stack per-frame `m x n` masks given column-major.
    pub fn from_frame_masks(m: usize, n: usize, frames: &[Vec<bool>]) -> Result<Self> {
        let mut data = Vec::with_capacity(m * n * frames.len());
        for (k, f) in frames.iter().enumerate() {
            if f.len() != m * n {
                return Err(Error::Dimension(format!(
                    "mask frame {k} has {} entries, expected {}",
                    f.len(),
                    m * n
                )));
            }
            data.extend_from_slice(f);
        }
        MaskTensor::from_vec(m, n, frames.len(), data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.p)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[i + self.m * j + self.m * self.n * k]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Entries of frame `k` in column-major order.
    pub fn frame(&self, k: usize) -> &[bool] {
        let mn = self.m * self.n;
        &self.data[k * mn..(k + 1) * mn]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    /// Rows (pixel locations) observed in at least one frame.
    pub fn observed_rows(&self) -> Vec<bool> {
        let mn = self.m * self.n;
        let mut rows = vec![false; mn];
        for k in 0..self.p {
            for (r, &b) in rows.iter_mut().zip(self.frame(k)) {
                *r |= b;
            }
        }
        rows
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.m * self.n,
            self.p,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        )
    }

    /// Zero the unobserved entries of `x` in place.
    pub fn apply_in_place(&self, x: &mut DMatrix<f64>) {
        debug_assert_eq!(x.len(), self.data.len());
        for (v, &b) in x.iter_mut().zip(&self.data) {
            if !b {
                *v = 0.0;
            }
        }
    }

    fn check_shape(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.m * self.n || x.ncols() != self.p {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, mask is {}x{}",
                x.nrows(),
                x.ncols(),
                self.m * self.n,
                self.p
            )));
        }
        Ok(())
    }
}

/// Orthogonal projection onto the observed entries.
pub fn project_mask(x: &DMatrix<f64>, mask: &MaskTensor) -> Result<DMatrix<f64>> {
    mask.check_shape(x)?;
    let mut out = x.clone();
    mask.apply_in_place(&mut out);
    Ok(out)
}

/// Projection onto the unobserved entries.
pub fn complement_project(x: &DMatrix<f64>, mask: &MaskTensor) -> Result<DMatrix<f64>> {
    mask.check_shape(x)?;
    let mut out = x.clone();
    for (v, &b) in out.iter_mut().zip(&mask.data) {
        if b {
            *v = 0.0;
        }
    }
    Ok(out)
}
