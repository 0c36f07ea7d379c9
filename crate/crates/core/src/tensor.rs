//! Dense small-tensor kernels.
//!
//! Tensors are stored row-major in one flat buffer. There are two scalar modes:
//! `ExactInt` holds `i64` counts and never rounds, `Float` holds `f64` and is
//! the only mode the SVD accepts. Pairwise contraction is always
//! permute, reshape to a matrix, then a dense matrix product, so the cost of
//! every step is the `I*J*K` of that product.

use std::fmt;
use std::ops::{Add, Mul};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ScalarMode {
    ExactInt,
    Float,
}

/// Ordered list of axis dimensions. The empty shape is a scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, serde::Serialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Input(format!("zero-sized axis in shape {dims:?}")));
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn num_elements(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Exact(Vec<i64>),
    Float(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Storage,
}

impl DenseTensor {
    pub fn from_exact(dims: Vec<usize>, data: Vec<i64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        check_len(&shape, data.len())?;
        Ok(DenseTensor {
            shape,
            data: Storage::Exact(data),
        })
    }

    pub fn from_float(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        check_len(&shape, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite element in float tensor".into()));
        }
        Ok(DenseTensor {
            shape,
            data: Storage::Float(data),
        })
    }

    pub fn zeros(dims: Vec<usize>, mode: ScalarMode) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let len = shape.num_elements();
        let data = match mode {
            ScalarMode::ExactInt => Storage::Exact(vec![0; len]),
            ScalarMode::Float => Storage::Float(vec![0.0; len]),
        };
        Ok(DenseTensor { shape, data })
    }

    /// Exact tensor whose entries are given by `f` at every multi-index.
    pub fn from_fn_exact(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> i64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let mut data = Vec::with_capacity(shape.num_elements());
        for_each_index(shape.dims(), |idx| data.push(f(idx)));
        Ok(DenseTensor {
            shape,
            data: Storage::Exact(data),
        })
    }

    pub fn vector_exact(values: &[i64]) -> Self {
        DenseTensor {
            shape: Shape(vec![values.len()]),
            data: Storage::Exact(values.to_vec()),
        }
    }

    pub fn scalar_exact(value: i64) -> Self {
        DenseTensor {
            shape: Shape::scalar(),
            data: Storage::Exact(vec![value]),
        }
    }

    pub fn identity(n: usize, mode: ScalarMode) -> Self {
        let mut data = vec![0i64; n * n];
        for i in 0..n {
            data[i * n + i] = 1;
        }
        let t = DenseTensor {
            shape: Shape(vec![n, n]),
            data: Storage::Exact(data),
        };
        match mode {
            ScalarMode::ExactInt => t,
            ScalarMode::Float => t.to_float(),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.shape.num_elements()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> ScalarMode {
        match self.data {
            Storage::Exact(_) => ScalarMode::ExactInt,
            Storage::Float(_) => ScalarMode::Float,
        }
    }

    pub fn exact_data(&self) -> Option<&[i64]> {
        match &self.data {
            Storage::Exact(v) => Some(v),
            Storage::Float(_) => None,
        }
    }

    pub fn float_data(&self) -> Option<&[f64]> {
        match &self.data {
            Storage::Float(v) => Some(v),
            Storage::Exact(_) => None,
        }
    }

    pub(crate) fn into_float_data(self) -> Vec<f64> {
        match self.data {
            Storage::Float(v) => v,
            Storage::Exact(v) => v.into_iter().map(|x| x as f64).collect(),
        }
    }

    fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.rank() {
            return Err(Error::Input(format!(
                "index of length {} for rank-{} tensor",
                index.len(),
                self.rank()
            )));
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(self.dims()) {
            if i >= d {
                return Err(Error::Input(format!("index {index:?} out of range for {}", self.shape)));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    /// Element as `f64`, whatever the mode.
    pub fn get(&self, index: &[usize]) -> Result<f64> {
        let off = self.offset(index)?;
        Ok(match &self.data {
            Storage::Exact(v) => v[off] as f64,
            Storage::Float(v) => v[off],
        })
    }

    pub fn get_exact(&self, index: &[usize]) -> Result<i64> {
        let off = self.offset(index)?;
        match &self.data {
            Storage::Exact(v) => Ok(v[off]),
            Storage::Float(_) => Err(Error::Mode("exact read from float tensor".into())),
        }
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        match &mut self.data {
            Storage::Exact(v) => {
                if value.fract() != 0.0 {
                    return Err(Error::Mode(format!("{value} is not an integer")));
                }
                v[off] = value as i64;
            }
            Storage::Float(v) => v[off] = value,
        }
        Ok(())
    }

    pub fn to_float(&self) -> DenseTensor {
        match &self.data {
            Storage::Float(_) => self.clone(),
            Storage::Exact(v) => DenseTensor {
                shape: self.shape.clone(),
                data: Storage::Float(v.iter().map(|&x| x as f64).collect()),
            },
        }
    }

    /// Value of a rank-0 (or single-element) tensor.
    pub fn scalar_value(&self) -> Option<f64> {
        (self.len() == 1).then(|| match &self.data {
            Storage::Exact(v) => v[0] as f64,
            Storage::Float(v) => v[0],
        })
    }

    pub fn scalar_value_exact(&self) -> Option<i64> {
        match &self.data {
            Storage::Exact(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }

    pub fn nonzero_count(&self) -> usize {
        match &self.data {
            Storage::Exact(v) => v.iter().filter(|&&x| x != 0).count(),
            Storage::Float(v) => v.iter().filter(|&&x| x != 0.0).count(),
        }
    }

    /// Multi-indices of all nonzero elements, in row-major order.
    pub fn nonzero_indices(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut k = 0;
        for_each_index(self.dims(), |idx| {
            let nz = match &self.data {
                Storage::Exact(v) => v[k] != 0,
                Storage::Float(v) => v[k] != 0.0,
            };
            if nz {
                out.push(idx.to_vec());
            }
            k += 1;
        });
        out
    }

    pub fn permute_axes(&self, order: &[usize]) -> Result<DenseTensor> {
        check_permutation(order, self.rank())?;
        let dims: Vec<usize> = order.iter().map(|&a| self.dims()[a]).collect();
        let data = match &self.data {
            Storage::Exact(v) => Storage::Exact(permute_data(v, self.dims(), order)),
            Storage::Float(v) => Storage::Float(permute_data(v, self.dims(), order)),
        };
        Ok(DenseTensor {
            shape: Shape(dims),
            data,
        })
    }

    /// New shape over the same flat data.
    pub fn reshape(self, dims: Vec<usize>) -> Result<DenseTensor> {
        let shape = Shape::new(dims)?;
        if shape.num_elements() != self.len() {
            return Err(Error::Input(format!(
                "cannot reshape {} ({} elements) to {}",
                self.shape,
                self.len(),
                shape
            )));
        }
        Ok(DenseTensor { shape, data: self.data })
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Input(format!(
                "shapes {} and {} differ",
                self.shape, other.shape
            )));
        }
        let a = self.to_float();
        let b = other.to_float();
        let (a, b) = (a.float_data().unwrap(), b.float_data().unwrap());
        Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }
}

fn check_len(shape: &Shape, len: usize) -> Result<()> {
    if shape.num_elements() != len {
        return Err(Error::Input(format!(
            "shape {shape} needs {} elements, got {len}",
            shape.num_elements()
        )));
    }
    Ok(())
}

fn check_permutation(order: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if order.len() != rank {
        return Err(Error::Input(format!("permutation {order:?} for rank {rank}")));
    }
    for &a in order {
        if a >= rank || seen[a] {
            return Err(Error::Input(format!("{order:?} is not a permutation of 0..{rank}")));
        }
        seen[a] = true;
    }
    Ok(())
}

/// Calls `f` on every multi-index of `dims` in row-major order.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        f(&idx);
        for ax in (0..dims.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

fn permute_data<T: Copy>(src: &[T], dims: &[usize], order: &[usize]) -> Vec<T> {
    let rank = dims.len();
    if order.iter().enumerate().all(|(i, &a)| i == a) || rank < 2 {
        return src.to_vec();
    }
    let src_strides = Shape(dims.to_vec()).strides();
    let out_dims: Vec<usize> = order.iter().map(|&a| dims[a]).collect();
    let strides: Vec<usize> = order.iter().map(|&a| src_strides[a]).collect();
    let total = src.len();
    let mut out = Vec::with_capacity(total);

    let inner_dim = out_dims[rank - 1];
    let inner_stride = strides[rank - 1];
    let outer = &out_dims[..rank - 1];
    let mut idx = vec![0usize; rank - 1];
    let mut base = 0usize;
    for _ in 0..total / inner_dim {
        let mut off = base;
        for _ in 0..inner_dim {
            out.push(src[off]);
            off += inner_stride;
        }
        for ax in (0..outer.len()).rev() {
            idx[ax] += 1;
            base += strides[ax];
            if idx[ax] < outer[ax] {
                break;
            }
            base -= strides[ax] * outer[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// `C[i][j] = sum_k A[i][k] B[k][j]` on row-major buffers.
///
/// Zeros are skipped on both sides: cell tensors are 0/1 relations with one
/// nonzero per input combination, and boundaries are mostly zero as well.
fn matmul<T>(a: &[T], b: &[T], rows: usize, inner: usize, cols: usize) -> Vec<T>
where
    T: Copy + Default + PartialEq + Add<Output = T> + Mul<Output = T>,
{
    let zero = T::default();
    let mut c = vec![zero; rows * cols];
    if rows == 0 || cols == 0 {
        return c;
    }
    let nnz = b.iter().filter(|&&y| y != zero).count();
    if nnz * 2 > b.len() {
        for (a_row, c_row) in a.chunks_exact(inner.max(1)).zip(c.chunks_exact_mut(cols)) {
            for (k, &x) in a_row.iter().enumerate() {
                if x == zero {
                    continue;
                }
                let b_row = &b[k * cols..(k + 1) * cols];
                for (c_el, &y) in c_row.iter_mut().zip(b_row) {
                    *c_el = *c_el + x * y;
                }
            }
        }
        return c;
    }
    // compressed rows of b
    let mut start = Vec::with_capacity(inner + 1);
    let mut entries = Vec::with_capacity(nnz);
    for k in 0..inner {
        start.push(entries.len());
        for (j, &y) in b[k * cols..(k + 1) * cols].iter().enumerate() {
            if y != zero {
                entries.push((j, y));
            }
        }
    }
    start.push(entries.len());
    for (a_row, c_row) in a.chunks_exact(inner.max(1)).zip(c.chunks_exact_mut(cols)) {
        for (k, &x) in a_row.iter().enumerate() {
            if x == zero {
                continue;
            }
            for &(j, y) in &entries[start[k]..start[k + 1]] {
                c_row[j] = c_row[j] + x * y;
            }
        }
    }
    c
}

/// Contraction against a small sparse `b` that reads `a` in place instead of
/// permuting it. Output layout matches [`contract_pair`].
fn contract_gather<T>(
    a: &[T],
    a_dims: &[usize],
    b: &[T],
    b_dims: &[usize],
    pairs: &[(usize, usize)],
    a_free: &[usize],
    b_free: &[usize],
) -> Vec<T>
where
    T: Copy + Default + PartialEq + Add<Output = T> + Mul<Output = T>,
{
    let zero = T::default();
    let a_strides = Shape(a_dims.to_vec()).strides();
    let b_strides = Shape(b_dims.to_vec()).strides();
    let cols: usize = b_free.iter().map(|&i| b_dims[i]).product();

    // nonzeros of b keyed by their offset into a
    let mut nz: Vec<(usize, usize, T)> = Vec::new();
    for_each_index(b_dims, |idx| {
        let v = b[idx.iter().zip(&b_strides).map(|(i, s)| i * s).sum::<usize>()];
        if v != zero {
            let off = pairs.iter().map(|&(x, y)| idx[y] * a_strides[x]).sum();
            let col = b_free.iter().fold(0, |acc, &j| acc * b_dims[j] + idx[j]);
            nz.push((off, col, v));
        }
    });
    nz.sort_by_key(|e| (e.0, e.1));
    let mut offsets = Vec::new();
    let mut start = Vec::new();
    for (i, e) in nz.iter().enumerate() {
        if offsets.last() != Some(&e.0) {
            offsets.push(e.0);
            start.push(i);
        }
    }
    start.push(nz.len());
    let entries: Vec<(usize, T)> = nz.iter().map(|e| (e.1, e.2)).collect();

    let free_dims: Vec<usize> = a_free.iter().map(|&i| a_dims[i]).collect();
    let free_strides: Vec<usize> = a_free.iter().map(|&i| a_strides[i]).collect();
    let rows: usize = free_dims.iter().product();
    let mut out = vec![zero; rows * cols];
    if cols == 0 {
        return out;
    }
    let mut idx = vec![0usize; free_dims.len()];
    let mut base = 0usize;
    for row in out.chunks_exact_mut(cols) {
        for (g, &off) in offsets.iter().enumerate() {
            let x = a[base + off];
            if x == zero {
                continue;
            }
            for &(j, y) in &entries[start[g]..start[g + 1]] {
                row[j] = row[j] + x * y;
            }
        }
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            base += free_strides[ax];
            if idx[ax] < free_dims[ax] {
                break;
            }
            base -= free_strides[ax] * free_dims[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// Contracts `a` and `b` over the listed `(a_axis, b_axis)` pairs.
///
/// The result keeps the free axes of `a` in order followed by the free axes
/// of `b` in order.
pub fn contract_pair(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    if a.mode() != b.mode() {
        return Err(Error::Mode(format!(
            "cannot contract {:?} with {:?}",
            a.mode(),
            b.mode()
        )));
    }
    let mut a_used = vec![false; a.rank()];
    let mut b_used = vec![false; b.rank()];
    for &(x, y) in pairs {
        if x >= a.rank() || y >= b.rank() || a_used[x] || b_used[y] {
            return Err(Error::Contraction(format!(
                "invalid axis pair ({x}, {y}) for shapes {} and {}",
                a.shape, b.shape
            )));
        }
        if a.dims()[x] != b.dims()[y] {
            return Err(Error::Contraction(format!(
                "axis {x} of {} has dimension {} but axis {y} of {} has {}",
                a.shape,
                a.dims()[x],
                b.shape,
                b.dims()[y]
            )));
        }
        a_used[x] = true;
        b_used[y] = true;
    }
    let a_free: Vec<usize> = (0..a.rank()).filter(|&i| !a_used[i]).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|&i| !b_used[i]).collect();
    let a_order: Vec<usize> = a_free.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let b_order: Vec<usize> = pairs.iter().map(|p| p.1).chain(b_free.iter().copied()).collect();

    let rows: usize = a_free.iter().map(|&i| a.dims()[i]).product();
    let inner: usize = pairs.iter().map(|p| a.dims()[p.0]).product();
    let cols: usize = b_free.iter().map(|&i| b.dims()[i]).product();
    let dims: Vec<usize> = a_free
        .iter()
        .map(|&i| a.dims()[i])
        .chain(b_free.iter().map(|&i| b.dims()[i]))
        .collect();

    let gather = b.len() <= 1 << 14 && b.nonzero_count() * 2 <= b.len();
    let data = match (&a.data, &b.data) {
        (Storage::Exact(x), Storage::Exact(y)) if gather => {
            Storage::Exact(contract_gather(x, a.dims(), y, b.dims(), pairs, &a_free, &b_free))
        }
        (Storage::Float(x), Storage::Float(y)) if gather => {
            Storage::Float(contract_gather(x, a.dims(), y, b.dims(), pairs, &a_free, &b_free))
        }
        (Storage::Exact(x), Storage::Exact(y)) => {
            let x = permute_data(x, a.dims(), &a_order);
            let y = permute_data(y, b.dims(), &b_order);
            Storage::Exact(matmul(&x, &y, rows, inner, cols))
        }
        (Storage::Float(x), Storage::Float(y)) => {
            let x = permute_data(x, a.dims(), &a_order);
            let y = permute_data(y, b.dims(), &b_order);
            Storage::Float(matmul(&x, &y, rows, inner, cols))
        }
        _ => unreachable!("modes checked above"),
    };
    Ok(DenseTensor {
        shape: Shape(dims),
        data,
    })
}

/// Result of [`truncated_svd`]: `M ≈ U diag(S) V`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `rows x r`, orthonormal columns.
    pub u: DenseTensor,
    /// Descending singular values, length `r`.
    pub s: Vec<f64>,
    /// `r x cols`, orthonormal rows.
    pub v: DenseTensor,
    /// Sum of squares of the dropped singular values.
    pub discarded_weight: f64,
}

/// Keeps the `max_rank` largest singular values of a float matrix.
pub fn truncated_svd(m: &DenseTensor, max_rank: usize) -> Result<TruncatedSvd> {
    if m.mode() != ScalarMode::Float {
        return Err(Error::Mode("SVD requires a float tensor".into()));
    }
    if m.rank() != 2 {
        return Err(Error::Input(format!("SVD needs a matrix, got shape {}", m.shape)));
    }
    if max_rank == 0 {
        return Err(Error::Input("rank cap must be at least 1".into()));
    }
    let (rows, cols) = (m.dims()[0], m.dims()[1]);
    let full = svd_sorted(rows, cols, m.float_data().unwrap());
    let r = max_rank.min(full.s.len());
    let discarded_weight = full.s[r..].iter().map(|x| x * x).sum();
    let (u, s, vt) = full.truncate(r);
    Ok(TruncatedSvd {
        u: DenseTensor::from_float(vec![rows, r], u)?,
        s,
        v: DenseTensor::from_float(vec![r, cols], vt)?,
        discarded_weight,
    })
}

/// Thin SVD with singular values sorted descending; row-major buffers.
pub(crate) struct SortedSvd {
    pub rows: usize,
    pub cols: usize,
    /// `rows x k`
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// `k x cols`
    pub vt: Vec<f64>,
}

impl SortedSvd {
    /// Keeps the leading `r` triplets.
    pub fn truncate(self, r: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.s.len();
        let mut u = Vec::with_capacity(self.rows * r);
        for row in self.u.chunks_exact(k.max(1)) {
            u.extend_from_slice(&row[..r]);
        }
        let vt = self.vt[..r * self.cols].to_vec();
        let s = self.s[..r].to_vec();
        (u, s, vt)
    }

    /// Number of singular values above the round-off floor of this matrix.
    pub fn numerical_rank(&self) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        let floor = smax * f64::EPSILON * 16.0 * (self.rows.max(self.cols) as f64);
        self.s.iter().take_while(|&&x| x > floor).count()
    }
}

/// Unsorted thin SVD as row-major `(u, s, vt)`.
type RawSvd = (Vec<f64>, Vec<f64>, Vec<f64>);

/// LAPACK driver choice for [`lapack_svd`].
#[derive(Clone, Copy)]
enum Driver {
    DivideConquer,
    QrIteration,
}

/// A row-major `rows x cols` buffer is the column-major transpose, so the SVD
/// `A^T = W S Z^T` gives `A = Z S W^T`. The column-major `Z^T` and `W` buffers
/// are then exactly the row-major `U` and `Vt` of `A`.
fn lapack_svd(rows: usize, cols: usize, data: &[f64], driver: Driver) -> Option<RawSvd> {
    let (m, n, k) = (cols as i32, rows as i32, rows.min(cols));
    let mut a = data.to_vec();
    let mut s = vec![0.0; k];
    let mut w = vec![0.0; cols * k];
    let mut zt = vec![0.0; k * rows];
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0;
    let mut run = |a: &mut [f64], work: &mut [f64], lwork: i32, info: &mut i32| unsafe {
        match driver {
            Driver::DivideConquer => lapack::dgesdd(
                b'S', m, n, a, m, &mut s, &mut w, m, &mut zt, k as i32, work, lwork, &mut iwork, info,
            ),
            Driver::QrIteration => lapack::dgesvd(
                b'S', b'S', m, n, a, m, &mut s, &mut w, m, &mut zt, k as i32, work, lwork, info,
            ),
        }
    };
    let mut query = [0.0];
    run(&mut a, &mut query, -1, &mut info);
    if info != 0 {
        return None;
    }
    let mut work = vec![0.0; query[0] as usize];
    let lwork = work.len() as i32;
    run(&mut a, &mut work, lwork, &mut info);
    (info == 0).then_some((zt, s, w))
}

/// Accepts a factorization only if it is finite and reproduces the input.
fn reconstructs(rows: usize, cols: usize, data: &[f64], svd: &RawSvd) -> bool {
    let (u, s, vt) = svd;
    let k = s.len();
    if u.len() != rows * k || vt.len() != k * cols || u.iter().chain(s).chain(vt).any(|x| !x.is_finite()) {
        return false;
    }
    let us: Vec<f64> = u
        .chunks_exact(k.max(1))
        .flat_map(|row| row.iter().zip(s).map(|(a, b)| a * b))
        .collect();
    let rec = matmul_f64(&us, vt, rows, k, cols);
    let scale = data.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    rec.iter().zip(data).all(|(a, b)| (a - b).abs() <= 1e-9 * scale)
}

/// Thin SVD with singular values sorted descending; row-major buffers.
///
/// Divide and conquer is tried first; QR iteration is the fallback if it
/// fails to converge or its result does not reproduce the input.
pub(crate) fn svd_sorted(rows: usize, cols: usize, data: &[f64]) -> SortedSvd {
    let k = rows.min(cols);
    if k == 0 {
        return SortedSvd {
            rows,
            cols,
            u: Vec::new(),
            s: Vec::new(),
            vt: Vec::new(),
        };
    }
    let (u, s, vt) = [Driver::DivideConquer, Driver::QrIteration]
        .into_iter()
        .find_map(|d| lapack_svd(rows, cols, data, d).filter(|svd| reconstructs(rows, cols, data, svd)))
        .unwrap_or_else(|| panic!("LAPACK failed to factor a {rows}x{cols} matrix"));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut u_out = Vec::with_capacity(rows * k);
    for row in u.chunks_exact(k) {
        u_out.extend(order.iter().map(|&c| row[c]));
    }
    let mut vt_out = Vec::with_capacity(k * cols);
    for &r in &order {
        vt_out.extend_from_slice(&vt[r * cols..(r + 1) * cols]);
    }
    SortedSvd {
        rows,
        cols,
        u: u_out,
        s: order.iter().map(|&i| s[i]).collect(),
        vt: vt_out,
    }
}

/// Thin QR of a row-major matrix: returns `(Q, R, k)` with `Q` `rows x k`,
/// `R` `k x cols`, `k = min(rows, cols)`.
pub(crate) fn qr(rows: usize, cols: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    let k = rows.min(cols);
    if k == 0 {
        return (Vec::new(), Vec::new(), 0);
    }
    let (m, n) = (rows as i32, cols as i32);
    let mut a: Vec<f64> = (0..rows * cols).map(|x| data[(x % rows) * cols + x / rows]).collect();
    let mut tau = vec![0.0; k];
    let mut info = 0;
    let mut query = [0.0];
    unsafe { lapack::dgeqrf(m, n, &mut a, m, &mut tau, &mut query, -1, &mut info) };
    let mut work = vec![0.0; query[0] as usize];
    let lwork = work.len() as i32;
    unsafe { lapack::dgeqrf(m, n, &mut a, m, &mut tau, &mut work, lwork, &mut info) };
    assert_eq!(info, 0, "dgeqrf failed on a {rows}x{cols} matrix");
    let r_out: Vec<f64> = (0..k * cols)
        .map(|x| {
            let (i, j) = (x / cols, x % cols);
            if i <= j {
                a[i + j * rows]
            } else {
                0.0
            }
        })
        .collect();
    let mut q = a[..rows * k].to_vec();
    unsafe { lapack::dorgqr(m, k as i32, k as i32, &mut q, m, &tau, &mut query, -1, &mut info) };
    let mut work = vec![0.0; query[0] as usize];
    let lwork = work.len() as i32;
    unsafe { lapack::dorgqr(m, k as i32, k as i32, &mut q, m, &tau, &mut work, lwork, &mut info) };
    assert_eq!(info, 0, "dorgqr failed on a {rows}x{cols} matrix");
    let q_out = (0..rows * k).map(|x| q[(x / k) + (x % k) * rows]).collect();
    (q_out, r_out, k)
}

/// Row-major `rows x inner` times `inner x cols`.
pub(crate) fn matmul_f64(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    matmul(a, b, rows, inner, cols)
}
