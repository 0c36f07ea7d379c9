//! Tensorized multiplier grid.
//!
//! The grid has one column per multiplier bit `p_k` (`k = 0..=n-2`) and one
//! row per product bit position. Column `k` holds the adder cells for bit
//! positions `k ..= min(k + ⌈n/2⌉ - 1, n - 1)`: the top cell consumes `p_k`
//! and emits `N_k`, the middle cells add one bit of the multiplicand each, and
//! the bottom cell handles the multiplicand's most significant bit (before the
//! column reaches position `n - 1`) or the overflow bookkeeping (after).
//!
//! Every cell tensor is a 0/1 relation tensor: the entry is 1 exactly when the
//! index values satisfy the cell's logic. The vertical wire inside a column
//! carries a 3-state signal `j` = (control bit, carry) with `0 = (0, 0)`,
//! `1 = (1, 0)`, `2 = (1, 1)`; a cleared control bit never carries.
//!
//! Besides the adder cells, a one-bit comparator chain makes the network
//! admit only `q < p`: it visits the cells where `q_r` meets `p_r`, i.e.
//! `(col r, row 2r)` for `r < ⌈n/2⌉`, then the bottom cells of the remaining
//! columns, and the final cell requires the comparison to hold. Without it a
//! balanced semiprime whose factors both fit in `⌈n/2⌉` bits has two
//! solutions and every readout of a differing bit is zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::circuit::{bit_length, capped_multiply, half_bits, BitWord, Capped, MAX_BITS};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TensorKind {
    /// First cell of column 0: copies `p_0` to `N_0` and down the column.
    ZInit,
    /// Column 0 middle cell: emits `p_0 q_r` and sources the `q_r` diagonal.
    ZMid,
    /// Column 0 bottom cell: sources the packed diagonal of the top bit of `q`.
    ZLast,
    /// Top cell of columns `k >= 1`: adds `p_k` (times `q_0 = 1`) and emits `N_k`.
    TInit,
    /// Middle full-adder cell.
    SMid,
    /// Bottom cell before saturation, packs (carry, top q bit) into its diagonal.
    KLast,
    /// Bottom cell of the column whose bottom first reaches position `n-1`.
    SSaturation,
    /// Bottom cell of columns after saturation.
    RPost,
    /// Bottom cell of the last column; forces `N_{n-1} = 1`.
    FFinal,
    /// Last column when it is also the saturation column (only `n = 4`).
    SatFinal,
    DeltaN,
    DeltaP,
    Ones,
    Readout,
}

impl TensorKind {
    pub fn is_vector(self) -> bool {
        matches!(
            self,
            TensorKind::DeltaN | TensorKind::DeltaP | TensorKind::Ones | TensorKind::Readout
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AxisRole {
    PIn,
    BIn,
    BOut,
    QDiagIn,
    QDiagOut,
    CarryIn,
    CarryOut,
    NOut,
    CmpIn,
    CmpOut,
}

impl AxisRole {
    fn input_for(self) -> Option<AxisRole> {
        match self {
            AxisRole::BOut => Some(AxisRole::BIn),
            AxisRole::QDiagOut => Some(AxisRole::QDiagIn),
            AxisRole::CarryOut => Some(AxisRole::CarryIn),
            AxisRole::CmpOut => Some(AxisRole::CmpIn),
            _ => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            AxisRole::PIn => "p_in",
            AxisRole::BIn => "b_in",
            AxisRole::BOut => "b_out",
            AxisRole::QDiagIn => "q_diag_in",
            AxisRole::QDiagOut => "q_diag_out",
            AxisRole::CarryIn => "carry_in",
            AxisRole::CarryOut => "carry_out",
            AxisRole::NOut => "n_out",
            AxisRole::CmpIn => "cmp_in",
            AxisRole::CmpOut => "cmp_out",
        }
    }
}

/// Position of a cell on the comparator chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Comparator {
    None,
    /// Compares `q_r` with `p_r`; the first link starts from "equal so far".
    Compare {
        first: bool,
    },
    /// Higher bits of `p` only: any set bit makes `p` larger.
    Accumulate {
        last: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Endpoint {
    Site { site: usize, axis: usize },
    Boundary(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct Edge {
    pub dim: usize,
    pub ends: [Endpoint; 2],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SiteAxis {
    pub role: AxisRole,
    pub edge: usize,
}

#[derive(Debug, Clone)]
pub struct GridSite {
    /// Product bit position handled by this cell.
    pub row: usize,
    /// Layer index `k`, the multiplier bit consumed by the column.
    pub col: usize,
    pub kind: TensorKind,
    pub comparator: Comparator,
    pub tensor: Arc<DenseTensor>,
    pub axes: Vec<SiteAxis>,
}

impl GridSite {
    /// Index of the multiplicand bit this cell adds (`row - col`).
    pub fn q_index(&self) -> usize {
        self.row - self.col
    }
}

/// What to attach to the input wire of multiplier bit `p_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PInput {
    /// Sum over both values.
    Ones,
    /// Project onto a known value.
    Fixed(u8),
    /// Attach `(-1, 1)`.
    Readout,
}

#[derive(Debug, Clone)]
pub struct BoundaryVector {
    pub kind: TensorKind,
    /// Bit index of `p` (for p inputs) or `N` (for output projections).
    pub bit: usize,
    pub vector: DenseTensor,
    pub edge: usize,
}

#[derive(Debug, Clone)]
pub struct FactorNetwork {
    pub modulus: u64,
    pub n: u32,
    pub target_bit: Option<usize>,
    pub sites: Vec<GridSite>,
    pub boundary: Vec<BoundaryVector>,
    pub edges: Vec<Edge>,
}

/// Grid geometry for an `n`-bit modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    /// Bits of the smaller factor, `⌈n/2⌉`.
    pub m: usize,
}

impl Layout {
    pub fn new(n: u32) -> Result<Self> {
        if !(4..=MAX_BITS).contains(&n) {
            return Err(Error::Layout(format!("bit count {n} outside 4..={MAX_BITS}")));
        }
        Ok(Layout {
            n: n as usize,
            m: half_bits(n) as usize,
        })
    }

    pub fn num_columns(&self) -> usize {
        self.n - 1
    }

    pub fn bottom(&self, col: usize) -> usize {
        (col + self.m - 1).min(self.n - 1)
    }

    pub fn saturation_column(&self) -> usize {
        self.n - self.m
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        col < self.num_columns() && row >= col && row <= self.bottom(col)
    }

    pub fn kind_at(&self, row: usize, col: usize) -> Option<TensorKind> {
        if !self.contains(row, col) {
            return None;
        }
        let (n, m) = (self.n, self.m);
        Some(if col == 0 {
            if row == 0 {
                TensorKind::ZInit
            } else if row == m - 1 {
                TensorKind::ZLast
            } else {
                TensorKind::ZMid
            }
        } else if row == col {
            TensorKind::TInit
        } else if row < self.bottom(col) {
            TensorKind::SMid
        } else if col == n - 2 {
            if col == self.saturation_column() {
                TensorKind::SatFinal
            } else {
                TensorKind::FFinal
            }
        } else if col + m - 1 < n - 1 {
            TensorKind::KLast
        } else if col == self.saturation_column() {
            TensorKind::SSaturation
        } else {
            TensorKind::RPost
        })
    }

    pub fn comparator_at(&self, row: usize, col: usize) -> Comparator {
        if !self.contains(row, col) {
            return Comparator::None;
        }
        if col >= 1 && col < self.m && row == 2 * col {
            Comparator::Compare { first: col == 1 }
        } else if col >= self.m && row == self.bottom(col) {
            Comparator::Accumulate {
                last: col == self.n - 2,
            }
        } else {
            Comparator::None
        }
    }

    /// Cells in column-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_columns()).flat_map(move |col| (col..=self.bottom(col)).map(move |row| (row, col)))
    }
}

/// Splits the vertical 3-state wire into (control bit, carry).
fn control(j: usize) -> (usize, usize) {
    let c = j.div_ceil(2);
    (c, j - c)
}

/// Dimensions and axis roles of a cell kind, in index order.
fn kind_axes(kind: TensorKind) -> Result<(&'static [usize], &'static [AxisRole])> {
    use AxisRole::*;
    Ok(match kind {
        TensorKind::ZInit => (&[2, 2, 2], &[PIn, NOut, CarryOut]),
        TensorKind::ZMid => (&[2, 2, 2, 2], &[CarryIn, QDiagOut, BOut, CarryOut]),
        TensorKind::ZLast => (&[2, 2, 4], &[CarryIn, BOut, QDiagOut]),
        TensorKind::TInit => (&[2, 2, 2, 3], &[BIn, PIn, NOut, CarryOut]),
        TensorKind::SMid => (&[2, 3, 2, 2, 3, 2], &[BIn, CarryIn, QDiagIn, BOut, CarryOut, QDiagOut]),
        TensorKind::KLast => (&[3, 4, 2, 4], &[CarryIn, QDiagIn, BOut, QDiagOut]),
        TensorKind::SSaturation => (&[3, 4, 4], &[CarryIn, QDiagIn, BOut]),
        TensorKind::RPost => (&[4, 3, 2, 4], &[BIn, CarryIn, QDiagIn, BOut]),
        TensorKind::FFinal => (&[4, 3, 2], &[BIn, CarryIn, QDiagIn]),
        TensorKind::SatFinal => (&[3, 4], &[CarryIn, QDiagIn]),
        other => return Err(Error::Layout(format!("{other:?} is a boundary vector, not a cell"))),
    })
}

/// The cell relation: true when the index tuple is a valid wire assignment.
fn relation(kind: TensorKind, x: &[usize]) -> bool {
    match kind {
        TensorKind::ZInit => {
            let (j, mu, nu) = (x[0], x[1], x[2]);
            mu == j && nu == j
        }
        TensorKind::ZMid => {
            let (j, l, mu, nu) = (x[0], x[1], x[2], x[3]);
            nu == j && mu == j * l
        }
        TensorKind::ZLast => {
            // l packs (incoming sum bit, q bit); nothing has been added yet at
            // this position, so only the q half is populated.
            let (j, mu, l) = (x[0], x[1], x[2]);
            l < 2 && mu == j * l
        }
        TensorKind::TInit => {
            let (i, j, mu, nu) = (x[0], x[1], x[2], x[3]);
            mu == i ^ j && nu == j * (i + 1)
        }
        TensorKind::SMid => {
            let (i, j, l, mu, nu, eta) = (x[0], x[1], x[2], x[3], x[4], x[5]);
            let (c, y) = control(j);
            mu == i ^ (c & (l ^ y)) && nu == c * (1 + (i + l + y) / 2) && eta == l
        }
        TensorKind::KLast => {
            let (j, l, mu, eta) = (x[0], x[1], x[2], x[3]);
            let (c, y) = control(j);
            let (yi, yl) = (l / 2, l % 2);
            mu == yi ^ (c & (yl ^ y)) && eta == 2 * ((yi + c * (yl + y)) / 2) + yl
        }
        TensorKind::SSaturation => {
            let (j, l, mu) = (x[0], x[1], x[2]);
            let (c, y) = control(j);
            let (yi, yl) = (l / 2, l % 2);
            (yi + c * (yl + y)) / 2 == 0 && mu == 2 * yl + (yi ^ (c & (yl ^ y)))
        }
        TensorKind::RPost => {
            let (i, j, l, mu) = (x[0], x[1], x[2], x[3]);
            let (c, y) = control(j);
            let (ys, yi) = (i / 2, i % 2);
            c * ys == 0 && (yi + c * (l + y)) / 2 == 0 && mu == 2 * (ys | l) + (yi ^ (c & (l ^ y)))
        }
        TensorKind::FFinal => {
            let (i, j, l) = (x[0], x[1], x[2]);
            let (c, y) = control(j);
            let (ys, yi) = (i / 2, i % 2);
            c * ys == 0 && (yi + c * (l + y)) / 2 == 0 && (yi ^ (c & (l ^ y))) == 1
        }
        TensorKind::SatFinal => {
            let (j, l) = (x[0], x[1]);
            let (c, y) = control(j);
            let (yi, yl) = (l / 2, l % 2);
            (yi + c * (yl + y)) / 2 == 0 && (yi ^ (c & (yl ^ y))) == 1
        }
        _ => false,
    }
}

/// Control bit and (for comparing cells) the multiplicand bit seen by a cell.
fn compared_bits(kind: TensorKind, x: &[usize]) -> (usize, usize) {
    match kind {
        TensorKind::SMid => (control(x[1]).0, x[2]),
        TensorKind::KLast | TensorKind::SSaturation => (control(x[0]).0, x[1] % 2),
        TensorKind::RPost | TensorKind::FFinal => (control(x[1]).0, 0),
        TensorKind::SatFinal => (control(x[0]).0, 0),
        _ => (0, 0),
    }
}

/// Builds the 0/1 tensor of a grid cell in its base index layout.
///
/// Fails with a layout error when `kind` does not sit at `(row, col)` of the
/// `n`-bit grid.
pub fn make_tensor(kind: TensorKind, n: u32, row: usize, col: usize) -> Result<DenseTensor> {
    let layout = Layout::new(n)?;
    match layout.kind_at(row, col) {
        Some(k) if k == kind => base_tensor(kind),
        found => Err(Error::Layout(format!(
            "{kind:?} does not belong at row {row}, col {col} of the {n}-bit grid (found {found:?})"
        ))),
    }
}

fn base_tensor(kind: TensorKind) -> Result<DenseTensor> {
    let (dims, _) = kind_axes(kind)?;
    DenseTensor::from_fn_exact(dims.to_vec(), |x| relation(kind, x) as i64)
}

/// Cell tensor with the comparator axes (`cmp_in`, `cmp_out`) appended.
fn cell_tensor(kind: TensorKind, cmp: Comparator) -> Result<(DenseTensor, Vec<AxisRole>)> {
    let (dims, roles) = kind_axes(kind)?;
    let mut dims = dims.to_vec();
    let mut roles = roles.to_vec();
    let base_rank = dims.len();
    let (has_in, has_out) = match cmp {
        Comparator::None => return Ok((base_tensor(kind)?, roles)),
        Comparator::Compare { first } => (!first, true),
        Comparator::Accumulate { last } => (true, !last),
    };
    if has_in {
        dims.push(2);
        roles.push(AxisRole::CmpIn);
    }
    if has_out {
        dims.push(2);
        roles.push(AxisRole::CmpOut);
    }
    let tensor = DenseTensor::from_fn_exact(dims, |x| {
        if !relation(kind, &x[..base_rank]) {
            return 0;
        }
        let mut rest = x[base_rank..].iter().copied();
        let s_in = if has_in { rest.next().unwrap() } else { 0 };
        let (p_bit, q_bit) = compared_bits(kind, x);
        let s_out = match cmp {
            // q < p on the bits seen so far
            Comparator::Compare { .. } => (p_bit & (1 - q_bit)) | ((p_bit == q_bit) as usize & s_in),
            _ => s_in | p_bit,
        };
        let ok = if has_out {
            rest.next().unwrap() == s_out
        } else {
            s_out == 1
        };
        ok as i64
    })?;
    Ok((tensor, roles))
}

/// Deliberate corruption of one entry in every tensor of a kind, for
/// exercising the self-test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub kind: TensorKind,
    pub index: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct NetworkBuilder {
    fault: Option<Fault>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    /// Assembles the grid for `modulus` with the given attachment on every
    /// multiplier input `p_0 ..= p_{n-2}`.
    pub fn build(&self, modulus: u64, inputs: &[PInput]) -> Result<FactorNetwork> {
        if modulus.is_multiple_of(2) || modulus < 9 {
            return Err(Error::Input(format!(
                "modulus must be odd and at least 9, got {modulus}"
            )));
        }
        let n = bit_length(modulus);
        let layout = Layout::new(n)?;
        if inputs.len() != layout.num_columns() {
            return Err(Error::Input(format!(
                "{} input attachments for {} multiplier bits",
                inputs.len(),
                layout.num_columns()
            )));
        }
        if let Some(k) = inputs.iter().position(|i| matches!(i, PInput::Fixed(b) if *b > 1)) {
            return Err(Error::Input(format!("fixed value for p_{k} is not a bit")));
        }
        let readouts = inputs.iter().filter(|i| **i == PInput::Readout).count();
        if readouts > 1 {
            return Err(Error::Input("at most one readout per network".into()));
        }
        let target_bit = inputs.iter().position(|i| *i == PInput::Readout);

        let mut cache: HashMap<(TensorKind, Comparator), (Arc<DenseTensor>, Vec<AxisRole>)> = HashMap::new();
        let mut sites = Vec::new();
        let mut index_of = HashMap::new();
        for (row, col) in layout.cells() {
            let kind = layout.kind_at(row, col).expect("cell inside layout");
            let cmp = layout.comparator_at(row, col);
            let (tensor, roles) = match cache.get(&(kind, cmp)) {
                Some(hit) => hit.clone(),
                None => {
                    let (mut t, roles) = cell_tensor(kind, cmp)?;
                    if let Some(f) = self.fault.as_ref().filter(|f| f.kind == kind) {
                        // comparator axes beyond the base ones are pinned to 0
                        let mut index = f.index.clone();
                        index.resize(t.rank().max(index.len()), 0);
                        let v = t.get(&index)?;
                        t.set(&index, 1.0 - v)?;
                    }
                    let entry = (Arc::new(t), roles);
                    cache.insert((kind, cmp), entry.clone());
                    entry
                }
            };
            index_of.insert((row, col), sites.len());
            sites.push(GridSite {
                row,
                col,
                kind,
                comparator: cmp,
                axes: roles
                    .into_iter()
                    .map(|role| SiteAxis { role, edge: usize::MAX })
                    .collect(),
                tensor,
            });
        }

        let mut edges = Vec::new();
        for s in 0..sites.len() {
            for a in 0..sites[s].axes.len() {
                let role = sites[s].axes[a].role;
                let Some(in_role) = role.input_for() else { continue };
                let (row, col) = (sites[s].row, sites[s].col);
                let target = match role {
                    AxisRole::CarryOut => (row + 1, col),
                    AxisRole::BOut => (row, col + 1),
                    AxisRole::QDiagOut => (row + 1, col + 1),
                    _ => {
                        let next = col + 1;
                        if next < layout.m {
                            (2 * next, next)
                        } else {
                            (layout.bottom(next), next)
                        }
                    }
                };
                let &t = index_of.get(&target).ok_or_else(|| {
                    Error::Layout(format!(
                        "{role:?} of ({row},{col}) points outside the grid at {target:?}"
                    ))
                })?;
                let b = sites[t]
                    .axes
                    .iter()
                    .position(|ax| ax.role == in_role)
                    .ok_or_else(|| Error::Layout(format!("cell {target:?} has no {in_role:?} axis")))?;
                let (da, db) = (sites[s].tensor.dims()[a], sites[t].tensor.dims()[b]);
                if da != db || sites[t].axes[b].edge != usize::MAX {
                    return Err(Error::Layout(format!(
                        "cannot link ({row},{col}) {role:?} [{da}] to {target:?} {in_role:?} [{db}]"
                    )));
                }
                let id = edges.len();
                edges.push(Edge {
                    dim: da,
                    ends: [Endpoint::Site { site: s, axis: a }, Endpoint::Site { site: t, axis: b }],
                });
                sites[s].axes[a].edge = id;
                sites[t].axes[b].edge = id;
            }
        }

        let mut boundary = Vec::new();
        for (s, site) in sites.iter_mut().enumerate() {
            for (a, axis) in site.axes.iter_mut().enumerate() {
                let role = axis.role;
                if axis.edge != usize::MAX {
                    continue;
                }
                let bit = site.col;
                let (kind, values): (TensorKind, [i64; 2]) = match role {
                    AxisRole::PIn => match inputs[bit] {
                        PInput::Ones => (TensorKind::Ones, [1, 1]),
                        PInput::Fixed(0) => (TensorKind::DeltaP, [1, 0]),
                        PInput::Fixed(_) => (TensorKind::DeltaP, [0, 1]),
                        PInput::Readout => (TensorKind::Readout, [-1, 1]),
                    },
                    AxisRole::NOut => {
                        if (modulus >> bit) & 1 == 0 {
                            (TensorKind::DeltaN, [1, 0])
                        } else {
                            (TensorKind::DeltaN, [0, 1])
                        }
                    }
                    other => {
                        return Err(Error::Layout(format!(
                            "axis {other:?} of ({}, {}) left unconnected",
                            site.row, site.col
                        )))
                    }
                };
                let id = edges.len();
                edges.push(Edge {
                    dim: 2,
                    ends: [Endpoint::Site { site: s, axis: a }, Endpoint::Boundary(boundary.len())],
                });
                boundary.push(BoundaryVector {
                    kind,
                    bit,
                    vector: DenseTensor::vector_exact(&values),
                    edge: id,
                });
                axis.edge = id;
            }
        }

        let net = FactorNetwork {
            modulus,
            n,
            target_bit,
            sites,
            boundary,
            edges,
        };
        net.audit()?;
        Ok(net)
    }
}

/// Network for reading bit `target_bit` of `p`, with `fixed_bits` projected
/// and every other multiplier input summed over.
pub fn build_network(modulus: u64, fixed_bits: &BTreeMap<usize, u8>, target_bit: usize) -> Result<FactorNetwork> {
    if modulus.is_multiple_of(2) || modulus < 9 {
        return Err(Error::Input(format!(
            "modulus must be odd and at least 9, got {modulus}"
        )));
    }
    let width = bit_length(modulus) as usize - 1;
    if target_bit >= width {
        return Err(Error::Input(format!("target bit {target_bit} outside 0..{width}")));
    }
    let mut inputs = vec![PInput::Ones; width];
    for (&k, &v) in fixed_bits {
        if k >= width || k == target_bit {
            return Err(Error::Input(format!(
                "cannot fix bit {k} (target {target_bit}, width {width})"
            )));
        }
        inputs[k] = PInput::Fixed(v);
    }
    inputs[target_bit] = PInput::Readout;
    NetworkBuilder::new().build(modulus, &inputs)
}

/// Summary of the structural checks run by [`FactorNetwork::audit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub sites: usize,
    pub links: usize,
    pub ones: usize,
    pub fixed: usize,
    pub readouts: usize,
    pub projections: usize,
}

#[derive(Debug, Serialize)]
struct DumpLink {
    role: AxisRole,
    dim: usize,
    to: String,
}

#[derive(Debug, Serialize)]
struct DumpSite {
    row: usize,
    col: usize,
    kind: TensorKind,
    comparator: Comparator,
    shape: Vec<usize>,
    links: Vec<DumpLink>,
}

impl FactorNetwork {
    pub fn layout(&self) -> Layout {
        Layout::new(self.n).expect("validated at build")
    }

    /// Number of multiplier input wires (`n - 1`).
    pub fn p_width(&self) -> usize {
        self.n as usize - 1
    }

    /// Checks that every axis is linked exactly once with matching dimensions
    /// and that the boundary covers every input and output wire.
    pub fn audit(&self) -> Result<AuditReport> {
        let mut seen = vec![0usize; self.edges.len()];
        for (s, site) in self.sites.iter().enumerate() {
            if site.axes.len() != site.tensor.rank() {
                return Err(Error::Layout(format!(
                    "site {s} has {} axes for a rank-{} tensor",
                    site.axes.len(),
                    site.tensor.rank()
                )));
            }
            for (a, axis) in site.axes.iter().enumerate() {
                let edge = self
                    .edges
                    .get(axis.edge)
                    .ok_or_else(|| Error::Layout(format!("site {s} axis {a} is open")))?;
                if edge.dim != site.tensor.dims()[a] {
                    return Err(Error::Layout(format!("site {s} axis {a} dimension mismatch")));
                }
                if !edge.ends.contains(&Endpoint::Site { site: s, axis: a }) {
                    return Err(Error::Layout(format!(
                        "edge {} does not list site {s} axis {a}",
                        axis.edge
                    )));
                }
                seen[axis.edge] += 1;
            }
        }
        for (b, v) in self.boundary.iter().enumerate() {
            let edge = &self.edges[v.edge];
            if edge.dim != v.vector.len() || !edge.ends.contains(&Endpoint::Boundary(b)) {
                return Err(Error::Layout(format!("boundary vector {b} is miswired")));
            }
            seen[v.edge] += 1;
        }
        if let Some(e) = seen.iter().position(|&c| c != 2) {
            return Err(Error::Layout(format!("edge {e} has {} endpoints", seen[e])));
        }
        let count = |k: TensorKind| self.boundary.iter().filter(|v| v.kind == k).count();
        let report = AuditReport {
            sites: self.sites.len(),
            links: self.edges.len() - self.boundary.len(),
            ones: count(TensorKind::Ones),
            fixed: count(TensorKind::DeltaP),
            readouts: count(TensorKind::Readout),
            projections: count(TensorKind::DeltaN),
        };
        if report.ones + report.fixed + report.readouts != self.p_width() || report.projections != self.p_width() {
            return Err(Error::Layout(format!("incomplete boundary: {report:?}")));
        }
        if report.readouts != self.target_bit.is_some() as usize {
            return Err(Error::Layout("readout does not match target bit".into()));
        }
        Ok(report)
    }

    fn describe_end(&self, end: Endpoint) -> String {
        match end {
            Endpoint::Site { site, .. } => format!("({},{})", self.sites[site].row, self.sites[site].col),
            Endpoint::Boundary(b) => {
                let v = &self.boundary[b];
                format!("{:?}[{}]", v.kind, v.bit)
            }
        }
    }

    fn dump_sites(&self) -> Vec<DumpSite> {
        self.sites
            .iter()
            .enumerate()
            .map(|(s, site)| DumpSite {
                row: site.row,
                col: site.col,
                kind: site.kind,
                comparator: site.comparator,
                shape: site.tensor.dims().to_vec(),
                links: site
                    .axes
                    .iter()
                    .enumerate()
                    .map(|(a, axis)| {
                        let edge = &self.edges[axis.edge];
                        let other = if edge.ends[0] == (Endpoint::Site { site: s, axis: a }) {
                            edge.ends[1]
                        } else {
                            edge.ends[0]
                        };
                        DumpLink {
                            role: axis.role,
                            dim: edge.dim,
                            to: self.describe_end(other),
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    /// One line per cell: `row col kind shape links...`, each link written as
    /// `role:dim->target`.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for site in self.dump_sites() {
            let shape: Vec<String> = site.shape.iter().map(|d| d.to_string()).collect();
            let _ = write!(out, "{} {} {:?} {}", site.row, site.col, site.kind, shape.join("x"));
            for link in &site.links {
                let _ = write!(out, " {}:{}->{}", link.role.label(), link.dim, link.to);
            }
            out.push('\n');
        }
        out
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(&self.dump_sites()).expect("plain data serializes")
    }
}

/// Every `(N, p)` with `N` odd, `9 <= N < 2^max_bits`, for which the network
/// with all multiplier inputs projected onto the bits of `p` contracts to a
/// nonzero count.
pub fn network_truth_table(max_bits: u32) -> Result<BTreeSet<(u64, u64)>> {
    network_truth_table_with(&NetworkBuilder::new(), max_bits)
}

pub fn network_truth_table_with(builder: &NetworkBuilder, max_bits: u32) -> Result<BTreeSet<(u64, u64)>> {
    check_table_bits(max_bits)?;
    let mut out = BTreeSet::new();
    for n in 4..=max_bits {
        out.extend(network_truth_table_for(builder, n)?.0);
    }
    Ok(out)
}

/// Largest width the exhaustive truth tables accept.
pub const MAX_TABLE_BITS: u32 = 10;

fn check_table_bits(n: u32) -> Result<()> {
    if n > MAX_TABLE_BITS {
        return Err(Error::Input(format!(
            "truth table limited to {MAX_TABLE_BITS} bits, asked for {n}"
        )));
    }
    Ok(())
}

/// Truth table for moduli of exactly `n` bits, plus the number of
/// `(N, p)` assignments contracted.
pub fn network_truth_table_for(builder: &NetworkBuilder, n: u32) -> Result<(BTreeSet<(u64, u64)>, usize)> {
    check_table_bits(n)?;
    let mut out = BTreeSet::new();
    let mut checked = 0;
    if n < 4 {
        return Ok((out, checked));
    }
    let width = n as usize - 1;
    for modulus in ((1u64 << (n - 1)).max(9)..1u64 << n).filter(|x| x % 2 == 1) {
        for p in 0..1u64 << width {
            let inputs: Vec<PInput> = (0..width).map(|k| PInput::Fixed(((p >> k) & 1) as u8)).collect();
            let net = builder.build(modulus, &inputs)?;
            let value = crate::exact::contract_exact(&net, crate::Scheme::BottomUp, &Default::default())?
                .0
                .value;
            checked += 1;
            if value != 0 {
                out.insert((modulus, p));
            }
        }
    }
    Ok((out, checked))
}

/// Brute-force counterpart of [`network_truth_table`] using the integer
/// multiplier on its whole valid domain.
pub fn oracle_truth_table(max_bits: u32) -> BTreeSet<(u64, u64)> {
    (4..=max_bits).flat_map(oracle_truth_table_for).collect()
}

/// Oracle pairs `(N, p)` with `N` of exactly `n` bits.
pub fn oracle_truth_table_for(n: u32) -> BTreeSet<(u64, u64)> {
    let mut out = BTreeSet::new();
    if n < 4 {
        return out;
    }
    let m = half_bits(n);
    for p in (3..1u64 << (n - 1)).step_by(2) {
        for q in (1..(1u64 << m).min(p)).step_by(2) {
            if let Ok(Capped::Product(prod)) = capped_multiply(BitWord::minimal(p), BitWord::minimal(q), n) {
                let v = prod.value();
                if bit_length(v) == n && v >= 9 {
                    out.insert((v, p));
                }
            }
        }
    }
    out
}
