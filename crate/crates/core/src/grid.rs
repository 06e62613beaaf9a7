//! 4D cubical cell complexes: periodic tori, open boxes, and the closed 3D
//! surfaces bounding axis-aligned balls.
//!
//! A k-cell is a base vertex together with a set of k axes it spans. Edges
//! point along increasing coordinates and faces are oriented by their axis
//! pair `μ < ν`. Face boundaries are stored in holonomy order
//! `e_μ(x), e_ν(x+μ), e_μ(x+ν)⁻¹, e_ν(x)⁻¹`, so the plaquette product can be
//! read straight off the incidence table.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Periodic,
    Box,
    /// The closed boundary surface of a ball inside a periodic or box lattice.
    Surface,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Periodic => "periodic",
            Topology::Box => "box",
            Topology::Surface => "surface",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Topology::Periodic),
            "box" => Ok(Topology::Box),
            "surface" => Ok(Topology::Surface),
            other => Err(Error::InvalidArgument(format!("unknown topology `{other}`"))),
        }
    }
}

/// A cell: base vertex coordinates and the bitmask of spanned axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub base: [u16; 4],
    pub axes: u8,
}

impl Cell {
    pub fn degree(&self) -> usize {
        self.axes.count_ones() as usize
    }

    pub fn spans(&self, axis: usize) -> bool {
        self.axes & (1 << axis) != 0
    }
}

/// Signed incidence of a lower-dimensional cell in a boundary list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub cell: u32,
    pub sign: i8,
}

/// Signed incidence of a higher-dimensional cell; `slot` is the position of
/// the lower cell inside the coface's boundary list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coface {
    pub cell: u32,
    pub sign: i8,
    pub slot: u8,
}

/// Half-open vertex-index intervals `[lo, lo + len)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: [usize; 4],
    pub len: [usize; 4],
}

impl Bounds {
    pub fn from_intervals(intervals: [(usize, usize); 4]) -> Result<Self> {
        let mut lo = [0; 4];
        let mut len = [0; 4];
        for (a, (l, h)) in intervals.iter().enumerate() {
            if h <= l {
                return Err(Error::RegionTooSmall { axis: a });
            }
            lo[a] = *l;
            len[a] = h - l;
        }
        Ok(Bounds { lo, len })
    }

    pub fn hi(&self) -> [usize; 4] {
        std::array::from_fn(|a| self.lo[a] + self.len[a])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeComplex {
    dims: [usize; 4],
    spacing: f64,
    topology: Topology,
    bounds: Option<Bounds>,
    cells: [Vec<Cell>; 5],
    boundary: [Vec<Incidence>; 5],
    coface_offsets: [Vec<u32>; 5],
    cofaces: [Vec<Coface>; 5],
}

impl LatticeComplex {
    /// Periodic 4-torus with `dims[a]` sites per axis.
    pub fn torus(dims: [usize; 4], spacing: f64) -> Result<Arc<Self>> {
        Self::product(dims, spacing, Topology::Periodic)
    }

    /// Open box with `dims[a]` vertices per axis.
    pub fn open_box(dims: [usize; 4], spacing: f64) -> Result<Arc<Self>> {
        Self::product(dims, spacing, Topology::Box)
    }

    pub fn new(dims: [usize; 4], spacing: f64, topology: Topology) -> Result<Arc<Self>> {
        match topology {
            Topology::Surface => Err(Error::InvalidArgument(
                "surface complexes are built from a ball region".into(),
            )),
            t => Self::product(dims, spacing, t),
        }
    }

    fn product(dims: [usize; 4], spacing: f64, topology: Topology) -> Result<Arc<Self>> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidSpacing(spacing));
        }
        for (axis, &extent) in dims.iter().enumerate() {
            if extent < 2 {
                return Err(Error::DegenerateDimension { axis, extent });
            }
            if extent > u16::MAX as usize {
                return Err(Error::CellCountOverflow);
            }
        }
        let nv = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::CellCountOverflow)?;
        // 16 cells at most per base vertex; all indices must fit in u32
        if nv.checked_mul(16).is_none_or(|n| n >= NONE as usize) {
            return Err(Error::CellCountOverflow);
        }

        let periodic = topology == Topology::Periodic;
        let coords_of = |v: usize| -> [usize; 4] {
            let mut rest = v;
            std::array::from_fn(|a| {
                let c = rest % dims[a];
                rest /= dims[a];
                c
            })
        };
        let vertex_of = |x: [usize; 4]| -> usize { x[0] + dims[0] * (x[1] + dims[1] * (x[2] + dims[2] * x[3])) };
        let exists = |x: &[usize; 4], axes: u8| -> bool {
            periodic || (0..4).all(|a| axes & (1 << a) == 0 || x[a] + 1 < dims[a])
        };
        let shift = |x: [usize; 4], a: usize| -> [usize; 4] {
            let mut y = x;
            y[a] = if periodic { (x[a] + 1) % dims[a] } else { x[a] + 1 };
            y
        };

        let mut lookup = vec![NONE; nv * 16];
        let mut cells: [Vec<Cell>; 5] = Default::default();
        for v in 0..nv {
            let x = coords_of(v);
            for axes in 0u8..16 {
                if exists(&x, axes) {
                    let k = axes.count_ones() as usize;
                    lookup[v * 16 + axes as usize] = cells[k].len() as u32;
                    cells[k].push(Cell {
                        base: x.map(|c| c as u16),
                        axes,
                    });
                }
            }
        }

        let mut boundary: [Vec<Incidence>; 5] = Default::default();
        for k in 1..=4 {
            let mut list = Vec::with_capacity(cells[k].len() * 2 * k);
            for cell in &cells[k] {
                let x = cell.base.map(|c| c as usize);
                let axes: Vec<usize> = (0..4).filter(|&a| cell.spans(a)).collect();
                let mut raw = Vec::with_capacity(2 * k);
                for (i, &a) in axes.iter().enumerate() {
                    let sign: i8 = if i % 2 == 0 { 1 } else { -1 };
                    let sub = cell.axes & !(1 << a);
                    let hi = lookup[vertex_of(shift(x, a)) * 16 + sub as usize];
                    let lo = lookup[vertex_of(x) * 16 + sub as usize];
                    debug_assert!(hi != NONE && lo != NONE);
                    raw.push(Incidence { cell: hi, sign });
                    raw.push(Incidence { cell: lo, sign: -sign });
                }
                match k {
                    // tail, head
                    1 => list.extend([raw[1], raw[0]]),
                    // holonomy order
                    2 => list.extend([raw[3], raw[0], raw[2], raw[1]]),
                    _ => list.extend(raw),
                }
            }
            boundary[k] = list;
        }

        Ok(Arc::new(Self::assemble(dims, spacing, topology, None, cells, boundary)))
    }

    fn assemble(
        dims: [usize; 4],
        spacing: f64,
        topology: Topology,
        bounds: Option<Bounds>,
        cells: [Vec<Cell>; 5],
        boundary: [Vec<Incidence>; 5],
    ) -> Self {
        let mut coface_offsets: [Vec<u32>; 5] = Default::default();
        let mut cofaces: [Vec<Coface>; 5] = Default::default();
        for k in 0..4 {
            let n = cells[k].len();
            let mut counts = vec![0u32; n + 1];
            let stride = 2 * (k + 1);
            for inc in &boundary[k + 1] {
                counts[inc.cell as usize + 1] += 1;
            }
            for i in 0..n {
                counts[i + 1] += counts[i];
            }
            let mut fill = counts.clone();
            let mut list = vec![
                Coface {
                    cell: 0,
                    sign: 0,
                    slot: 0
                };
                boundary[k + 1].len()
            ];
            for (j, chunk) in boundary[k + 1].chunks(stride).enumerate() {
                for (slot, inc) in chunk.iter().enumerate() {
                    let pos = &mut fill[inc.cell as usize];
                    list[*pos as usize] = Coface {
                        cell: j as u32,
                        sign: inc.sign,
                        slot: slot as u8,
                    };
                    *pos += 1;
                }
            }
            coface_offsets[k] = counts;
            cofaces[k] = list;
        }
        coface_offsets[4] = vec![0; cells[4].len() + 1];
        LatticeComplex {
            dims,
            spacing,
            topology,
            bounds,
            cells,
            boundary,
            coface_offsets,
            cofaces,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Region bounds for surface complexes.
    pub fn bounds(&self) -> Option<Bounds> {
        self.bounds
    }

    /// Highest cell degree present.
    pub fn dimension(&self) -> usize {
        (0..=4).rev().find(|&k| !self.cells[k].is_empty()).unwrap_or(0)
    }

    pub fn num_cells(&self, k: usize) -> usize {
        self.cells.get(k).map_or(0, Vec::len)
    }

    pub fn num_vertices(&self) -> usize {
        self.cells[0].len()
    }

    pub fn num_edges(&self) -> usize {
        self.cells[1].len()
    }

    pub fn num_faces(&self) -> usize {
        self.cells[2].len()
    }

    pub fn cell(&self, k: usize, i: usize) -> Cell {
        self.cells[k][i]
    }

    pub fn cells(&self, k: usize) -> &[Cell] {
        &self.cells[k]
    }

    /// Signed boundary of a k-cell, `k ≥ 1`.
    pub fn boundary(&self, k: usize, i: usize) -> &[Incidence] {
        let stride = 2 * k;
        &self.boundary[k][i * stride..(i + 1) * stride]
    }

    /// Signed cofaces of a k-cell, ordered by coface index.
    pub fn cofaces(&self, k: usize, i: usize) -> &[Coface] {
        let off = &self.coface_offsets[k];
        &self.cofaces[k][off[i] as usize..off[i + 1] as usize]
    }

    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let b = self.boundary(1, e);
        (b[0].cell as usize, b[1].cell as usize)
    }

    pub fn vertex_coords(&self, v: usize) -> [usize; 4] {
        self.cells[0][v].base.map(|c| c as usize)
    }

    /// Axis of an edge.
    pub fn edge_axis(&self, e: usize) -> usize {
        self.cells[1][e].axes.trailing_zeros() as usize
    }

    /// Looks a cell up by base coordinates and axis mask (linear scan for
    /// surface complexes, direct for product lattices).
    pub fn find_cell(&self, base: [usize; 4], axes: u8) -> Option<usize> {
        let k = axes.count_ones() as usize;
        let target = Cell {
            base: base.map(|c| c as u16),
            axes,
        };
        match self.topology {
            Topology::Surface => self.cells[k].iter().position(|c| *c == target),
            _ => self.cells[k]
                .binary_search_by(|c| {
                    let key = |c: &Cell| {
                        let b = c.base.map(|x| x as usize);
                        (b[0] + self.dims[0] * (b[1] + self.dims[1] * (b[2] + self.dims[2] * b[3])), c.axes)
                    };
                    key(c).cmp(&key(&target))
                })
                .ok(),
        }
    }

    /// Whether two complexes describe the same cell structure.
    pub fn same_shape(&self, other: &LatticeComplex) -> bool {
        std::ptr::eq(self, other)
            || (self.dims == other.dims
                && self.topology == other.topology
                && self.bounds == other.bounds
                && self.spacing == other.spacing
                && (0..5).all(|k| self.cells[k].len() == other.cells[k].len()))
    }

    /// Betti numbers `b_0..=b_dim` from exact ranks of the boundary maps.
    ///
    /// Uses sparse elimination modulo a large prime; intended for the small
    /// complexes used in diagnostics.
    pub fn betti_numbers(&self) -> Vec<usize> {
        let dim = self.dimension();
        let ranks: Vec<usize> = (0..=dim + 1)
            .map(|k| {
                if k == 0 || k > dim {
                    0
                } else {
                    let rows = (0..self.num_cells(k))
                        .map(|i| self.boundary(k, i).iter().map(|b| (b.cell as usize, b.sign as i64)).collect())
                        .collect();
                    rank_mod_p(rows)
                }
            })
            .collect();
        (0..=dim).map(|k| self.num_cells(k) - ranks[k] - ranks[k + 1]).collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=4).map(|k| if k % 2 == 0 { 1 } else { -1 } * self.num_cells(k) as i64).sum()
    }
}

const PRIME: i64 = 2_147_483_647;

fn mod_inv(a: i64) -> i64 {
    let (mut t, mut new_t, mut r, mut new_r) = (0i64, 1i64, PRIME, a.rem_euclid(PRIME));
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    t.rem_euclid(PRIME)
}

/// Rank over GF(p) of a sparse integer matrix given as rows of `(col, value)`.
pub fn rank_mod_p(rows: Vec<Vec<(usize, i64)>>) -> usize {
    use std::collections::BTreeMap;
    let mut pivots: std::collections::HashMap<usize, BTreeMap<usize, i64>> = Default::default();
    for row in rows {
        let mut r: BTreeMap<usize, i64> = BTreeMap::new();
        for (c, v) in row {
            let e = r.entry(c).or_insert(0);
            *e = (*e + v).rem_euclid(PRIME);
        }
        r.retain(|_, v| *v != 0);
        while let Some((&lead, &val)) = r.iter().next() {
            match pivots.get(&lead) {
                Some(p) => {
                    let factor = (val * mod_inv(p[&lead])) % PRIME;
                    for (&c, &pv) in p {
                        let e = r.entry(c).or_insert(0);
                        *e = (*e - factor * pv % PRIME).rem_euclid(PRIME);
                        if *e == 0 {
                            r.remove(&c);
                        }
                    }
                }
                None => {
                    pivots.insert(lead, r);
                    break;
                }
            }
        }
    }
    pivots.len()
}

/// Position of a cell relative to a ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    /// Every vertex strictly inside the ball.
    Interior,
    /// Lies in the boundary surface.
    Tangential,
    /// In the closed ball, not in the surface, but touching it.
    Normal,
    Exterior,
}

/// The boundary surface of a ball as an intrinsic 3D complex, with index
/// maps to and from the parent complex.
#[derive(Debug, Clone)]
pub struct BoundaryComplex {
    pub complex: Arc<LatticeComplex>,
    to_parent: [Vec<u32>; 4],
    from_parent: [Vec<u32>; 4],
}

impl BoundaryComplex {
    pub fn to_parent(&self, k: usize, i: usize) -> usize {
        self.to_parent[k][i] as usize
    }

    pub fn from_parent(&self, k: usize, parent: usize) -> Option<usize> {
        match self.from_parent[k][parent] {
            NONE => None,
            i => Some(i as usize),
        }
    }
}

/// An axis-aligned ball: a sub-box of a periodic or box lattice with every
/// parent cell classified relative to it.
#[derive(Debug, Clone)]
pub struct BallRegion {
    parent: Arc<LatticeComplex>,
    bounds: Bounds,
    class: [Vec<CellClass>; 5],
    weight: [Vec<f64>; 5],
    boundary: BoundaryComplex,
}

impl BallRegion {
    /// Builds the ball `[lo, hi)` per axis (vertex indices; on a torus `hi`
    /// may exceed the extent and wraps).
    pub fn new(parent: &Arc<LatticeComplex>, intervals: [(usize, usize); 4]) -> Result<Self> {
        let bounds = Bounds::from_intervals(intervals)?;
        Self::from_bounds(parent, bounds)
    }

    pub fn from_bounds(parent: &Arc<LatticeComplex>, bounds: Bounds) -> Result<Self> {
        let dims = parent.dims();
        match parent.topology() {
            Topology::Surface => return Err(Error::UnsupportedParent),
            Topology::Periodic => {
                for a in 0..4 {
                    if bounds.len[a] >= dims[a] {
                        return Err(Error::SelfWrap { axis: a });
                    }
                    if bounds.lo[a] >= dims[a] {
                        return Err(Error::RegionOutOfBounds { axis: a });
                    }
                }
            }
            Topology::Box => {
                for a in 0..4 {
                    if bounds.lo[a] + bounds.len[a] > dims[a] {
                        return Err(Error::RegionOutOfBounds { axis: a });
                    }
                }
            }
        }
        for a in 0..4 {
            if bounds.len[a] < 3 {
                return Err(Error::RegionTooSmall { axis: a });
            }
        }

        let (class, weight) = classify(parent, bounds);
        let boundary = build_surface(parent, bounds, &class);
        Ok(BallRegion {
            parent: parent.clone(),
            bounds,
            class,
            weight,
            boundary,
        })
    }

    pub fn parent(&self) -> &Arc<LatticeComplex> {
        &self.parent
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn class(&self, k: usize, i: usize) -> CellClass {
        self.class[k][i]
    }

    pub fn classes(&self, k: usize) -> &[CellClass] {
        &self.class[k]
    }

    /// Whether the cell belongs to the closed ball.
    pub fn contains(&self, k: usize, i: usize) -> bool {
        self.class[k][i] != CellClass::Exterior
    }

    /// Trapezoidal measure weight: ½ per non-spanned axis on the surface,
    /// zero outside the closed ball.
    pub fn weight(&self, k: usize, i: usize) -> f64 {
        self.weight[k][i]
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.weight[k]
    }

    /// Indices of parent k-cells with the given class, ascending.
    pub fn cells_with(&self, k: usize, class: CellClass) -> Vec<usize> {
        (0..self.class[k].len()).filter(|&i| self.class[k][i] == class).collect()
    }

    /// Links left free by Dirichlet data: interior and normal edges.
    pub fn free_edges(&self) -> Vec<usize> {
        (0..self.class[1].len())
            .filter(|&e| matches!(self.class[1][e], CellClass::Interior | CellClass::Normal))
            .collect()
    }

    pub fn is_free_edge(&self, e: usize) -> bool {
        matches!(self.class[1][e], CellClass::Interior | CellClass::Normal)
    }

    /// Parent cells of the closed ball, ascending.
    pub fn closed_cells(&self, k: usize) -> Vec<usize> {
        (0..self.class[k].len()).filter(|&i| self.contains(k, i)).collect()
    }

    /// The intrinsic complex on the ball's boundary surface.
    pub fn boundary_complex(&self) -> &BoundaryComplex {
        &self.boundary
    }

    /// Region-local coordinates of a parent vertex (`None` outside the closed ball).
    pub fn local_coords(&self, v: usize) -> Option<[usize; 4]> {
        if !self.contains(0, v) {
            return None;
        }
        let x = self.parent.vertex_coords(v);
        let dims = self.parent.dims();
        Some(std::array::from_fn(|a| (x[a] + dims[a] - self.bounds.lo[a]) % dims[a]))
    }

    /// Parent vertex at region-local coordinates.
    pub fn vertex_at(&self, local: [usize; 4]) -> Option<usize> {
        let dims = self.parent.dims();
        if (0..4).any(|a| local[a] >= self.bounds.len[a]) {
            return None;
        }
        let x = std::array::from_fn(|a| (self.bounds.lo[a] + local[a]) % dims[a]);
        self.parent.find_cell(x, 0)
    }
}

/// Classifies every parent cell against the box `bounds` and assigns
/// trapezoidal weights. No size checks.
pub(crate) fn classify(parent: &LatticeComplex, bounds: Bounds) -> ([Vec<CellClass>; 5], [Vec<f64>; 5]) {
    let dims = parent.dims();
    let periodic = parent.topology() == Topology::Periodic;
    let rel = |x: u16, a: usize| -> Option<usize> {
        let x = x as usize;
        if periodic {
            Some((x + dims[a] - bounds.lo[a]) % dims[a])
        } else {
            x.checked_sub(bounds.lo[a])
        }
    };

    let mut class: [Vec<CellClass>; 5] = Default::default();
    let mut weight: [Vec<f64>; 5] = Default::default();
    for k in 0..=4 {
        let n = parent.num_cells(k);
        let mut cls = Vec::with_capacity(n);
        let mut wts = Vec::with_capacity(n);
        for cell in parent.cells(k) {
            let mut inside = true;
            let mut on_surface = false;
            let mut touches = false;
            let mut w = 1.0;
            for a in 0..4 {
                let Some(r) = rel(cell.base[a], a) else {
                    inside = false;
                    break;
                };
                let len = bounds.len[a];
                if cell.spans(a) {
                    if r + 2 > len {
                        inside = false;
                        break;
                    }
                    if r == 0 || r + 2 == len {
                        touches = true;
                    }
                } else {
                    if r + 1 > len {
                        inside = false;
                        break;
                    }
                    if r == 0 || r + 1 == len {
                        on_surface = true;
                        w *= 0.5;
                    }
                }
            }
            let c = if !inside {
                CellClass::Exterior
            } else if on_surface {
                CellClass::Tangential
            } else if touches {
                CellClass::Normal
            } else {
                CellClass::Interior
            };
            cls.push(c);
            wts.push(if inside { w } else { 0.0 });
        }
        class[k] = cls;
        weight[k] = wts;
    }

    (class, weight)
}

fn build_surface(parent: &LatticeComplex, bounds: Bounds, class: &[Vec<CellClass>; 5]) -> BoundaryComplex {
    let mut to_parent: [Vec<u32>; 4] = Default::default();
    let mut from_parent: [Vec<u32>; 4] = Default::default();
    let mut cells: [Vec<Cell>; 5] = Default::default();
    for k in 0..4 {
        from_parent[k] = vec![NONE; parent.num_cells(k)];
        for i in 0..parent.num_cells(k) {
            if class[k][i] == CellClass::Tangential {
                from_parent[k][i] = to_parent[k].len() as u32;
                to_parent[k].push(i as u32);
                cells[k].push(parent.cell(k, i));
            }
        }
    }
    let mut boundary: [Vec<Incidence>; 5] = Default::default();
    for k in 1..4 {
        boundary[k] = to_parent[k]
            .iter()
            .flat_map(|&p| parent.boundary(k, p as usize).iter())
            .map(|inc| Incidence {
                cell: from_parent[k - 1][inc.cell as usize],
                sign: inc.sign,
            })
            .collect();
        debug_assert!(boundary[k].iter().all(|inc| inc.cell != NONE));
    }
    let complex = LatticeComplex::assemble(
        parent.dims(),
        parent.spacing(),
        Topology::Surface,
        Some(bounds),
        cells,
        boundary,
    );
    BoundaryComplex {
        complex: Arc::new(complex),
        to_parent,
        from_parent,
    }
}
