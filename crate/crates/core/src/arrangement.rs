//! Canonical polyhedral complexes of ReLU networks over a box.
//!
//! Full-dimensional regions are kept as vertex/facet incidence structures and
//! split neuron by neuron. The face lattice is recovered once at the end from
//! the incidences; cells are identified by their vertex sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{affine_dimension, dot_unchecked, int, vectors_rank, BoxDomain, Hyperplane, Matrix, Scalar, Sign};
use crate::network::{AffineLayer, NeuronId, ReluNetwork};
use crate::stability::{Violation, ViolationReason};
use crate::unionfind::UnionFind;

pub const DEFAULT_MAX_CELLS: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    /// Upper bound on full-dimensional regions during construction and on cells afterwards.
    pub max_cells: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_cells: DEFAULT_MAX_CELLS }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignLabel {
    Negative,
    Zero,
    Positive,
    Unsigned,
}

impl SignLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SignLabel::Negative => "negative",
            SignLabel::Zero => "zero",
            SignLabel::Positive => "positive",
            SignLabel::Unsigned => "unsigned",
        }
    }
}

/// `x -> A x + c`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineMap {
    matrix: Matrix,
    offset: Vec<Scalar>,
}

impl AffineMap {
    pub fn new(matrix: Matrix, offset: Vec<Scalar>) -> Result<AffineMap> {
        if matrix.rows() != offset.len() {
            return Err(Error::DimensionMismatch { expected: matrix.rows(), found: offset.len() });
        }
        Ok(AffineMap { matrix, offset })
    }

    pub fn identity(d: usize) -> AffineMap {
        AffineMap { matrix: Matrix::identity(d), offset: vec![Scalar::zero(); d] }
    }

    pub fn zero(rows: usize, d: usize) -> AffineMap {
        AffineMap { matrix: Matrix::zeros(rows, d), offset: vec![Scalar::zero(); rows] }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn offset(&self) -> &[Scalar] {
        &self.offset
    }

    pub fn apply(&self, x: &[Scalar]) -> Result<Vec<Scalar>> {
        let mut y = self.matrix.mul_vec(x)?;
        for (v, c) in y.iter_mut().zip(&self.offset) {
            *v += c;
        }
        Ok(y)
    }

    /// Gradient and constant of `w·(A x + c) + b`.
    fn functional(&self, w: &[Scalar], b: &Scalar) -> (Vec<Scalar>, Scalar) {
        let d = self.matrix.cols();
        let mut grad = vec![Scalar::zero(); d];
        for (r, wr) in w.iter().enumerate() {
            if wr.is_zero() {
                continue;
            }
            for (j, g) in grad.iter_mut().enumerate() {
                let m = self.matrix.get(r, j);
                if !m.is_zero() {
                    *g += wr * m;
                }
            }
        }
        (grad, dot_unchecked(w, &self.offset) + b)
    }

    /// `layer ∘ self`, with rows zeroed where `active` is false when given.
    fn then(&self, layer: &AffineLayer, active: Option<&[bool]>) -> AffineMap {
        let d = self.matrix.cols();
        let n = layer.out_dim();
        let mut rows = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n);
        for i in 0..n {
            if active.is_some_and(|a| !a[i]) {
                rows.push(vec![Scalar::zero(); d]);
                offset.push(Scalar::zero());
            } else {
                let (g, c) = self.functional(layer.weights().row(i), &layer.bias()[i]);
                rows.push(g);
                offset.push(c);
            }
        }
        AffineMap { matrix: Matrix::from_rows(rows, d).unwrap(), offset }
    }
}

/// A closed polyhedron of the complex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub id: usize,
    pub dim: usize,
    /// Indices into [`PolyhedralComplex::points`], ascending.
    pub vertices: Vec<usize>,
    /// `(hyperplane id, sign)` for each facet constraint of the region the cell was cut from.
    pub constraints: Vec<(usize, Sign)>,
    pub affine_map: AffineMap,
    pub sign: SignLabel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyhedralComplex {
    ambient_dim: usize,
    domain: BoxDomain,
    points: Vec<Vec<Scalar>>,
    hyperplanes: Vec<Hyperplane>,
    cells: Vec<Cell>,
    faces: Vec<(usize, usize)>,
    facets_of: Vec<Vec<usize>>,
    cofacets_of: Vec<Vec<usize>>,
}

impl PolyhedralComplex {
    fn from_raw(
        domain: BoxDomain,
        points: Vec<Vec<Scalar>>,
        hyperplanes: Vec<Hyperplane>,
        cells: Vec<Cell>,
        mut faces: Vec<(usize, usize)>,
    ) -> PolyhedralComplex {
        faces.sort_unstable();
        faces.dedup();
        let mut facets_of = vec![Vec::new(); cells.len()];
        let mut cofacets_of = vec![Vec::new(); cells.len()];
        for &(f, c) in &faces {
            facets_of[c].push(f);
            cofacets_of[f].push(c);
        }
        PolyhedralComplex { ambient_dim: domain.dim(), domain, points, hyperplanes, cells, faces, facets_of, cofacets_of }
    }

    /// Hand-assembled complex: each cell is a vertex-index list; dimensions come from
    /// the affine hulls and the face relation from containment. Nothing else is checked.
    pub fn from_vertex_sets(domain: BoxDomain, points: Vec<Vec<Scalar>>, cells: Vec<Vec<usize>>) -> Result<PolyhedralComplex> {
        let d = domain.dim();
        let mut built = Vec::with_capacity(cells.len());
        for (id, mut vs) in cells.into_iter().enumerate() {
            vs.sort_unstable();
            vs.dedup();
            if vs.iter().any(|&v| v >= points.len()) {
                return Err(Error::InconsistentComplex(format!("cell {id} names a missing point")));
            }
            let pts: Vec<&Vec<Scalar>> = vs.iter().map(|&v| &points[v]).collect();
            if pts.iter().any(|p| p.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, found: pts[0].len() });
            }
            let dim = affine_dimension(&pts);
            if dim < 0 {
                return Err(Error::InconsistentComplex(format!("cell {id} is empty")));
            }
            built.push(Cell {
                id,
                dim: dim as usize,
                vertices: vs,
                constraints: Vec::new(),
                affine_map: AffineMap::zero(1, d),
                sign: SignLabel::Unsigned,
            });
        }
        let mut faces = Vec::new();
        for a in &built {
            for b in &built {
                if a.dim + 1 == b.dim && is_subset(&a.vertices, &b.vertices) {
                    faces.push((a.id, b.id));
                }
            }
        }
        Ok(PolyhedralComplex::from_raw(domain, points, Vec::new(), built, faces))
    }

    /// Like [`PolyhedralComplex::from_vertex_sets`] but with an explicit face relation.
    pub fn from_parts(domain: BoxDomain, points: Vec<Vec<Scalar>>, cells: Vec<Vec<usize>>, faces: Vec<(usize, usize)>) -> Result<PolyhedralComplex> {
        let pc = PolyhedralComplex::from_vertex_sets(domain, points, cells)?;
        if let Some(&(f, c)) = faces.iter().find(|&&(f, c)| f >= pc.cells.len() || c >= pc.cells.len()) {
            return Err(Error::InconsistentComplex(format!("face pair ({f},{c}) names a missing cell")));
        }
        Ok(PolyhedralComplex::from_raw(pc.domain, pc.points, pc.hyperplanes, pc.cells, faces))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn points(&self) -> &[Vec<Scalar>] {
        &self.points
    }

    pub fn hyperplanes(&self) -> &[Hyperplane] {
        &self.hyperplanes
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    /// `(face, coface)` pairs with dimension difference one, sorted.
    pub fn faces(&self) -> &[(usize, usize)] {
        &self.faces
    }

    pub fn facets_of(&self, id: usize) -> &[usize] {
        &self.facets_of[id]
    }

    pub fn cofacets_of(&self, id: usize) -> &[usize] {
        &self.cofacets_of[id]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_points(&self, id: usize) -> Vec<&[Scalar]> {
        self.cells[id].vertices.iter().map(|&v| self.points[v].as_slice()).collect()
    }

    /// Number of cells per dimension `0..=ambient_dim`.
    pub fn f_vector(&self) -> Vec<usize> {
        let mut f = vec![0; self.ambient_dim + 1];
        for c in &self.cells {
            f[c.dim] += 1;
        }
        f
    }

    /// `Σ (-1)^k #k-cells`.
    pub fn euler_characteristic(&self) -> i64 {
        self.cells.iter().map(|c| if c.dim % 2 == 0 { 1 } else { -1 }).sum()
    }

    pub fn full_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.dim == self.ambient_dim)
    }

    pub fn vertex_centroid(&self, id: usize) -> Vec<Scalar> {
        let pts = self.cell_points(id);
        let n = int(pts.len() as i64);
        (0..self.ambient_dim)
            .map(|j| pts.iter().fold(Scalar::zero(), |acc, p| acc + &p[j]) / &n)
            .collect()
    }

    /// Keeps the cells satisfying `keep`, renumbering them in order. The caller
    /// is responsible for keeping the selection closed under faces.
    pub fn subcomplex(&self, keep: impl Fn(&Cell) -> bool) -> PolyhedralComplex {
        let mut new_id = vec![usize::MAX; self.cells.len()];
        let mut used_points = BTreeSet::new();
        let mut cells = Vec::new();
        for c in &self.cells {
            if keep(c) {
                new_id[c.id] = cells.len();
                used_points.extend(c.vertices.iter().copied());
                cells.push(c.clone());
            }
        }
        let point_map: BTreeMap<usize, usize> = used_points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        for (i, c) in cells.iter_mut().enumerate() {
            c.id = i;
            for v in c.vertices.iter_mut() {
                *v = point_map[v];
            }
        }
        let points = used_points.iter().map(|&p| self.points[p].clone()).collect();
        let faces = self
            .faces
            .iter()
            .filter(|&&(f, c)| new_id[f] != usize::MAX && new_id[c] != usize::MAX)
            .map(|&(f, c)| (new_id[f], new_id[c]))
            .collect();
        PolyhedralComplex::from_raw(self.domain.clone(), points, self.hyperplanes.clone(), cells, faces)
    }

    /// Exact volume of a full-dimensional cell by pulling triangulation.
    pub fn cell_volume(&self, id: usize) -> Scalar {
        let d = self.ambient_dim;
        let mut total = Scalar::zero();
        for simplex in self.triangulate(id) {
            let p0 = &self.points[simplex[0]];
            let rows: Vec<Scalar> = simplex[1..]
                .iter()
                .flat_map(|&v| self.points[v].iter().zip(p0).map(|(a, b)| a - b))
                .collect();
            total += determinant(Matrix::new(d, d, rows).unwrap()).abs();
        }
        let fact = (1..=d as i64).fold(int(1), |acc, k| acc * int(k));
        total / fact
    }

    fn triangulate(&self, id: usize) -> Vec<Vec<usize>> {
        let cell = &self.cells[id];
        if cell.dim == 0 {
            return vec![vec![cell.vertices[0]]];
        }
        let apex = cell.vertices[0];
        let mut out = Vec::new();
        for &f in &self.facets_of[id] {
            if self.cells[f].vertices.binary_search(&apex).is_ok() {
                continue;
            }
            for mut s in self.triangulate(f) {
                s.insert(0, apex);
                out.push(s);
            }
        }
        out
    }
}

fn determinant(m: Matrix) -> Scalar {
    let n = m.rows();
    let mut a: Vec<Vec<Scalar>> = (0..n).map(|r| m.row(r).to_vec()).collect();
    let mut det = int(1);
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else { return Scalar::zero() };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        det *= &a[col][col];
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = &a[r][col] / &a[col][col];
            for c in col..n {
                let t = &f * &a[col][c];
                a[r][c] -= t;
            }
        }
    }
    det
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < *x {
            j += 1;
        }
        if j == b.len() || b[j] != *x {
            return false;
        }
    }
    true
}

/// A complex in which every cell carries the sign of the network on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedComplex(PolyhedralComplex);

impl SignedComplex {
    pub fn complex(&self) -> &PolyhedralComplex {
        &self.0
    }

    pub fn into_complex(self) -> PolyhedralComplex {
        self.0
    }
}

// ---------------------------------------------------------------------------
// Construction

struct Region {
    vertices: Vec<usize>,
    /// `(hyperplane id, side)`: the region lies in `side · h(x) ≥ 0`.
    facets: Vec<(usize, Sign)>,
    /// Per vertex, the ascending indices of the facets through it.
    incidence: Vec<Vec<u32>>,
    map: AffineMap,
    pattern: Vec<bool>,
}

enum Split {
    Constant(Sign),
    Side { positive: bool, touches: bool },
    Both(Region, Region),
}

#[derive(Default)]
struct Arena {
    points: Vec<Vec<Scalar>>,
    point_ids: BTreeMap<Vec<Scalar>, usize>,
    planes: Vec<Hyperplane>,
    plane_ids: BTreeMap<Hyperplane, usize>,
}

impl Arena {
    fn point(&mut self, p: Vec<Scalar>) -> usize {
        if let Some(&id) = self.point_ids.get(&p) {
            return id;
        }
        let id = self.points.len();
        self.points.push(p.clone());
        self.point_ids.insert(p, id);
        id
    }

    /// Registers a hyperplane and returns its id and the orientation of the input.
    fn plane(&mut self, h: Hyperplane) -> (usize, Sign) {
        let (h, orientation) = h.canonical();
        if let Some(&id) = self.plane_ids.get(&h) {
            return (id, orientation);
        }
        let id = self.planes.len();
        self.planes.push(h.clone());
        self.plane_ids.insert(h, id);
        (id, orientation)
    }

    fn box_region(&mut self, domain: &BoxDomain) -> Region {
        let d = domain.dim();
        let facets: Vec<(usize, Sign)> = domain.facets().into_iter().map(|h| self.plane(h)).collect();
        let mut vertices = Vec::with_capacity(1 << d);
        let mut incidence = Vec::with_capacity(1 << d);
        for mask in 0..1usize << d {
            vertices.push(self.point(domain.corner(mask)));
            incidence.push((0..d).map(|i| (2 * i + (mask >> i & 1)) as u32).collect());
        }
        Region { vertices, facets, incidence, map: AffineMap::identity(d), pattern: Vec::new() }
    }

    fn split(&mut self, r: &Region, grad: &[Scalar], constant: &Scalar, d: usize) -> Result<Split> {
        if grad.iter().all(Zero::is_zero) {
            return Ok(Split::Constant(Sign::of(constant)));
        }
        let vals: Vec<Scalar> = r.vertices.iter().map(|&v| dot_unchecked(grad, &self.points[v]) + constant).collect();
        let any_pos = vals.iter().any(Signed::is_positive);
        let any_neg = vals.iter().any(Signed::is_negative);
        let touches = vals.iter().any(Zero::is_zero);
        if !any_neg || !any_pos {
            return Ok(Split::Side { positive: !any_neg, touches });
        }
        let (plane, orientation) = self.plane(Hyperplane::new(grad.to_vec(), constant.clone())?);
        let n = r.vertices.len();
        let mut fresh: Vec<(usize, Vec<u32>)> = Vec::new();
        for u in 0..n {
            if !vals[u].is_positive() {
                continue;
            }
            for v in 0..n {
                if !vals[v].is_negative() {
                    continue;
                }
                let common = intersect(&r.incidence[u], &r.incidence[v]);
                let adjacent = (0..n).all(|w| w == u || w == v || !contains_all(&r.incidence[w], &common));
                if !adjacent {
                    continue;
                }
                let t = &vals[u] / (&vals[u] - &vals[v]);
                let (pu, pv) = (&self.points[r.vertices[u]], &self.points[r.vertices[v]]);
                let p: Vec<Scalar> = pu.iter().zip(pv).map(|(a, b)| a + &t * (b - a)).collect();
                fresh.push((self.point(p), common));
            }
        }
        let pos = self.piece(r, &vals, &fresh, (plane, orientation), true, d);
        let neg = self.piece(r, &vals, &fresh, (plane, orientation.flip()), false, d);
        Ok(Split::Both(pos, neg))
    }

    fn piece(&self, r: &Region, vals: &[Scalar], fresh: &[(usize, Vec<u32>)], facet: (usize, Sign), positive: bool, d: usize) -> Region {
        let new_facet = r.facets.len() as u32;
        let mut vertices = Vec::new();
        let mut incidence = Vec::new();
        for (i, val) in vals.iter().enumerate() {
            let keep = if positive { !val.is_negative() } else { !val.is_positive() };
            if keep {
                vertices.push(r.vertices[i]);
                let mut inc = r.incidence[i].clone();
                if val.is_zero() {
                    inc.push(new_facet);
                }
                incidence.push(inc);
            }
        }
        for (p, common) in fresh {
            vertices.push(*p);
            let mut inc = common.clone();
            inc.push(new_facet);
            incidence.push(inc);
        }
        let mut facets = r.facets.clone();
        facets.push(facet);
        let mut piece = Region { vertices, facets, incidence, map: r.map.clone(), pattern: r.pattern.clone() };
        self.prune(&mut piece, d);
        piece
    }

    /// Drops constraints that do not support a `(d-1)`-face.
    fn prune(&self, r: &mut Region, d: usize) {
        let m = r.facets.len();
        let mut keep = vec![false; m];
        for (f, k) in keep.iter_mut().enumerate() {
            let tight: Vec<&Vec<Scalar>> = r
                .vertices
                .iter()
                .zip(&r.incidence)
                .filter(|(_, inc)| inc.binary_search(&(f as u32)).is_ok())
                .map(|(&v, _)| &self.points[v])
                .collect();
            *k = tight.len() >= d && affine_dimension(&tight) == d as isize - 1;
        }
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut remap = vec![u32::MAX; m];
        let mut facets = Vec::new();
        for f in 0..m {
            if keep[f] {
                remap[f] = facets.len() as u32;
                facets.push(r.facets[f]);
            }
        }
        for inc in r.incidence.iter_mut() {
            *inc = inc.iter().filter(|&&f| keep[f as usize]).map(|&f| remap[f as usize]).collect();
        }
        r.facets = facets;
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn contains_all(sup: &[u32], sub: &[u32]) -> bool {
    let mut j = 0;
    for x in sub {
        while j < sup.len() && sup[j] < *x {
            j += 1;
        }
        if j == sup.len() || sup[j] != *x {
            return false;
        }
    }
    true
}

/// Neuron-by-neuron construction state.
struct Builder {
    d: usize,
    domain: BoxDomain,
    arena: Arena,
    regions: Vec<Region>,
    options: BuildOptions,
}

impl Builder {
    fn new(domain: &BoxDomain, options: BuildOptions) -> Builder {
        let mut arena = Arena::default();
        let region = arena.box_region(domain);
        Builder { d: domain.dim(), domain: domain.clone(), arena, regions: vec![region], options }
    }

    /// Splits every region by every neuron of `layer`; `hidden` layers are
    /// followed by ReLU, the output layer is not.
    fn layer(&mut self, layer: &AffineLayer, layer_no: usize, hidden: bool, mut log: Option<&mut Vec<Violation>>) -> Result<()> {
        for i in 0..layer.out_dim() {
            let row = layer.weights().row(i);
            let bias = &layer.bias()[i];
            let neuron = NeuronId::new(layer_no, i + 1);
            let mut next = Vec::with_capacity(self.regions.len());
            for (cell, mut r) in core::mem::take(&mut self.regions).into_iter().enumerate() {
                let (grad, constant) = r.map.functional(row, bias);
                match self.arena.split(&r, &grad, &constant, self.d)? {
                    Split::Constant(s) => {
                        if s == Sign::Zero {
                            if let Some(log) = log.as_deref_mut() {
                                log.push(Violation { neuron, cell, reason: ViolationReason::DegeneratePullback });
                            }
                        }
                        r.pattern.push(s == Sign::Positive);
                        next.push(r);
                    }
                    Split::Side { positive, touches } => {
                        if touches {
                            if let Some(log) = log.as_deref_mut() {
                                log.push(Violation { neuron, cell, reason: ViolationReason::VertexOnHyperplane });
                            }
                        }
                        r.pattern.push(positive);
                        next.push(r);
                    }
                    Split::Both(mut p, mut n) => {
                        p.pattern.push(true);
                        n.pattern.push(false);
                        next.push(p);
                        next.push(n);
                    }
                }
            }
            if next.len() > self.options.max_cells {
                return Err(Error::CellLimitExceeded { limit: self.options.max_cells });
            }
            self.regions = next;
        }
        for r in self.regions.iter_mut() {
            let pattern = core::mem::take(&mut r.pattern);
            r.map = r.map.then(layer, if hidden { Some(&pattern) } else { None });
        }
        Ok(())
    }

    fn hidden(&mut self, net: &ReluNetwork, mut log: Option<&mut Vec<Violation>>) -> Result<()> {
        let layers = net.layers();
        for (l, layer) in layers[..layers.len() - 1].iter().enumerate() {
            self.layer(layer, l + 1, true, log.as_deref_mut())?;
        }
        let out = layers.last().unwrap();
        for r in self.regions.iter_mut() {
            r.map = r.map.then(out, None);
        }
        Ok(())
    }

    /// Splits every region by the zero set of its (scalar) affine map.
    fn zero_set(&mut self, neuron: NeuronId, mut log: Option<&mut Vec<Violation>>) -> Result<()> {
        let one = [int(1)];
        let zero = Scalar::zero();
        let mut next = Vec::with_capacity(self.regions.len());
        for (cell, r) in core::mem::take(&mut self.regions).into_iter().enumerate() {
            let (grad, constant) = r.map.functional(&one, &zero);
            match self.arena.split(&r, &grad, &constant, self.d)? {
                Split::Constant(s) => {
                    if s == Sign::Zero {
                        if let Some(log) = log.as_deref_mut() {
                            log.push(Violation { neuron, cell, reason: ViolationReason::DegeneratePullback });
                        }
                    }
                    next.push(r);
                }
                Split::Side { touches, .. } => {
                    if touches {
                        if let Some(log) = log.as_deref_mut() {
                            log.push(Violation { neuron, cell, reason: ViolationReason::VertexOnHyperplane });
                        }
                    }
                    next.push(r);
                }
                Split::Both(p, n) => {
                    next.push(p);
                    next.push(n);
                }
            }
        }
        if next.len() > self.options.max_cells {
            return Err(Error::CellLimitExceeded { limit: self.options.max_cells });
        }
        self.regions = next;
        Ok(())
    }

    fn assemble(self, signed: bool) -> Result<PolyhedralComplex> {
        let Builder { d, domain, arena, mut regions, options } = self;
        let key = |r: &Region| {
            let mut pts: Vec<&Vec<Scalar>> = r.vertices.iter().map(|&v| &arena.points[v]).collect();
            pts.sort_unstable();
            pts.into_iter().cloned().collect::<Vec<_>>()
        };
        let mut keyed: Vec<(Vec<Vec<Scalar>>, Region)> = regions.drain(..).map(|r| (key(&r), r)).collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut cells: Vec<Cell> = Vec::new();
        let mut faces: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (_, r) in &keyed {
            let all: Vec<u32> = (0..r.vertices.len() as u32).collect();
            let mut stack = vec![(all, d)];
            let top = cell_key(r, &stack[0].0);
            if ids.contains_key(&top) {
                return Err(Error::InconsistentComplex("two regions share a vertex set".into()));
            }
            let mut first = true;
            while let Some((subset, k)) = stack.pop() {
                let parent = if first {
                    first = false;
                    insert_cell(&mut ids, &mut cells, r, &subset, k, &arena, signed).0
                } else {
                    ids[&cell_key(r, &subset)]
                };
                if k == 0 {
                    continue;
                }
                let mut seen = BTreeSet::new();
                for f in 0..r.facets.len() as u32 {
                    let child: Vec<u32> = subset.iter().copied().filter(|&v| r.incidence[v as usize].binary_search(&f).is_ok()).collect();
                    if child.len() < k || child.len() == subset.len() || !seen.insert(child.clone()) {
                        continue;
                    }
                    let is_facet = k == d
                        || k <= 2
                        || affine_dimension(&child.iter().map(|&v| &arena.points[r.vertices[v as usize]]).collect::<Vec<_>>()) == k as isize - 1;
                    if !is_facet {
                        continue;
                    }
                    let (id, fresh) = insert_cell(&mut ids, &mut cells, r, &child, k - 1, &arena, signed);
                    faces.insert((id, parent));
                    if fresh {
                        stack.push((child, k - 1));
                    }
                }
            }
            if cells.len() > options.max_cells {
                return Err(Error::CellLimitExceeded { limit: options.max_cells });
            }
        }
        Ok(canonicalize(domain, arena, cells, faces))
    }
}

fn cell_key(r: &Region, subset: &[u32]) -> Vec<usize> {
    let mut k: Vec<usize> = subset.iter().map(|&v| r.vertices[v as usize]).collect();
    k.sort_unstable();
    k
}

fn insert_cell(ids: &mut BTreeMap<Vec<usize>, usize>, cells: &mut Vec<Cell>, r: &Region, subset: &[u32], dim: usize, arena: &Arena, signed: bool) -> (usize, bool) {
    let key = cell_key(r, subset);
    if let Some(&id) = ids.get(&key) {
        return (id, false);
    }
    let id = cells.len();
    let constraints = r
        .facets
        .iter()
        .enumerate()
        .map(|(f, &(plane, side))| {
            let f = f as u32;
            let tight = subset.iter().all(|&v| r.incidence[v as usize].binary_search(&f).is_ok());
            (plane, if tight { Sign::Zero } else { side })
        })
        .collect();
    let sign = if signed { label(&r.map, key.iter().map(|&v| arena.points[v].as_slice())) } else { SignLabel::Unsigned };
    cells.push(Cell { id, dim, vertices: key.clone(), constraints, affine_map: r.map.clone(), sign });
    ids.insert(key, id);
    (id, true)
}

/// Sign of a scalar affine map over the convex hull of `points`, given that it does not change sign there.
fn label<'a>(map: &AffineMap, points: impl Iterator<Item = &'a [Scalar]>) -> SignLabel {
    let (mut neg, mut pos) = (false, false);
    for p in points {
        let v = dot_unchecked(map.matrix.row(0), p) + &map.offset[0];
        neg |= v.is_negative();
        pos |= v.is_positive();
    }
    match (neg, pos) {
        (false, false) => SignLabel::Zero,
        (true, false) => SignLabel::Negative,
        (false, true) => SignLabel::Positive,
        (true, true) => SignLabel::Unsigned,
    }
}

/// Renumbers points, hyperplanes and cells in sorted order so that the
/// result does not depend on the order in which regions were produced.
fn canonicalize(domain: BoxDomain, arena: Arena, mut cells: Vec<Cell>, faces: BTreeSet<(usize, usize)>) -> PolyhedralComplex {
    let Arena { points, planes, .. } = arena;
    let mut used = vec![false; points.len()];
    for c in &cells {
        for &v in &c.vertices {
            used[v] = true;
        }
    }
    let mut order: Vec<usize> = (0..points.len()).filter(|&p| used[p]).collect();
    order.sort_unstable_by(|&a, &b| points[a].cmp(&points[b]));
    let mut point_map = vec![usize::MAX; points.len()];
    for (new, &old) in order.iter().enumerate() {
        point_map[old] = new;
    }
    let mut plane_order: Vec<usize> = (0..planes.len()).collect();
    plane_order.sort_unstable_by(|&a, &b| planes[a].cmp(&planes[b]));
    let mut plane_map = vec![0; planes.len()];
    for (new, &old) in plane_order.iter().enumerate() {
        plane_map[old] = new;
    }
    for c in cells.iter_mut() {
        for v in c.vertices.iter_mut() {
            *v = point_map[*v];
        }
        c.vertices.sort_unstable();
        for (p, _) in c.constraints.iter_mut() {
            *p = plane_map[*p];
        }
        c.constraints.sort_unstable();
    }
    let mut cell_order: Vec<usize> = (0..cells.len()).collect();
    cell_order.sort_unstable_by(|&a, &b| (cells[a].dim, &cells[a].vertices).cmp(&(cells[b].dim, &cells[b].vertices)));
    let mut cell_map = vec![0; cells.len()];
    for (new, &old) in cell_order.iter().enumerate() {
        cell_map[old] = new;
    }
    let mut slots: Vec<Option<Cell>> = cells.into_iter().map(Some).collect();
    let cells: Vec<Cell> = cell_order
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let mut c = slots[old].take().unwrap();
            c.id = new;
            c
        })
        .collect();
    let faces = faces.into_iter().map(|(f, c)| (cell_map[f], cell_map[c])).collect();
    let points = order.into_iter().map(|p| points[p].clone()).collect();
    let planes = plane_order.into_iter().map(|p| planes[p].clone()).collect();
    PolyhedralComplex::from_raw(domain, points, planes, cells, faces)
}

fn check_domain(net: &ReluNetwork, domain: &BoxDomain) -> Result<()> {
    if net.input_dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), found: domain.dim() });
    }
    Ok(())
}

/// The canonical polyhedral complex of `net` over `domain`: every hidden neuron
/// splits the regions it cuts. Each cell records the network's affine
/// restriction; cells are [`SignLabel::Unsigned`].
pub fn canonical_complex(net: &ReluNetwork, domain: &BoxDomain, options: BuildOptions) -> Result<PolyhedralComplex> {
    check_domain(net, domain)?;
    let mut b = Builder::new(domain, options);
    b.hidden(net, None)?;
    b.assemble(false)
}

/// Canonical complex refined by the output zero set and labelled by sign, in one pass.
pub fn signed_complex(net: &ReluNetwork, domain: &BoxDomain, options: BuildOptions) -> Result<SignedComplex> {
    signed_complex_logged(net, domain, options, None)
}

pub(crate) fn signed_complex_logged(net: &ReluNetwork, domain: &BoxDomain, options: BuildOptions, mut log: Option<&mut Vec<Violation>>) -> Result<SignedComplex> {
    net.require_scalar_output()?;
    check_domain(net, domain)?;
    let mut b = Builder::new(domain, options);
    b.hidden(net, log.as_deref_mut())?;
    b.zero_set(NeuronId::new(net.depth() + 1, 1), log)?;
    Ok(SignedComplex(b.assemble(true)?))
}

/// Splits the full-dimensional cells of `complex` by the zero set of `net` and labels all cells.
pub fn refine_by_output(complex: &PolyhedralComplex, net: &ReluNetwork, options: BuildOptions) -> Result<SignedComplex> {
    net.require_scalar_output()?;
    check_domain(net, complex.domain())?;
    let d = complex.ambient_dim;
    let mut values = Vec::with_capacity(complex.points.len());
    for p in &complex.points {
        values.push(net.eval(p)?.remove(0));
    }
    let mut arena = Arena::default();
    let ids: Vec<usize> = complex.points.iter().map(|p| arena.point(p.clone())).collect();
    let mut regions = Vec::new();
    for cell in complex.full_cells() {
        let map = &cell.affine_map;
        if map.matrix.rows() != 1 || map.matrix.cols() != d {
            return Err(Error::InconsistentComplex(format!("cell {} has no scalar affine map", cell.id)));
        }
        for &v in &cell.vertices {
            if map.apply(&complex.points[v])?[0] != values[v] {
                return Err(Error::InconsistentComplex(format!("cell {} does not match the network at a vertex", cell.id)));
            }
        }
        let centroid = complex.vertex_centroid(cell.id);
        let mut facets = Vec::new();
        let mut incidence = vec![Vec::new(); cell.vertices.len()];
        for &f in complex.facets_of(cell.id) {
            let pts = complex.cell_points(f);
            let h = hyperplane_through_set(&pts, d)
                .ok_or_else(|| Error::InconsistentComplex(format!("facet {f} is not a hyperplane piece")))?;
            let side = Sign::of(&h.value_unchecked(&centroid));
            let (plane, orientation) = arena.plane(h);
            let idx = facets.len() as u32;
            facets.push((plane, side.times(orientation)));
            for (i, v) in cell.vertices.iter().enumerate() {
                if complex.cells[f].vertices.binary_search(v).is_ok() {
                    incidence[i].push(idx);
                }
            }
        }
        regions.push(Region {
            vertices: cell.vertices.iter().map(|&v| ids[v]).collect(),
            facets,
            incidence,
            map: map.clone(),
            pattern: Vec::new(),
        });
    }
    if regions.is_empty() {
        return Err(Error::InconsistentComplex("complex has no full-dimensional cells".into()));
    }
    let mut b = Builder { d, domain: complex.domain.clone(), arena, regions, options };
    b.zero_set(NeuronId::new(net.depth() + 1, 1), None)?;
    Ok(SignedComplex(b.assemble(true)?))
}

/// Hyperplane through a point set of affine dimension `d - 1`.
fn hyperplane_through_set(points: &[&[Scalar]], d: usize) -> Option<Hyperplane> {
    let mut basis: Vec<&[Scalar]> = Vec::new();
    for &p in points {
        basis.push(p);
        if affine_dimension(&basis) != basis.len() as isize - 1 {
            basis.pop();
        }
        if basis.len() == d {
            break;
        }
    }
    if basis.len() != d {
        return None;
    }
    Hyperplane::through(&basis)
}

/// Cells on which the network is `≤ 0`.
pub fn sublevel_subcomplex(sc: &SignedComplex) -> PolyhedralComplex {
    sc.0.subcomplex(|c| matches!(c.sign, SignLabel::Negative | SignLabel::Zero))
}

/// Full-dimensional cells after merging neighbours with the same affine map.
pub fn linear_region_count(complex: &PolyhedralComplex) -> usize {
    let d = complex.ambient_dim;
    let mut uf = UnionFind::new(complex.len());
    let mut full = 0;
    for c in complex.cells() {
        if c.dim == d {
            full += 1;
        }
        if d == 0 || c.dim != d - 1 {
            continue;
        }
        let co = complex.cofacets_of(c.id);
        if co.len() == 2 && complex.cells[co[0]].affine_map == complex.cells[co[1]].affine_map {
            uf.union(co[0], co[1]);
        }
    }
    let roots: BTreeSet<usize> = complex.full_cells().map(|c| uf.find(c.id)).collect();
    debug_assert!(roots.len() <= full);
    roots.len()
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComplexViolation {
    /// A face of `cell` (given by its vertex indices) is absent or not linked.
    FaceClosure { cell: usize, face: Vec<usize> },
    /// The face relation links cells that are not a facet pair.
    FaceRelation { face: usize, coface: usize },
    /// The recorded dimension disagrees with the vertices or the tight constraints.
    Dimension { cell: usize, detail: String },
    /// Two full-dimensional cells share interior points.
    InteriorOverlap { a: usize, b: usize },
    /// A vertex of the complex lies in a full-dimensional cell without being one of its vertices.
    NonFaceIntersection { cell: usize, point: usize },
    /// Full-dimensional volumes do not add up to the box volume.
    Coverage { covered: Scalar, expected: Scalar },
}

impl ComplexViolation {
    pub fn kind(&self) -> &'static str {
        match self {
            ComplexViolation::FaceClosure { .. } => "face-closure",
            ComplexViolation::FaceRelation { .. } => "face-relation",
            ComplexViolation::Dimension { .. } => "dimension",
            ComplexViolation::InteriorOverlap { .. } => "interior-overlap",
            ComplexViolation::NonFaceIntersection { .. } => "non-face-intersection",
            ComplexViolation::Coverage { .. } => "coverage",
        }
    }
}

/// Facets of the polytope spanned by `points` (affine dimension `k`), as index sets.
pub fn polytope_facets(points: &[&[Scalar]]) -> Vec<Vec<usize>> {
    let k = affine_dimension(points);
    if k <= 0 {
        return Vec::new();
    }
    let k = k as usize;
    let local = local_coordinates(points, k);
    let mut found = BTreeSet::new();
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let base: Vec<&[Scalar]> = combo.iter().map(|&i| local[i].as_slice()).collect();
        if affine_dimension(&base) == k as isize - 1 {
            if let Some(h) = Hyperplane::through(&base) {
                let vals: Vec<Sign> = local.iter().map(|p| Sign::of(&h.value_unchecked(p))).collect();
                let one_sided = !vals.contains(&Sign::Positive) || !vals.contains(&Sign::Negative);
                if one_sided {
                    found.insert((0..local.len()).filter(|&i| vals[i] == Sign::Zero).collect::<Vec<_>>());
                }
            }
        }
        if !next_combination(&mut combo, local.len()) {
            break;
        }
    }
    found.into_iter().collect()
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Injective coordinate projection of a `k`-dimensional point set into `Q^k`.
fn local_coordinates(points: &[&[Scalar]], k: usize) -> Vec<Vec<Scalar>> {
    let d = points[0].len();
    if k == d {
        return points.iter().map(|p| p.to_vec()).collect();
    }
    let diffs: Vec<Vec<Scalar>> = points[1..].iter().map(|p| p.iter().zip(points[0]).map(|(a, b)| a - b).collect()).collect();
    let mut axes: Vec<usize> = (0..k).collect();
    loop {
        let proj: Vec<Vec<Scalar>> = diffs.iter().map(|v| axes.iter().map(|&a| v[a].clone()).collect()).collect();
        if vectors_rank(&proj, k) == k {
            return points.iter().map(|p| axes.iter().map(|&a| p[a].clone()).collect()).collect();
        }
        if !next_combination(&mut axes, d) {
            unreachable!("a k-dimensional set projects injectively onto some k axes");
        }
    }
}

/// Checks the complex invariants; an empty list means valid.
pub fn validate_complex(pc: &PolyhedralComplex) -> Vec<ComplexViolation> {
    let mut out = Vec::new();
    let d = pc.ambient_dim;
    let by_vertices: BTreeMap<&[usize], usize> = pc.cells.iter().map(|c| (c.vertices.as_slice(), c.id)).collect();
    for &(f, c) in &pc.faces {
        if pc.cells[f].dim + 1 != pc.cells[c].dim || !is_subset(&pc.cells[f].vertices, &pc.cells[c].vertices) {
            out.push(ComplexViolation::FaceRelation { face: f, coface: c });
        }
    }
    for c in &pc.cells {
        let pts = pc.cell_points(c.id);
        let actual = affine_dimension(&pts);
        if actual != c.dim as isize {
            out.push(ComplexViolation::Dimension { cell: c.id, detail: format!("recorded {}, vertices span {}", c.dim, actual) });
        }
        let tight: Vec<&[Scalar]> = c.constraints.iter().filter(|(_, s)| *s == Sign::Zero).map(|(p, _)| pc.hyperplanes[*p].normal()).collect();
        if !c.constraints.is_empty() && d - vectors_rank(&tight, d) != c.dim {
            out.push(ComplexViolation::Dimension { cell: c.id, detail: "tight constraints disagree".into() });
        }
        for (p, s) in &c.constraints {
            let h = &pc.hyperplanes[*p];
            let bad = pts.iter().any(|x| {
                let v = Sign::of(&h.value_unchecked(x));
                v != *s && v != Sign::Zero
            }) || (*s == Sign::Zero && pts.iter().any(|x| !h.value_unchecked(x).is_zero()));
            if bad {
                out.push(ComplexViolation::Dimension { cell: c.id, detail: format!("vertex violates constraint {p}") });
                break;
            }
        }
        for facet in polytope_facets(&pts) {
            let verts: Vec<usize> = facet.iter().map(|&i| c.vertices[i]).collect();
            let linked = by_vertices.get(verts.as_slice()).is_some_and(|&f| pc.facets_of[c.id].contains(&f));
            if !linked {
                out.push(ComplexViolation::FaceClosure { cell: c.id, face: verts });
            }
        }
    }
    let full: Vec<usize> = pc.full_cells().map(|c| c.id).collect();
    let geometry: Vec<CellGeometry> = full.iter().map(|&id| CellGeometry::of(pc, id)).collect();
    let mut overlap = false;
    for i in 0..full.len() {
        for j in i + 1..full.len() {
            if geometry[i].overlaps(&geometry[j], d) {
                overlap = true;
                out.push(ComplexViolation::InteriorOverlap { a: full[i], b: full[j] });
            }
        }
    }
    for (g, &id) in geometry.iter().zip(&full) {
        for (p, x) in pc.points.iter().enumerate() {
            if pc.cells[id].vertices.binary_search(&p).is_err() && g.contains(x) {
                out.push(ComplexViolation::NonFaceIntersection { cell: id, point: p });
            }
        }
    }
    if !overlap && out.is_empty() && d > 0 {
        let covered = full.iter().fold(Scalar::zero(), |acc, &id| acc + pc.cell_volume(id));
        let expected = pc.domain.volume();
        if covered != expected {
            out.push(ComplexViolation::Coverage { covered, expected });
        }
    }
    out
}

struct CellGeometry {
    points: Vec<Vec<Scalar>>,
    lo: Vec<Scalar>,
    hi: Vec<Scalar>,
    /// Facet functionals, nonnegative on the cell.
    facets: Vec<Hyperplane>,
    edges: Vec<Vec<Scalar>>,
}

impl CellGeometry {
    fn of(pc: &PolyhedralComplex, id: usize) -> CellGeometry {
        let pts = pc.cell_points(id);
        let d = pc.ambient_dim;
        let centroid = pc.vertex_centroid(id);
        let mut facets = Vec::new();
        let mut edges = Vec::new();
        for f in polytope_facets(&pts) {
            let fp: Vec<&[Scalar]> = f.iter().map(|&i| pts[i]).collect();
            if let Some(h) = hyperplane_through_set(&fp, d) {
                let h = if h.value_unchecked(&centroid).is_negative() {
                    Hyperplane::new(h.normal().iter().map(|x| -x).collect(), -h.offset()).unwrap()
                } else {
                    h
                };
                facets.push(h);
            }
            if d == 3 {
                for e in polytope_facets(&fp) {
                    let (a, b) = (fp[e[0]], fp[e[e.len() - 1]]);
                    edges.push(a.iter().zip(b).map(|(x, y)| y - x).collect());
                }
            }
        }
        let lo = (0..d).map(|j| pts.iter().map(|p| &p[j]).min().unwrap().clone()).collect();
        let hi = (0..d).map(|j| pts.iter().map(|p| &p[j]).max().unwrap().clone()).collect();
        CellGeometry { points: pts.iter().map(|p| p.to_vec()).collect(), lo, hi, facets, edges }
    }

    fn contains(&self, x: &[Scalar]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
            && self.facets.iter().all(|f| !f.value_unchecked(x).is_negative())
    }

    /// Separating-axis test on facet normals and, in three dimensions, edge cross products.
    fn overlaps(&self, other: &CellGeometry, d: usize) -> bool {
        for j in 0..d {
            if self.hi[j] <= other.lo[j] || other.hi[j] <= self.lo[j] {
                return false;
            }
        }
        let mut axes: Vec<Vec<Scalar>> = self.facets.iter().chain(&other.facets).map(|h| h.normal().to_vec()).collect();
        if d == 3 {
            for a in &self.edges {
                for b in &other.edges {
                    let c = vec![
                        &a[1] * &b[2] - &a[2] * &b[1],
                        &a[2] * &b[0] - &a[0] * &b[2],
                        &a[0] * &b[1] - &a[1] * &b[0],
                    ];
                    if c.iter().any(|x| !x.is_zero()) {
                        axes.push(c);
                    }
                }
            }
        }
        for axis in &axes {
            let range = |pts: &[Vec<Scalar>]| {
                let vals: Vec<Scalar> = pts.iter().map(|p| dot_unchecked(axis, p)).collect();
                (vals.iter().min().unwrap().clone(), vals.iter().max().unwrap().clone())
            };
            let (a0, a1) = range(&self.points);
            let (b0, b1) = range(&other.points);
            if a1 <= b0 || b1 <= a0 {
                return false;
            }
        }
        true
    }
}
