//! Rational homology of polyhedral complexes via their order complexes.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::arrangement::{linear_region_count, signed_complex, sublevel_subcomplex, BuildOptions, PolyhedralComplex, SignLabel, SignedComplex};
use crate::constructions::{betti_upper_bound, euler_characteristic, serra_region_bound, BettiVector};
use crate::error::Result;
use crate::exact::BoxDomain;
use crate::network::ReluNetwork;
use crate::unionfind::UnionFind;

/// Strictly increasing chains of a face poset, grouped by length.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimplicialComplex {
    simplices: Vec<Vec<Vec<usize>>>,
}

impl SimplicialComplex {
    /// `k`-simplices; each is a chain of `k+1` cell ids listed from the smallest face up.
    pub fn simplices(&self, k: usize) -> &[Vec<usize>] {
        self.simplices.get(k).map_or(&[], |v| v.as_slice())
    }

    pub fn count(&self, k: usize) -> usize {
        self.simplices(k).len()
    }

    /// Highest simplex dimension plus one.
    pub fn levels(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.simplices.iter().enumerate().map(|(k, s)| if k % 2 == 0 { s.len() as i64 } else { -(s.len() as i64) }).sum()
    }
}

/// Strict up-sets of every cell, ascending.
fn up_sets(pc: &PolyhedralComplex) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..pc.len()).collect();
    order.sort_by_key(|&c| core::cmp::Reverse(pc.cell(c).dim));
    let mut up: Vec<Vec<usize>> = vec![Vec::new(); pc.len()];
    for c in order {
        let mut acc: Vec<usize> = Vec::new();
        for &co in pc.cofacets_of(c) {
            acc.push(co);
            acc.extend_from_slice(&up[co]);
        }
        acc.sort_unstable();
        acc.dedup();
        up[c] = acc;
    }
    up
}

fn chains_from(cells: &[usize], up: &[Vec<usize>]) -> SimplicialComplex {
    let mut simplices: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = cells.iter().rev().map(|&c| vec![c]).collect();
    while let Some(chain) = stack.pop() {
        let k = chain.len() - 1;
        if simplices.len() <= k {
            simplices.resize(k + 1, Vec::new());
        }
        let last = *chain.last().unwrap();
        for &next in up[last].iter().rev() {
            let mut longer = chain.clone();
            longer.push(next);
            stack.push(longer);
        }
        simplices[k].push(chain);
    }
    for level in simplices.iter_mut() {
        level.sort_unstable();
    }
    SimplicialComplex { simplices }
}

/// Barycentric subdivision: one simplex per chain `c_0 < c_1 < … < c_k` of the face poset.
pub fn order_complex(pc: &PolyhedralComplex) -> SimplicialComplex {
    let up = up_sets(pc);
    let all: Vec<usize> = (0..pc.len()).collect();
    chains_from(&all, &up)
}

/// Sparse signed boundary operators `∂_k`, one column per `k`-simplex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainBoundary {
    /// `columns[k][j]` lists `(row, ±1)` for the boundary of the `j`-th `k`-simplex.
    /// `columns[0]` is empty.
    columns: Vec<Vec<Vec<(usize, i64)>>>,
    rows: Vec<usize>,
}

impl ChainBoundary {
    pub fn column(&self, k: usize, j: usize) -> &[(usize, i64)] {
        &self.columns[k][j]
    }

    pub fn levels(&self) -> usize {
        self.columns.len()
    }

    /// `∂_k` as a dense matrix, rows indexed by `(k-1)`-simplices.
    pub fn dense(&self, k: usize) -> Vec<Vec<i64>> {
        let rows = if k == 0 { 0 } else { self.rows[k - 1] };
        let cols = self.columns.get(k).map_or(0, Vec::len);
        let mut m = vec![vec![0; cols]; rows];
        for (j, col) in self.columns[k].iter().enumerate() {
            for &(r, v) in col {
                m[r][j] = v;
            }
        }
        m
    }

    pub fn rank(&self, k: usize) -> usize {
        match self.columns.get(k) {
            Some(cols) if k > 0 => sparse_rank(cols),
            _ => 0,
        }
    }

    /// True when `∂_{k-1} ∘ ∂_k` vanishes for every `k`.
    pub fn squares_to_zero(&self) -> bool {
        for k in 2..self.columns.len() {
            for col in &self.columns[k] {
                let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
                for &(r, v) in col {
                    for &(rr, vv) in &self.columns[k - 1][r] {
                        *acc.entry(rr).or_insert(0) += v * vv;
                    }
                }
                if acc.values().any(|&x| x != 0) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn boundary_matrices(sc: &SimplicialComplex) -> ChainBoundary {
    let levels = sc.levels();
    let mut columns = vec![Vec::new(); levels];
    let rows: Vec<usize> = (0..levels).map(|k| sc.count(k)).collect();
    for k in 1..levels {
        let index: BTreeMap<&[usize], usize> = sc.simplices(k - 1).iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
        columns[k] = sc
            .simplices(k)
            .iter()
            .map(|s| {
                let mut face = Vec::with_capacity(k);
                let mut col: Vec<(usize, i64)> = (0..=k)
                    .map(|i| {
                        face.clear();
                        face.extend(s.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &c)| c));
                        (index[face.as_slice()], if i % 2 == 0 { 1 } else { -1 })
                    })
                    .collect();
                col.sort_unstable();
                col
            })
            .collect();
    }
    ChainBoundary { columns, rows }
}

/// Coefficients for fraction-free sparse elimination.
trait Coefficient: Clone + PartialEq + Sized {
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool;
    /// `a*x - b*y`, or `None` on overflow.
    fn combine(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self>;
    fn gcd(&self, other: &Self) -> Self;
    fn div_exact(&self, g: &Self) -> Self;
    fn is_unit(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn neg(&self) -> Option<Self>;
}

impl Coefficient for i64 {
    fn from_i64(v: i64) -> Self {
        v
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn combine(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self> {
        a.checked_mul(*x)?.checked_sub(b.checked_mul(*y)?)
    }
    fn gcd(&self, other: &Self) -> Self {
        Integer::gcd(self, other)
    }
    fn div_exact(&self, g: &Self) -> Self {
        self / g
    }
    fn is_unit(&self) -> bool {
        *self == 1 || *self == -1
    }
    fn is_negative(&self) -> bool {
        *self < 0
    }
    fn neg(&self) -> Option<Self> {
        self.checked_neg()
    }
}

impl Coefficient for BigInt {
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn combine(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self> {
        Some(a * x - b * y)
    }
    fn gcd(&self, other: &Self) -> Self {
        Integer::gcd(self, other)
    }
    fn div_exact(&self, g: &Self) -> Self {
        self / g
    }
    fn is_unit(&self) -> bool {
        self.abs().is_one()
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn neg(&self) -> Option<Self> {
        Some(-self)
    }
}

/// Rank of the span of sparse integer vectors (entries sorted by index).
fn sparse_rank(columns: &[Vec<(usize, i64)>]) -> usize {
    eliminate::<i64>(columns).unwrap_or_else(|| eliminate::<BigInt>(columns).expect("big integers do not overflow"))
}

fn eliminate<T: Coefficient>(columns: &[Vec<(usize, i64)>]) -> Option<usize> {
    let mut pivots: BTreeMap<usize, Vec<(usize, T)>> = BTreeMap::new();
    for col in columns {
        let mut v: Vec<(usize, T)> = col.iter().map(|&(r, x)| (r, T::from_i64(x))).collect();
        while let Some((low, lead)) = v.last().cloned() {
            let Some(p) = pivots.get(&low) else {
                pivots.insert(low, v);
                break;
            };
            let plead = &p.last().unwrap().1;
            v = combine_rows(&v, &lead, p, plead)?;
        }
    }
    Some(pivots.len())
}

/// `plead·v − lead·p`, reduced by the gcd of its entries.
fn combine_rows<T: Coefficient>(v: &[(usize, T)], lead: &T, p: &[(usize, T)], plead: &T) -> Option<Vec<(usize, T)>> {
    let zero = T::from_i64(0);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(v.len() + p.len());
    while i < v.len() || j < p.len() {
        let (idx, x, y) = match (v.get(i), p.get(j)) {
            (Some(a), Some(b)) if a.0 == b.0 => {
                i += 1;
                j += 1;
                (a.0, &a.1, &b.1)
            }
            (Some(a), Some(b)) if a.0 < b.0 => {
                i += 1;
                (a.0, &a.1, &zero)
            }
            (Some(a), None) => {
                i += 1;
                (a.0, &a.1, &zero)
            }
            (_, Some(b)) => {
                j += 1;
                (b.0, &zero, &b.1)
            }
            (None, None) => unreachable!(),
        };
        let r = T::combine(plead, x, lead, y)?;
        if !r.is_zero() {
            out.push((idx, r));
        }
    }
    if let Some(first) = out.first() {
        let mut g = first.1.clone();
        for (_, x) in &out[1..] {
            if g.is_unit() {
                break;
            }
            g = g.gcd(x);
        }
        if g.is_negative() {
            g = g.neg()?;
        }
        if !g.is_unit() && !g.is_zero() {
            for e in out.iter_mut() {
                e.1 = e.1.div_exact(&g);
            }
        }
    }
    Some(out)
}

/// Groups cells into connected components of the face-incidence graph.
fn components(pc: &PolyhedralComplex) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(pc.len());
    for &(f, c) in pc.faces() {
        uf.union(f, c);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..pc.len() {
        groups.entry(uf.find(c)).or_default().push(c);
    }
    groups.into_values().collect()
}

/// Number of connected components of the support.
pub fn connected_components(pc: &PolyhedralComplex) -> usize {
    let mut uf = UnionFind::new(pc.len());
    let mut n = pc.len();
    for &(f, c) in pc.faces() {
        if uf.union(f, c) {
            n -= 1;
        }
    }
    n
}

/// `(β_0, …, β_{max_k})` over the rationals, computed component by component.
pub fn betti_numbers(pc: &PolyhedralComplex, max_k: usize) -> BettiVector {
    let up = up_sets(pc);
    let mut total = BettiVector::zeros(max_k + 1);
    for comp in components(pc) {
        let sc = chains_from(&comp, &up);
        let bd = boundary_matrices(&sc);
        let ranks: Vec<usize> = (0..=max_k + 1).map(|k| bd.rank(k)).collect();
        let b = (0..=max_k).map(|k| sc.count(k) - ranks[k] - ranks[k + 1]).collect();
        total = total.add(&BettiVector::new(b));
    }
    total
}

/// Outcome of the exact pipeline on one network and box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisReport {
    pub architecture: Vec<usize>,
    pub betti: BettiVector,
    /// Linear regions after merging neighbours with equal affine maps.
    pub region_count: usize,
    pub serra_bound: BigUint,
    /// Entry `k` bounds `β_k` (`s = 0`).
    pub binomial_bounds: Vec<BigUint>,
    /// Entry `k`: number of `(k+1)`-cells of the signed complex outside the sublevel set.
    pub complement_cells: Vec<usize>,
    pub euler: i64,
    /// Alternating cell count of the sublevel complex.
    pub sublevel_euler: i64,
    pub signed_f_vector: Vec<usize>,
    pub sublevel_f_vector: Vec<usize>,
    /// Full-dimensional cells labelled zero; the closure offset keeps this at 0.
    pub zero_full_cells: usize,
}

impl AnalysisReport {
    pub fn from_signed(net: &ReluNetwork, sc: &SignedComplex) -> Result<AnalysisReport> {
        let pc = sc.complex();
        let d = pc.ambient_dim();
        let sub = sublevel_subcomplex(sc);
        let betti = betti_numbers(&sub, d.saturating_sub(1));
        let architecture = net.architecture();
        let serra_bound = serra_region_bound(&architecture)?;
        let binomial_bounds = (0..d).map(|k| betti_upper_bound(&architecture, k, 0)).collect::<Result<_>>()?;
        let complement_cells = (0..d)
            .map(|k| pc.cells().iter().filter(|c| c.dim == k + 1 && c.sign == SignLabel::Positive).count())
            .collect();
        Ok(AnalysisReport {
            euler: euler_characteristic(&betti),
            sublevel_euler: sub.euler_characteristic(),
            region_count: linear_region_count(pc),
            zero_full_cells: pc.full_cells().filter(|c| c.sign == SignLabel::Zero).count(),
            signed_f_vector: pc.f_vector(),
            sublevel_f_vector: sub.f_vector(),
            architecture,
            betti,
            serra_bound,
            binomial_bounds,
            complement_cells,
        })
    }
}

/// Canonical complex, output refinement, sublevel subcomplex and Betti numbers.
pub fn analyze_network(net: &ReluNetwork, domain: &BoxDomain, options: BuildOptions) -> Result<AnalysisReport> {
    let sc = signed_complex(net, domain, options)?;
    AnalysisReport::from_signed(net, &sc)
}
