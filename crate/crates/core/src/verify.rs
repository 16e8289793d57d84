//! Grid sampling oracle and reconciliation of exact, predicted and bounded values.
//!
//! The grid evaluator works on denominator-cleared integers and does not reuse
//! the network's own evaluation or the arrangement code.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::constructions::BettiVector;
use crate::error::{Error, Result};
use crate::exact::{BoxDomain, Scalar};
use crate::homology::AnalysisReport;
use crate::network::ReluNetwork;
use crate::unionfind::UnionFind;

/// Default cap on `(N+1)^d`.
pub const DEFAULT_MAX_GRID_POINTS: u128 = 1 << 25;

/// `16 · w_max · M`.
pub fn default_oracle_resolution(big_m: u64, w_max: u64) -> u64 {
    16 * w_max * big_m
}

/// Signs of a network on the grid `lower + (upper - lower)·k/N`, `k ∈ {0..N}^d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignGrid {
    resolution: u64,
    d: usize,
    signs: Vec<i8>,
}

impl SignGrid {
    pub fn new(resolution: u64, d: usize, signs: Vec<i8>) -> Result<SignGrid> {
        let side = resolution as usize + 1;
        let expected = side.checked_pow(d as u32).ok_or(Error::InvalidArgument("grid too large".into()))?;
        if signs.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: signs.len() });
        }
        Ok(SignGrid { resolution, d, signs })
    }

    pub fn resolution(&self) -> u64 {
        self.resolution
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Row-major with axis 0 varying fastest.
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, index: &[u64]) -> i8 {
        let side = self.resolution as usize + 1;
        let flat = index.iter().rev().fold(0usize, |acc, &k| acc * side + k as usize);
        self.signs[flat]
    }
}

/// Exact integer evaluation of a network at grid points.
#[derive(Clone, Debug)]
pub struct GridEvaluator {
    d: usize,
    resolution: u64,
    /// Per axis, the scaled coordinates `S_0 · x_i(k)`.
    axes: Vec<Vec<BigInt>>,
    layers: Vec<(Vec<Vec<BigInt>>, Vec<BigInt>)>,
    small: Option<SmallEvaluator>,
}

#[derive(Clone, Debug)]
struct SmallEvaluator {
    axes: Vec<Vec<i128>>,
    layers: Vec<(Vec<Vec<i128>>, Vec<i128>)>,
}

fn denominator_lcm<'a>(xs: impl Iterator<Item = &'a Scalar>) -> BigInt {
    xs.fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

fn scaled(x: &Scalar, s: &BigInt) -> BigInt {
    // Exact because `s` is a multiple of the denominator.
    x.numer() * (s / x.denom())
}

impl GridEvaluator {
    pub fn new(net: &ReluNetwork, domain: &BoxDomain, resolution: u64) -> Result<GridEvaluator> {
        net.require_scalar_output()?;
        if resolution == 0 {
            return Err(Error::InvalidArgument("resolution must be at least 1".into()));
        }
        if net.input_dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: net.input_dim(), found: domain.dim() });
        }
        let d = domain.dim();
        let n = Scalar::from_integer(BigInt::from(resolution));
        let coords: Vec<Vec<Scalar>> = (0..d)
            .map(|i| {
                let (lo, hi) = (&domain.lower()[i], &domain.upper()[i]);
                (0..=resolution).map(|k| lo + (hi - lo) * Scalar::from_integer(BigInt::from(k)) / &n).collect()
            })
            .collect();
        let mut scale = denominator_lcm(coords.iter().flatten());
        let axes: Vec<Vec<BigInt>> = coords.iter().map(|c| c.iter().map(|x| scaled(x, &scale)).collect()).collect();
        let mut layers = Vec::new();
        for layer in net.layers() {
            let w = layer.weights();
            let dl = denominator_lcm(w.entries().iter().chain(layer.bias()));
            let rows = (0..w.rows()).map(|r| w.row(r).iter().map(|x| scaled(x, &dl)).collect()).collect();
            scale *= &dl;
            let bias = layer.bias().iter().map(|b| scaled(b, &scale)).collect();
            layers.push((rows, bias));
        }
        let small = SmallEvaluator::try_from_big(&axes, &layers);
        Ok(GridEvaluator { d, resolution, axes, layers, small })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn resolution(&self) -> u64 {
        self.resolution
    }

    pub fn point_count(&self) -> u128 {
        (self.resolution as u128 + 1).pow(self.d as u32)
    }

    /// Sign at the point with flat index `flat` (axis 0 fastest).
    pub fn sign_at_flat(&self, flat: usize) -> i8 {
        let side = self.resolution as usize + 1;
        let mut idx = vec![0usize; self.d];
        let mut rest = flat;
        for v in idx.iter_mut() {
            *v = rest % side;
            rest /= side;
        }
        self.sign_at(&idx)
    }

    pub fn sign_at(&self, index: &[usize]) -> i8 {
        if let Some(s) = self.small.as_ref().and_then(|s| s.sign(index)) {
            return s;
        }
        let mut a: Vec<BigInt> = index.iter().enumerate().map(|(i, &k)| self.axes[i][k].clone()).collect();
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            a = w
                .iter()
                .zip(b)
                .map(|(row, bias)| {
                    let z = row.iter().zip(&a).fold(bias.clone(), |acc, (x, y)| acc + x * y);
                    if l < last && z.is_negative() {
                        BigInt::zero()
                    } else {
                        z
                    }
                })
                .collect();
        }
        match a[0].sign() {
            num_bigint::Sign::Minus => -1,
            num_bigint::Sign::NoSign => 0,
            num_bigint::Sign::Plus => 1,
        }
    }
}

impl SmallEvaluator {
    fn try_from_big(axes: &[Vec<BigInt>], layers: &[(Vec<Vec<BigInt>>, Vec<BigInt>)]) -> Option<SmallEvaluator> {
        let conv = |v: &[BigInt]| v.iter().map(ToPrimitive::to_i128).collect::<Option<Vec<i128>>>();
        let axes = axes.iter().map(|a| conv(a)).collect::<Option<Vec<_>>>()?;
        let layers = layers
            .iter()
            .map(|(w, b)| Some((w.iter().map(|r| conv(r)).collect::<Option<Vec<_>>>()?, conv(b)?)))
            .collect::<Option<Vec<_>>>()?;
        Some(SmallEvaluator { axes, layers })
    }

    /// `None` on overflow.
    fn sign(&self, index: &[usize]) -> Option<i8> {
        let mut a: Vec<i128> = index.iter().enumerate().map(|(i, &k)| self.axes[i][k]).collect();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            next.clear();
            for (row, &bias) in w.iter().zip(b) {
                let mut z = bias;
                for (x, y) in row.iter().zip(&a) {
                    z = z.checked_add(x.checked_mul(*y)?)?;
                }
                next.push(if l < last { z.max(0) } else { z });
            }
            core::mem::swap(&mut a, &mut next);
        }
        Some(a[0].signum() as i8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridOptions {
    pub max_points: u128,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { max_points: DEFAULT_MAX_GRID_POINTS }
    }
}

/// Exact signs at every grid point.
pub fn grid_sign_sample(net: &ReluNetwork, domain: &BoxDomain, resolution: u64, options: GridOptions) -> Result<SignGrid> {
    let eval = GridEvaluator::new(net, domain, resolution)?;
    check_grid_size(&eval, options)?;
    let signs = (0..eval.point_count() as usize).map(|i| eval.sign_at_flat(i)).collect();
    SignGrid::new(resolution, eval.d(), signs)
}

pub fn check_grid_size(eval: &GridEvaluator, options: GridOptions) -> Result<()> {
    let points = eval.point_count();
    if points > options.max_points || points > usize::MAX as u128 {
        return Err(Error::GridTooLarge { points, cap: options.max_points });
    }
    Ok(())
}

/// Components of the nonpositive grid points under axis-neighbour adjacency.
pub fn grid_beta0(sg: &SignGrid) -> usize {
    let side = sg.resolution as usize + 1;
    let n = sg.signs.len();
    let mut uf = UnionFind::new(n);
    let mut count = 0usize;
    let mut stride = 1usize;
    let strides: Vec<usize> = (0..sg.d)
        .map(|_| {
            let s = stride;
            stride *= side;
            s
        })
        .collect();
    for i in 0..n {
        if sg.signs[i] > 0 {
            continue;
        }
        count += 1;
        for &s in &strides {
            // Neighbour one step back along this axis, if it exists.
            if (i / s) % side == 0 {
                continue;
            }
            let j = i - s;
            if sg.signs[j] <= 0 && uf.union(i, j) {
                count -= 1;
            }
        }
    }
    count
}

/// Side-by-side comparison of the exact pipeline with predictions, the oracle and bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reconciliation {
    pub exact: BettiVector,
    pub predicted: Option<BettiVector>,
    /// Per dimension, exact equals predicted.
    pub predicted_agree: Option<Vec<bool>>,
    pub oracle_beta0: Option<usize>,
    pub oracle_agree: Option<bool>,
    /// Linear region count within the Serra bound.
    pub serra_ok: bool,
    /// Per dimension, `β_k` within the binomial bound.
    pub binomial_ok: Vec<bool>,
    /// For `k = 1..d-1` (entry `k-1`), `β_k` at most the number of positive `(k+1)`-cells.
    pub cell_bound_ok: Vec<bool>,
    /// Euler characteristic of the Betti vector equals the alternating cell count.
    pub euler_ok: bool,
}

impl Reconciliation {
    pub fn all_agree(&self) -> bool {
        self.predicted_agree.as_ref().is_none_or(|v| v.iter().all(|&b| b))
            && self.oracle_agree.unwrap_or(true)
            && self.serra_ok
            && self.binomial_ok.iter().all(|&b| b)
            && self.cell_bound_ok.iter().all(|&b| b)
            && self.euler_ok
    }

    /// Human-readable mismatches, empty when everything agrees.
    pub fn disagreements(&self) -> Vec<alloc::string::String> {
        use alloc::format;
        let mut out = Vec::new();
        if let (Some(p), Some(flags)) = (&self.predicted, &self.predicted_agree) {
            for (k, ok) in flags.iter().enumerate() {
                if !ok {
                    out.push(format!("beta_{k}: exact {} vs predicted {}", self.exact.get(k), p.get(k)));
                }
            }
        }
        if self.oracle_agree == Some(false) {
            out.push(format!("beta_0: exact {} vs grid oracle {}", self.exact.get(0), self.oracle_beta0.unwrap_or(0)));
        }
        if !self.serra_ok {
            out.push("linear region count exceeds the Serra bound".into());
        }
        for (k, ok) in self.binomial_ok.iter().enumerate() {
            if !ok {
                out.push(format!("beta_{k} exceeds its binomial bound"));
            }
        }
        for (i, ok) in self.cell_bound_ok.iter().enumerate() {
            if !ok {
                out.push(format!("beta_{} exceeds the positive cell count", i + 1));
            }
        }
        if !self.euler_ok {
            out.push("Euler characteristic disagrees with the alternating cell count".into());
        }
        out
    }
}

pub fn reconcile(report: &AnalysisReport, predicted: Option<&BettiVector>, oracle_beta0: Option<usize>) -> Reconciliation {
    let exact = report.betti.clone();
    let d = exact.d();
    let predicted_agree = predicted.map(|p| (0..d.max(p.d())).map(|k| exact.get(k) == p.get(k) && k < p.d() && k < d).collect());
    Reconciliation {
        predicted: predicted.cloned(),
        predicted_agree,
        oracle_beta0,
        oracle_agree: oracle_beta0.map(|b| b == exact.get(0)),
        serra_ok: num_bigint::BigUint::from(report.region_count) <= report.serra_bound,
        binomial_ok: (0..d).map(|k| num_bigint::BigUint::from(exact.get(k)) <= report.binomial_bounds[k]).collect(),
        cell_bound_ok: (1..d).map(|k| exact.get(k) <= report.complement_cells[k]).collect(),
        euler_ok: report.euler == report.sublevel_euler,
        exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, ratio, Matrix};
    use crate::network::AffineLayer;
    use num_bigint::BigUint;

    fn affine(coeffs: &[i64], c: Scalar) -> ReluNetwork {
        let row: Vec<Scalar> = coeffs.iter().map(|&v| int(v)).collect();
        ReluNetwork::new(vec![AffineLayer::new(Matrix::new(1, row.len(), row).unwrap(), vec![c]).unwrap()]).unwrap()
    }

    #[test]
    fn constant_and_linear_grids() {
        let neg = affine(&[0, 0], int(-1));
        let g = grid_sign_sample(&neg, &BoxDomain::unit(2), 5, GridOptions::default()).unwrap();
        assert!(g.signs().iter().all(|&s| s == -1));
        assert_eq!(grid_beta0(&g), 1);
        let pos = affine(&[0, 0], int(1));
        assert_eq!(grid_beta0(&grid_sign_sample(&pos, &BoxDomain::unit(2), 5, GridOptions::default()).unwrap()), 0);
        let line = affine(&[1], ratio(-1, 2));
        let g = grid_sign_sample(&line, &BoxDomain::unit(1), 2, GridOptions::default()).unwrap();
        assert_eq!(g.signs(), &[-1, 0, 1]);
    }

    #[test]
    fn components_on_a_striped_grid() {
        // Zero rows at x_2 = 0 and x_2 = 1 of a 3x3 grid separated by a positive row.
        let g = SignGrid::new(2, 2, vec![-1, -1, -1, 1, 1, 1, 0, 0, 0]).unwrap();
        assert_eq!(grid_beta0(&g), 2);
        assert_eq!(g.sign(&[1, 2]), 0);
        let g = SignGrid::new(2, 2, vec![-1, 1, -1, 1, 1, 1, -1, 1, -1]).unwrap();
        assert_eq!(grid_beta0(&g), 4);
    }

    #[test]
    fn size_guard() {
        let net = affine(&[1, 1, 1], int(0));
        let small = GridOptions { max_points: 1000 };
        assert!(matches!(grid_sign_sample(&net, &BoxDomain::unit(3), 10, small), Err(Error::GridTooLarge { .. })));
        assert!(grid_sign_sample(&net, &BoxDomain::unit(3), 0, small).is_err());
    }

    #[test]
    fn big_integer_fallback_agrees() {
        // Weights with huge denominators force the BigInt path.
        let w = Scalar::new(BigInt::from(1), BigInt::from(10).pow(30));
        let l = AffineLayer::new(Matrix::new(1, 1, vec![w.clone()]).unwrap(), vec![-&w / int(2)]).unwrap();
        let net = ReluNetwork::new(vec![l]).unwrap();
        let g = grid_sign_sample(&net, &BoxDomain::unit(1), 4, GridOptions::default()).unwrap();
        assert_eq!(g.signs(), &[-1, -1, 0, 1, 1]);
    }

    fn report(betti: &[usize]) -> AnalysisReport {
        AnalysisReport {
            architecture: vec![2, 8, 5, 1],
            betti: BettiVector::new(betti.to_vec()),
            region_count: 65,
            serra_bound: BigUint::from(592u32),
            binomial_bounds: vec![BigUint::from(592u32), BigUint::from(592u32)],
            complement_cells: vec![100, 100],
            euler: betti[0] as i64 - betti[1] as i64,
            sublevel_euler: betti[0] as i64 - betti[1] as i64,
            signed_f_vector: vec![],
            sublevel_f_vector: vec![],
            zero_full_cells: 0,
        }
    }

    #[test]
    fn reconciliation_flags() {
        let r = reconcile(&report(&[6, 2]), Some(&BettiVector::new(vec![6, 2])), Some(6));
        assert!(r.all_agree());
        assert!(r.disagreements().is_empty());
        let r = reconcile(&report(&[1, 0]), Some(&BettiVector::new(vec![12, 4])), None);
        assert_eq!(r.predicted_agree, Some(vec![false, false]));
        assert!(!r.all_agree());
        assert_eq!(r.disagreements().len(), 2);
        let r = reconcile(&report(&[6, 4]), None, Some(5));
        assert_eq!(r.oracle_agree, Some(false));
        assert!(r.binomial_ok.iter().all(|&b| b));
    }
}
