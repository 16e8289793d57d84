//! Folding, cutting and carving networks, and the closed-form counts around them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{int, ratio, Matrix, Scalar};
use crate::network::{AffineLayer, ReluNetwork};

/// Folding factors `(m_1, …, m_L)` acting on `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FoldingSpec {
    d: usize,
    m: Vec<u64>,
}

impl FoldingSpec {
    pub fn new(d: usize, m: Vec<u64>) -> Result<FoldingSpec> {
        if d == 0 {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if m.is_empty() {
            return Err(Error::InvalidSpec("at least one folding layer is required".into()));
        }
        for &v in &m {
            check_even(v)?;
        }
        let spec = FoldingSpec { d, m };
        spec.m.iter().try_fold(1u64, |acc, &v| acc.checked_mul(v)).ok_or_else(|| {
            Error::InvalidSpec("product of folding factors overflows".into())
        })?;
        Ok(spec)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> &[u64] {
        &self.m
    }

    /// `M = ∏ m_ℓ`.
    pub fn big_m(&self) -> u64 {
        self.m.iter().product()
    }
}

fn check_even(m: u64) -> Result<()> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("m must be even and at least 2, got {m}")));
    }
    Ok(())
}

/// Cutting widths `(w_1, …, w_{d-1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CuttingSpec {
    d: usize,
    w: Vec<u64>,
}

impl CuttingSpec {
    pub fn new(d: usize, w: Vec<u64>) -> Result<CuttingSpec> {
        if d < 2 {
            return Err(Error::InvalidSpec("carving needs d of at least 2".into()));
        }
        if w.len() != d - 1 {
            return Err(Error::InvalidSpec(format!(
                "w must have d-1 = {} entries, got {}",
                d - 1,
                w.len()
            )));
        }
        if w.contains(&0) {
            return Err(Error::InvalidSpec("every w entry must be at least 1".into()));
        }
        Ok(CuttingSpec { d, w })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn w(&self) -> &[u64] {
        &self.w
    }

    /// Width of the carving layer, `Σ (w_k + 2)`.
    pub fn width(&self) -> usize {
        self.w.iter().map(|&v| v as usize + 2).sum()
    }
}

/// `(β_0, …, β_{d-1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BettiVector {
    values: Vec<usize>,
}

impl BettiVector {
    pub fn new(values: Vec<usize>) -> BettiVector {
        BettiVector { values }
    }

    pub fn zeros(d: usize) -> BettiVector {
        BettiVector { values: vec![0; d] }
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, k: usize) -> usize {
        self.values.get(k).copied().unwrap_or(0)
    }

    /// Componentwise sum, padding the shorter vector with zeros.
    pub fn add(&self, other: &BettiVector) -> BettiVector {
        let n = self.d().max(other.d());
        BettiVector { values: (0..n).map(|k| self.get(k) + other.get(k)).collect() }
    }
}

impl fmt::Display for BettiVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// One hidden layer of width `m·d` folding each coordinate `m` times.
pub fn build_folding_layer(m: u64, d: usize) -> Result<ReluNetwork> {
    check_even(m)?;
    if d == 0 {
        return Err(Error::InvalidSpec("d must be at least 1".into()));
    }
    let mu = m as usize;
    let mut w1 = Matrix::zeros(mu * d, d);
    let mut b1 = vec![Scalar::zero(); mu * d];
    let mut w2 = Matrix::zeros(d, mu * d);
    for j in 0..d {
        for i in 0..mu {
            let row = j * mu + i;
            if i == 0 {
                w1.set(row, j, int(m as i64));
            } else {
                w1.set(row, j, int(2 * m as i64));
                b1[row] = int(-2 * i as i64);
            }
            w2.set(j, row, int(if i % 2 == 0 { 1 } else { -1 }));
        }
    }
    ReluNetwork::new(vec![AffineLayer::new(w1, b1)?, AffineLayer::new(w2, vec![Scalar::zero(); d])?])
}

/// `h^(1,m_L,d) ∘ … ∘ h^(1,m_1,d)`.
pub fn build_folding_network(spec: &FoldingSpec) -> Result<ReluNetwork> {
    let mut net = build_folding_layer(spec.m[0], spec.d)?;
    for &m in &spec.m[1..] {
        net = ReluNetwork::compose(&build_folding_layer(m, spec.d)?, &net)?;
    }
    Ok(net)
}

/// Hidden rows `(coefficient, threshold)` of `ĝ = Σ_q (-1)^q ĝ_q` written as
/// `ĝ_q = max{0, coefficient·(s - threshold)}`.
fn cutting_kinks(w: u64) -> Vec<(Scalar, Scalar)> {
    let wi = w as i64;
    let mut kinks = vec![(int(1), int(0))];
    for q in 1..=wi {
        kinks.push((int(2), ratio(2 * q - 1, 8 * wi)));
    }
    kinks.push((int(1), ratio(1, 4)));
    kinks
}

/// Appends the hidden rows and output coefficients of `g^(w,k) ∘ p_k` into
/// a first layer over `d` inputs.
fn push_cutting_block(w: u64, k: usize, d: usize, rows: &mut Vec<Vec<Scalar>>, bias: &mut Vec<Scalar>, out: &mut Vec<Scalar>) {
    // s = (k-1) - Σ_{i<k} x_i + x_k, the ℓ1-distance from (1,…,1,0) inside the unit cube.
    for (q, (coef, threshold)) in cutting_kinks(w).into_iter().enumerate() {
        let mut row = vec![Scalar::zero(); d];
        for r in row.iter_mut().take(k - 1) {
            *r = -coef.clone();
        }
        row[k - 1] = coef.clone();
        rows.push(row);
        bias.push(&coef * (int(k as i64 - 1) - threshold));
        out.push(int(if q % 2 == 0 { 1 } else { -1 }));
    }
}

/// `g^(w,d) = ĝ ∘ t` with `t(x) = (1-x_1, …, 1-x_{d-1}, x_d)`; width `w+2`.
pub fn build_cutting_network(w: u64, d: usize) -> Result<ReluNetwork> {
    if w == 0 || d == 0 {
        return Err(Error::InvalidSpec("w and d must be at least 1".into()));
    }
    let (mut rows, mut bias, mut out) = (Vec::new(), Vec::new(), Vec::new());
    push_cutting_block(w, d, d, &mut rows, &mut bias, &mut out);
    finish_one_hidden(rows, bias, out, d)
}

fn finish_one_hidden(rows: Vec<Vec<Scalar>>, bias: Vec<Scalar>, out: Vec<Scalar>, d: usize) -> Result<ReluNetwork> {
    let n = rows.len();
    let l1 = AffineLayer::new(Matrix::from_rows(rows, d)?, bias)?;
    let l2 = AffineLayer::new(Matrix::new(1, n, out)?, vec![Scalar::zero()])?;
    ReluNetwork::new(vec![l1, l2])
}

/// `f = Σ_{k=2}^{d} g^(w_{k-1},k) ∘ p_k` as one hidden layer.
pub fn build_carving_network(spec: &CuttingSpec) -> Result<ReluNetwork> {
    let d = spec.d;
    let (mut rows, mut bias, mut out) = (Vec::new(), Vec::new(), Vec::new());
    for k in 2..=d {
        push_cutting_block(spec.w[k - 2], k, d, &mut rows, &mut bias, &mut out);
    }
    finish_one_hidden(rows, bias, out, d)
}

/// `b = min_j 1/(8·w_j·M)`.
pub fn closure_offset(big_m: u64, w: &[u64]) -> Scalar {
    let wmax = w.iter().copied().max().unwrap_or(1).max(1);
    Scalar::new(1.into(), (8u128 * wmax as u128 * big_m as u128).into())
}

/// `F = f ∘ h`, plus the closure offset `b` when requested.
pub fn build_topo_network(fold: &FoldingSpec, cut: &CuttingSpec, with_offset: bool) -> Result<ReluNetwork> {
    if fold.d != cut.d {
        return Err(Error::DimensionMismatch { expected: fold.d, found: cut.d });
    }
    let net = ReluNetwork::compose(&build_carving_network(cut)?, &build_folding_network(fold)?)?;
    Ok(if with_offset { net.with_output_offset(&closure_offset(fold.big_m(), &cut.w)) } else { net })
}

/// Cutting points of `[0,1]^d` for folding product `M`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CuttingPoints {
    pub interior: Vec<Vec<Scalar>>,
    pub boundary: Vec<Vec<Scalar>>,
}

impl CuttingPoints {
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Points `(x'_1/M, …, x'_d/M)` with `x'_i` odd for `i < d` and `x'_d` even.
pub fn cutting_points(big_m: u64, d: usize) -> Result<CuttingPoints> {
    check_even(big_m)?;
    if d == 0 {
        return Err(Error::InvalidSpec("d must be at least 1".into()));
    }
    let mi = big_m as i64;
    let odd: Vec<i64> = (1..mi).step_by(2).collect();
    let mut prefixes: Vec<Vec<Scalar>> = vec![Vec::new()];
    for _ in 1..d {
        prefixes = prefixes
            .into_iter()
            .flat_map(|p| odd.iter().map(move |&o| {
                let mut q = p.clone();
                q.push(ratio(o, mi));
                q
            }))
            .collect();
    }
    let mut pts = CuttingPoints { interior: Vec::new(), boundary: Vec::new() };
    for p in prefixes {
        for e in (0..=mi).step_by(2) {
            let mut q = p.clone();
            q.push(ratio(e, mi));
            if e == 0 || e == mi {
                pts.boundary.push(q);
            } else {
                pts.interior.push(q);
            }
        }
    }
    Ok(pts)
}

/// How many negative shells a cutting network of width `w` places around one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShellRounding {
    /// `⌊w/2⌋`: the odd shells `q < w` of `ĝ`, which is what the builders realise.
    Floor,
    /// `⌈w/2⌉`, the closed form as usually quoted; agrees with `Floor` for even `w`.
    Ceil,
}

impl ShellRounding {
    pub fn shells(self, w: u64) -> u64 {
        match self {
            ShellRounding::Floor => w / 2,
            ShellRounding::Ceil => w.div_ceil(2),
        }
    }
}

/// Betti vector of `F'^{-1}((-∞,0]) ∩ [0,1]^d` for the builders in this module.
pub fn predict_betti(big_m: u64, w: &[u64], d: usize) -> Result<BettiVector> {
    predict_betti_with(big_m, w, d, ShellRounding::Floor)
}

/// Closed form with `β_k = (M/2)^k (M/2 - 1) n(w_k)` and
/// `β_0 = Σ_k (M/2)^k (M/2 + 1) n(w_k)`, where `n` is the shell count.
pub fn predict_betti_with(big_m: u64, w: &[u64], d: usize, rounding: ShellRounding) -> Result<BettiVector> {
    check_even(big_m)?;
    CuttingSpec::new(d, w.to_vec())?;
    let overflow = || Error::InvalidSpec("Betti prediction overflows".into());
    let half = (big_m / 2) as usize;
    let mut values = vec![0usize; d];
    let mut power = 1usize;
    for (k, &wk) in (1..d).zip(w) {
        power = power.checked_mul(half).ok_or_else(overflow)?;
        let n = rounding.shells(wk) as usize;
        let shells = power.checked_mul(n).ok_or_else(overflow)?;
        values[k] = shells.checked_mul(half - 1).ok_or_else(overflow)?;
        let all = shells.checked_mul(half + 1).ok_or_else(overflow)?;
        values[0] = values[0].checked_add(all).ok_or_else(overflow)?;
    }
    Ok(BettiVector::new(values))
}

/// `Σ (-1)^k β_k`.
pub fn euler_characteristic(b: &BettiVector) -> i64 {
    b.values.iter().enumerate().map(|(k, &v)| if k % 2 == 0 { v as i64 } else { -(v as i64) }).sum()
}

pub fn binomial(n: &BigUint, k: i64) -> BigUint {
    if k < 0 || BigUint::from(k as u64) > *n {
        return BigUint::zero();
    }
    let mut acc = BigUint::one();
    for i in 0..k as u64 {
        acc = acc * (n - BigUint::from(i)) / BigUint::from(i + 1);
    }
    acc
}

/// Maximal number of linear regions `r = Σ_{J} ∏_ℓ C(n_ℓ, j_ℓ)`, with
/// `0 ≤ j_ℓ ≤ min(d, n_1 - j_1, …, n_{ℓ-1} - j_{ℓ-1})`.
pub fn serra_region_bound(architecture: &[usize]) -> Result<BigUint> {
    if architecture.len() < 2 || architecture[architecture.len() - 1] != 1 {
        return Err(Error::InvalidSpec("architecture must end in a single output".into()));
    }
    let d = architecture[0];
    let hidden = &architecture[1..architecture.len() - 1];
    fn go(hidden: &[usize], cap: usize) -> BigUint {
        let Some((&n, rest)) = hidden.split_first() else { return BigUint::one() };
        let nb = BigUint::from(n);
        (0..=cap.min(n)).map(|j| binomial(&nb, j as i64) * go(rest, cap.min(n - j))).sum()
    }
    Ok(go(hidden, d))
}

/// `β_0 ≤ r` and `β_k ≤ C(r, d - k - s)` for `1 ≤ k ≤ d - 1`.
pub fn betti_upper_bound(architecture: &[usize], k: usize, s: usize) -> Result<BigUint> {
    let r = serra_region_bound(architecture)?;
    let d = architecture[0];
    if k >= d.max(1) || s > d {
        return Err(Error::InvalidSpec(format!("bound needs 0 <= k < {d} and 0 <= s <= {d}")));
    }
    Ok(if k == 0 { r } else { binomial(&r, d as i64 - k as i64 - s as i64) })
}
