//! Exact rational linear algebra and box geometry.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational, always in lowest terms with a positive denominator.
pub type Scalar = BigRational;

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

/// Exact division, failing on a zero divisor.
pub fn checked_div(a: &Scalar, b: &Scalar) -> Result<Scalar> {
    if b.is_zero() {
        return Err(Error::DivisionByZero);
    }
    Ok(a / b)
}

/// Canonical text form: `p` for integers, `p/q` otherwise.
pub fn format_rational(x: &Scalar) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        let mut s = x.numer().to_string();
        s.push('/');
        s.push_str(&x.denom().to_string());
        s
    }
}

/// Parses `p` or `p/q`, reducing to lowest terms. Accepts `2/4` and `+3`.
pub fn parse_rational_lenient(s: &str) -> Result<Scalar> {
    let bad = || Error::InvalidRational(s.to_string());
    let t = s.trim();
    let (n, d) = match t.split_once('/') {
        Some((n, d)) => (n, d),
        None => (t, "1"),
    };
    let digits = |x: &str| {
        let x = x.strip_prefix(['-', '+']).unwrap_or(x);
        !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit())
    };
    if !digits(n) || !digits(d) {
        return Err(bad());
    }
    let n = BigInt::from_str(n.strip_prefix('+').unwrap_or(n)).map_err(|_| bad())?;
    let d = BigInt::from_str(d.strip_prefix('+').unwrap_or(d)).map_err(|_| bad())?;
    if d.is_zero() {
        return Err(Error::DivisionByZero);
    }
    Ok(Scalar::new(n, d))
}

/// Parses the canonical form only: the string must equal `format_rational` of its value.
pub fn parse_rational(s: &str) -> Result<Scalar> {
    let x = parse_rational_lenient(s)?;
    if format_rational(&x) != s {
        return Err(Error::InvalidRational(s.to_string()));
    }
    Ok(x)
}

/// Sign of an exact quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: &Scalar) -> Sign {
        match x.cmp(&Scalar::zero()) {
            Ordering::Less => Sign::Negative,
            Ordering::Equal => Sign::Zero,
            Ordering::Greater => Sign::Positive,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Negative => -1,
            Sign::Zero => 0,
            Sign::Positive => 1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    /// Product of two signs.
    pub fn times(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (a, b) if a == b => Sign::Positive,
            _ => Sign::Negative,
        }
    }
}

pub fn dot(a: &[Scalar], b: &[Scalar]) -> Result<Scalar> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b).fold(Scalar::zero(), |acc, (x, y)| acc + x * y))
}

pub(crate) fn dot_unchecked(a: &[Scalar], b: &[Scalar]) -> Scalar {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Scalar::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            acc += x * y;
        }
    }
    acc
}

/// Dense row-major rational matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Scalar>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![Scalar::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Scalar::one();
        }
        m
    }

    /// Builds a matrix from rows of equal length. `cols` is needed for the zero-row case.
    pub fn from_rows(rows: Vec<Vec<Scalar>>, cols: usize) -> Result<Matrix> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn from_i64(rows: &[&[i64]]) -> Matrix {
        let cols = rows.first().map_or(0, |r| r.len());
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| int(v))).collect();
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Scalar {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Scalar) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Scalar] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn mul_vec(&self, x: &[Scalar]) -> Result<Vec<Scalar>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: x.len() });
        }
        Ok((0..self.rows).map(|r| dot_unchecked(self.row(r), x)).collect())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.data[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c).clone();
            }
        }
        out
    }

    pub fn scale(&self, s: &Scalar) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for r in 0..self.rows {
            if r > 0 {
                f.write_str("; ")?;
            }
            for c in 0..self.cols {
                if c > 0 {
                    f.write_str(", ")?;
                }
                f.write_str(&format_rational(self.get(r, c)))?;
            }
        }
        f.write_str("]")
    }
}

/// Multiplies a rational row by the lcm of its denominators.
pub fn clear_denominators(row: &[Scalar]) -> Vec<BigInt> {
    let l = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    row.iter().map(|x| x.numer() * (&l / x.denom())).collect()
}

/// Rank of an integer matrix by fraction-free (Bareiss) elimination.
pub fn integer_rank(mut a: Vec<Vec<BigInt>>, cols: usize) -> usize {
    let rows = a.len();
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| !a[r][col].is_zero()) else { continue };
        a.swap(rank, p);
        let (head, tail) = a.split_at_mut(rank + 1);
        let pivot_row = &head[rank];
        let pivot = pivot_row[col].clone();
        for row in tail.iter_mut() {
            let lead = core::mem::take(&mut row[col]);
            for j in col + 1..cols {
                let v = &pivot * &row[j] - &lead * &pivot_row[j];
                row[j] = v / &prev;
            }
        }
        prev = pivot;
        rank += 1;
    }
    rank
}

/// Exact rank over the rationals.
pub fn matrix_rank(m: &Matrix) -> usize {
    let rows = (0..m.rows()).map(|r| clear_denominators(m.row(r))).collect();
    integer_rank(rows, m.cols())
}

/// Rank of a list of rational vectors of length `cols`.
pub fn vectors_rank<V: AsRef<[Scalar]>>(vs: &[V], cols: usize) -> usize {
    let rows = vs.iter().map(|v| clear_denominators(v.as_ref())).collect();
    integer_rank(rows, cols)
}

/// Dimension of the affine hull of a point set; -1 for the empty set.
pub fn affine_dimension<V: AsRef<[Scalar]>>(points: &[V]) -> isize {
    let Some(first) = points.first() else { return -1 };
    let p0 = first.as_ref();
    let diffs: Vec<Vec<Scalar>> = points[1..]
        .iter()
        .map(|p| p.as_ref().iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    vectors_rank(&diffs, p0.len()) as isize
}

/// Solves the square system `A x = b`; returns `None` when `A` is singular.
pub fn solve(a: &Matrix, b: &[Scalar]) -> Result<Option<Vec<Scalar>>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.cols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let mut m: Vec<Vec<Scalar>> =
        (0..n).map(|r| a.row(r).iter().cloned().chain([b[r].clone()]).collect()).collect();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !m[r][col].is_zero()) else { return Ok(None) };
        m.swap(col, p);
        let inv = m[col][col].recip();
        for v in m[col].iter_mut() {
            *v *= &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let t = &f * &m[col][c];
                    m[r][c] -= t;
                }
            }
        }
    }
    Ok(Some(m.into_iter().map(|mut row| row.pop().unwrap()).collect()))
}

/// The set `{x : normal·x + offset = 0}`, scaled to a primitive integer form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hyperplane {
    normal: Vec<Scalar>,
    offset: Scalar,
}

impl Hyperplane {
    /// Rejects zero normals. The functional is rescaled by a positive factor only,
    /// so the sign of `value` is preserved.
    pub fn new(normal: Vec<Scalar>, offset: Scalar) -> Result<Hyperplane> {
        if normal.iter().all(Zero::is_zero) {
            return Err(Error::ZeroNormal);
        }
        let mut all: Vec<Scalar> = normal;
        all.push(offset);
        let ints = clear_denominators(&all);
        let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
        let mut normal: Vec<Scalar> = ints.into_iter().map(|x| Scalar::from_integer(x / &g)).collect();
        let offset = normal.pop().unwrap();
        Ok(Hyperplane { normal, offset })
    }

    pub fn normal(&self) -> &[Scalar] {
        &self.normal
    }

    pub fn offset(&self) -> &Scalar {
        &self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Orientation-free form (first nonzero normal entry positive) and the sign
    /// relating it to `self`: `self.value(x) = s * canonical.value(x)` up to a positive factor.
    pub fn canonical(&self) -> (Hyperplane, Sign) {
        let first = self.normal.iter().find(|x| !x.is_zero()).unwrap();
        if first.is_positive() {
            (self.clone(), Sign::Positive)
        } else {
            let h = Hyperplane {
                normal: self.normal.iter().map(|x| -x).collect(),
                offset: -&self.offset,
            };
            (h, Sign::Negative)
        }
    }

    pub fn value(&self, x: &[Scalar]) -> Result<Scalar> {
        Ok(dot(&self.normal, x)? + &self.offset)
    }

    pub(crate) fn value_unchecked(&self, x: &[Scalar]) -> Scalar {
        dot_unchecked(&self.normal, x) + &self.offset
    }

    /// Hyperplane through `d` affinely independent points in dimension `d`.
    pub fn through<V: AsRef<[Scalar]>>(points: &[V]) -> Option<Hyperplane> {
        let p0 = points.first()?.as_ref();
        let d = p0.len();
        let diffs: Vec<Vec<Scalar>> = points[1..]
            .iter()
            .map(|p| p.as_ref().iter().zip(p0).map(|(a, b)| a - b).collect())
            .collect();
        let normal = null_vector(&diffs, d)?;
        let offset = -dot_unchecked(&normal, p0);
        Hyperplane::new(normal, offset).ok()
    }
}

/// A nonzero vector orthogonal to every row, when the rows have rank `d - 1`.
fn null_vector(rows: &[Vec<Scalar>], d: usize) -> Option<Vec<Scalar>> {
    let mut m: Vec<Vec<Scalar>> = rows.to_vec();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..d {
        let Some(p) = (r..m.len()).find(|&i| !m[i][col].is_zero()) else { continue };
        m.swap(r, p);
        let inv = m[r][col].recip();
        for v in m[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for c in col..d {
                    let t = &f * &m[r][c];
                    m[i][c] -= t;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    if r + 1 != d {
        return None;
    }
    let free = (0..d).find(|c| !pivots.contains(c))?;
    let mut v = vec![Scalar::zero(); d];
    v[free] = Scalar::one();
    for (i, &pc) in pivots.iter().enumerate() {
        v[pc] = -&m[i][free];
    }
    Some(v)
}

/// Exact sign of `h` at `x`.
pub fn evaluate_sign(h: &Hyperplane, x: &[Scalar]) -> Result<Sign> {
    Ok(Sign::of(&h.value(x)?))
}

/// Intersection point of `dimension` hyperplanes, if their normals are independent.
pub fn solve_vertex(hyperplanes: &[Hyperplane], dimension: usize) -> Result<Option<Vec<Scalar>>> {
    if hyperplanes.len() != dimension {
        return Err(Error::DimensionMismatch { expected: dimension, found: hyperplanes.len() });
    }
    for h in hyperplanes {
        if h.dim() != dimension {
            return Err(Error::DimensionMismatch { expected: dimension, found: h.dim() });
        }
    }
    let rows: Vec<Vec<Scalar>> = hyperplanes.iter().map(|h| h.normal.clone()).collect();
    let a = Matrix::from_rows(rows, dimension)?;
    let b: Vec<Scalar> = hyperplanes.iter().map(|h| -&h.offset).collect();
    solve(&a, &b)
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoxDomain {
    lower: Vec<Scalar>,
    upper: Vec<Scalar>,
}

impl BoxDomain {
    pub fn new(lower: Vec<Scalar>, upper: Vec<Scalar>) -> Result<BoxDomain> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("dimension must be positive".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l >= u {
                return Err(Error::InvalidBox(alloc::format!(
                    "side {i}: lower {} is not below upper {}",
                    format_rational(l),
                    format_rational(u)
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn unit(d: usize) -> BoxDomain {
        BoxDomain { lower: vec![Scalar::zero(); d], upper: vec![Scalar::one(); d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[Scalar] {
        &self.lower
    }

    pub fn upper(&self) -> &[Scalar] {
        &self.upper
    }

    pub fn volume(&self) -> Scalar {
        self.lower.iter().zip(&self.upper).fold(Scalar::one(), |acc, (l, u)| acc * (u - l))
    }

    pub fn contains(&self, x: &[Scalar]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Corner with bit `i` of `mask` selecting the upper bound of axis `i`.
    pub fn corner(&self, mask: usize) -> Vec<Scalar> {
        (0..self.dim())
            .map(|i| if mask >> i & 1 == 1 { self.upper[i].clone() } else { self.lower[i].clone() })
            .collect()
    }

    /// The `2d` facet functionals, each nonnegative on the box: `x_i - l_i` then `u_i - x_i`.
    pub fn facets(&self) -> Vec<Hyperplane> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut e = vec![Scalar::zero(); d];
            e[i] = Scalar::one();
            out.push(Hyperplane::new(e.clone(), -&self.lower[i]).unwrap());
            e[i] = -Scalar::one();
            out.push(Hyperplane::new(e, self.upper[i].clone()).unwrap());
        }
        out
    }

    pub fn centroid(&self) -> Vec<Scalar> {
        let two = int(2);
        self.lower.iter().zip(&self.upper).map(|(l, u)| (l + u) / &two).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[(i64, i64)]) -> Vec<Scalar> {
        xs.iter().map(|&(n, d)| ratio(n, d)).collect()
    }

    fn h(normal: &[(i64, i64)], offset: (i64, i64)) -> Hyperplane {
        Hyperplane::new(v(normal), ratio(offset.0, offset.1)).unwrap()
    }

    #[test]
    fn rational_text_forms() {
        assert_eq!(format_rational(&ratio(-6, 4)), "-3/2");
        assert_eq!(format_rational(&int(7)), "7");
        assert_eq!(parse_rational("-3/2").unwrap(), ratio(-3, 2));
        assert!(parse_rational("2/4").is_err());
        assert!(parse_rational("3/1").is_err());
        assert!(parse_rational("+3").is_err());
        assert!(parse_rational("-0").is_err());
        assert!(parse_rational("1/-2").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(parse_rational("1/0"), Err(Error::DivisionByZero));
        assert_eq!(parse_rational_lenient("2/4").unwrap(), ratio(1, 2));
        assert_eq!(checked_div(&int(1), &int(0)), Err(Error::DivisionByZero));
    }

    #[test]
    fn solve_vertex_examples() {
        let p = solve_vertex(&[h(&[(1, 1), (0, 1)], (0, 1)), h(&[(0, 1), (1, 1)], (0, 1))], 2);
        assert_eq!(p.unwrap(), Some(v(&[(0, 1), (0, 1)])));
        let p = solve_vertex(&[h(&[(1, 1), (1, 1)], (-1, 1)), h(&[(1, 1), (-1, 1)], (0, 1))], 2);
        assert_eq!(p.unwrap(), Some(v(&[(1, 2), (1, 2)])));
        let p = solve_vertex(&[h(&[(1, 1), (1, 1)], (-1, 1)), h(&[(2, 1), (2, 1)], (-2, 1))], 2);
        assert_eq!(p.unwrap(), None);
        assert!(solve_vertex(&[h(&[(1, 1)], (0, 1))], 2).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(matrix_rank(&Matrix::identity(3)), 3);
        assert_eq!(matrix_rank(&Matrix::zeros(2, 5)), 0);
        assert_eq!(matrix_rank(&Matrix::from_i64(&[&[1, 2], &[2, 4], &[3, 6]])), 1);
    }

    #[test]
    fn sign_examples() {
        let hp = h(&[(1, 1)], (-1, 2));
        assert_eq!(evaluate_sign(&hp, &v(&[(1, 4)])).unwrap(), Sign::Negative);
        assert_eq!(evaluate_sign(&hp, &v(&[(1, 2)])).unwrap(), Sign::Zero);
        assert_eq!(evaluate_sign(&hp, &v(&[(3, 4)])).unwrap(), Sign::Positive);
        assert!(evaluate_sign(&hp, &v(&[(1, 4), (0, 1)])).is_err());
    }

    #[test]
    fn hyperplane_normalization() {
        assert_eq!(Hyperplane::new(v(&[(0, 1), (0, 1)]), int(1)), Err(Error::ZeroNormal));
        let a = h(&[(2, 3), (-4, 3)], (2, 1));
        assert_eq!(a.normal(), &v(&[(1, 1), (-2, 1)])[..]);
        assert_eq!(a.offset(), &int(3));
        let (c, s) = h(&[(-1, 2), (1, 1)], (1, 1)).canonical();
        assert_eq!(s, Sign::Negative);
        assert_eq!(c, h(&[(1, 1), (-2, 1)], (-2, 1)));
        let t = Hyperplane::through(&[v(&[(0, 1), (1, 1)]), v(&[(1, 1), (0, 1)])]).unwrap();
        assert_eq!(t.canonical().0, h(&[(1, 1), (1, 1)], (-1, 1)));
    }

    #[test]
    fn box_geometry() {
        let b = BoxDomain::new(v(&[(0, 1), (1, 2)]), v(&[(2, 1), (1, 1)])).unwrap();
        assert_eq!(b.volume(), int(1));
        assert_eq!(b.corner(0b10), v(&[(0, 1), (1, 1)]));
        for f in b.facets() {
            assert!(!f.value(&b.centroid()).unwrap().is_negative());
        }
        assert!(BoxDomain::new(v(&[(1, 1)]), v(&[(1, 1)])).is_err());
        assert_eq!(affine_dimension(&[v(&[(0, 1), (0, 1)]), v(&[(1, 1), (1, 1)]), v(&[(2, 1), (2, 1)])]), 1);
    }
}
