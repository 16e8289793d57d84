#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use topobetti_core::exact::{ratio, Matrix, Scalar};
use topobetti_core::network::{AffineLayer, ReluNetwork};

pub fn small_rational() -> impl Strategy<Value = Scalar> {
    (-12i64..=12, 1i64..=4).prop_map(|(n, d)| ratio(n, d))
}

pub fn unit_rational() -> impl Strategy<Value = Scalar> {
    (0i64..=64).prop_map(|n| ratio(n, 64))
}

pub fn layer(rows: usize, cols: usize) -> impl Strategy<Value = AffineLayer> {
    (prop::collection::vec(small_rational(), rows * cols), prop::collection::vec(small_rational(), rows))
        .prop_map(move |(w, b)| AffineLayer::new(Matrix::new(rows, cols, w).unwrap(), b).unwrap())
}

/// Networks `in_dim -> hidden... -> out_dim` with small rational parameters.
pub fn network_with(in_dim: usize, hidden: Vec<usize>, out_dim: usize) -> impl Strategy<Value = ReluNetwork> {
    let mut dims = vec![in_dim];
    dims.extend(hidden);
    dims.push(out_dim);
    let layers: Vec<_> = dims.windows(2).map(|w| layer(w[1], w[0])).collect();
    layers.prop_map(|ls| ReluNetwork::new(ls).unwrap())
}

/// Scalar networks with up to two hidden layers of width at most `max_width`.
pub fn scalar_network(in_dim: usize, max_width: usize) -> impl Strategy<Value = ReluNetwork> {
    prop::collection::vec(1..=max_width, 0..=2).prop_flat_map(move |h| network_with(in_dim, h, 1))
}

pub fn point(d: usize) -> impl Strategy<Value = Vec<Scalar>> {
    prop::collection::vec(unit_rational(), d)
}

/// Uniform rational in the open interval `(lo, hi)` with denominator resolution `2^20`.
pub fn rational_in(rng: &mut impl Rng, lo: &Scalar, hi: &Scalar) -> Scalar {
    let k: i64 = rng.gen_range(1..(1 << 20));
    lo + (hi - lo) * ratio(k, 1 << 20)
}

/// Strictly positive random convex combination of the given points.
pub fn interior_point(rng: &mut impl Rng, pts: &[&[Scalar]]) -> Vec<Scalar> {
    let weights: Vec<i64> = pts.iter().map(|_| rng.gen_range(1..=100)).collect();
    let total: i64 = weights.iter().sum();
    let d = pts[0].len();
    let mut x = vec![Scalar::from_integer(0.into()); d];
    for (p, &w) in pts.iter().zip(&weights) {
        for i in 0..d {
            x[i] += &p[i] * ratio(w, total);
        }
    }
    x
}
