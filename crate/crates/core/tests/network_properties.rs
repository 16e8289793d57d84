mod common;

use common::{network_with, point, rational_in, scalar_network, small_rational};
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topobetti_core::constructions::{
    build_carving_network, build_cutting_network, build_folding_network, build_topo_network, cutting_points, predict_betti,
    CuttingSpec, FoldingSpec,
};
use topobetti_core::exact::{int, ratio, Scalar};
use topobetti_core::network::{AffineLayer, NeuronId, ReluNetwork};

fn scale_output(net: &ReluNetwork, c: &Scalar) -> ReluNetwork {
    let mut layers = net.layers().to_vec();
    let last = layers.pop().unwrap();
    let bias = last.bias().iter().map(|b| b * c).collect();
    layers.push(AffineLayer::new(last.weights().scale(c), bias).unwrap());
    ReluNetwork::new(layers).unwrap()
}

/// `true` per hidden neuron with nonnegative pre-activation.
fn activation_pattern(net: &ReluNetwork, x: &[Scalar]) -> Vec<bool> {
    let arch = net.architecture();
    let mut out = Vec::new();
    for layer in 1..=net.depth() {
        for i in 1..=arch[layer] {
            out.push(!net.eval_preactivation(NeuronId::new(layer, i), x).unwrap().is_negative());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_associative(
        c in network_with(2, vec![3], 2),
        b in network_with(2, vec![2], 3),
        a in network_with(3, vec![2], 1),
        x in point(2),
    ) {
        let left = ReluNetwork::compose(&a, &ReluNetwork::compose(&b, &c).unwrap()).unwrap();
        let right = ReluNetwork::compose(&ReluNetwork::compose(&a, &b).unwrap(), &c).unwrap();
        let nested = a.eval(&b.eval(&c.eval(&x).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(left.eval(&x).unwrap(), nested.clone());
        prop_assert_eq!(right.eval(&x).unwrap(), nested);
        prop_assert_eq!(left.architecture(), right.architecture());
    }

    #[test]
    fn positive_output_scaling_keeps_signs(net in scalar_network(2, 4), n in 1i64..50, d in 1i64..50, xs in prop::collection::vec(point(2), 8)) {
        let scaled = scale_output(&net, &ratio(n, d));
        for x in &xs {
            let a = net.eval(x).unwrap()[0].clone();
            let b = scaled.eval(x).unwrap()[0].clone();
            prop_assert_eq!(a.signum(), b.signum());
            prop_assert_eq!(b, a * ratio(n, d));
        }
    }

    #[test]
    fn piecewise_linear_along_lines(net in scalar_network(2, 3), x in point(2), v in prop::collection::vec(small_rational(), 2), seed in any::<u64>()) {
        // Points with one activation pattern share a convex region where F is affine.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let at = |t: &Scalar| -> Vec<Scalar> { x.iter().zip(&v).map(|(a, b)| a + b * t).collect() };
        let ts: Vec<Scalar> = (0..=32).map(|i| ratio(i, 32)).collect();
        let patterns: Vec<Vec<bool>> = ts.iter().map(|t| activation_pattern(&net, &at(t))).collect();
        for i in 0..ts.len() {
            for j in i + 1..ts.len() {
                if patterns[i] != patterns[j] {
                    continue;
                }
                let lam = rational_in(&mut rng, &int(0), &int(1));
                let t = &lam * &ts[i] + (int(1) - &lam) * &ts[j];
                let expected = &lam * &net.eval(&at(&ts[i])).unwrap()[0] + (int(1) - &lam) * &net.eval(&at(&ts[j])).unwrap()[0];
                prop_assert_eq!(net.eval(&at(&t)).unwrap()[0].clone(), expected);
            }
        }
    }
}

fn folding_specs() -> Vec<(usize, Vec<u64>)> {
    let ms: Vec<Vec<u64>> = vec![vec![2], vec![4], vec![6], vec![8], vec![2, 2], vec![2, 4], vec![4, 2], vec![2, 2, 2]];
    (1..=3).flat_map(|d| ms.iter().map(move |m| (d, m.clone()))).collect()
}

/// Zigzag closed form: on the small cube with 1-based index `i_j`, coordinate `j`
/// maps to `M x_j - (i_j - 1)` for odd `i_j` and `i_j - M x_j` for even `i_j`.
fn zigzag(big_m: u64, i: u64, x: &Scalar) -> Scalar {
    let m = int(big_m as i64);
    if i % 2 == 1 {
        m * x - int(i as i64 - 1)
    } else {
        int(i as i64) - m * x
    }
}

#[test]
fn folding_matches_closed_form_on_every_small_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, m) in folding_specs() {
        let spec = FoldingSpec::new(d, m.clone()).unwrap();
        let net = build_folding_network(&spec).unwrap();
        let big_m = spec.big_m();
        for flat in 0..big_m.pow(d as u32) {
            let idx: Vec<u64> = (0..d).map(|j| (flat / big_m.pow(j as u32)) % big_m + 1).collect();
            for _ in 0..5 {
                let x: Vec<Scalar> =
                    idx.iter().map(|&i| rational_in(&mut rng, &ratio(i as i64 - 1, big_m as i64), &ratio(i as i64, big_m as i64))).collect();
                let expected: Vec<Scalar> = idx.iter().zip(&x).map(|(&i, xj)| zigzag(big_m, i, xj)).collect();
                assert_eq!(net.eval(&x).unwrap(), expected, "d={d} m={m:?} cube={idx:?}");
            }
        }
    }
}

#[test]
fn folding_commutes_with_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for m in [vec![2], vec![4], vec![2, 4]] {
        for k in 2..=3 {
            let hk = build_folding_network(&FoldingSpec::new(k, m.clone()).unwrap()).unwrap();
            let hk1 = build_folding_network(&FoldingSpec::new(k - 1, m.clone()).unwrap()).unwrap();
            for _ in 0..20 {
                let x: Vec<Scalar> = (0..k).map(|_| rational_in(&mut rng, &int(0), &int(1))).collect();
                let full = hk.eval(&x).unwrap();
                assert_eq!(full[..k - 1], hk1.eval(&x[..k - 1]).unwrap()[..]);
            }
        }
    }
}

/// Random point of `[0,1]^k` at ℓ1-distance `s ≤ 1/4` from `(1,…,1,0)`.
fn point_at_distance(rng: &mut impl Rng, k: usize, s: &Scalar) -> Vec<Scalar> {
    let weights: Vec<i64> = (0..k).map(|_| rng.gen_range(0..=20)).collect();
    let total = weights.iter().sum::<i64>().max(1);
    let mut x: Vec<Scalar> = weights[..k - 1].iter().map(|&w| int(1) - s * ratio(w, total)).collect();
    let used: Scalar = weights[..k - 1].iter().map(|&w| s * ratio(w, total)).sum();
    x.push(s - used);
    x
}

#[test]
fn cutting_shells_alternate_and_vanish_outside() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for w in 1..=4u64 {
        for k in 2..=3 {
            let g = build_cutting_network(w, k).unwrap();
            for q in 0..w {
                let lo = ratio(q as i64, 4 * w as i64);
                let hi = ratio(q as i64 + 1, 4 * w as i64);
                for _ in 0..5 {
                    let s = rational_in(&mut rng, &lo, &hi);
                    let x = point_at_distance(&mut rng, k, &s);
                    let v = g.eval(&x).unwrap()[0].clone();
                    let expected = if q % 2 == 0 { 1 } else { -1 };
                    assert_eq!(v.signum(), int(expected), "w={w} k={k} q={q} x={x:?}");
                }
            }
            for _ in 0..5 {
                // ℓ1-distance at least 1/4: push one coordinate far from the corner.
                let mut x: Vec<Scalar> = (0..k).map(|_| rational_in(&mut rng, &int(0), &int(1))).collect();
                x[k - 1] = rational_in(&mut rng, &ratio(1, 4), &int(1));
                assert!(g.eval(&x).unwrap()[0].is_zero(), "w={w} k={k} x={x:?}");
            }
        }
    }
}

#[test]
fn carving_blocks_have_disjoint_supports() {
    let grid: Vec<Scalar> = (0..=16).map(|i| ratio(i, 16)).collect();
    for w in [vec![1, 1], vec![2, 3], vec![4, 4], vec![3, 1]] {
        let lower = build_carving_network(&CuttingSpec::new(2, w[..1].to_vec()).unwrap()).unwrap();
        let g = build_cutting_network(w[1], 3).unwrap();
        for a in &grid {
            for b in &grid {
                for c in &grid {
                    let f = lower.eval(&[a.clone(), b.clone()]).unwrap()[0].clone();
                    let h = g.eval(&[a.clone(), b.clone(), c.clone()]).unwrap()[0].clone();
                    assert!(f.is_zero() || h.is_zero(), "w={w:?} at ({a}, {b}, {c})");
                }
            }
        }
    }
}

#[test]
fn planar_prediction_counts_cutting_points() {
    for big_m in [2u64, 4, 6, 8] {
        // Brute-force count: x'_1 odd, x'_2 even, boundary when x'_2 ∈ {0, M}.
        let (mut interior, mut boundary) = (0u64, 0u64);
        for a in 0..=big_m {
            for b in 0..=big_m {
                if a % 2 == 1 && b % 2 == 0 {
                    if b == 0 || b == big_m {
                        boundary += 1;
                    } else {
                        interior += 1;
                    }
                }
            }
        }
        let cp = cutting_points(big_m, 2).unwrap();
        assert_eq!((cp.interior.len() as u64, cp.boundary.len() as u64), (interior, boundary));
        for w in 1..=5u64 {
            let shells = w / 2;
            let b = predict_betti(big_m, &[w], 2).unwrap();
            assert_eq!(b.values(), &[((interior + boundary) * shells) as usize, (interior * shells) as usize], "M={big_m} w={w}");
        }
    }
}

#[test]
fn constructed_weights_are_bounded() {
    for (d, m) in folding_specs().into_iter().filter(|(d, _)| *d >= 2) {
        for wv in [1u64, 2, 4] {
            let fold = FoldingSpec::new(d, m.clone()).unwrap();
            let cut = CuttingSpec::new(d, vec![wv; d - 1]).unwrap();
            let net = build_topo_network(&fold, &cut, true).unwrap();
            let bound = int((2 * *m.iter().max().unwrap()).max(2 * (d as u64 - 1)) as i64);
            for l in net.layers() {
                for x in l.weights().entries() {
                    assert!(x.abs() <= bound, "d={d} m={m:?} weight {x} exceeds {bound}");
                }
            }
        }
    }
}
