mod common;

use common::small_rational;
use num_bigint::BigInt;
use proptest::prelude::*;
use topobetti_core::exact::{
    evaluate_sign, format_rational, matrix_rank, parse_rational, parse_rational_lenient, solve_vertex, Hyperplane, Matrix, Scalar,
    Sign,
};

/// Determinant by cofactor expansion along the first row.
fn det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<i64>> = m[1..].iter().map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v).collect()).collect();
            let s = if c % 2 == 0 { 1 } else { -1 };
            s * m[0][c] as i128 * det(&minor)
        })
        .sum()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (0..n)
        .flat_map(|last| {
            subsets(last, k - 1).into_iter().map(move |mut s| {
                s.push(last);
                s
            })
        })
        .collect()
}

/// Largest `r` with a nonzero `r x r` minor.
fn minor_rank(m: &[Vec<i64>], cols: usize) -> usize {
    let rows = m.len();
    (1..=rows.min(cols))
        .rev()
        .find(|&r| {
            subsets(rows, r).iter().any(|rs| {
                subsets(cols, r).iter().any(|cs| {
                    let sub: Vec<Vec<i64>> = rs.iter().map(|&i| cs.iter().map(|&j| m[i][j]).collect()).collect();
                    det(&sub) != 0
                })
            })
        })
        .unwrap_or(0)
}

fn int_matrix() -> impl Strategy<Value = (usize, Vec<Vec<i64>>)> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| {
        // Narrow entries make rank deficiency common.
        (Just(c), prop::collection::vec(prop::collection::vec(-2i64..=2, c), r))
    })
}

proptest! {
    #[test]
    fn rational_round_trip(a in small_rational(), b in small_rational(), big in any::<i64>(), den in 1i64..i64::MAX) {
        prop_assert_eq!(parse_rational(&format_rational(&a)).unwrap(), a.clone());
        prop_assert_eq!(&(&a + &b) - &b, a);
        let x = Scalar::new(BigInt::from(big) * BigInt::from(big), BigInt::from(den));
        let s = format_rational(&x);
        prop_assert_eq!(parse_rational(&s).unwrap(), x);
        prop_assert_eq!(parse_rational_lenient(&s).unwrap(), parse_rational(&s).unwrap());
    }

    #[test]
    fn non_canonical_strings_rejected(n in -50i64..50, d in 2i64..20, k in 2i64..5) {
        let s = format!("{}/{}", n * k, d * k);
        prop_assert!(parse_rational(&s).is_err());
        prop_assert!(parse_rational_lenient(&s).is_ok());
    }

    #[test]
    fn rank_matches_minor_expansion((cols, rows) in int_matrix()) {
        let refs: Vec<&[i64]> = rows.iter().map(Vec::as_slice).collect();
        let m = Matrix::from_i64(&refs);
        prop_assert_eq!(matrix_rank(&m), minor_rank(&rows, cols));
        prop_assert_eq!(matrix_rank(&m.transpose()), matrix_rank(&m));
    }

    #[test]
    fn solved_vertices_lie_on_every_plane(d in 1usize..=4, seed in prop::collection::vec(small_rational(), 20)) {
        let planes: Vec<Hyperplane> = (0..d)
            .filter_map(|i| Hyperplane::new(seed[i * d..(i + 1) * d].to_vec(), seed[16 + i % 4].clone()).ok())
            .collect();
        prop_assume!(planes.len() == d);
        let rows: Vec<Scalar> = planes.iter().flat_map(|h| h.normal().to_vec()).collect();
        let full = matrix_rank(&Matrix::new(d, d, rows).unwrap()) == d;
        match solve_vertex(&planes, d).unwrap() {
            Some(x) => {
                prop_assert!(full);
                for h in &planes {
                    prop_assert_eq!(evaluate_sign(h, &x).unwrap(), Sign::Zero);
                }
            }
            None => prop_assert!(!full),
        }
    }
}
