//! Property tests for the serialization surfaces and the metric axioms.

use ganq::kernel::{pack, unpack};
use ganq::matrix::{frobenius_error, DenseMatrix};
use ganq::solver::Assignment;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f64> {
    // keep values in f32 range so the f32 storage path stays finite
    prop::num::f32::NORMAL.prop_map(|v| v as f64)
}

proptest! {
    #[test]
    fn gqt_f32_roundtrips_bitwise(
        rows in 1usize..12,
        cols in 1usize..12,
        seed_elems in prop::collection::vec(finite_f32(), 1..144),
    ) {
        let elems: Vec<f64> = (0..rows * cols)
            .map(|i| seed_elems[i % seed_elems.len()])
            .collect();
        let m = DenseMatrix::from_f32_values(rows, cols, elems).unwrap();
        let bytes = m.to_gqt_bytes();
        let back = DenseMatrix::from_gqt_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_gqt_bytes(), bytes);
    }

    #[test]
    fn gqt_f64_roundtrips_bitwise(
        rows in 1usize..12,
        cols in 1usize..12,
        seed_elems in prop::collection::vec(-1e12f64..1e12, 1..144),
    ) {
        let elems: Vec<f64> = (0..rows * cols)
            .map(|i| seed_elems[i % seed_elems.len()])
            .collect();
        let m = DenseMatrix::from_f64_values(rows, cols, elems).unwrap();
        let back = DenseMatrix::from_gqt_bytes(&m.to_gqt_bytes()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn pack_unpack_is_a_bijection(
        bits in 1u8..=8,
        rows in 1usize..6,
        cols in 1usize..40,
        seed in any::<u64>(),
    ) {
        let levels = 1usize << bits;
        let mut state = seed;
        let idx: Vec<u8> = (0..rows * cols)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as usize % levels) as u8
            })
            .collect();
        let a = Assignment::new(rows, cols, idx, levels).unwrap();
        let packed = pack(&a, bits).unwrap();
        prop_assert_eq!(packed.payload().len(), rows * (cols * bits as usize).div_ceil(8));
        prop_assert_eq!(unpack(&packed).unwrap(), a);
    }

    #[test]
    fn frobenius_is_a_symmetric_premetric(
        rows in 1usize..6,
        cols in 1usize..6,
        seed_elems in prop::collection::vec(-100.0f64..100.0, 1..36),
    ) {
        let take = |offset: usize| -> Vec<f64> {
            (0..rows * cols)
                .map(|i| seed_elems[(i + offset) % seed_elems.len()])
                .collect()
        };
        let a = DenseMatrix::from_f64_values(rows, cols, take(0)).unwrap();
        let b = DenseMatrix::from_f64_values(rows, cols, take(1)).unwrap();
        let ab = frobenius_error(&a, &b).unwrap();
        let ba = frobenius_error(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert_eq!(frobenius_error(&a, &a).unwrap(), 0.0);
        // zero iff equal
        if ab == 0.0 {
            prop_assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}
