use fchmrf::em::effective_sample_size;
use fchmrf::lattice::{PermutohedralLattice, PositionMatrix, ValueChannels};
use fchmrf::meanfield::{run_mean_field, FieldKernels, FieldWeights, UnaryField};
use fchmrf::sim::score_labels;
use fchmrf::testing::{bh_test, lis_test, LisVolume};
use proptest::prelude::*;

fn positions(d: usize, max: usize) -> impl Strategy<Value = PositionMatrix> {
    (2..max).prop_flat_map(move |m| {
        prop::collection::vec(0.0..6.0f64, m * d)
            .prop_map(move |data| PositionMatrix::new(d, data).unwrap())
    })
}

fn values(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, m)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn filter_is_linear(
        (pos, u, v) in positions(3, 60).prop_flat_map(|p| {
            let m = p.len();
            (Just(p), values(m), values(m))
        }),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let fu = lat.filter(&ValueChannels::single(u)).unwrap();
        let fv = lat.filter(&ValueChannels::single(v)).unwrap();
        let fm = lat.filter(&ValueChannels::single(mix)).unwrap();
        for ((m, x), y) in fm.as_slice().iter().zip(fu.as_slice()).zip(fv.as_slice()) {
            prop_assert!(close(*m, a * x + b * y, x.abs() + y.abs()));
        }
    }

    #[test]
    fn message_operator_is_symmetric(
        (pos, u, v) in positions(4, 60).prop_flat_map(|p| {
            let m = p.len();
            (Just(p), values(m), values(m))
        }),
    ) {
        let lat = PermutohedralLattice::build(&pos).unwrap();
        let nu_u = lat.message(&u).unwrap();
        let nu_v = lat.message(&v).unwrap();
        let lhs: f64 = u.iter().zip(&nu_v).map(|(a, b)| a * b).sum();
        let rhs: f64 = nu_u.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn mean_field_is_monotone_in_unaries(
        (pos, u) in positions(3, 40).prop_flat_map(|p| {
            let m = p.len();
            (Just(p), prop::collection::vec(-3.0..3.0f64, m))
        }),
        bump in prop::collection::vec(0.0..1.0f64, 40),
        w1 in 0.0..2.0f64,
        w2 in 0.0..2.0f64,
    ) {
        let kernels = FieldKernels {
            appearance: Some(PermutohedralLattice::build(&pos).unwrap()),
            smoothness: PermutohedralLattice::build(&pos).unwrap(),
        };
        let w = FieldWeights::new(0.0, w1, w2);
        let raised: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let lo = run_mean_field(&UnaryField::new(u).unwrap(), &kernels, &w, 5).unwrap();
        let hi = run_mean_field(&UnaryField::new(raised).unwrap(), &kernels, &w, 5).unwrap();
        for (a, b) in lo.q1().iter().zip(hi.q1()) {
            prop_assert!(*a > 0.0 && *a < 1.0);
            prop_assert!(b + 1e-12 >= *a);
        }
    }

    #[test]
    fn mean_field_is_permutation_equivariant(
        (pos, u, perm) in positions(4, 50).prop_flat_map(|p| {
            let m = p.len();
            (Just(p), prop::collection::vec(-3.0..3.0f64, m), Just((0..m).collect::<Vec<usize>>()).prop_shuffle())
        }),
        w1 in 0.0..2.0f64,
    ) {
        let w = FieldWeights::new(0.0, w1, 1.0);
        let run = |pos: &PositionMatrix, u: Vec<f64>| {
            let kernels = FieldKernels {
                appearance: Some(PermutohedralLattice::build(pos).unwrap()),
                smoothness: PermutohedralLattice::build(pos).unwrap(),
            };
            run_mean_field(&UnaryField::new(u).unwrap(), &kernels, &w, 5).unwrap().into_vec()
        };
        let base = run(&pos, u.clone());
        let permuted = run(&pos.permuted(&perm), perm.iter().map(|&i| u[i]).collect());
        for (k, &i) in perm.iter().enumerate() {
            // Summation order follows the input order, so equality is up to rounding.
            prop_assert!((permuted[k] - base[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lis_rejections_nest_and_meet_the_identity(lis in prop::collection::vec(0.0..=1.0f64, 1..200)) {
        let vol = LisVolume::new(lis).unwrap();
        let mut sorted = vol.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut previous: Option<Vec<bool>> = None;
        for j in 1..=10 {
            let alpha = j as f64 * 0.05;
            let out = lis_test(&vol, alpha).unwrap();
            let k = out.k;
            prop_assert_eq!(out.rejected.iter().filter(|&&r| r).count(), k);
            if k > 0 {
                prop_assert!(sorted[..k].iter().sum::<f64>() / k as f64 <= alpha);
            }
            if k < sorted.len() {
                prop_assert!(sorted[..=k].iter().sum::<f64>() / (k + 1) as f64 > alpha);
            }
            if let Some(prev) = &previous {
                prop_assert!(prev.iter().zip(&out.rejected).all(|(a, b)| !a || *b));
            }
            previous = Some(out.rejected);
        }
    }

    #[test]
    fn bh_rejections_nest(p in prop::collection::vec(0.0..=1.0f64, 1..200)) {
        let mut previous: Option<Vec<bool>> = None;
        for j in 1..=10 {
            let out = bh_test(&p, j as f64 * 0.05).unwrap();
            if let Some(prev) = &previous {
                prop_assert!(prev.iter().zip(&out.rejected).all(|(a, b)| !a || *b));
            }
            previous = Some(out.rejected);
        }
    }

    #[test]
    fn effective_size_is_bounded(q in prop::collection::vec(0.0..1.0f64, 1..300)) {
        prop_assume!(q.iter().sum::<f64>() > 0.0);
        let m_eff = effective_sample_size(&q);
        prop_assert!(m_eff >= 1.0 - 1e-12 && m_eff <= q.len() as f64 + 1e-9);
    }

    #[test]
    fn confusion_counts_partition(pairs in prop::collection::vec((0u8..=1, any::<bool>()), 1..300)) {
        let (truth, rejected): (Vec<u8>, Vec<bool>) = pairs.into_iter().unzip();
        let s = score_labels(&truth, &rejected).unwrap();
        let c = s.counts;
        prop_assert_eq!(c.n00 + c.n01 + c.n10 + c.n11, truth.len());
        prop_assert_eq!(s.m1, truth.iter().filter(|&&h| h == 1).count());
        prop_assert!((0.0..=1.0).contains(&s.fdp) && (0.0..=1.0).contains(&s.fnp));
    }
}
