mod support;

use proptest::prelude::*;
use scsc_core::prox::{
    project_filter_to_unit_ball_with_support, project_l1_ball, project_l2_ball, project_weight_columns,
    soft_threshold,
};
use scsc_core::tensor::fft;
use scsc_core::{ConstraintSetTag, FilterSupport, SpatialArray, WeightMatrix};
use support::{dot, norm, project_l1_bruteforce};

#[test]
fn l1_projection_matches_enumeration() {
    let mut rng = support::rng(17);
    let mut checked = 0;
    for n in 1..=6 {
        for _ in 0..60 {
            let scale = [0.2, 1.0, 4.0][checked % 3];
            let v: Vec<f64> = support::uniform(n, &mut rng).iter().map(|x| x * scale).collect();
            let radius = [0.5, 1.0, 2.0][(checked / 3) % 3];
            let got = project_l1_ball(&v, radius).unwrap();
            let want = project_l1_bruteforce(&v, radius);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "n={n} v={v:?} r={radius}: {got:?} vs {want:?}");
            checked += 1;
        }
    }
    // ties and exact zeros
    for v in [vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 3.0], vec![-2.0, 2.0, 0.0, 0.0], vec![0.5, -0.5]] {
        let got = project_l1_ball(&v, 1.0).unwrap();
        let want = project_l1_bruteforce(&v, 1.0);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn projections_leave_boundary_points_alone() {
    let v = vec![0.6, -0.4];
    assert_eq!(project_l1_ball(&v, 1.0).unwrap(), v);
    let u = vec![0.6, 0.8];
    assert_eq!(project_l2_ball(&u, 1.0).unwrap(), u);
}

#[test]
fn filter_projection_crops_and_normalizes() {
    let support = FilterSupport::new(vec![2, 2], vec![4, 4]).unwrap();
    let x = SpatialArray::new(vec![4, 4], (0..16).map(|i| i as f64 - 7.0).collect()).unwrap();
    let projected = project_filter_to_unit_ball_with_support(&fft(&x).unwrap(), &support).unwrap();
    let spatial = scsc_core::tensor::inverse_fft(&projected).unwrap();
    let kept = [-7.0, -6.0, -3.0, -2.0];
    let n = norm(&kept);
    for (i, v) in spatial.data().iter().enumerate() {
        let want = match i {
            0 => kept[0] / n,
            1 => kept[1] / n,
            4 => kept[2] / n,
            5 => kept[3] / n,
            _ => 0.0,
        };
        assert!((v - want).abs() < 1e-12, "{i}: {v} vs {want}");
    }
}

fn vec_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..=max)
}

proptest! {
    #[test]
    fn l2_projection_idempotent_and_nonexpansive(a in vec_strategy(8), b in vec_strategy(8), r in 0.1f64..3.0) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let pa = project_l2_ball(a, r).unwrap();
        let pb = project_l2_ball(b, r).unwrap();
        prop_assert!(norm(&pa) <= r * (1.0 + 1e-12));
        let again = project_l2_ball(&pa, r).unwrap();
        for (x, y) in pa.iter().zip(&again) { prop_assert!((x - y).abs() < 1e-12); }
        let d_in: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let d_out: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&d_out) <= norm(&d_in) + 1e-12);
    }

    #[test]
    fn l1_projection_idempotent_and_nonexpansive(a in vec_strategy(8), b in vec_strategy(8), r in 0.1f64..3.0) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let pa = project_l1_ball(a, r).unwrap();
        let pb = project_l1_ball(b, r).unwrap();
        prop_assert!(pa.iter().map(|x| x.abs()).sum::<f64>() <= r * (1.0 + 1e-12));
        let again = project_l1_ball(&pa, r).unwrap();
        for (x, y) in pa.iter().zip(&again) { prop_assert!((x - y).abs() < 1e-12); }
        let d_in: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let d_out: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&d_out) <= norm(&d_in) + 1e-12);
        // variational inequality: ⟨a − Pa, c − Pa⟩ ≤ 0 for feasible c = Pb
        let lhs: Vec<f64> = a.iter().zip(&pa).map(|(x, y)| x - y).collect();
        let rhs: Vec<f64> = pb.iter().zip(&pa).map(|(x, y)| x - y).collect();
        prop_assert!(dot(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn weight_projection_idempotent(entries in prop::collection::vec(-2.0f64..2.0, 12), l1 in any::<bool>()) {
        let tag = if l1 { ConstraintSetTag::weight_l1() } else { ConstraintSetTag::weight_l2(3).unwrap() };
        let w = WeightMatrix::from_raw(3, 4, entries, tag).unwrap();
        let p = project_weight_columns(&w, &tag).unwrap();
        prop_assert!(p.max_violation() <= 1e-12);
        let again = project_weight_columns(&p, &tag).unwrap();
        for (x, y) in p.entries().iter().zip(again.entries()) { prop_assert!((x - y).abs() < 1e-12); }
    }

    #[test]
    fn filter_projection_idempotent_and_nonexpansive(a in prop::collection::vec(-3.0f64..3.0, 16), b in prop::collection::vec(-3.0f64..3.0, 16)) {
        let support = FilterSupport::new(vec![3], vec![16]).unwrap();
        let sa = fft(&SpatialArray::from_vec(a).unwrap()).unwrap();
        let sb = fft(&SpatialArray::from_vec(b).unwrap()).unwrap();
        let pa = project_filter_to_unit_ball_with_support(&sa, &support).unwrap();
        let pb = project_filter_to_unit_ball_with_support(&sb, &support).unwrap();
        let again = project_filter_to_unit_ball_with_support(&pa, &support).unwrap();
        for (x, y) in pa.data().iter().zip(again.data()) { prop_assert!((x - y).norm() < 1e-10); }
        let din: f64 = sa.data().iter().zip(sb.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
        let dout: f64 = pa.data().iter().zip(pb.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
        prop_assert!(dout.sqrt() <= din.sqrt() + 1e-9);
    }

    #[test]
    fn soft_threshold_is_the_l1_prox(v in vec_strategy(10), tau in 0.0f64..2.0) {
        let x = SpatialArray::from_vec(v.clone()).unwrap();
        let s = soft_threshold(&x, tau).unwrap();
        for (o, i) in s.data().iter().zip(&v) {
            let want = i.signum() * (i.abs() - tau).max(0.0);
            prop_assert!((o - want).abs() < 1e-15);
        }
    }
}
