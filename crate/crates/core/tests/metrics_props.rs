mod common;

use ids_core::metrics::{confusion, pr_curve, roc_curve, summary_metrics};
use proptest::prelude::*;

fn scored() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    (1usize..80).prop_flat_map(|n| {
        (
            proptest::collection::vec(0u8..2, n),
            // Coarse grid so ties are common.
            proptest::collection::vec((0u32..20).prop_map(|k| k as f64 / 19.0), n),
        )
    })
}

proptest! {
    #[test]
    fn confusion_partitions_samples((labels, scores) in scored(), thr in 0.0f64..1.0) {
        let cm = confusion(&labels, &scores, thr).unwrap();
        prop_assert_eq!(cm.total(), labels.len() as u64);
        prop_assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), common::recount(&labels, &scores, thr));
        let m = summary_metrics(&cm);
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.false_alarm_rate].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn roc_is_monotone_and_anchored((labels, scores) in scored()) {
        let pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let (curve, auc) = roc_curve(&labels, &scores).unwrap();
        let pts = &curve.points;
        prop_assert_eq!((pts[0].x, pts[0].y), (0.0, 0.0));
        let last = pts.last().unwrap();
        prop_assert_eq!((last.x, last.y), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].x >= w[0].x && w[1].y >= w[0].y);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        prop_assert!((auc - common::concordance_auc(&labels, &scores)).abs() < 1e-12);
    }

    #[test]
    fn average_precision_matches_step_sum((labels, scores) in scored()) {
        prop_assume!(labels.contains(&1));
        let (curve, ap) = pr_curve(&labels, &scores).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].x >= w[0].x);
        }
        prop_assert!((ap - common::step_sum_ap(&labels, &scores)).abs() < 1e-12);
    }
}
