use nalgebra::{Point3, Vector3};
use ovg_core::alignment::{constraint_score, lgia_blend};
use ovg_core::eval::success_table;
use ovg_core::grasp::{filter_poses, select_pose_index, GraspPose, GraspSetting, OutcomeRecord};
use ovg_core::grounding::{iou, select_queries, BBox};
use ovg_core::scene::{embed_text, generate_scene, render_features, SceneParams, Split, SplitSpec};
use ovg_core::tensor::{matmul, multi_head_attention, row_softmax, AttentionConfig, Matrix};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn sized_matrix(max_rows: usize, max_cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| matrix(r, c, scale))
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..600.0, 0.0..440.0, 1.0..200.0, 1.0..200.0).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
}

fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

fn pose() -> impl Strategy<Value = GraspPose> {
    (
        (-1.0..1.0, -1.0..1.0, -1.0..1.0f64),
        (-0.2..0.2, -0.2..0.2, 1.3..1.5f64),
        0.01..0.085f64,
        0.0..=1.0f64,
    )
        .prop_filter_map("degenerate axis", |(a, t, w, s)| {
            let axis = Vector3::new(a.0, a.1, a.2);
            (axis.norm() > 1e-2)
                .then(|| GraspPose::from_closing_axis(axis, Point3::new(t.0, t.1, t.2), w, s).unwrap())
        })
}

fn outcome() -> impl Strategy<Value = OutcomeRecord> {
    (any::<bool>(), any::<bool>(), 1..=3usize).prop_map(|(multi, success, used)| OutcomeRecord {
        scene_id: String::new(),
        split: Split::Base,
        single_or_multi: if multi { GraspSetting::Multi } else { GraspSetting::Single },
        attempts_used: used,
        success,
        grasped_target: success,
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(m in sized_matrix(6, 12, 50.0)) {
        for row in row_softmax(&m).row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn attention_stays_in_value_hull(
        (q, k, v) in (1..5usize, 1..8usize, 1..9usize).prop_flat_map(|(nq, nk, d)| {
            (matrix(nq, d, 3.0), matrix(nk, d, 3.0), matrix(nk, d, 3.0))
        })
    ) {
        let cfg = AttentionConfig::new(1, q.cols()).unwrap();
        let out = multi_head_attention(&q, &k, &v, &cfg, None).unwrap();
        for c in 0..v.cols() {
            let col: Vec<f64> = (0..v.rows()).map(|r| v.get(r, c)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in 0..out.rows() {
                prop_assert!(out.get(r, c) >= lo - 1e-12 && out.get(r, c) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1..5usize, 1..5usize, 1..5usize, 1..5usize).prop_flat_map(|(n, k, l, m)| {
            (matrix(n, k, 2.0), matrix(k, l, 2.0), matrix(l, m, 2.0))
        })
    ) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_falls_as_a_copy_slides_away(a in bbox(), d1 in 0.0..300.0f64, d2 in 0.0..300.0f64) {
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let i_near = iou(&a, &a.translated(near, 0.0)).unwrap();
        let i_far = iou(&a, &a.translated(far, 0.0)).unwrap();
        prop_assert!(i_near >= i_far);
    }

    #[test]
    fn constraint_score_follows_location_order(
        (image, t) in (1..10usize, 2..9usize).prop_flat_map(|(n, d)| (matrix(n, d, 1.0), unit(d))),
        beta in 0.1..3.0f64,
        theta in 0.1..2.0f64,
        shift in 0..10usize,
    ) {
        let n = image.rows();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let direct = constraint_score(&image, &t, beta, theta).unwrap().scores;
        let permuted = constraint_score(&image.select_rows(&perm), &t, beta, theta).unwrap().scores;
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(permuted[i], direct[p]);
        }
        prop_assert!(direct.iter().all(|&s| s > 0.0 && s <= beta));
    }

    #[test]
    fn blend_gain_is_bounded(seed in 0..500u64, lambda in 0.0..=1.0f64, beta in 0.1..3.0f64, theta in 0.1..2.0f64) {
        let scene = generate_scene(seed, &SplitSpec::default(), Split::Base, false, &SceneParams::default()).unwrap();
        let image = render_features(&scene, 0.05, seed, 8).unwrap();
        let t = image.features.row(0).to_vec();
        let field = constraint_score(&image.features, &t, beta, theta).unwrap();
        let out = lgia_blend(&image, &field, lambda).unwrap();
        let (lo, hi) = (1.0 - lambda, 1.0 - lambda + lambda * beta);
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        for (x, y) in image.features.data().iter().zip(out.features.data()) {
            if x.abs() > 1e-9 {
                let gain = y / x;
                prop_assert!(gain >= lo - 1e-12 && gain <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn queries_ignore_appended_zero_locations(seed in 0..500u64, extra in 1..20usize, k in 1..40usize) {
        let scene = generate_scene(seed, &SplitSpec::default(), Split::Novel, seed % 2 == 0, &SceneParams::default()).unwrap();
        let image = render_features(&scene, 0.05, seed, 32).unwrap();
        let text = embed_text(&scene.description, 32).unwrap();
        let mut data = image.features.data().to_vec();
        data.extend(std::iter::repeat_n(0.0, extra * 32));
        let mut grown = image.with_features(Matrix::new(image.locations() + extra, 32, data).unwrap());
        grown.extents.extend(std::iter::repeat_n((20.0, 20.0), extra));
        let k = k.min(image.locations());
        let a = select_queries(&image, &text, k).unwrap();
        let b = select_queries(&grown, &text, k).unwrap();
        prop_assert_eq!(a.indices, b.indices);
        prop_assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn filtering_is_idempotent(poses in prop::collection::vec(pose(), 0..40), score in 0.0..1.0f64, tilt in 0.0..90.0f64) {
        let once = filter_poses(&poses, score, tilt);
        prop_assert_eq!(filter_poses(&once, score, tilt), once.clone());
        prop_assert!(once.iter().all(|p| p.score() >= score && p.tilt_deg() <= tilt));
    }

    #[test]
    fn selection_ignores_list_order(poses in prop::collection::vec(pose(), 1..40), shift in 0..40usize) {
        let center = Point3::new(0.0, 0.0, 1.4);
        let n = poses.len();
        let rotated: Vec<GraspPose> = (0..n).map(|i| poses[(i + shift) % n].clone()).collect();
        let a = &poses[select_pose_index(&poses, &center).unwrap()];
        let b = &rotated[select_pose_index(&rotated, &center).unwrap()];
        prop_assert_eq!(a, b);
    }

    #[test]
    fn success_table_is_monotone(outcomes in prop::collection::vec(outcome(), 1..60)) {
        let table = success_table(&outcomes, 3);
        prop_assert!(table.is_monotone());
        prop_assert_eq!(table.counts[0] + table.counts[1], outcomes.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), pair in any::<bool>()) {
        let spec = SplitSpec::default();
        let params = SceneParams::default();
        let a = generate_scene(seed, &spec, Split::Base, pair, &params).unwrap();
        let b = generate_scene(seed, &spec, Split::Base, pair, &params).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(render_features(&a, 0.05, seed, 32).unwrap(), render_features(&b, 0.05, seed, 32).unwrap());
    }
}
