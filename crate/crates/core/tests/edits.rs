use blobforge_core::edit::{apply_edit, EditOp, NewBlob};
use blobforge_core::math::angular_distance;
use blobforge_core::{BlobEllipse, BlobEntry, BlobScene, ConfidenceLevel};
use proptest::prelude::*;

fn ellipse() -> impl Strategy<Value = BlobEllipse> {
    (0.1..0.9f64, 0.1..0.9f64, 0.05..0.3f64, 0.02..0.3f64, 0.0..3.1f64)
        .prop_map(|(cx, cy, a, b, t)| BlobEllipse::new(cx, cy, a, b, t).unwrap())
}

fn scene() -> impl Strategy<Value = BlobScene> {
    prop::collection::vec(ellipse(), 2..6).prop_map(|es| {
        let p = ConfidenceLevel::default();
        let blobs = es
            .into_iter()
            .enumerate()
            .map(|(i, e)| BlobEntry::new(format!("b{i}"), format!("label{i}"), e, vec![i as f64, 1.0], p).unwrap())
            .collect();
        BlobScene::new(32, 32, p, blobs).unwrap()
    })
}

fn ops(target: String) -> Vec<EditOp> {
    vec![
        EditOp::Translate { target_id: target.clone(), dx: 0.05, dy: -0.02 },
        EditOp::Scale { target_id: target.clone(), s_a: 1.3, s_b: 0.8 },
        EditOp::Rotate { target_id: target.clone(), dtheta: 0.7 },
        EditOp::Replace { target_id: target.clone(), feature: Some(vec![9.0, 9.0]), ellipse: None, label: Some("new".into()) },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edits_leave_other_blobs_untouched(s in scene(), pick in any::<prop::sample::Index>()) {
        let i = pick.index(s.len());
        let target = s.blobs()[i].id().to_string();
        for op in ops(target.clone()) {
            let out = apply_edit(&s, &op).unwrap();
            for (j, (a, b)) in s.blobs().iter().zip(out.blobs()).enumerate() {
                if j != i {
                    prop_assert_eq!(a, b);
                }
            }
        }
        let removed = apply_edit(&s, &EditOp::Remove { target_id: target.clone() }).unwrap();
        let rest: Vec<_> = s.blobs().iter().filter(|b| b.id() != target).collect();
        prop_assert_eq!(removed.blobs().iter().collect::<Vec<_>>(), rest);
    }

    #[test]
    fn translations_compose(s in scene(), u in (-0.1..0.1f64, -0.1..0.1f64), v in (-0.1..0.1f64, -0.1..0.1f64)) {
        let t = |dx, dy| EditOp::Translate { target_id: "b0".into(), dx, dy };
        let twice = apply_edit(&apply_edit(&s, &t(u.0, u.1)).unwrap(), &t(v.0, v.1)).unwrap();
        let once = apply_edit(&s, &t(u.0 + v.0, u.1 + v.1)).unwrap();
        let (a, b) = (twice.get("b0").unwrap().ellipse(), once.get("b0").unwrap().ellipse());
        prop_assert!((a.cx - b.cx).abs() <= 1e-12 && (a.cy - b.cy).abs() <= 1e-12);
    }

    #[test]
    fn rotations_compose_mod_pi(s in scene(), al in -4.0..4.0f64, be in -4.0..4.0f64) {
        let r = |d| EditOp::Rotate { target_id: "b1".into(), dtheta: d };
        let twice = apply_edit(&apply_edit(&s, &r(al)).unwrap(), &r(be)).unwrap();
        let once = apply_edit(&s, &r(al + be)).unwrap();
        let (a, b) = (twice.get("b1").unwrap().ellipse(), once.get("b1").unwrap().ellipse());
        prop_assert!(angular_distance(a.theta, b.theta) <= 1e-12);
    }

    #[test]
    fn scales_compose(s in scene(), sa in 0.5..2.0f64, sb in 0.5..2.0f64, ta in 0.5..2.0f64, tb in 0.5..2.0f64) {
        let sc = |s_a, s_b| EditOp::Scale { target_id: "b0".into(), s_a, s_b };
        let twice = apply_edit(&apply_edit(&s, &sc(sa, sb)).unwrap(), &sc(ta, tb)).unwrap();
        let once = apply_edit(&s, &sc(sa * ta, sb * tb)).unwrap();
        let (a, b) = (twice.get("b0").unwrap().ellipse(), once.get("b0").unwrap().ellipse());
        prop_assert!((a.a - b.a).abs() <= 1e-12 && (a.b - b.b).abs() <= 1e-12);
    }

    #[test]
    fn json_round_trip(s in scene()) {
        let text = serde_json::to_string(&s).unwrap();
        let back: BlobScene = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn add_and_reorder() {
    let p = ConfidenceLevel::default();
    let e = BlobEllipse::new(0.5, 0.5, 0.2, 0.1, 0.0).unwrap();
    let s = BlobScene::new(16, 16, p, vec![BlobEntry::new("a", "", e, vec![], p).unwrap()]).unwrap();
    let add = EditOp::Add {
        blob: NewBlob { id: "b".into(), label: "".into(), ellipse: e, feature: vec![] },
        index: None,
    };
    let two = apply_edit(&s, &add).unwrap();
    assert_eq!(two.blobs()[1].id(), "b");
    assert!(apply_edit(&two, &add).is_err(), "duplicate id");
    let back = apply_edit(&two, &EditOp::Reorder { target_id: "b".into(), index: 0 }).unwrap();
    assert_eq!(back.blobs()[0].id(), "b");
    assert!(apply_edit(&two, &EditOp::Reorder { target_id: "b".into(), index: 2 }).is_err());
}

#[test]
fn unknown_fields_are_rejected() {
    let ok: EditOp = serde_json::from_str(r#"{"kind":"rotate","target_id":"x","dtheta":0.1}"#).unwrap();
    assert_eq!(ok.kind(), "rotate");
    assert!(serde_json::from_str::<EditOp>(r#"{"kind":"rotate","target_id":"x","dtheta":0.1,"bogus":1}"#).is_err());
    assert!(serde_json::from_str::<EditOp>(r#"{"kind":"warp","target_id":"x"}"#).is_err());
}
