use blobforge::formats::{decode_raw_field, encode_raw_field, mask_to_png, png_to_mask, preview_png, png_to_raster};
use blobforge::store::SceneStore;
use blobforge_core::edit::EditOp;
use blobforge_core::field::{FieldKind, FieldMap};
use blobforge_core::raster::Mask;
use blobforge::fixtures::random_scene;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = FieldKind> {
    prop_oneof![
        Just(FieldKind::Distance),
        Just(FieldKind::Opacity),
        Just(FieldKind::ComposedOpacity),
        Just(FieldKind::Mask),
        Just(FieldKind::FeatureNorm),
    ]
}

fn field() -> impl Strategy<Value = FieldMap> {
    (1usize..12, 1usize..12, kind()).prop_flat_map(|(w, h, kind)| {
        prop::collection::vec(-1e6f32..1e6f32, w * h).prop_map(move |v| FieldMap {
            width: w,
            height: h,
            kind,
            values: v.into_iter().map(f64::from).collect(),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_fields_round_trip_exactly(f in field()) {
        prop_assert_eq!(decode_raw_field(&encode_raw_field(&f)).unwrap(), f);
    }

    #[test]
    fn truncated_payloads_are_rejected(f in field(), cut in 1usize..4) {
        let bytes = encode_raw_field(&f);
        prop_assert!(decode_raw_field(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn masks_survive_png(w in 1usize..20, h in 1usize..20, bits in prop::collection::vec(any::<bool>(), 400)) {
        let m = Mask::new(w, h, bits[..w * h].to_vec()).unwrap();
        prop_assert_eq!(png_to_mask(&mask_to_png(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn previews_preserve_order(values in prop::collection::vec(0.0..10.0f64, 16)) {
        let f = FieldMap { width: 4, height: 4, kind: FieldKind::Opacity, values: values.clone() };
        let (png, meta) = preview_png(&f).unwrap();
        let r = png_to_raster(&png).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if values[i] < values[j] {
                    prop_assert!(r.data[3 * i] <= r.data[3 * j]);
                }
            }
        }
        prop_assert_eq!(meta.v_max, values.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn store_revision_counts_accepted_edits(seed in any::<u64>(), dxs in prop::collection::vec(-0.05..0.05f64, 1..8)) {
        let dir = tempfile::tempdir().unwrap();
        let store = SceneStore::open(dir.path()).unwrap();
        store.create("s", random_scene(seed, 16, 16, 3, 2)).unwrap();
        let mut accepted = 0;
        for (i, dx) in dxs.iter().enumerate() {
            let op = EditOp::Translate { target_id: "b1".into(), dx: *dx, dy: 0.0 };
            // every other edit carries a stale precondition
            let expected = if i % 2 == 0 { None } else { Some(0) };
            if store.edit("s", &op, expected).is_ok() {
                accepted += 1;
            }
        }
        prop_assert_eq!(store.get("s").unwrap().revision, 1 + accepted);
    }
}
