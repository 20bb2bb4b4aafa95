use blobforge_core::curation::{curate_in_order, curate_record, fit_ellipse_to_mask, CurationRules, Rule};
use blobforge_core::math::angular_distance;
use blobforge_core::metrics::grounding_mse;
use blobforge_core::raster::Mask;
use blobforge_core::{BlobEllipse, ConfidenceLevel};
use proptest::prelude::*;

fn shifted(m: &Mask, dx: usize, dy: usize) -> Mask {
    let mut out = Mask::empty(m.width, m.height);
    for y in 0..m.height - dy {
        for x in 0..m.width - dx {
            out.set(x + dx, y + dy, m.get(x, y));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_center_follows_pixel_translation(
        cx in 0.3..0.5f64, cy in 0.3..0.5f64, a in 0.05..0.15f64, b in 0.03..0.1f64, t in 0.0..3.1f64,
        dx in 0usize..20, dy in 0usize..20,
    ) {
        let m = Mask::from_ellipse(&BlobEllipse::new(cx, cy, a, b, t).unwrap(), 128, 128);
        let f0 = fit_ellipse_to_mask(&m).unwrap();
        let f1 = fit_ellipse_to_mask(&shifted(&m, dx, dy)).unwrap();
        prop_assert!((f1.cx - f0.cx - dx as f64 / 128.0).abs() <= 1e-12);
        prop_assert!((f1.cy - f0.cy - dy as f64 / 128.0).abs() <= 1e-12);
        prop_assert!((f1.a - f0.a).abs() <= 1e-12 && (f1.b - f0.b).abs() <= 1e-12);
    }

    #[test]
    fn verdict_ignores_rule_order(
        cx in 0.0..1.0f64, cy in 0.0..1.0f64, a in 0.001..0.7f64, b in 0.001..0.7f64, t in 0.0..3.1f64,
        side in 470u32..500, perm in Just(Rule::PIPELINE_ORDER).prop_shuffle(),
    ) {
        let m = Mask::from_ellipse(&BlobEllipse::new(cx, cy, a, b, t).unwrap(), side as usize, side as usize);
        let rules = CurationRules::default();
        let p = ConfidenceLevel::default();
        let reference = curate_record(side, side, &m, &rules, p).is_ok();
        prop_assert_eq!(curate_in_order(side, side, &m, &rules, p, &perm).is_ok(), reference);
    }
}

#[test]
fn rotation_shifts_fitted_orientation() {
    for k in 0..12 {
        let phi = k as f64 * 0.25;
        let e = BlobEllipse::new(0.5, 0.5, 0.3, 0.12, 0.2 + phi).unwrap();
        let fitted = fit_ellipse_to_mask(&Mask::from_ellipse(&e, 512, 512)).unwrap();
        assert!(angular_distance(fitted.theta, e.theta).to_degrees() <= 2.0, "phi = {phi}");
    }
}

#[test]
fn self_rendered_masks_ground_well() {
    for (i, e) in [
        (0.5, 0.5, 0.3, 0.1, 0.0),
        (0.4, 0.6, 0.2, 0.15, 1.0),
        (0.3, 0.35, 0.25, 0.05, 2.5),
        (0.6, 0.5, 0.12, 0.12, 0.0),
    ]
    .into_iter()
    .enumerate()
    {
        let e = BlobEllipse::new(e.0, e.1, e.2, e.3, e.4).unwrap();
        let m = Mask::from_ellipse(&e, 512, 512);
        let f = fit_ellipse_to_mask(&m).unwrap();
        let c = e.canonical();
        assert!((f.cx - c.cx).abs() <= 0.02 * c.a, "case {i}");
        assert!((f.cy - c.cy).abs() <= 0.02 * c.a, "case {i}");
        assert!((f.a - c.a).abs() <= 0.02 * c.a, "case {i}");
        assert!((f.b - c.b).abs() <= 0.02 * c.b, "case {i}");
        // orientation is undefined for the circle
        if c.a > 1.01 * c.b {
            assert!(grounding_mse(&m, &e).unwrap() <= 1e-3, "case {i}");
        }
    }
}
