mod common;

use common::sharma::SHARMA_PAIRS;
use pdl1_core::colorspace::{distance_to_brown, distance_to_white, ColorReference};
use pdl1_core::{ciede2000, srgb_to_lab, LabColor, RgbColor, BASE_BROWN, REFERENCE_WHITE};
use proptest::prelude::*;

fn lab(v: [f64; 3]) -> LabColor {
    LabColor::new(v[0], v[1], v[2])
}

fn rgb(r: f64, g: f64, b: f64) -> RgbColor {
    RgbColor::new(r, g, b).unwrap()
}

#[test]
fn sharma_pairs_within_1e_4() {
    for (i, (a, b, expected)) in SHARMA_PAIRS.iter().enumerate() {
        let got = ciede2000(lab(*a), lab(*b));
        assert!((got - expected).abs() < 1e-4, "pair {}: {got} vs {expected}", i + 1);
        let back = ciede2000(lab(*b), lab(*a));
        assert!((got - back).abs() < 1e-12, "pair {} asymmetric", i + 1);
    }
}

// 50-digit sRGB -> Lab and scikit-image CIEDE2000 (tests/fixtures/color_oracle.py).
#[test]
fn lab_oracle_fixtures() {
    let cases = [
        (rgb(255.0, 255.0, 255.0), [100.0, 0.0, 0.0]),
        (rgb(0.0, 0.0, 0.0), [0.0, 0.0, 0.0]),
        (REFERENCE_WHITE, [94.0978, 0.0, 0.0]),
        (BASE_BROWN, [40.1479613776, 8.55847203403, 17.0113792082]),
        (rgb(128.0, 128.0, 128.0), [53.5850134522, 0.0, 0.0]),
        (rgb(12.0, 200.0, 77.0), [70.8154619244, -66.5428648706, 48.8714514331]),
    ];
    for (c, want) in cases {
        let got = srgb_to_lab(c);
        let tol = if want[0] == 94.0978 { 1e-4 } else { 1e-8 };
        assert!((got.l - want[0]).abs() < tol, "{c:?}: L {}", got.l);
        assert!((got.a - want[1]).abs() < 1e-8, "{c:?}: a {}", got.a);
        assert!((got.b - want[2]).abs() < 1e-8, "{c:?}: b {}", got.b);
    }
}

#[test]
fn reference_distance_fixtures() {
    let close = |a: f64, b: f64, tol: f64| assert!((a - b).abs() < tol, "{a} vs {b}");
    close(distance_to_white(rgb(255.0, 255.0, 255.0)), 3.466627553298704, 1e-9);
    close(distance_to_white(BASE_BROWN), 45.536512030152444, 1e-9);
    close(distance_to_white(rgb(0.0, 0.0, 0.0)), 91.85826692087801, 1e-9);
    close(distance_to_brown(rgb(0.0, 0.0, 0.0)), 31.295468070526084, 1e-9);
    close(distance_to_white(REFERENCE_WHITE), 0.0, 1e-12);
    close(distance_to_brown(BASE_BROWN), 0.0, 1e-12);
    for ((r, g, b), dw, db) in [
        ((220.0, 170.0, 200.0), 23.229, 38.717),
        ((150.0, 100.0, 170.0), 40.702, 33.131),
        ((30.0, 30.0, 30.0), 81.156, 25.661),
    ] {
        close(distance_to_white(rgb(r, g, b)), dw, 1e-3);
        close(distance_to_brown(rgb(r, g, b)), db, 1e-3);
    }
}

#[test]
fn cached_8bit_path_matches_float_path() {
    let white = ColorReference::white();
    for px in [[0u8, 0, 0], [238, 238, 238], [117, 89, 67], [12, 200, 77], [255, 1, 128]] {
        let c = rgb(px[0] as f64, px[1] as f64, px[2] as f64);
        assert!((white.distance_rgb8(px) - white.distance(c)).abs() < 1e-12);
    }
}

fn lab_strategy() -> impl Strategy<Value = LabColor> {
    (0.0..100.0f64, -128.0..128.0f64, -128.0..128.0f64).prop_map(|(l, a, b)| LabColor::new(l, a, b))
}

proptest! {
    #[test]
    fn symmetric_and_nonnegative(x in lab_strategy(), y in lab_strategy()) {
        let d = ciede2000(x, y);
        prop_assert!(d >= 0.0 && d.is_finite());
        prop_assert!((d - ciede2000(y, x)).abs() < 1e-9);
    }

    #[test]
    fn identity(x in lab_strategy()) {
        prop_assert!(ciede2000(x, x).abs() < 1e-12);
    }

    #[test]
    fn rgb_to_lab_stays_in_gamut(r in 0.0..=255.0f64, g in 0.0..=255.0f64, b in 0.0..=255.0f64) {
        let l = srgb_to_lab(rgb(r, g, b));
        prop_assert!(l.is_finite());
        prop_assert!((-1e-9..=100.0 + 1e-9).contains(&l.l));
    }
}
