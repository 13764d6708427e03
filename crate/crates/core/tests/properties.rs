use std::path::{Path, PathBuf};

use proptest::prelude::*;

use pdl1_core::aggregate::{cluster_distribution, ClusterModel};
use pdl1_core::hist::baseline_ratio;
use pdl1_core::roi::{closing, morph_close_open, opening, RoiBinaryMask};
use pdl1_core::slide_io::{
    downsample_tile, extract_tile, make_grid, DatasetManifest, ManifestEntry, TileIndex, PAD_PIXEL,
};
use pdl1_core::{DatasetId, FeatureTable, Label, SlideRaster};

fn entry() -> impl Strategy<Value = ManifestEntry> {
    (
        "[a-z][a-z0-9_-]{0,11}",
        "[a-z0-9_/]{1,16}\\.png",
        any::<bool>(),
        any::<bool>(),
        proptest::option::of("[a-z0-9_]{1,8}\\.mask\\.png"),
    )
        .prop_map(|(id, path, pos, internal, mask)| ManifestEntry {
            slide_id: id,
            path: PathBuf::from(path),
            label: Label::from_bool(pos),
            dataset: if internal { DatasetId::Internal } else { DatasetId::External },
            artifact_mask: mask.map(PathBuf::from),
        })
}

fn mask(max: usize) -> impl Strategy<Value = RoiBinaryMask> {
    (1..max, 1..max).prop_flat_map(|(r, c)| {
        proptest::collection::vec(any::<bool>(), r * c).prop_map(move |v| RoiBinaryMask::new(r, c, v).unwrap())
    })
}

fn subset(a: &RoiBinaryMask, b: &RoiBinaryMask) -> bool {
    a.inside.iter().zip(&b.inside).all(|(&x, &y)| !x || y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_text_round_trip(entries in proptest::collection::vec(entry(), 0..12)) {
        let mut seen = std::collections::HashSet::new();
        let entries: Vec<ManifestEntry> = entries.into_iter().filter(|e| seen.insert(e.slide_id.clone())).collect();
        let m = DatasetManifest::new(entries).unwrap();
        let back = DatasetManifest::parse(&m.to_text(), Path::new("m.tsv")).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn feature_table_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 5), 1..10)) {
        let t = FeatureTable::new(rows.into_iter().enumerate().map(|(i, v)| (format!("s{i}"), v)).collect()).unwrap();
        let back = FeatureTable::parse(&t.to_text(), Path::new("f.txt")).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn tiles_cover_the_raster(w in 1u32..300, h in 1u32..300, k in 1u32..4, seed in any::<u64>()) {
        let ts = 64 * k;
        let pixels: Vec<u8> = (0..w as u64 * h as u64 * 3).map(|i| (i.wrapping_mul(seed | 1) >> 3) as u8).collect();
        let slide = SlideRaster::new("p", w, h, pixels).unwrap();
        let grid = make_grid(&slide, ts).unwrap();
        prop_assert!(grid.cols as u32 * ts >= w && (grid.cols as u32 - 1) * ts < w);
        prop_assert!(grid.rows as u32 * ts >= h && (grid.rows as u32 - 1) * ts < h);
        let idx = TileIndex::new(grid.rows - 1, grid.cols - 1);
        let t = extract_tile(&slide, &grid, idx);
        let (x0, y0) = grid.origin(idx);
        for y in 0..ts {
            for x in 0..ts {
                let o = (y * ts + x) as usize * 3;
                let expected = if x0 + x < w && y0 + y < h { slide.pixel(x0 + x, y0 + y) } else { PAD_PIXEL };
                prop_assert_eq!(&t[o..o + 3], &expected[..]);
            }
        }
    }

    #[test]
    fn uniform_tiles_downsample_to_themselves(px in any::<[u8; 3]>(), k in 1u32..5) {
        let ts = 64 * k;
        let native: Vec<u8> = px.iter().copied().cycle().take((ts * ts * 3) as usize).collect();
        let down = downsample_tile(&native, ts).unwrap();
        prop_assert!(down.pixels().all(|p| p == px));
    }

    #[test]
    fn morphology_orders_masks(m in mask(10), r in 0usize..3) {
        prop_assert!(subset(&m, &closing(&m, r)));
        prop_assert!(subset(&opening(&m, r), &m));
        let once = morph_close_open(&m);
        prop_assert_eq!(once.rows, m.rows);
        prop_assert!((0.0..=1.0).contains(&once.iou(&m)));
    }

    #[test]
    fn region_mask_png_round_trip(m in mask(12)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        m.save(&p).unwrap();
        prop_assert_eq!(RoiBinaryMask::load(&p).unwrap(), m);
    }

    #[test]
    fn baseline_ratio_is_a_cdf(counts in proptest::collection::vec(0u64..1000, 100)) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let mut prev = 0.0;
        for t in 0..100 {
            let r = baseline_ratio(&counts, t).unwrap();
            prop_assert!(r >= prev && r <= 1.0);
            prev = r;
        }
        prop_assert!((prev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distributions_lie_on_the_simplex(
        points in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..40),
        radius in 0.0f64..4.0,
    ) {
        let model = ClusterModel {
            centroids: vec![vec![0.0; 3], vec![2.0, 2.0, 2.0]],
            radii: vec![radius, radius / 2.0],
            t_op: 90.0,
            seed: 0,
        };
        let d = cluster_distribution(&points, &model).unwrap();
        prop_assert_eq!(d.len(), 3);
        prop_assert!(d.iter().all(|&v| v >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
