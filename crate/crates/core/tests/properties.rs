use navmap_core::eval::{kendall_tau_b, permutation_test, proposition_f1, Lexicon, PermutationMode, PermutationOptions};
use navmap_core::map::raster::squared_distance_transform;
use navmap_core::map::{assign_regions, classify_actions, mask_map, pad_and_resize_to};
use navmap_core::palette::{self, Palette};
use navmap_core::{NavPath, Point2, Region, SemanticMap};
use proptest::prelude::*;

fn palette_map(w: usize, h: usize, picks: &[usize]) -> SemanticMap {
    let colors: Vec<_> = Palette::standard().entries().map(|(_, c)| c).collect();
    let mut m = SemanticMap::filled(w, h, palette::NAVIGABLE, 0.05, Point2::new(0.0, 0.0));
    for (i, &k) in picks.iter().enumerate().take(w * h) {
        m.set(i % w, i / w, colors[k % colors.len()]);
    }
    m
}

fn path_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..8)
        .prop_filter("distinct consecutive points", |v| v.windows(2).all(|w| (w[0].0 - w[1].0).hypot(w[0].1 - w[1].1) > 1e-3))
}

proptest! {
    #[test]
    fn edt_matches_brute_force(w in 1usize..14, h in 1usize..14, raw in prop::collection::vec((0usize..14, 0usize..14), 1..5)) {
        let seeds: Vec<(usize, usize)> = raw.into_iter().map(|(c, r)| (c % w, r % h)).collect();
        let got = squared_distance_transform(w, h, &seeds);
        for r in 0..h {
            for c in 0..w {
                let best = seeds.iter().map(|&(sc, sr)| {
                    let (dx, dy) = (c as f64 - sc as f64, r as f64 - sr as f64);
                    dx * dx + dy * dy
                }).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(got[r * w + c], best);
            }
        }
    }

    #[test]
    fn masking_is_idempotent(picks in prop::collection::vec(0usize..64, 0..400), c in 0usize..20, r in 0usize..20, radius in 0.5..12.0f64) {
        let map = palette_map(20, 20, &picks);
        let once = mask_map(&map, &[(c, r)], radius).unwrap();
        let twice = mask_map(&once, &[(c, r)], radius).unwrap();
        prop_assert_eq!(once.pixels(), twice.pixels());
        prop_assert!(once.is_palette_closed());
    }

    #[test]
    fn resize_keeps_palette(picks in prop::collection::vec(0usize..64, 0..900), w in 1usize..30, h in 1usize..30, target in 1usize..48) {
        let map = palette_map(w, h, &picks);
        let out = pad_and_resize_to(&map, 32, target).unwrap();
        prop_assert_eq!((out.width(), out.height()), (target, target));
        prop_assert!(out.is_palette_closed());
    }

    #[test]
    fn actions_ignore_translation_and_scale(pts in path_points(), dx in -20.0..20.0f64, dy in -20.0..20.0f64, k in 0.5..4.0f64) {
        let base = NavPath::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect(), 1.0);
        let moved = NavPath::new(pts.iter().map(|&(x, y)| Point2::new(k * x + dx, k * y + dy)).collect(), 1.0);
        let a = classify_actions(&base).unwrap();
        let b = classify_actions(&moved).unwrap();
        // exact 20° boundaries can round either way after the transform
        let near_boundary = base.points.windows(3).any(|w| {
            let d = navmap_core::map::geometry::heading_change_deg(w[0], w[1], w[2]).abs();
            (d - 20.0).abs() < 1e-6 || (d - 180.0).abs() < 1e-6
        });
        prop_assume!(!near_boundary);
        prop_assert_eq!(a.len(), pts.len());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mirrored_path_swaps_turns(pts in path_points()) {
        use navmap_core::Action::*;
        let base = classify_actions(&NavPath::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect(), 1.0)).unwrap();
        let mirror = classify_actions(&NavPath::new(pts.iter().map(|&(x, y)| Point2::new(x, -y)).collect(), 1.0)).unwrap();
        let near_boundary = pts.windows(3).any(|w| {
            let p = |q: (f64, f64)| Point2::new(q.0, q.1);
            let d = navmap_core::map::geometry::heading_change_deg(p(w[0]), p(w[1]), p(w[2])).abs();
            (d - 20.0).abs() < 1e-6 || d > 180.0 - 1e-6
        });
        prop_assume!(!near_boundary);
        let swapped: Vec<_> = base.iter().map(|a| match a { Left => Right, Right => Left, other => *other }).collect();
        prop_assert_eq!(mirror, swapped);
    }

    #[test]
    fn region_membership_is_monotone_in_extent(x in -5.0..5.0f64, y in -5.0..5.0f64, w in 0.1..8.0f64, grow in 0.0..3.0f64) {
        let small = Region { id: "a".into(), name: "a".into(), center: Point2::new(0.0, 0.0), extents: [w, w] };
        let big = Region { extents: [w + grow, w + grow], ..small.clone() };
        let p = Point2::new(x, y);
        if !assign_regions(p, &[small]).is_empty() {
            prop_assert!(!assign_regions(p, &[big]).is_empty());
        }
    }

    #[test]
    fn kendall_invariant_under_monotone_maps(pairs in prop::collection::vec((0u8..6, 0u8..6), 3..12)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
        let t = kendall_tau_b(&x, &y).unwrap();
        let fx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 - 1.0).collect();
        let fy: Vec<f64> = y.iter().map(|v| v.powi(3) + v).collect();
        prop_assert!((kendall_tau_b(&fx, &fy).unwrap() - t).abs() < 1e-12);
        prop_assert!((kendall_tau_b(&y, &x).unwrap() - t).abs() < 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((kendall_tau_b(&x, &neg).unwrap() + t).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&t));
    }

    #[test]
    fn permutation_p_ignores_affine_rescaling(
        a in prop::collection::vec(0u8..10, 1..7),
        b in prop::collection::vec(0u8..10, 1..7),
        shift in -5i32..5,
        scale in 1u32..4,
    ) {
        let opts = PermutationOptions { mode: PermutationMode::Exact, ..PermutationOptions::default() };
        let fa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        let fb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
        let p = permutation_test(&fa, &fb, &opts).unwrap().p_value;
        let t = |v: &Vec<f64>| v.iter().map(|x| x * scale as f64 + shift as f64).collect::<Vec<_>>();
        let q = permutation_test(&t(&fa), &t(&fb), &opts).unwrap().p_value;
        prop_assert!((p - q).abs() < 1e-12, "{} vs {}", p, q);
        let swapped = permutation_test(&fb, &fa, &opts).unwrap().p_value;
        prop_assert!((p - swapped).abs() < 1e-12);
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn proposition_f1_is_symmetric_and_bounded(i in 0usize..8, j in 0usize..8) {
        const TEXTS: [&str; 8] = [
            "turn left at the sofa, then stop in the kitchen.",
            "walk straight past the door and wait at the table.",
            "exit the hallway, enter the kitchen, then stop.",
            "turn right at the table, turn left at the door, then wait at the sofa.",
            "",
            "go forward.",
            "enter the hallway and turn left.",
            "stop at the sofa.",
        ];
        let lex = Lexicon::new(["sofa", "table", "door"], ["kitchen", "hallway"]);
        let ab = proposition_f1(TEXTS[i], &[TEXTS[j]], &lex);
        let ba = proposition_f1(TEXTS[j], &[TEXTS[i]], &lex);
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(proposition_f1(TEXTS[i], &[TEXTS[i]], &lex), 1.0);
    }
}
