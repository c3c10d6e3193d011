use abscov::channel::{associate, outage_prob};
use abscov::env::{generate_environment, EnvironmentParams};
use abscov::gridmap::{binary_mask, quantize, to_positions, to_sequence, Grid, Placement, Role};
use abscov::predictor::{e_bce, threshold, ProbabilityMap};
use abscov::rng::stream;
use abscov::search::{mutate, Archive, MoveConstraints};
use abscov::Point;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point() -> impl Strategy<Value = Point> {
    (0.0..1000.0f64, 0.0..1000.0f64).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quantize_ignores_order(points in prop::collection::vec(point(), 0..60), seed in any::<u64>()) {
        let grid = Grid::new(64, 1000.0).unwrap();
        let mut shuffled = points.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let a = quantize(&points, &grid, Role::Gu);
        prop_assert_eq!(&a, &quantize(&shuffled, &grid, Role::Gu));
        prop_assert_eq!(a.total(), points.len());
    }

    #[test]
    fn sequence_round_trip(cells in prop::collection::btree_set(0usize..256, 1..8)) {
        let grid = Grid::new(16, 1000.0).unwrap();
        let pos: Vec<Point> = cells.iter().map(|&c| grid.center(c)).collect();
        let seq = to_sequence(&pos, &grid).unwrap();
        prop_assert!(seq.0.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(seq.0.iter().map(|c| c - 1).collect::<Vec<_>>(), cells.iter().copied().collect::<Vec<_>>());
        let back = to_positions(&seq, &grid).unwrap();
        prop_assert_eq!(back, pos);
    }

    #[test]
    fn threshold_bounded_by_gu_pattern(
        probs in prop::collection::vec(0.0..1.0f64, 64),
        gus in prop::collection::vec(point(), 1..40),
        eta in 0.05..0.95f64,
    ) {
        let grid = Grid::new(8, 1000.0).unwrap();
        let gu = quantize(&gus, &grid, Role::Gu);
        let p = ProbabilityMap { k: 8, probs };
        let t = threshold(&p, &gu, eta, gus.len()).unwrap();
        prop_assert!(t.counts.iter().zip(&gu.counts).all(|(c, g)| c <= g));
        prop_assert!((0.0..=1.0).contains(&t.predicted_cr));
        let kept: u32 = t.counts.iter().sum();
        prop_assert!((t.predicted_cr - kept as f64 / gus.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn e_bce_non_negative(probs in prop::collection::vec(0.0..=1.0f64, 16), pts in prop::collection::vec(point(), 0..10)) {
        let grid = Grid::new(4, 1000.0).unwrap();
        let mask = binary_mask(&quantize(&pts, &grid, Role::Cgu));
        let loss = e_bce(&ProbabilityMap { k: 4, probs }, &mask).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
    }

    #[test]
    fn outage_is_a_probability_monotone_in_threshold(
        snr_db in -10.0..40.0f64,
        k_db in -30.0..30.0f64,
        t1 in -5.0..30.0f64,
        dt in 0.0..10.0f64,
    ) {
        let (snr, k) = (10f64.powf(snr_db / 10.0), 10f64.powf(k_db / 10.0));
        let lo = outage_prob(snr, k, 10f64.powf(t1 / 10.0));
        let hi = outage_prob(snr, k, 10f64.powf((t1 + dt) / 10.0));
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn association_respects_capacity(
        abs in prop::collection::vec(point(), 1..6),
        gus in prop::collection::vec(point(), 0..60),
        slack in 0usize..5,
    ) {
        let cap = gus.len().div_ceil(abs.len()) + slack;
        let a = associate(&abs, &gus, cap).unwrap();
        prop_assert_eq!(a.cluster_sizes.iter().sum::<usize>(), gus.len());
        prop_assert!(a.cluster_sizes.iter().all(|&s| s <= cap));
        prop_assert!(a.gu_to_abs.iter().all(|&i| i < abs.len()));
    }

    #[test]
    fn archive_fitness_never_drops(offers in prop::collection::vec((0u32..4, 0u32..4, 0.0..1.0f64), 1..200)) {
        let mut archive = Archive::default();
        let mut best = std::collections::HashMap::new();
        for (i, (a, b, f)) in offers.into_iter().enumerate() {
            let niche = abscov::gridmap::FeatureNiche { mean_bin: a, std_bin: b };
            let before = archive.get(&niche).map(|e| e.fitness);
            archive.offer(niche, Placement::new(vec![i]), f);
            let after = archive.get(&niche).unwrap().fitness;
            prop_assert!(before.is_none_or(|x| after >= x));
            let e = best.entry(niche).or_insert(f);
            *e = f64::max(*e, f);
            prop_assert_eq!(after, *e);
        }
    }
}

/// Every mutation of a feasible placement is feasible: distinct cells,
/// valid airspace, within reach and separated.
#[test]
fn mutations_stay_feasible() {
    let env = generate_environment(&EnvironmentParams::default(), &mut stream(5, &[0])).unwrap();
    let grid = Grid::new(64, 1000.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for trial in 0..20u64 {
        let c0 = MoveConstraints::new(
            &env,
            grid,
            vec![Point::new(500.0, 500.0); 5],
            f64::INFINITY,
            10.0,
        )
        .unwrap();
        let mut r = stream(trial, &[]);
        let prev = abscov::search::ckmeans_init(
            &(0..100)
                .map(|i| Point::new(20.0 + (i * 97 % 960) as f64, 20.0 + (i * 61 % 960) as f64))
                .filter(|p| env.gu_position_valid(*p))
                .collect::<Vec<_>>(),
            &c0,
            &mut r,
        );
        let c = MoveConstraints::new(&env, grid, prev, 9.0 * grid.cell_side(), 10.0).unwrap();
        let base = c.base();
        assert!(c.placement_ok(&base));
        let mut p = base.clone();
        for i in 0..500 {
            p = mutate(if i % 50 == 0 { &base } else { &p }, 3, &c, &mut rng);
            assert!(c.placement_ok(&p), "infeasible mutation {p:?}");
            let pos = p.positions(&grid);
            for a in 0..pos.len() {
                assert!(env.abs_position_valid(pos[a]));
                assert!(pos[a].dist(c.prev[a]) <= c.max_disp + 1e-9 || p.cells[a] == base.cells[a]);
                for b in a + 1..pos.len() {
                    assert!(pos[a].dist(pos[b]) >= 10.0);
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn niche_ignores_abs_order(cells in prop::collection::btree_set(0usize..1024, 2..8), seed in any::<u64>()) {
        let grid = Grid::new(32, 1000.0).unwrap();
        let pos: Vec<Point> = cells.iter().map(|&c| grid.center(c)).collect();
        let mut shuffled = pos.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let a = abscov::gridmap::feature_of_points(&pos, 31.25).unwrap();
        prop_assert_eq!(a, abscov::gridmap::feature_of_points(&shuffled, 31.25).unwrap());
        let seq = to_sequence(&shuffled, &grid).unwrap();
        prop_assert_eq!(a, abscov::gridmap::feature_of(&seq, &grid, 31.25).unwrap());
    }

    #[test]
    fn pattern_shape_depends_only_on_k(k in 1usize..40, pts in prop::collection::vec(point(), 0..30)) {
        let grid = Grid::new(k, 1000.0).unwrap();
        for role in [Role::Abs, Role::Gu, Role::Cgu] {
            let p = quantize(&pts, &grid, role);
            prop_assert_eq!(p.counts.len(), k * k);
            prop_assert_eq!(p.to_rows().len(), k);
        }
    }
}

#[test]
fn e_bce_minimal_at_clipped_perfect_prediction() {
    let grid = Grid::new(4, 1000.0).unwrap();
    let mask = binary_mask(&quantize(
        &[Point::new(10.0, 10.0), Point::new(900.0, 600.0)],
        &grid,
        Role::Cgu,
    ));
    let perfect = ProbabilityMap {
        k: 4,
        probs: mask.bits.iter().map(|&b| b as f64).collect(),
    };
    let floor = -(1.0f64 - 1e-7).ln();
    assert!((e_bce(&perfect, &mask).unwrap() - floor).abs() < 1e-15);
    let mut off = perfect.clone();
    off.probs[0] = 0.3;
    assert!(e_bce(&off, &mask).unwrap() > floor);
}

#[test]
fn emulator_output_is_k_by_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in [4, 8, 12, 16] {
        let m = abscov::predictor::emulator::EmulatorModel::<f64>::random(k, &mut rng).unwrap();
        let out = m.forward(&vec![1.0; 2 * k * k]).unwrap();
        assert_eq!((out.k, out.probs.len()), (k, k * k));
        assert!(out.probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }
    assert!(abscov::predictor::emulator::EmulatorModel::<f64>::random(6, &mut rng).is_err());
}
