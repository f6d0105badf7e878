use deepgp_core::funcspace::{besov_norm, compose, eval_chain, grid_points, holder_norm_empirical, Component};
use deepgp_core::gp::LatentSampler;
use deepgp_core::inference::{kl_v2_hellinger, log_likelihood_ratio};
use deepgp_core::prior::{sample_prior, PriorTable};
use deepgp_core::rates::{alpha_exponents, minimax_rate, normalize, rate_exponent};
use deepgp_core::rng::keyed_rng;
use deepgp_core::structure::{enumerate_structures, reduce_redundant, validate_graph};
use deepgp_core::verify::random_graph;
use deepgp_core::*;
use proptest::prelude::*;

fn small_structure(seed: u64, max_q: usize) -> CompositionStructure {
    use rand::Rng;
    let mut rng = keyed_rng(seed, &[]);
    let q = rng.random_range(0..=max_q);
    let ts: Vec<usize> = (0..=q).map(|_| rng.random_range(1..=2)).collect();
    let mut dims: Vec<usize> = ts.iter().map(|&t| rng.random_range(t..=t + 1)).collect();
    dims.push(1);
    let graph = random_graph(&mut rng, &dims, &ts).unwrap();
    let betas = (0..=q).map(|_| rng.random_range(0.2..=1.0)).collect();
    CompositionStructure::new(graph, betas, (0.2, 1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha_recursion(betas in prop::collection::vec(0.05f64..3.0, 1..6)) {
        let a = alpha_exponents(&betas).unwrap();
        prop_assert_eq!(a[a.len() - 1], 1.0);
        for i in 0..a.len() - 1 {
            prop_assert!((a[i] - a[i + 1] * betas[i + 1].min(1.0)).abs() <= 1e-15);
            prop_assert!(a[i] > 0.0 && a[i] <= 1.0);
        }
    }

    #[test]
    fn exponent_map_increasing(x in 0.01f64..5.0, dx in 1e-6f64..1.0, t in 1usize..6) {
        prop_assert!(rate_exponent(x + dx, 1.0, t as f64) > rate_exponent(x, 1.0, t as f64));
    }

    #[test]
    fn smoother_layers_contract_faster(seed in any::<u64>(), shrink in 0.0f64..0.2, n in 2u64..10_000_000) {
        let eta = small_structure(seed, 3);
        let mut rough = eta.clone();
        rough.betas.iter_mut().for_each(|b| *b = (*b - shrink).max(0.2));
        prop_assert!(minimax_rate(&eta, n).unwrap().value <= minimax_rate(&rough, n).unwrap().value);
    }

    #[test]
    fn reduction_is_idempotent(seed in any::<u64>()) {
        let eta = small_structure(seed, 4);
        let once = reduce_redundant(&eta, 1.0);
        prop_assert_eq!(&reduce_redundant(&once.structure, 1.0).structure, &once.structure);
        for n in [1_000u64, 1_000_000] {
            let a = minimax_rate(&eta, n).unwrap().value;
            let b = minimax_rate(&once.structure, n).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn node_count_rederivable(seed in any::<u64>()) {
        let eta = small_structure(seed, 4);
        let g = &eta.graph;
        prop_assert_eq!(g.node_count(), 1 + g.dims[..=g.q].iter().sum::<usize>());
        let json = serde_json::to_string(&eta).unwrap();
        let back: CompositionStructure = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, eta);
    }

    #[test]
    fn weights_normalize(logs in prop::collection::vec(-1e18f64..0.0, 1..20)) {
        let w: Vec<LogWeight> = logs.iter().map(|&l| LogWeight::new(l).unwrap()).collect();
        let p = normalize(&w).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_holds(alpha in 0.05f64..=1.0, beta in 0.1f64..1.0, r in 1usize..4, n in 3u64..100_000_000, fam in 0usize..3) {
        let family = [GpFamily::TruncatedWavelet, GpFamily::LevyFbm, GpFamily::RescaledStationary][fam];
        let p = RateProfile::new(family);
        prop_assert!(p.eps_alpha(alpha, beta, r, n).unwrap() >= p.floor(alpha, beta, r, n));
    }

    #[test]
    fn besov_norm_is_max_scaled_latent(seed in any::<u64>(), beta in 0.3f64..2.0, r in 1usize..3) {
        let s = LatentSampler::new(&GpSpec::new(GpFamily::TruncatedWavelet, beta, r, 4096)).unwrap();
        let z = s.draw_latent(&mut keyed_rng(seed, &[]));
        let norm = besov_norm(s.path(&z).wavelet_coeffs().unwrap(), beta);
        let mut expect = 0.0f64;
        let mut off = 0;
        let mut j = 1;
        while off < z.len() {
            let len = 1usize << (j * r);
            for v in &z[off..off + len] {
                expect = expect.max(v.abs() / ((j * r) as f64).sqrt());
            }
            off += len;
            j += 1;
        }
        prop_assert!((norm - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn holder_balls_nested(c0 in -0.3f64..0.3, c1 in -0.3f64..0.3, c2 in -0.3f64..0.3, b in 0.3f64..1.0, db in 0.0f64..0.7) {
        let f = PathFunction::from_fn(1, 129, |u| c0 + c1 * u[0] + c2 * u[0] * u[0]).unwrap();
        let hi = holder_norm_empirical(&f, b + db, 128).unwrap().value;
        let lo = holder_norm_empirical(&f, b, 128).unwrap().value;
        prop_assert!(lo <= hi * 1.05 + 1e-12, "beta {} -> {}, beta {} -> {}", b, lo, b + db, hi);
    }

    #[test]
    fn composition_associative(a in -0.9f64..0.9, b in 0.1f64..2.0, x in -1.0f64..=1.0) {
        let p0 = PathFunction::from_fn(1, 65, |u| a * u[0]).unwrap();
        let p1 = PathFunction::from_fn(1, 65, |u| (b * u[0]).sin() * 0.8).unwrap();
        let p2 = PathFunction::from_fn(1, 65, |u| u[0] * u[0] - 0.5).unwrap();
        let layers = [LayerFunction::scalar(p0.clone()), LayerFunction::scalar(p1.clone()), LayerFunction::scalar(p2.clone())];
        let left = p2.eval(&[p1.eval(&[p0.eval(&[x])])]);
        prop_assert_eq!(eval_chain(&layers, &[x]), left);
        let inner = eval_chain(&layers[..2], &[x]);
        prop_assert_eq!(eval_chain(&layers[2..], &[inner]), left);
    }

    #[test]
    fn llr_chain_rule(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = keyed_rng(seed, &[]);
        let v = |rng: &mut deepgp_core::rng::KeyedRng| (0..30).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (f, g, h, y) = (v(&mut rng), v(&mut rng), v(&mut rng), v(&mut rng));
        let lhs = log_likelihood_ratio(&f, &g, &y) + log_likelihood_ratio(&g, &h, &y);
        prop_assert!((lhs - log_likelihood_ratio(&f, &h, &y)).abs() < 1e-12);
        let ig = kl_v2_hellinger(&f, &g, &[1.0 / 30.0; 30]).unwrap();
        prop_assert!(ig.kl >= 0.0 && ig.hellinger <= ig.kl / 8.0 + 1e-16);
    }
}

#[test]
fn enumeration_closed_under_validation() {
    let space = StructureSpace::new(2, 2, 2, 7, (0.5, 1.0));
    let en = enumerate_structures(&space, &[0.5, 1.0]).unwrap();
    assert!(!en.structures.is_empty());
    for s in &en.structures {
        assert!(validate_graph(&s.graph).ok());
        assert!(s.node_count() <= 7);
    }
    let mut seen = std::collections::HashSet::new();
    for s in &en.structures {
        assert!(seen.insert(serde_json::to_string(s).unwrap()), "duplicate structure");
    }
}

#[test]
fn prior_table_normalized_and_composites_in_range() {
    let space = StructureSpace::new(2, 1, 2, 5, (0.6, 1.0));
    let spec = StructurePriorSpec::from_space(space, RateProfile::new(GpFamily::TruncatedWavelet), 500);
    let table = PriorTable::build(&spec).unwrap();
    let total: f64 = table.entries.iter().map(|e| e.prob).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let pts = grid_points(2, 11);
    for seed in 0..20 {
        let d = sample_prior(&spec, seed).unwrap();
        assert!(d.eval_many(&pts).iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn figure2_constant_layers() {
    let g = CompositionGraph::new(vec![5, 3, 1], vec![vec![vec![1, 3, 4], vec![1, 4, 5], vec![2]], vec![vec![1, 2, 3]]]).unwrap();
    assert_eq!(g.eff_dims, vec![3, 3, 1]);
    let c = 0.37;
    let layer0 = LayerFunction::new(
        5,
        g.active_sets[0]
            .iter()
            .map(|s| Component { path: PathFunction::constant(s.len(), c).unwrap(), active: s.clone() })
            .collect(),
    )
    .unwrap();
    let layer1 = LayerFunction::new(3, vec![Component { path: PathFunction::constant(3, c).unwrap(), active: vec![1, 2, 3] }]).unwrap();
    let out = compose(&[layer0, layer1], &grid_points(5, 3)).unwrap();
    assert!(out.iter().all(|v| *v == c));
}

#[test]
fn json_round_trip_is_bit_exact() {
    // this seed produced a β whose shortest decimal form used to parse one ulp off
    let eta = small_structure(7100023093728622115, 4);
    let back: CompositionStructure = serde_json::from_str(&serde_json::to_string(&eta).unwrap()).unwrap();
    assert_eq!(back, eta);
}
