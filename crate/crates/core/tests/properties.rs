use proptest::prelude::*;
use rand::SeedableRng;

use psiconn::committee::{kappa, stratified_folds, Dataset};
use psiconn::evolve::{crossover, evolve, mutate, Chromosome, GaConfig};
use psiconn::features::PairIndex;
use psiconn::graph::{
    avg_shortest_path, clustering, generators, lattice_reference, random_reference, BrainGraph, LengthMap,
};
use psiconn::rng::{self, Rng};
use psiconn::spectral::{pair_psi, BandSpec, ConnectivityMatrix, SpectralConfig};
use psiconn::stats::{bonferroni, friedman, wilcoxon, PMethod, RelatedSamples};
use psiconn::synth::{coupled_pair, CouplingSpec};
use psiconn::PhaseLabel;

fn noise(seed: u64, n: usize) -> Vec<f64> {
    use rand::Rng as _;
    let mut r = Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn swapping_channels_negates_the_index(seed in any::<u64>(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let cfg = SpectralConfig::new(250.0);
        let band = BandSpec::new("b", 4.0, 12.0).unwrap();
        let x = noise(seed, 750);
        let y = noise(seed ^ 0x5eed, 750);
        let v = pair_psi(&x, &y, &cfg, &band).unwrap();
        let w = pair_psi(&y, &x, &cfg, &band).unwrap();
        prop_assert!((v + w).abs() <= 1e-12);
        let xs: Vec<f64> = x.iter().map(|t| a * t).collect();
        let ys: Vec<f64> = y.iter().map(|t| b * t).collect();
        prop_assert!((v - pair_psi(&xs, &ys, &cfg, &band).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn pair_index_is_a_bijection(n in 2usize..70) {
        let p = PairIndex::new(n);
        prop_assert_eq!(p.len(), n * (n - 1) / 2);
        for (f, (i, j)) in p.pairs().enumerate() {
            prop_assert!(i < j && j < n);
            prop_assert_eq!(p.feature(i, j).unwrap(), f);
            prop_assert_eq!(p.pair(f).unwrap(), (i, j));
        }
        prop_assert!(p.pair(p.len()).is_err());
    }

    #[test]
    fn upper_triangle_round_trip(n in 2usize..12, seed in any::<u64>()) {
        let upper = noise(seed, n * (n - 1) / 2);
        let m = ConnectivityMatrix::from_upper(BandSpec::theta(), n, &upper).unwrap();
        prop_assert_eq!(m.upper(), upper);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), -m.get(j, i));
            }
        }
    }

    #[test]
    fn crossover_and_mutation_stay_closed(
        a in proptest::collection::vec(any::<bool>(), 2..60),
        flips in proptest::collection::vec(any::<bool>(), 60),
        seed in any::<u64>(),
    ) {
        let mut a = a;
        a[0] = true;
        let mut b: Vec<bool> = a.iter().zip(&flips).map(|(x, f)| x ^ f).collect();
        b[a.len() - 1] = true;
        let (ca, cb) = (Chromosome::new(a.clone()).unwrap(), Chromosome::new(b.clone()).unwrap());
        let mut r = Rng::seed_from_u64(seed);
        let child = crossover(&ca, &cb, &mut r).unwrap();
        prop_assert_eq!(child.len(), a.len());
        prop_assert!(child.count() > 0);
        // a prefix of `a` followed by a suffix of `b`
        let mask = child.mask();
        let ok = (0..=a.len()).any(|k| (0..a.len()).all(|t| mask[t] == if t < k { a[t] } else { b[t] }));
        prop_assert!(ok);
        let mutated = mutate(&child, 1.0, &mut r);
        let diff = mutated.mask().iter().zip(mask).filter(|(x, y)| x != y).count();
        prop_assert!(diff <= 1);
        prop_assert!(mutated.count() > 0);
        prop_assert_eq!(mutate(&child, 0.0, &mut r), child);
    }

    #[test]
    fn friedman_ignores_monotone_transforms(
        rows in proptest::collection::vec(proptest::collection::vec(-5i32..5, 4), 3..9),
        scale in proptest::collection::vec(0.1f64..10.0, 9),
    ) {
        let data: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let transformed: Vec<Vec<f64>> = data
            .iter()
            .zip(&scale)
            .map(|(r, s)| r.iter().map(|v| (s * v).exp() + v * v * v).collect())
            .collect();
        let a = friedman(&RelatedSamples::new(data).unwrap(), PMethod::Asymptotic);
        let b = friedman(&RelatedSamples::new(transformed).unwrap(), PMethod::Asymptotic);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.statistic, b.statistic);
                prop_assert_eq!(a.p_value, b.p_value);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn wilcoxon_is_antisymmetric(
        pairs in proptest::collection::vec((-20i32..20, -20i32..20), 1..40),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        for method in [PMethod::Auto, PMethod::Asymptotic] {
            match (wilcoxon(&x, &y, method), wilcoxon(&y, &x, method)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.statistic, b.statistic);
                    prop_assert!((a.p_value - b.p_value).abs() <= 1e-12);
                    prop_assert!((0.0..=1.0).contains(&a.p_value));
                    if let (Some(za), Some(zb)) = (a.z, b.z) {
                        prop_assert!((za + zb).abs() <= 1e-12);
                    }
                }
                (Err(_), Err(_)) => prop_assert!(x == y),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn bonferroni_is_monotone_and_capped(ps in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
        let adj = bonferroni(&ps);
        for (i, (&p, &a)) in ps.iter().zip(&adj).enumerate() {
            prop_assert!(a >= p && a <= 1.0);
            prop_assert_eq!(a, (p * ps.len() as f64).min(1.0));
            for (&q, &b) in ps.iter().zip(&adj).skip(i + 1) {
                if p <= q {
                    prop_assert!(a <= b);
                }
            }
        }
    }

    #[test]
    fn kappa_is_transpose_symmetric(cells in proptest::collection::vec(0u64..50, 16)) {
        let mut m: Vec<Vec<u64>> = cells.chunks(4).map(<[u64]>::to_vec).collect();
        m[0][0] += 1;
        let t: Vec<Vec<u64>> = (0..4).map(|j| (0..4).map(|i| m[i][j]).collect()).collect();
        let (a, b) = (kappa(&m).unwrap(), kappa(&t).unwrap());
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a <= 1.0);
    }

    #[test]
    fn folds_are_balanced_per_class(counts in proptest::collection::vec(5usize..40, 4), folds in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<PhaseLabel> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat(PhaseLabel::ALL[c]).take(n))
            .collect();
        let assign = stratified_folds(&labels, folds, seed).unwrap();
        for c in PhaseLabel::ALL {
            let per: Vec<usize> = (0..folds)
                .map(|f| labels.iter().zip(&assign).filter(|(l, a)| **l == c && **a == f).count())
                .collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn references_preserve_degree_sequences(n in 4usize..16, p in 0.1f64..0.9, seed in any::<u64>()) {
        let mut r = Rng::seed_from_u64(seed);
        let g = generators::random_weighted_digraph(n, p, &mut r);
        prop_assume!(g.n_edges() >= 2);
        for refg in [random_reference(&g, 5, &mut r).unwrap(), lattice_reference(&g, 5, &mut r).unwrap()] {
            prop_assert_eq!(refg.directed_degrees(), g.directed_degrees());
            prop_assert_eq!(refg.degrees(), g.degrees());
            prop_assert_eq!(refg.n_edges(), g.n_edges());
        }
    }

    #[test]
    fn weight_scaling(n in 3usize..12, seed in any::<u64>(), c in 0.1f64..10.0) {
        let g: BrainGraph = generators::random_weighted_digraph(n, 0.5, &mut Rng::seed_from_u64(seed));
        let s = g.scaled(c);
        prop_assert!((clustering(&g) - clustering(&s)).abs() <= 1e-12);
        if let (Ok(a), Ok(b)) = (avg_shortest_path(&g, LengthMap::Inverse), avg_shortest_path(&s, LengthMap::Inverse)) {
            prop_assert!((a.mean - c * b.mean).abs() <= 1e-9 * a.mean.max(1.0));
            prop_assert_eq!(a.reachable_pairs, b.reachable_pairs);
        }
    }

    #[test]
    fn synthetic_pairs_are_reproducible(seed in any::<u64>(), delay in -40i32..40) {
        let spec = CouplingSpec::theta(delay as f64);
        let a = coupled_pair(&spec, &mut Rng::seed_from_u64(seed)).unwrap();
        let b = coupled_pair(&spec, &mut Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.record, b.record);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn best_fitness_never_drops(seed in any::<u64>()) {
        use rand::Rng as _;
        let mut r = rng::stream(seed, "ga-table", &[]);
        let labels: Vec<PhaseLabel> = (0..40).map(|i| PhaseLabel::ALL[i % 4]).collect();
        let values: Vec<f64> = (0..40 * 12)
            .map(|k| r.gen_range(-1.0..1.0) + if k % 12 == (k / 12) % 4 { 1.5 } else { 0.0 })
            .collect();
        let data = Dataset::new(values, 12, labels).unwrap();
        let mut cfg = GaConfig::with_seed(seed);
        cfg.population_size = 8;
        cfg.max_generations = 6;
        cfg.cv_folds = 3;
        cfg.plateau_threshold = 0.0;
        cfg.committee.n_trees = 3;
        let res = evolve(&data, &cfg).unwrap();
        prop_assert!(res.history.windows(2).all(|w| w[1].best >= w[0].best));
        prop_assert!(res.history.iter().all(|h| h.mean <= h.best));
        prop_assert!(res.generations_run <= cfg.max_generations);
        prop_assert_eq!(res.best_fitness, res.history.last().unwrap().best);
        prop_assert!(!res.best_mask.is_empty());
    }
}
