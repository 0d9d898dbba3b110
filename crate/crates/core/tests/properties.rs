use distsvrg::alloc::{allocate, shard_sizes, CapacityConfig};
use distsvrg::cluster::{alpha_update, dsvrg_run, Cluster, RunOptions};
use distsvrg::io::{parse_libsvm_str, to_libsvm_string, ExperimentConfig};
use distsvrg::lowerbound::{
    adversarial_plan, block_structure, build_sigma, chain_sum_matrix, BlockInstance, HardInstance, HardParams,
};
use distsvrg::objective::{Dataset, FiniteSum, LossKind, ObjectiveSpec};
use distsvrg::svrg::{svrg_single_machine, vr_grad, SequenceSource, StageState, SvrgConfig};
use distsvrg::vecops::{dot, max_abs_diff, norm};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

fn random_spec(loss: LossKind, n: usize, d: usize, lambda: f64, seed: u64) -> ObjectiveSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = gauss_vec(&mut rng, n * d, 1.0);
    let labels = (0..n)
        .map(|_| match loss {
            LossKind::Square => rng.random::<f64>(),
            _ => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    ObjectiveSpec::new(loss, Dataset::new(d, features, labels).unwrap(), lambda).unwrap()
}

fn loss_strategy() -> impl Strategy<Value = LossKind> {
    prop_oneof![Just(LossKind::Square), Just(LossKind::Logistic), Just(LossKind::SmoothHinge)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn component_gradients_match_central_differences(loss in loss_strategy(), seed in any::<u64>()) {
        let d = 4;
        let spec = random_spec(loss, 6, d, 0.1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = gauss_vec(&mut rng, d, 2.0);
        let i = rng.random_range(0..6);
        let g = spec.component_grad(i, &x).unwrap();
        let step = 1e-6;
        let fd: Vec<f64> = (0..d)
            .map(|c| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[c] += step;
                m[c] -= step;
                (spec.component_value(i, &p).unwrap() - spec.component_value(i, &m).unwrap()) / (2.0 * step)
            })
            .collect();
        let err: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&err) <= 1e-6 * norm(&g).max(1.0), "{g:?} vs {fd:?}");
    }

    #[test]
    fn gradients_are_lipschitz(loss in loss_strategy(), seed in any::<u64>()) {
        let spec = random_spec(loss, 8, 3, 0.05, seed);
        let l = spec.constants(Default::default()).unwrap().l;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for _ in 0..10 {
            let x = gauss_vec(&mut rng, 3, 3.0);
            let y = gauss_vec(&mut rng, 3, 3.0);
            let i = rng.random_range(0..8);
            let gx = spec.component_grad(i, &x).unwrap();
            let gy = spec.component_grad(i, &y).unwrap();
            let diff: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
            let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&diff) <= l * norm(&dxy) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn full_objective_is_strongly_convex(loss in loss_strategy(), seed in any::<u64>(), lambda in 0.01f64..1.0) {
        let spec = random_spec(loss, 8, 3, lambda, seed);
        let mu = spec.constants(Default::default()).unwrap().mu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let x = gauss_vec(&mut rng, 3, 3.0);
        let y = gauss_vec(&mut rng, 3, 3.0);
        let gx = spec.full_gradient(&x).unwrap();
        let gy = spec.full_gradient(&y).unwrap();
        let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&dg, &dxy) >= mu * dot(&dxy, &dxy) * (1.0 - 1e-12));
    }

    #[test]
    fn proximal_objective_gains_sigma(loss in loss_strategy(), seed in any::<u64>(), sigma in 0.01f64..5.0) {
        let n = 6;
        let spec = random_spec(loss, n, 3, 0.02, seed);
        let mu = spec.constants(Default::default()).unwrap().mu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let center = gauss_vec(&mut rng, 3, 1.0);
        let x = gauss_vec(&mut rng, 3, 3.0);
        let z = gauss_vec(&mut rng, 3, 3.0);
        let avg = |p: &[f64]| {
            let mut g = vec![0.0; 3];
            for i in 0..n {
                let gi = spec.prox_component_grad(i, p, &center, sigma).unwrap();
                g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b / n as f64);
            }
            g
        };
        let dg: Vec<f64> = avg(&x).iter().zip(&avg(&z)).map(|(a, b)| a - b).collect();
        let dxz: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&dg, &dxz) >= (mu + sigma) * dot(&dxz, &dxz) * (1.0 - 1e-12));
    }

    #[test]
    fn smooth_hinge_is_c1_at_breakpoints(seed in any::<u64>(), at_one in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gauss_vec(&mut rng, 3, 1.0);
        prop_assume!(norm(&a) > 0.1);
        let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let spec = ObjectiveSpec::new(LossKind::SmoothHinge, Dataset::new(3, a.clone(), vec![label]).unwrap(), 0.0).unwrap();
        let t = if at_one { 1.0 } else { 0.0 };
        let x: Vec<f64> = a.iter().map(|v| label * t * v / dot(&a, &a)).collect();
        let eps = 1e-7;
        let f = |s: f64| {
            let p: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi + s * ai).collect();
            spec.component_value(0, &p).unwrap()
        };
        let right = (f(eps) - f(0.0)) / eps;
        let left = (f(0.0) - f(-eps)) / eps;
        prop_assert!((right - left).abs() <= 1e-6, "{left} vs {right}");
    }

    #[test]
    fn vr_grad_is_exactly_unbiased(loss in loss_strategy(), seed in any::<u64>()) {
        let n = 12;
        let spec = random_spec(loss, n, 4, 0.1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let x = gauss_vec(&mut rng, 4, 2.0);
        let x_ref = gauss_vec(&mut rng, 4, 2.0);
        let h = spec.mean_grad(&x_ref);
        let mut mean = vec![0.0; 4];
        for i in 0..n {
            let g = vr_grad(&spec, i, &x, &x_ref, &h).unwrap();
            mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v / n as f64);
        }
        let full = spec.full_gradient(&x).unwrap();
        prop_assert!(max_abs_diff(&mean, &full) <= 1e-12 * norm(&full).max(1.0));
    }

    #[test]
    fn running_average_matches_direct_mean(seed in any::<u64>(), steps in 1usize..200) {
        let spec = random_spec(LossKind::Square, 10, 3, 0.1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
        let x_ref = gauss_vec(&mut rng, 3, 1.0);
        let h = spec.mean_grad(&x_ref);
        let mut st = StageState::start(&x_ref);
        let mut sum = [0.0; 3];
        for _ in 0..steps {
            st.step(&spec, rng.random_range(0..10), &x_ref, &h, 0.05);
            sum.iter_mut().zip(&st.x).for_each(|(s, v)| *s += v);
        }
        let direct: Vec<f64> = sum.iter().map(|s| s / steps as f64).collect();
        prop_assert!(max_abs_diff(&direct, &st.x_bar) <= 1e-12);
    }

    #[test]
    fn allocation_invariants(seed in any::<u64>(), m in 2usize..6, n_per in 5usize..30, spare in 1usize..20, q_frac in 0.0f64..1.0) {
        let n_total = m * n_per + (seed % m as u64) as usize;
        let q = ((spare * m) as f64 * q_frac) as usize;
        let cap = CapacityConfig::with_spare(spare, n_total, m);
        prop_assume!(cap.is_ok());
        let cap = cap.unwrap();
        let plan = allocate(n_total, m, q, &cap, seed).unwrap();
        let mut seen = vec![false; n_total];
        for (j, shard) in plan.partition.iter().enumerate() {
            prop_assert_eq!(shard.len(), shard_sizes(n_total, m)[j]);
            for &i in shard {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            prop_assert!(plan.resident(j).len() <= cap.capacity);
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert!(plan.sequence.iter().all(|&r| r < n_total));
        prop_assert_eq!(plan.sequence.len(), q);
        let full = q / spare;
        for (j, set) in plan.multisets.iter().enumerate() {
            let expect = if j < full { spare } else if j == full { q - full * spare } else { 0 };
            prop_assert_eq!(set.len(), expect);
        }
        prop_assert!(plan.extra_transfers <= q);
    }

    #[test]
    fn dsvrg_matches_oracle_and_consumes_exactly(seed in any::<u64>(), m in 2usize..5, steps in 5usize..40, stages in 1usize..5) {
        let n_total = 60;
        let spec = random_spec(LossKind::Square, n_total, 3, 0.1, seed);
        let info = spec.constants(Default::default()).unwrap();
        let cfg = SvrgConfig::new(1.0 / (16.0 * info.l), steps, stages, &info).unwrap();
        let q = cfg.samples();
        let spare = q.div_ceil(m);
        let cap = CapacityConfig::with_spare(spare, n_total, m);
        prop_assume!(cap.is_ok());
        let plan = allocate(n_total, m, q, &cap.unwrap(), seed).unwrap();
        let mut cluster = Cluster::new(&plan);
        let before = cluster.remaining_samples();
        let x0 = vec![0.5; 3];
        let out = dsvrg_run(&spec, &mut cluster, &x0, &cfg, RunOptions::default()).unwrap();
        prop_assert_eq!(before - cluster.remaining_samples(), steps * stages);
        let trace = svrg_single_machine(&spec, &x0, &cfg, &mut SequenceSource::new(&plan.sequence)).unwrap();
        prop_assert!(max_abs_diff(&out.x, trace.last().unwrap()) <= 1e-12);
        let cps = &out.ledger.checkpoints;
        for w in cps.windows(2) {
            prop_assert!(w[0].rounds <= w[1].rounds);
            prop_assert!(w[0].vectors <= w[1].vectors);
            prop_assert!(w[0].runtime <= w[1].runtime);
        }
    }

    #[test]
    fn alpha_stays_in_unit_interval(alpha0 in 1e-6f64..1.0, q in 1e-8f64..1.0) {
        let mut a = alpha0;
        for _ in 0..50 {
            a = alpha_update(a, q);
            prop_assert!(a > 0.0 && a <= 1.0);
        }
        let s = q.sqrt();
        prop_assert!((alpha_update(s, q) - s).abs() <= 1e-14);
    }

    #[test]
    fn sigma_sum_identity_and_spectrum(k in 1usize..6, u in 2usize..12, kp in 1.5f64..1e4) {
        let p = HardParams::new(k, u, kp, 1.0, 1, 1).unwrap();
        let mut sum = build_sigma(1, &p).unwrap();
        for s in 2..=k {
            sum.add_assign(&build_sigma(s, &p).unwrap(), 1.0);
        }
        prop_assert_eq!(&sum, &chain_sum_matrix(&p));
        for s in 1..=k {
            let sig = build_sigma(s, &p).unwrap();
            prop_assert!(sig.lambda_max(1e-12) <= 4.0 + 1e-9);
            let corner = p.corner();
            for (i, &v) in sig.diag.iter().enumerate() {
                prop_assert!([0.0, 1.0, 2.0].contains(&v) || (i == p.b() - 1 && (v == corner || v == corner - 1.0)));
            }
            prop_assert!(sig.off.iter().all(|&v| v == 0.0 || v == -1.0));
        }
    }

    #[test]
    fn h_is_the_smaller_root(k in 1usize..20, kp in 1.0001f64..1e6) {
        let p = HardParams::new(k, 2, kp, 1.0, 1, 1).unwrap();
        let h = p.h();
        prop_assert!(h > 0.0 && h < 1.0);
        let c = (kp + 2.0 * k as f64 - 1.0) / (kp - 1.0);
        prop_assert!((h * h - 2.0 * c * h + 1.0).abs() <= 1e-9 * c);
        prop_assert!(h <= 1.0 / h);
    }

    #[test]
    fn strict_subsets_have_small_blocks(k in 2usize..6, u in 1usize..8, seed in any::<u64>()) {
        let p = HardParams::new(k, u, 50.0, 1.0, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let missing = rng.random_range(1..=k);
        let subset: Vec<usize> = (1..=k).filter(|&s| s != missing && rng.random_bool(0.7)).collect();
        let coeffs: Vec<f64> = subset.iter().map(|_| rng.random_range(0.1..10.0)).collect();
        prop_assert!(block_structure(&subset, &coeffs, &p).unwrap() <= k);
    }

    #[test]
    fn libsvm_round_trip(seed in any::<u64>(), n in 1usize..20, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = gauss_vec(&mut rng, n * d, 100.0);
        for v in features.iter_mut() {
            if rng.random_bool(0.3) {
                *v = 0.0;
            }
        }
        features[d - 1] = 1.5;
        let labels = gauss_vec(&mut rng, n, 10.0);
        let data = Dataset::new(d, features, labels).unwrap();
        let back = parse_libsvm_str(&to_libsvm_string(&data), "mem").unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn config_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = ExperimentConfig::default();
        cfg.set("n_points", &rng.random_range(10..100_000usize).to_string()).unwrap();
        cfg.set("kappa", &format!("{}", rng.random_range(1.0..1e4f64))).unwrap();
        cfg.set("seeds", &(0..rng.random_range(1..5)).map(|_| rng.random::<u32>().to_string()).collect::<Vec<_>>().join(",")).unwrap();
        let lam = ["n^-0.5", "n^-0.75", "n^-1", "0.125"][rng.random_range(0..4)];
        cfg.set("lambda", lam).unwrap();
        cfg.set("algorithms", "dsvrg,dasvrg,accel_grad").unwrap();
        cfg.set("broadcast", if rng.random_bool(0.5) { "single" } else { "per-receiver" }).unwrap();
        if rng.random_bool(0.5) {
            cfg.set("eta", &format!("{}", rng.random::<f64>())).unwrap();
        }
        let text = cfg.to_text();
        let parsed = ExperimentConfig::parse(&text, "mem").unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.to_text(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gap_decomposes_over_blocks(seed in any::<u64>(), blocks in 2usize..4) {
        let p = HardParams::new(2, 6, 30.0, 1.0, blocks, 2).unwrap();
        let inst = HardInstance::new(p);
        let cfg = SvrgConfig::unchecked(1.0 / (16.0 * p.l), 2 * p.num_functions(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = adversarial_plan(&inst, cfg.samples() / 2, &mut rng).unwrap();
        let x0 = vec![0.0; p.dim()];
        let full = dsvrg_run(&inst, &mut Cluster::new(&plan), &x0, &cfg, RunOptions::default()).unwrap();
        let mut sum = 0.0;
        for l in 0..blocks {
            let g = BlockInstance::new(p, l).unwrap();
            let w0 = vec![0.0; p.b()];
            let out = dsvrg_run(&g, &mut Cluster::new(&plan), &w0, &cfg, RunOptions::default()).unwrap();
            sum += g.mean_value(&out.x) - g.optimal_value();
        }
        prop_assert!((inst.gap(&full.x) - sum).abs() <= 1e-10, "{} vs {}", inst.gap(&full.x), sum);
    }
}
