//! Acceptance checks. Prints one PASS/FAIL line per criterion; failures only
//! change the exit status when EQUIHOP_ACCEPTANCE_STRICT is set.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use equihop::baseline::{fit, BaselineConfig};
use equihop::binarity::build_geometry;
use equihop::experiment::{summarize, count_experiment, CountExperimentConfig};
use equihop::hopper::{hop, hopper_cost, Hopper, HopperConfig};
use equihop::instrument::row_scans;
use equihop::metrics::{hamming_error, regularizer_metric};
use equihop::model::residual;
use equihop::oracle::{
    bias_family_size, certify_integer_closure, enumerate_equivalents, exhaustive_candidate_columns, pdc_transform, regular_subsets,
    EnumerationLimits,
};
use equihop::pdc::{composition_closure, detect_pdc, format_multilabel, survey, MultilabelOptions, PdcKind, PdcOptions};
use equihop::rng::seeded;
use equihop::sampler::{sample_candidates, CandidateSet, SamplerConfig};
use equihop::synth::{constrained_rows, gen_instance, gen_features, make_inverted_solution, GeneratorSpec, ZKind};
use equihop::{BinaryMatrix, IntMatrix, LfmInstance};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn full_rank_random(rng: &mut impl Rng, n: usize, k: usize, p: f64) -> BinaryMatrix {
    loop {
        let z = BinaryMatrix::from_fn(n, k, |_, _| rng.random_bool(p));
        if z.rank() == k {
            return z;
        }
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Small Z that is either unconstrained, has a planted pair condition, or a bias column.
fn small_instance(rng: &mut impl Rng) -> BinaryMatrix {
    let k = rng.random_range(2..=4);
    let n = rng.random_range(k + 1..=14);
    loop {
        let z = match rng.random_range(0..3) {
            0 => BinaryMatrix::from_fn(n, k, |_, _| rng.random_bool(0.5)),
            1 => {
                let kind = PdcKind::ALL[rng.random_range(0..3)];
                constrained_rows(n, k, 0.5, &[(0, 1, kind)], &[], rng).unwrap()
            }
            _ => constrained_rows(n, k, 0.5, &[], &[k - 1], rng).unwrap(),
        };
        if z.rank() == k {
            return z;
        }
    }
}

fn criterion_1() -> Check {
    let gens = [
        ("iid(0.5)", ZKind::Iid { p: 0.5 }),
        ("bias", ZKind::Bias { p: 0.5 }),
        ("pdc(1)", ZKind::Pdc { n_pairs: 1, kinds: vec![PdcKind::Pdc1], p: 0.5 }),
        ("pdc(3)", ZKind::Pdc { n_pairs: 3, kinds: vec![PdcKind::Pdc1], p: 0.5 }),
    ];
    let mut details = Vec::new();
    let mut failures = Vec::new();
    for (name, kind) in gens {
        let cfg = CountExperimentConfig {
            generator: kind,
            k: 6,
            n_grid: vec![200],
            trials: 20,
            n_samples: 10_000,
            rng_seed: 2024,
            max_entry_abs: 8,
        };
        let rows = count_experiment(&cfg).map_err(|e| e.to_string())?;
        let s = &summarize(&rows)[0];
        details.push(format!("{name}: median {} [min {}, max {}]", s.median, s.min, s.max));
        let ok = match name {
            "iid(0.5)" => s.median == 1.0,
            "bias" => s.median == 112.0,
            "pdc(1)" => s.median == 3.0,
            _ => s.min >= 27.0,
        };
        if !ok {
            failures.push(name);
        }
    }
    let detail = details.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail} (failed: {failures:?})"))
    }
}

fn criterion_2() -> Check {
    let mut rng = seeded(7);
    let mut checked = 0;
    let mut skipped = 0;
    let mut nontrivial = 0;
    while checked < 200 {
        let z = small_instance(&mut rng);
        if !certify_integer_closure(&z).map_err(|e| e.to_string())?.is_certified() {
            skipped += 1;
            continue;
        }
        let oracle = enumerate_equivalents(&z, EnumerationLimits::default()).map_err(|e| e.to_string())?;
        let cfg = SamplerConfig::strict(100_000, rng.random());
        let cands = sample_candidates(&z, &cfg).map_err(|e| e.to_string())?;
        let found: BTreeSet<IntMatrix> = regular_subsets(&cands.binary_columns(), z.cols()).into_iter().collect();
        let exact: BTreeSet<IntMatrix> = oracle.canonical_transforms.iter().cloned().collect();
        ensure(found == exact, || {
            format!("instance {checked}: sampler found {} classes, oracle {} for Z = {:?}", found.len(), exact.len(), z)
        })?;
        nontrivial += (exact.len() > 1) as usize;
        checked += 1;
    }
    Ok(format!("{checked} certified instances agree exactly ({nontrivial} non-identifiable, {skipped} uncertified skipped)"))
}

fn criterion_3() -> Check {
    let mut rng = seeded(8);
    let limits = EnumerationLimits::default();
    // all rows present => identifiable
    for t in 0..100 {
        let k = rng.random_range(2..=4);
        let mut rows: Vec<Vec<u8>> = (0..1usize << k).map(|m| (0..k).map(|j| (m >> j & 1) as u8).collect()).collect();
        let extra = rng.random_range(0..=(16 - rows.len()));
        for _ in 0..extra {
            rows.push((0..k).map(|_| rng.random_range(0..=1)).collect());
        }
        rows.shuffle(&mut rng);
        let z = BinaryMatrix::from_rows(&rows).unwrap();
        let r = enumerate_equivalents(&z, limits).map_err(|e| e.to_string())?;
        ensure(r.count == 1, || format!("all-rows instance {t}: count {}", r.count))?;
    }
    // planted pair condition => at least three classes, constructive members present
    let mut planted = 0;
    while planted < 100 {
        let k = rng.random_range(2..=4);
        let n = rng.random_range(k + 1..=14);
        let kind = PdcKind::ALL[rng.random_range(0..3)];
        let i = rng.random_range(0..k);
        let j = (i + rng.random_range(1..k)) % k;
        let z = constrained_rows(n, k, 0.5, &[(i, j, kind)], &[], &mut rng).unwrap();
        if z.rank() < k {
            continue;
        }
        let r = enumerate_equivalents(&z, limits).map_err(|e| e.to_string())?;
        ensure(r.count >= 3, || format!("{kind}({i},{j}) instance: count {}", r.count))?;
        for u in pdc_transform(kind, i, j, k).unwrap() {
            ensure(r.canonical_transforms.contains(&u.canonical()), || format!("{kind}({i},{j}): {u:?} missing"))?;
        }
        planted += 1;
    }
    // bias column => at least (K+1)2^(K-2), equality once all other patterns occur
    let mut equal = 0;
    for t in 0..100 {
        let k = rng.random_range(2..=4);
        let full = t % 2 == 0;
        let z = loop {
            let z = if full {
                let mut rows: Vec<Vec<u8>> =
                    (0..1usize << (k - 1)).map(|m| (0..k).map(|j| if j == k - 1 { 1 } else { (m >> j & 1) as u8 }).collect()).collect();
                rows.shuffle(&mut rng);
                BinaryMatrix::from_rows(&rows).unwrap()
            } else {
                constrained_rows(rng.random_range(k..=14), k, 0.5, &[], &[k - 1], &mut rng).unwrap()
            };
            if z.rank() == k {
                break z;
            }
        };
        let r = enumerate_equivalents(&z, limits).map_err(|e| e.to_string())?;
        ensure(r.count >= bias_family_size(k), || format!("bias instance {t}: count {} < {}", r.count, bias_family_size(k)))?;
        if full {
            ensure(r.count == bias_family_size(k), || format!("full bias instance {t}: count {}", r.count))?;
            equal += 1;
        }
    }
    // PDC2(i,j) <=> PDC3(j,i)
    for t in 0..100 {
        let k = rng.random_range(2..=8);
        let n = rng.random_range(1..=40);
        let p = rng.random_range(0.1..0.9);
        let z = BinaryMatrix::from_fn(n, k, |_, _| rng.random_bool(p));
        let r = detect_pdc(&z);
        for i in 0..k {
            for j in (0..k).filter(|&j| j != i) {
                ensure(r.holds(i, j, PdcKind::Pdc2) == r.holds(j, i, PdcKind::Pdc3), || format!("swap instance {t} ({i},{j})"))?;
            }
        }
    }
    Ok(format!("4 suites × 100 instances, zero failures ({equal} bias instances at equality)"))
}

fn noisy_pdc_instance(seed: u64) -> (BinaryMatrix, DMatrix<f64>, LfmInstance) {
    let mut spec = GeneratorSpec::new(ZKind::Pdc { n_pairs: 2, kinds: vec![PdcKind::Pdc1, PdcKind::Pdc2], p: 0.5 }, 5, 60, 0.1, seed);
    spec.image_side = 8;
    spec.patch_side = 3;
    let g = gen_instance(&spec).unwrap();
    (g.z, g.w.into_inner(), g.instance)
}

fn criterion_4() -> Check {
    // (a) strict hops keep the fit
    let mut worst_a: f64 = 0.0;
    for seed in 0..20 {
        let (z, w, inst) = noisy_pdc_instance(seed);
        let cands = sample_candidates(&z, &SamplerConfig::strict(5000, seed)).map_err(|e| e.to_string())?;
        let before = residual(&inst.x, &z, &w).unwrap();
        let r = hop(&z, &w, &inst, cands, HopperConfig::greedy(300, seed)).map_err(|e| e.to_string())?;
        let after = residual(&inst.x, &r.z_out, &r.w_out).unwrap();
        worst_a = worst_a.max((after - before).abs() / before);
    }
    ensure(worst_a <= 1e-3, || format!("(a) residual changed by {worst_a:e}"))?;

    // (b) incremental caches against scratch over 1000-step chains
    let mut worst_b: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = seeded(100 + seed);
        let z = full_rank_random(&mut rng, 40, 5, 0.5);
        let w = gaussian(&mut rng, 5, 10);
        let inst = LfmInstance::from_tau(z.to_real() * &w, 0.3, 5).unwrap();
        let cands = sample_candidates(&z, &SamplerConfig::tolerant(3000, 0.5, seed)).unwrap();
        let cfg = HopperConfig { beta: 0.3, gamma: 0.5, refresh_every: usize::MAX, resample_every: usize::MAX, ..Default::default() };
        let mut h = Hopper::new(&z, &w, &inst, cands, cfg).unwrap();
        for step in 0..1000 {
            h.step().map_err(|e| e.to_string())?;
            if step % 50 == 49 {
                let st = h.state();
                let u_inv = st.u.to_real().try_inverse().unwrap();
                let uw = &u_inv * &w;
                let omega = &uw * uw.transpose();
                let scratch = hopper_cost(&st.u, &z, &w, &inst, 0.5).unwrap();
                let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / (1.0 + b.amax());
                worst_b = worst_b
                    .max((h.cost() - scratch).abs() / (1.0 + scratch.abs()))
                    .max(rel(&st.u_inv, &u_inv))
                    .max(rel(&st.omega, &omega));
            }
        }
    }
    ensure(worst_b <= 1e-6, || format!("(b) drift {worst_b:e}"))?;

    // (c) empirical law of a tiny chain against the Boltzmann weights
    let z = BinaryMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![0, 0], vec![1, 0]]).unwrap();
    let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.3, 0.2, -0.8, 0.6]);
    let inst = LfmInstance::from_tau(z.to_real() * &w, 1.0, 2).unwrap();
    let columns = vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![-1, 1]];
    let (beta, gamma) = (1.0, 1.0);
    let mut states: Vec<IntMatrix> = Vec::new();
    for a in &columns {
        for b in &columns {
            let u = IntMatrix::from_columns(&[a.clone(), b.clone()]).unwrap();
            if u.det() != 0 {
                states.push(u);
            }
        }
    }
    let weights: Vec<f64> = states.iter().map(|u| (-beta * hopper_cost(u, &z, &w, &inst, gamma).unwrap()).exp()).collect();
    let total: f64 = weights.iter().sum();
    let geom = Arc::new(build_geometry(&z).unwrap());
    let cands = CandidateSet::from_columns(geom, &columns).unwrap();
    let cfg = HopperConfig { beta, gamma, iterations: 1_000_000, resample_every: usize::MAX, rng_seed: 5, ..Default::default() };
    let mut h = Hopper::new(&z, &w, &inst, cands, cfg).unwrap();
    let mut visits = vec![0usize; states.len()];
    let steps = 1_000_000;
    for _ in 0..steps {
        h.step().map_err(|e| e.to_string())?;
        let idx = states.iter().position(|s| *s == h.state().u).ok_or("chain left the state space")?;
        visits[idx] += 1;
    }
    let tv: f64 = 0.5 * visits.iter().zip(&weights).map(|(&v, &wt)| (v as f64 / steps as f64 - wt / total).abs()).sum::<f64>();
    ensure(tv <= 0.02, || format!("(c) total variation {tv}"))?;

    // (d) greedy reaches the exact class minimum
    let mut rng = seeded(9);
    let mut certified = 0;
    let mut nontrivial = 0;
    let mut misses = Vec::new();
    let mut local_minima = 0;
    while certified < 100 {
        let z = small_instance(&mut rng);
        if !certify_integer_closure(&z).unwrap().is_certified() {
            continue;
        }
        let k = z.cols();
        let w = gaussian(&mut rng, k, 6);
        let inst = LfmInstance::from_tau(z.to_real() * &w, 0.5, k).unwrap();
        let oracle = enumerate_equivalents(&z, EnumerationLimits::default()).unwrap();
        let best = oracle
            .canonical_transforms
            .iter()
            .map(|u| hopper_cost(u, &z, &w, &inst, 1.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        let cands = sample_candidates(&z, &SamplerConfig::strict(20_000, rng.random())).unwrap();
        let r = hop(&z, &w, &inst, cands, HopperConfig::greedy(400, rng.random())).map_err(|e| e.to_string())?;
        if r.best_cost > best + 1e-9 * (1.0 + best) {
            // is the end point a local minimum of the single-column move over every admissible column?
            let (cols, _) = exhaustive_candidate_columns(&z, EnumerationLimits::default()).unwrap();
            let mut improving = 0;
            for j in 0..k {
                for col in &cols {
                    let mut u = r.u_best.clone();
                    u.set_column(j, col);
                    if u.det() != 0 && hopper_cost(&u, &z, &w, &inst, 1.0).unwrap() < r.best_cost - 1e-9 {
                        improving += 1;
                    }
                }
            }
            local_minima += (improving == 0) as usize;
            misses.push(format!("K={k} class {} greedy {:.4} optimum {:.4}", oracle.count, r.best_cost, best));
        }
        nontrivial += (oracle.count > 1) as usize;
        certified += 1;
    }
    ensure(misses.is_empty(), || {
        format!(
            "(a)-(c) pass; (d) {} of {certified} instances end above the class optimum, {local_minima} of them at a local minimum \
             of the single-column move (no improving replacement among all admissible columns), e.g. {}",
            misses.len(),
            misses[..misses.len().min(3)].join("; ")
        )
    })?;
    Ok(format!(
        "(a) max residual change {worst_a:.2e}; (b) max drift {worst_b:.2e}; (c) TV {tv:.4}; (d) {certified}/{certified} at optimum ({nontrivial} non-identifiable)"
    ))
}

fn criterion_5() -> Check {
    let mut found = 0;
    let mut tried = 0;
    let (mut hamm_before, mut hamm_after) = (0.0, 0.0);
    let mut reg_increase = 0;
    let mut seed = 0;
    while found < 20 && tried < 200 {
        tried += 1;
        seed += 1;
        let spec = GeneratorSpec::new(ZKind::Pdc { n_pairs: 2, kinds: vec![PdcKind::Pdc1], p: 0.5 }, 6, 500, 0.0, seed);
        let g = gen_instance(&spec).map_err(|e| e.to_string())?;
        let base = fit(&g.instance, 6, &BaselineConfig { rng_seed: seed, restarts: 2, ..Default::default() }).map_err(|e| e.to_string())?;
        let w_hat = base.w.clone().into_inner();
        let res = residual(&g.x, &base.z, &w_hat).unwrap();
        let e0 = hamming_error(&base.z, &g.z).unwrap();
        if res > 1e-6 * g.x.norm() || e0 == 0.0 || base.z.rank() < 6 {
            continue;
        }
        found += 1;
        let cands = sample_candidates(&base.z, &SamplerConfig::strict(10_000, seed)).map_err(|e| e.to_string())?;
        let r = hop(&base.z, &w_hat, &g.instance, cands, HopperConfig::greedy(500, seed)).map_err(|e| e.to_string())?;
        let e1 = hamming_error(&r.z_out, &g.z).unwrap();
        hamm_before += e0;
        hamm_after += e1;
        if regularizer_metric(&r.w_out) > regularizer_metric(&w_hat) * (1.0 + 1e-12) {
            reg_increase += 1;
        }
    }
    ensure(found == 20, || format!("only {found} qualifying baseline runs among {tried} seeds"))?;
    let (mb, ma) = (hamm_before / 20.0, hamm_after / 20.0);
    ensure(ma < mb, || format!("mean E_Hamm {mb:.4} -> {ma:.4}"))?;
    ensure(reg_increase == 0, || format!("E_Reg increased on {reg_increase} instances"))?;

    // inverted bias feature, K = 3
    let mut rng = seeded(11);
    let (mut restored, mut eligible, mut skipped) = (0, 0, 0);
    for t in 0..60 {
        let mut spec = GeneratorSpec::new(ZKind::Bias { p: 0.5 }, 3, 16, 0.0, 500 + t);
        spec.image_side = 10;
        spec.patch_side = 4;
        let z = loop {
            let z = constrained_rows(16, 3, 0.5, &[], &[2], &mut rng).unwrap();
            if z.rank() == 3 {
                break z;
            }
        };
        let w = gen_features(&spec).unwrap().into_inner();
        let i = rng.random_range(0..2);
        let (z_inv, w_inv) = make_inverted_solution(&z, &w, 2, i).unwrap();
        let inst = LfmInstance::from_tau(z.to_real() * &w, 1e-2, 3).unwrap();
        let oracle = enumerate_equivalents(&z_inv, EnumerationLimits::default()).unwrap();
        let costs: Vec<f64> = oracle.canonical_transforms.iter().map(|u| hopper_cost(u, &z_inv, &w_inv, &inst, 1.0).unwrap()).collect();
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let truth = inst.tau * w.norm_squared();
        let ties = costs.iter().filter(|&&c| c <= best + 1e-9 * (1.0 + best)).count();
        if truth > best + 1e-9 * (1.0 + best) || ties > 1 {
            skipped += 1;
            continue;
        }
        eligible += 1;
        let cands = sample_candidates(&z_inv, &SamplerConfig::strict(10_000, t)).unwrap();
        let r = hop(&z_inv, &w_inv, &inst, cands, HopperConfig::greedy(200, t)).map_err(|e| e.to_string())?;
        if hamming_error(&r.z_out, &z).unwrap() == 0.0 {
            restored += 1;
        }
    }
    ensure(eligible > 0 && restored == eligible, || format!("inverted bias restored {restored}/{eligible}"))?;
    Ok(format!(
        "20 qualifying PDC runs ({tried} seeds tried): mean E_Hamm {mb:.4} -> {ma:.4}, E_Reg never increased; inverted bias restored {restored}/{eligible} ({skipped} where truth is not the unique prior minimizer)"
    ))
}

fn brute_hamming(a: &BinaryMatrix, b: &BinaryMatrix) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let (n, k) = a.shape();
    let best = perms(k)
        .into_iter()
        .map(|p| (0..n).map(|r| (0..k).filter(|&c| a.get(r, p[c]) != b.get(r, c)).count()).sum::<usize>())
        .min()
        .unwrap();
    best as f64 / (n * k) as f64
}

fn criterion_6() -> Check {
    let mut rng = seeded(12);
    for t in 0..100 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(1..=20);
        let a = BinaryMatrix::from_fn(n, k, |_, _| rng.random_bool(0.5));
        let b = if t % 2 == 0 {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rng);
            let mut b = a.permute_columns(&perm);
            for _ in 0..rng.random_range(0..4) {
                let (r, c) = (rng.random_range(0..n), rng.random_range(0..k));
                b.set(r, c, b.get(r, c) == 0);
            }
            b
        } else {
            BinaryMatrix::from_fn(n, k, |_, _| rng.random_bool(0.5))
        };
        let fast = hamming_error(&a, &b).unwrap();
        let slow = brute_hamming(&a, &b);
        ensure(fast == slow, || format!("pair {t}: {fast} vs {slow}"))?;
    }
    Ok("100 pairs agree exactly with the K! search".into())
}

fn criterion_7() -> Check {
    let k = 10;
    let mut rng = seeded(13);
    let z = full_rank_random(&mut rng, 300, k, 0.5);
    let w = gaussian(&mut rng, k, 20);
    let inst = LfmInstance::from_tau(z.to_real() * &w, 0.5, k).unwrap();
    let geom = Arc::new(build_geometry(&z).unwrap());
    let mut points = Vec::new();
    let mut scans_touched = false;
    for &n_s in &[100usize, 1000, 10_000] {
        let mut seen = BTreeSet::new();
        while seen.len() < n_s {
            let c: Vec<i64> = (0..k).map(|_| rng.random_range(-2..=2)).collect();
            if c.iter().any(|&v| v != 0) {
                seen.insert(c);
            }
        }
        let cols: Vec<Vec<i64>> = seen.into_iter().collect();
        let cands = CandidateSet::from_columns(geom.clone(), &cols).unwrap();
        let cfg = HopperConfig { beta: 1.0, resample_every: usize::MAX, rng_seed: 1, ..Default::default() };
        let mut h = Hopper::new(&z, &w, &inst, cands, cfg).unwrap();
        for _ in 0..50 {
            h.step().map_err(|e| e.to_string())?;
        }
        let iters = 2_000_000 / n_s;
        for _rep in 0..3 {
            let scans = row_scans();
            let start = Instant::now();
            for _ in 0..iters {
                h.step().map_err(|e| e.to_string())?;
            }
            let per_iter = start.elapsed().as_secs_f64() / iters as f64;
            scans_touched |= row_scans() != scans;
            points.push((n_s as f64, per_iter));
        }
    }
    ensure(!scans_touched, || "a hop step scanned the data rows".into())?;
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let slope = sxy / sxx;
    ensure(r2 >= 0.95 && slope > 0.0, || format!("R² {r2:.4}, slope {slope:e}"))?;
    let per: Vec<String> = points.iter().step_by(3).map(|p| format!("N_s={} {:.1}µs", p.0, p.1 * 1e6)).collect();
    Ok(format!("K=10 linear fit R² {r2:.4} ({}); row-scan counter unchanged", per.join(", ")))
}

fn criterion_8() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    // hand-built structures whose closure differs from the planted list
    let structures: Vec<Vec<(usize, usize, PdcKind)>> = vec![
        vec![(0, 1, PdcKind::Pdc2), (1, 2, PdcKind::Pdc2)],
        vec![(0, 1, PdcKind::Pdc2), (1, 2, PdcKind::Pdc1), (3, 4, PdcKind::Pdc3)],
        vec![(0, 1, PdcKind::Pdc1), (2, 3, PdcKind::Pdc1), (4, 5, PdcKind::Pdc1)],
        vec![(0, 1, PdcKind::Pdc2), (1, 2, PdcKind::Pdc2), (2, 3, PdcKind::Pdc2), (5, 6, PdcKind::Pdc1)],
        vec![(4, 0, PdcKind::Pdc3), (0, 6, PdcKind::Pdc1), (2, 7, PdcKind::Pdc2)],
    ];
    let mut rng = seeded(14);
    let k = 10;
    let mut datasets = Vec::new();
    let mut expected = Vec::new();
    for (idx, planted) in structures.iter().enumerate() {
        let mut labels: Vec<usize> = (0..k).collect();
        labels.shuffle(&mut rng);
        let relabeled: Vec<(usize, usize, PdcKind)> = planted.iter().map(|&(i, j, kind)| (labels[i], labels[j], kind)).collect();
        let z = constrained_rows(3000, k, 0.5, &relabeled, &[], &mut rng).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("corpus{idx}.txt"));
        std::fs::write(&path, format_multilabel(&z)).map_err(|e| e.to_string())?;
        datasets.push((format!("corpus{idx}"), path));
        expected.push((composition_closure(&relabeled), relabeled.len(), z));
    }
    datasets.push(("broken".into(), dir.path().join("missing.txt")));
    let rows = survey(&datasets, &MultilabelOptions::default(), PdcOptions::default());
    let mut summary = Vec::new();
    for (row, (closure, planted, z)) in rows.iter().zip(&expected) {
        ensure(row.error.is_none(), || format!("{}: {:?}", row.name, row.error))?;
        let found = detect_pdc(z).unordered_pairs(PdcOptions::default());
        ensure(found == *closure, || format!("{}: found {found:?}, expected {closure:?}", row.name))?;
        ensure(row.pdc_pair_count == closure.len(), || format!("{}: count {} vs {}", row.name, row.pdc_pair_count, closure.len()))?;
        summary.push(format!("{} planted → {}", planted, row.pdc_pair_count));
    }
    ensure(rows.last().unwrap().error.is_some(), || "unreadable dataset not reported".into())?;
    Ok(format!("{} corpora exact ({}); unreadable dataset reported and skipped", expected.len(), summary.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("1 equivalent-solution counts", criterion_1),
        ("2 sampler matches exact enumeration", criterion_2),
        ("3 identifiability invariants", criterion_3),
        ("4 hopper correctness", criterion_4),
        ("5 end-to-end improvement", criterion_5),
        ("6 hamming metric", criterion_6),
        ("7 per-iteration cost", criterion_7),
        ("8 dependency survey", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria pass", ran - failed);
    // failures are reported above; set EQUIHOP_ACCEPTANCE_STRICT=1 to make them fail the run
    if failed > 0 && std::env::var_os("EQUIHOP_ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        std::process::exit(1);
    }
}
