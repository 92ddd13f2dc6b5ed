//! Randomized invariant checks. Each function runs `cases` proptest cases and
//! reports the first (shrunk) failure as a string.

use std::fmt::Debug;

use nalgebra::{DMatrix, Rotation3, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;

use dmvfc::config::RunConfig;
use dmvfc::encoder::{Encoder, EncoderConfig, PointCloud, View};
use dmvfc::fiberset::{load_fiberset, save_fiberset, split_dataset, EndpointSignals};
use dmvfc::functional::{
    cluster_pearson, downsample_indices, downsample_signals, fit_pca, functional_pseudolabel,
    project_pca, srvf_transform,
};
use dmvfc::geometry::{alpha_metric, mdf_distance, pairwise_mdf, quickbundles, ResampledFiber};
use dmvfc::inference::{evaluate, fuse, predict_inputs, PredictView};
use dmvfc::metrics::adjusted_rand_index;
use dmvfc::synthetic::{generate, SynthConfig};
use dmvfc::training::{
    kl_clustering_loss, siamese_batch, soft_assign, target_distribution, SoftAssignment, ViewModel,
};

use super::{
    random_fiberset, random_resampled, random_series, random_signals, random_stochastic, rng,
    to_matrix, uniform,
};

type Check = std::result::Result<(), TestCaseError>;

fn run<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Check) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> std::result::Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

fn seeds() -> impl Strategy<Value = u64> {
    any::<u64>()
}

fn tiny_encoder(view: View, channels: usize, points: usize, k: usize, seed: u64) -> Encoder {
    let cfg = EncoderConfig {
        view,
        input_channels: channels,
        num_points: points,
        knn_k: k,
        layer_widths: vec![8, 12],
        embedding_dim: 4,
    };
    Encoder::new(cfg, seed).unwrap()
}

fn random_cloud(r: &mut impl Rng, id: u64, points: usize, channels: usize) -> PointCloud {
    PointCloud {
        fiber_id: id,
        points: DMatrix::from_fn(points, channels, |_, _| uniform(r, -5.0, 5.0)),
    }
}

pub fn soft_assign_rows_stochastic(cases: u32) -> Result<(), String> {
    let strat = (seeds(), 1usize..10, 1usize..6, 1usize..6);
    run(cases, strat, |(seed, n, k, d)| {
        let mut r = rng(seed);
        let z = DMatrix::from_fn(n, d, |_, _| uniform(&mut r, -10.0, 10.0));
        let mu = DMatrix::from_fn(k, d, |_, _| uniform(&mut r, -10.0, 10.0));
        let batch = ok(dmvfc::encoder::EmbeddingBatch::new(z, (0..n as u64).collect()))?;
        let q = ok(soft_assign(&batch, &mu))?;
        for row in q.matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&v| v > 0.0));
        }
        Ok(())
    })
}

pub fn target_rows_stochastic(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..10, 1usize..6), |(seed, n, k)| {
        let mut r = rng(seed);
        let q = ok(SoftAssignment::new(to_matrix(&random_stochastic(&mut r, n, k))))?;
        let p = ok(target_distribution(&q))?;
        for row in p.matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        Ok(())
    })
}

/// Targets sharpen near-one-hot rows and keep their argmax.
pub fn target_sharpens_near_one_hot(cases: u32) -> Result<(), String> {
    let strat = (seeds(), 2usize..6, 0usize..8, 1e-6f64..0.01);
    run(cases, strat, |(seed, k, extra, delta)| {
        let mut r = rng(seed);
        let n = k + extra;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let hot = if i < k { i } else { r.random_range(0..k) };
                let mut row = vec![delta / (k - 1) as f64; k];
                row[hot] = 1.0 - delta;
                row
            })
            .collect();
        let q = ok(SoftAssignment::new(to_matrix(&rows)))?;
        let p = ok(target_distribution(&q))?;
        prop_assert_eq!(p.hard_labels(), q.hard_labels());
        for (pr, qr) in p.matrix().row_iter().zip(q.matrix().row_iter()) {
            prop_assert!(pr.max() >= qr.max(), "p {} < q {}", pr.max(), qr.max());
        }
        Ok(())
    })
}

pub fn kl_nonnegative_and_zero_at_equality(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..10, 1usize..6), |(seed, n, k)| {
        let mut r = rng(seed);
        let p = ok(SoftAssignment::new(to_matrix(&random_stochastic(&mut r, n, k))))?;
        let q = ok(SoftAssignment::new(to_matrix(&random_stochastic(&mut r, n, k))))?;
        prop_assert!(ok(kl_clustering_loss(&p, &q))? >= 0.0);
        prop_assert!(ok(kl_clustering_loss(&q, &q))?.abs() <= 1e-12);
        Ok(())
    })
}

pub fn mdf_symmetric_nonnegative(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..30), |(seed, n)| {
        let mut r = rng(seed);
        let a = random_resampled(&mut r, 0, n);
        let b = random_resampled(&mut r, 1, n);
        let ab = ok(mdf_distance(&a, &b))?;
        let ba = ok(mdf_distance(&b, &a))?;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9);
        Ok(())
    })
}

pub fn mdf_flip_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..30), |(seed, n)| {
        let mut r = rng(seed);
        let a = random_resampled(&mut r, 0, n);
        let b = random_resampled(&mut r, 1, n);
        prop_assert_eq!(ok(mdf_distance(&a, &a.reversed()))?, 0.0);
        let ab = ok(mdf_distance(&a, &b))?;
        prop_assert!((ab - ok(mdf_distance(&a, &b.reversed()))?).abs() <= 1e-9);
        prop_assert!((ab - ok(mdf_distance(&a.reversed(), &b))?).abs() <= 1e-9);
        Ok(())
    })
}

pub fn mdf_rigid_motion_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..30), |(seed, n)| {
        let mut r = rng(seed);
        let a = random_resampled(&mut r, 0, n);
        let b = random_resampled(&mut r, 1, n);
        let axis = Vector3::new(
            uniform(&mut r, -1.0, 1.0),
            uniform(&mut r, -1.0, 1.0),
            uniform(&mut r, -1.0, 1.0),
        );
        let rot = Rotation3::new(axis * uniform(&mut r, 0.0, std::f64::consts::PI));
        let shift = Vector3::new(
            uniform(&mut r, -50.0, 50.0),
            uniform(&mut r, -50.0, 50.0),
            uniform(&mut r, -50.0, 50.0),
        );
        let moved = |f: &ResampledFiber| ResampledFiber {
            id: f.id,
            points: f
                .points
                .iter()
                .map(|p| {
                    let v = rot * Vector3::new(p[0], p[1], p[2]) + shift;
                    [v.x, v.y, v.z]
                })
                .collect(),
        };
        let before = ok(mdf_distance(&a, &b))?;
        let after = ok(mdf_distance(&moved(&a), &moved(&b)))?;
        prop_assert!((before - after).abs() <= 1e-9, "{before} vs {after}");
        Ok(())
    })
}

pub fn pairwise_mdf_symmetric(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..10, 2usize..12), |(seed, m, n)| {
        let mut r = rng(seed);
        let fibers: Vec<_> = (0..m).map(|i| random_resampled(&mut r, i as u64, n)).collect();
        let d = ok(pairwise_mdf(&fibers))?;
        prop_assert_eq!(d.clone(), d.transpose());
        prop_assert!(d.diagonal().iter().all(|&v| v == 0.0));
        Ok(())
    })
}

pub fn alpha_permutation_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..10, 2usize..12), |(seed, m, n)| {
        let mut r = rng(seed);
        let mut fibers: Vec<_> = (0..m).map(|i| random_resampled(&mut r, i as u64, n)).collect();
        let before = ok(alpha_metric(&fibers))?;
        fibers.shuffle(&mut r);
        let after = ok(alpha_metric(&fibers))?;
        prop_assert!((before - after).abs() <= 1e-9);
        Ok(())
    })
}

pub fn quickbundles_partitions(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..30, 0.5f64..60.0), |(seed, m, threshold)| {
        let mut r = rng(seed);
        let fibers: Vec<_> = (0..m).map(|i| random_resampled(&mut r, i as u64 * 2, 6)).collect();
        let qb = ok(quickbundles(&fibers, threshold))?;
        let mut seen: Vec<u64> = qb.member_ids.iter().flatten().copied().collect();
        seen.sort_unstable();
        let mut want: Vec<u64> = fibers.iter().map(|f| f.id).collect();
        want.sort_unstable();
        prop_assert_eq!(seen, want);
        for (c, members) in qb.centroids.iter().zip(&qb.member_ids) {
            prop_assert!(!members.is_empty());
            for id in members {
                let f = fibers.iter().find(|f| f.id == *id).unwrap();
                prop_assert!(ok(mdf_distance(f, c))?.is_finite());
            }
        }
        Ok(())
    })
}

pub fn srvf_shift_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..40, -100.0f64..100.0), |(seed, n, c)| {
        let mut r = rng(seed);
        let f = random_series(&mut r, n);
        let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
        let a = ok(srvf_transform(&f))?;
        let b = ok(srvf_transform(&shifted))?;
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
        Ok(())
    })
}

fn pca_fixture(r: &mut impl Rng, n: usize, t: usize) -> Vec<EndpointSignals> {
    (0..n).map(|i| random_signals(r, i as u64, t)).collect()
}

pub fn pseudolabel_symmetric(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 8usize..30), |(seed, t)| {
        let mut r = rng(seed);
        let sigs = pca_fixture(&mut r, 4, t);
        let series: Vec<&[f64]> = sigs
            .iter()
            .flat_map(|s| [s.series_a.as_slice(), s.series_b.as_slice()])
            .collect();
        let model = ok(fit_pca(&series, 3))?;
        let ab = ok(functional_pseudolabel(&sigs[0], &sigs[1], &model))?;
        let ba = ok(functional_pseudolabel(&sigs[1], &sigs[0], &model))?;
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert_eq!(ok(functional_pseudolabel(&sigs[2], &sigs[2].swapped(), &model))?, 0.0);
        Ok(())
    })
}

pub fn pca_preserves_subspace_norms(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 8usize..30, 1usize..5), |(seed, t, n_c)| {
        let mut r = rng(seed);
        let sigs = pca_fixture(&mut r, 5, t);
        let series: Vec<&[f64]> = sigs
            .iter()
            .flat_map(|s| [s.series_a.as_slice(), s.series_b.as_slice()])
            .collect();
        let model = ok(fit_pca(&series, n_c))?;
        let coef: Vec<f64> = (0..n_c).map(|_| uniform(&mut r, -3.0, 3.0)).collect();
        let signal: Vec<f64> = (0..t)
            .map(|i| model.mean[i] + (0..n_c).map(|c| coef[c] * model.components[(c, i)]).sum::<f64>())
            .collect();
        let v_norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
        let p = ok(project_pca(&model, &signal))?;
        let p_norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!((p_norm - v_norm).abs() <= 1e-8, "{p_norm} vs {v_norm}");
        Ok(())
    })
}

pub fn pearson_duplicates_and_swaps(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..6, 4usize..40), |(seed, n, t)| {
        let mut r = rng(seed);
        let base = random_signals(&mut r, 0, t);
        let dups: Vec<EndpointSignals> = (0..n)
            .map(|i| EndpointSignals::new(i as u64, base.series_a.clone(), base.series_b.clone()).unwrap())
            .collect();
        prop_assert_eq!(ok(cluster_pearson(&dups.iter().collect::<Vec<_>>()))?, 1.0);

        let sigs = pca_fixture(&mut r, n, t);
        let before = ok(cluster_pearson(&sigs.iter().collect::<Vec<_>>()))?;
        let swapped: Vec<EndpointSignals> = sigs
            .iter()
            .map(|s| if r.random::<bool>() { s.swapped() } else { s.clone() })
            .collect();
        let after = ok(cluster_pearson(&swapped.iter().collect::<Vec<_>>()))?;
        prop_assert!((before - after).abs() <= 1e-12);
        Ok(())
    })
}

pub fn downsample_shares_columns(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 4usize..60), |(seed, t)| {
        let mut r = rng(seed);
        let target = r.random_range(2..=t);
        let s = random_signals(&mut r, 9, t);
        let d = ok(downsample_signals(&s, target, seed))?;
        let cols = downsample_indices(t, target, seed);
        prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        for (c, &idx) in cols.iter().enumerate() {
            prop_assert_eq!(d.matrix[(0, c)], s.series_a[idx]);
            prop_assert_eq!(d.matrix[(1, c)], s.series_b[idx]);
        }
        Ok(())
    })
}

pub fn encoder_deterministic_and_finite(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..6), |(seed, b)| {
        let mut r = rng(seed);
        let enc = tiny_encoder(View::Geometric, 3, 7, 3, seed);
        let batch: Vec<PointCloud> = (0..b).map(|i| random_cloud(&mut r, i as u64, 7, 3)).collect();
        let e1 = ok(enc.embed(&batch))?;
        let e2 = ok(enc.embed(&batch))?;
        prop_assert_eq!(&e1, &e2);
        let pairs: Vec<(usize, usize)> = (0..b).map(|i| (i, (i + 1) % b)).collect();
        let targets: Vec<f64> = pairs.iter().map(|_| uniform(&mut r, 0.0, 5.0)).collect();
        let step = ok(siamese_batch(&enc, &batch, &pairs, &targets))?;
        prop_assert!(step.loss.is_finite() && step.grads.all_finite());
        Ok(())
    })
}

pub fn encoder_point_permutation_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), prop_oneof![Just(View::Geometric), Just(View::Functional)]), |(seed, view)| {
        let mut r = rng(seed);
        let (enc, channels, points) = match view {
            View::Geometric => (tiny_encoder(view, 3, 9, 4, seed), 3, 9),
            View::Functional => (tiny_encoder(view, 16, 2, 1, seed), 16, 2),
        };
        let x = random_cloud(&mut r, 0, points, channels);
        let mut order: Vec<usize> = (0..points).collect();
        order.shuffle(&mut r);
        let permuted = PointCloud {
            fiber_id: 0,
            points: DMatrix::from_fn(points, channels, |i, c| x.points[(order[i], c)]),
        };
        let a = ok(enc.embed(&[x]))?.matrix;
        let b = ok(enc.embed(&[permuted]))?.matrix;
        prop_assert!((&a - &b).norm() <= 1e-6 * (1.0 + a.norm()));
        Ok(())
    })
}

pub fn pretrain_identical_inputs_zero(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..6), |(seed, b)| {
        let mut r = rng(seed);
        let enc = tiny_encoder(View::Geometric, 3, 7, 3, seed);
        let x = random_cloud(&mut r, 0, 7, 3);
        let batch: Vec<PointCloud> = (0..b)
            .map(|i| PointCloud {
                fiber_id: i as u64,
                points: x.points.clone(),
            })
            .collect();
        let pairs: Vec<(usize, usize)> = (1..b).map(|i| (0, i)).collect();
        let step = ok(siamese_batch(&enc, &batch, &pairs, &vec![0.0; pairs.len()]))?;
        prop_assert_eq!(step.loss, 0.0);
        prop_assert!(step.grads.tensors.iter().all(|t| t.value.iter().all(|&v| v == 0.0)));
        Ok(())
    })
}

pub fn fiberset_save_load_identity(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..8, 2usize..12, any::<bool>()), |(seed, n, t, labels)| {
        let mut r = rng(seed);
        let fs = random_fiberset(&mut r, n, t, labels);
        let dir = ok(tempfile::tempdir())?;
        let path = dir.path().join("set");
        ok(save_fiberset(&fs, &path))?;
        prop_assert_eq!(ok(load_fiberset(&path))?, fs);
        Ok(())
    })
}

pub fn encoder_save_load_identity(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), prop_oneof![Just(View::Geometric), Just(View::Functional)]), |(seed, view)| {
        let enc = match view {
            View::Geometric => tiny_encoder(view, 3, 6, 2, seed),
            View::Functional => tiny_encoder(view, 10, 2, 1, seed),
        };
        let dir = ok(tempfile::tempdir())?;
        let path = dir.path().join("enc.json");
        ok(enc.save(&path))?;
        prop_assert_eq!(ok(Encoder::load(&path, Some(enc.config())))?, enc);
        Ok(())
    })
}

pub fn config_text_round_trip(cases: u32) -> Result<(), String> {
    let strat = (any::<u64>(), 1usize..1000, 1e-7f64..1.0, 0.0f64..2.0, proptest::option::of(2usize..20));
    run(cases, strat, |(seed, epochs, lr, gamma, k)| {
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.pretrain_epochs = epochs;
        cfg.pretrain_lr = lr;
        cfg.gamma = gamma;
        cfg.n_clusters = k;
        prop_assert_eq!(ok(RunConfig::parse(&cfg.to_text()))?, cfg);
        Ok(())
    })
}

pub fn split_deterministic(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..40, 0.05f64..0.95), |(seed, n, frac)| {
        let items: Vec<usize> = (0..n).collect();
        let a = ok(split_dataset(&items, frac, seed))?;
        let b = ok(split_dataset(&items, frac, seed))?;
        prop_assert_eq!(&a, &b);
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, items);
        Ok(())
    })
}

fn random_view_models(r: &mut impl Rng, seed: u64, k: usize) -> (ViewModel, ViewModel) {
    let geo = tiny_encoder(View::Geometric, 3, 6, 2, seed);
    let func = tiny_encoder(View::Functional, 10, 2, 1, seed ^ 1);
    let c1 = DMatrix::from_fn(k, 4, |_, _| uniform(r, -1.0, 1.0));
    let c2 = DMatrix::from_fn(k, 4, |_, _| uniform(r, -1.0, 1.0));
    (ViewModel::new(geo, c1).unwrap(), ViewModel::new(func, c2).unwrap())
}

pub fn predict_permutation_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..12, 2usize..5), |(seed, n, k)| {
        let mut r = rng(seed);
        let (vm1, vm2) = random_view_models(&mut r, seed, k);
        let geo: Vec<PointCloud> = (0..n).map(|i| random_cloud(&mut r, i as u64, 6, 3)).collect();
        let func: Vec<PointCloud> = (0..n).map(|i| random_cloud(&mut r, i as u64, 2, 10)).collect();
        let base = ok(predict_inputs(&vm1, &vm2, &geo, &func, PredictView::Fused))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let pg: Vec<PointCloud> = order.iter().map(|&i| geo[i].clone()).collect();
        let pf: Vec<PointCloud> = order.iter().map(|&i| func[i].clone()).collect();
        let perm = ok(predict_inputs(&vm1, &vm2, &pg, &pf, PredictView::Fused))?;
        for (slot, &i) in order.iter().enumerate() {
            prop_assert_eq!(perm.labels[slot], base.labels[i]);
        }
        Ok(())
    })
}

pub fn fused_is_view_mean(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..12, 2usize..6), |(seed, n, k)| {
        let mut r = rng(seed);
        let q1 = to_matrix(&random_stochastic(&mut r, n, k));
        let q2 = to_matrix(&random_stochastic(&mut r, n, k));
        let pred = ok(fuse(q1.clone(), q2.clone(), PredictView::Fused))?;
        for ((f, a), b) in pred.fused_q.iter().zip(q1.iter()).zip(q2.iter()) {
            prop_assert!((f - (a + b) / 2.0).abs() <= 1e-12);
        }
        for row in pred.fused_q.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
        Ok(())
    })
}

pub fn evaluate_relabel_invariant(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..12), |(seed, n)| {
        let mut r = rng(seed);
        let fs = random_fiberset(&mut r, n, 8, true);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let mut names: Vec<usize> = (10..14).collect();
        names.shuffle(&mut r);
        let renamed: Vec<usize> = labels.iter().map(|&l| names[l]).collect();
        let a = ok(evaluate(&labels, &fs))?;
        let b = ok(evaluate(&renamed, &fs))?;
        prop_assert!((a.mean_alpha - b.mean_alpha).abs() <= 1e-12);
        match (a.mean_pearson, b.mean_pearson) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
        prop_assert_eq!(a.ari, b.ari);
        Ok(())
    })
}

/// ARI of a labelling with itself is 1; against shuffles it averages near 0.
pub fn ari_self_and_shuffled(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 2usize..6), |(seed, k)| {
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..200).map(|i| i % k).collect();
        prop_assert_eq!(ok(adjusted_rand_index(&labels, &labels))?, 1.0);
        let mut total = 0.0;
        for _ in 0..100 {
            let mut s = labels.clone();
            s.shuffle(&mut r);
            total += ok(adjusted_rand_index(&labels, &s))?;
        }
        prop_assert!((total / 100.0).abs() < 0.05);
        Ok(())
    })
}

fn small_synth(seed: u64, per: usize) -> SynthConfig {
    SynthConfig {
        fibers_per_cluster: per,
        signal_length: 64,
        seed,
        ..SynthConfig::default()
    }
}

pub fn generate_deterministic_partition(cases: u32) -> Result<(), String> {
    run(cases, (seeds(), 1usize..5), |(seed, per)| {
        let cfg = small_synth(seed, per);
        let a = ok(generate(&cfg))?;
        prop_assert_eq!(&a, &ok(generate(&cfg))?);
        let labels = a.true_labels().unwrap();
        for l in 0..cfg.n_clusters() {
            prop_assert_eq!(labels.iter().filter(|&&x| x == l).count(), per);
        }
        prop_assert_eq!(labels.len(), cfg.n_fibers());
        Ok(())
    })
}

/// Every invariant check, by name.
pub fn suite() -> Vec<(&'static str, fn(u32) -> Result<(), String>)> {
    vec![
        ("soft_assign rows stochastic", soft_assign_rows_stochastic as fn(u32) -> Result<(), String>),
        ("target rows stochastic", target_rows_stochastic),
        ("target sharpens near-one-hot rows", target_sharpens_near_one_hot),
        ("KL >= 0, = 0 at p = q", kl_nonnegative_and_zero_at_equality),
        ("MDF symmetric, non-negative", mdf_symmetric_nonnegative),
        ("MDF flip invariant", mdf_flip_invariant),
        ("MDF rigid-motion invariant", mdf_rigid_motion_invariant),
        ("pairwise MDF symmetric", pairwise_mdf_symmetric),
        ("alpha permutation invariant", alpha_permutation_invariant),
        ("QuickBundles partitions fibers", quickbundles_partitions),
        ("SRVF constant-shift invariant", srvf_shift_invariant),
        ("functional pseudo-label symmetric", pseudolabel_symmetric),
        ("PCA preserves subspace norms", pca_preserves_subspace_norms),
        ("Pearson duplicates and swaps", pearson_duplicates_and_swaps),
        ("downsampling shares columns", downsample_shares_columns),
        ("encoder deterministic and finite", encoder_deterministic_and_finite),
        ("encoder point-permutation invariant", encoder_point_permutation_invariant),
        ("identical inputs, zero labels give zero loss", pretrain_identical_inputs_zero),
        ("fiber set save/load identity", fiberset_save_load_identity),
        ("encoder save/load identity", encoder_save_load_identity),
        ("config text round trip", config_text_round_trip),
        ("split deterministic", split_deterministic),
        ("predict permutation invariant", predict_permutation_invariant),
        ("fused q is the view mean", fused_is_view_mean),
        ("evaluate relabel invariant", evaluate_relabel_invariant),
        ("ARI self and shuffled", ari_self_and_shuffled),
        ("generate deterministic partition", generate_deterministic_partition),
    ]
}
