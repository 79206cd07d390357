//! Acceptance gate: every numbered criterion below prints one `PASS`/`FAIL`
//! line (run with `--nocapture` to see them as they complete).
//!
//! Criteria 1-6 and 11-12 are property/oracle checks; 7-9 train real models
//! on the synthetic task; 10 exercises the installed binary end to end.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphseg_core::cloud::{Point3, PointCloud};
use graphseg_core::graph::kdtree::brute_force_knn;
use graphseg_core::graph::{
    build_adjacency, normalized_laplacian, renormalized_adjacency, rescale_laplacian,
    GraphConfig, LambdaMax, SpatialIndex,
};
use graphseg_core::io::{
    brute_force_densify, densify_labels, generate_scene, scene_spec, DatasetSpec, DensifyConfig,
};
use graphseg_core::nn::{
    dropout, global_template, softmax_cross_entropy, ChebGCNLayer, CsrReal, Mode, ModelConfig,
    PerPointMLP, SegModel, Tape, Variant,
};
use graphseg_core::pipeline::{evaluate, sweep_cheb_order, train, ConfusionMatrix, TrainConfig};
use graphseg_core::sparse::{PropagationMatrix, SparseAdjacency};
use graphseg_core::spectral::{
    chebyshev_apply, monomial_apply, spectral_convolve, spectral_filter_oracle,
    PolynomialFilter, SpectralDecomposition,
};


/// Wraps a criterion body so its verdict is always printed as one line.
#[must_use]
fn criterion(number: usize, name: &str, body: impl FnOnce()) -> bool {
    let ok = catch_unwind(AssertUnwindSafe(body)).is_ok();
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("acceptance criterion {number:2} ({name}): {verdict}");
    ok
}

fn rel_err(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    let scale = want.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    got.iter()
        .zip(want.iter())
        .fold(0.0f64, |a, (&x, &y)| a.max((x - y).abs()))
        / scale
}

/// Random Erdos-Renyi weighted adjacency; may contain isolated nodes.
fn random_adjacency(n: usize, rng: &mut ChaCha8Rng) -> SparseAdjacency {
    let mut entries = Vec::new();
    for r in 0..n {
        for c in (r + 1)..n {
            if rng.random::<f64>() < 0.3 {
                entries.push((r, c, 0.05 + rng.random::<f64>()));
            }
        }
    }
    SparseAdjacency::new(n, entries)
}

fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random::<f64>() * 2.0,
                rng.random::<f64>() * 2.0,
                rng.random::<f64>(),
            )
        })
        .collect()
}

fn random_signal(n: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
}

#[test]
fn criterion_01_spectral_oracle_equivalence() {
    let ok = criterion(1, "chebyshev/monomial vs dense spectral oracles", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for case in 0..120 {
            let n = rng.random_range(4..=32);
            let adj = random_adjacency(n, &mut rng);
            let lap = normalized_laplacian(&adj);
            let policy =
                if case % 2 == 0 { LambdaMax::Bound2 } else { LambdaMax::PowerIteration };
            let resc = rescale_laplacian(&lap, policy).unwrap();
            let decomp = SpectralDecomposition::compute(&resc).unwrap();
            let x = random_signal(n, 3, &mut rng);

            let order = rng.random_range(0..=5usize);
            let theta: Vec<f64> =
                (0..=order).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let cheb = PolynomialFilter::chebyshev(theta);
            let got = chebyshev_apply(&resc, &cheb, &x).unwrap();
            let want = spectral_filter_oracle(&decomp, &cheb, &x).unwrap();
            assert!(rel_err(&got, &want) < 1e-8, "case {case}: chebyshev mismatch");

            let alpha: Vec<f64> =
                (0..=order).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mono = PolynomialFilter::monomial(alpha.clone());
            let got = monomial_apply(&resc, &mono, &x).unwrap();
            // Dense matrix-power oracle.
            let dense = resc.to_dense();
            let mut want = &x * alpha[0];
            let mut power = x.clone();
            for &c in &alpha[1..] {
                power = dense.dot(&power);
                want = want + &power * c;
            }
            assert!(rel_err(&got, &want) < 1e-10, "case {case}: monomial mismatch");
        }
        assert!(start.elapsed().as_secs_f64() < 30.0, "criterion 1 over budget");
    });
    assert!(ok);
}

#[test]
fn criterion_02_spectral_convolution_oracle() {
    let ok = criterion(2, "spectral_convolve vs dense U(U^T x . U^T m)", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for case in 0..120 {
            let n = rng.random_range(3..=32);
            let adj = random_adjacency(n, &mut rng);
            let lap = normalized_laplacian(&adj);
            let decomp = SpectralDecomposition::compute(&lap).unwrap();
            let x = random_signal(n, 2, &mut rng);
            let m = Array1::from_shape_fn(n, |_| rng.random::<f64>() * 2.0 - 1.0);
            let got = spectral_convolve(&decomp, &x, &m).unwrap();

            let u = decomp.eigenvectors();
            let x_hat = u.t().dot(&x);
            let m_hat = u.t().dot(&m);
            let mut prod = x_hat.clone();
            for (mut row, &mv) in prod.rows_mut().into_iter().zip(m_hat.iter()) {
                row.mapv_inplace(|v| v * mv);
            }
            let want = u.dot(&prod);
            assert!(rel_err(&got, &want) < 1e-10, "case {case}: convolution mismatch");
        }
        assert!(start.elapsed().as_secs_f64() < 10.0, "criterion 2 over budget");
    });
    assert!(ok);
}

#[test]
fn criterion_03_knn_exactness() {
    let ok = criterion(3, "kd-tree kNN equals brute force", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for cloud in 0..50 {
            let n = rng.random_range(41..=2000);
            let points = random_points(n, &mut rng);
            let index = SpatialIndex::build(&points).unwrap();
            for &k in &[1usize, 8, 40] {
                for i in 0..n {
                    let got = index.knn_of_member(i, k);
                    let want = brute_force_knn(&points, &points[i], k, Some(i));
                    assert_eq!(got, want, "cloud {cloud}, point {i}, k {k}");
                }
            }
        }
        assert!(start.elapsed().as_secs_f64() < 60.0, "criterion 3 over budget");
    });
    assert!(ok);
}

#[test]
fn criterion_04_spectral_bounds() {
    let ok = criterion(4, "Laplacian/renormalized-adjacency eigenvalue bounds", || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for case in 0..100 {
            let n = rng.random_range(2..=64);
            let adj = if case % 2 == 0 {
                random_adjacency(n, &mut rng)
            } else {
                let points = random_points(n, &mut rng);
                let cfg = GraphConfig { k: 4.min(n - 1), ..Default::default() };
                build_adjacency(&points, &cfg).unwrap()
            };
            let lap = normalized_laplacian(&adj);
            for &ev in SpectralDecomposition::compute(&lap).unwrap().eigenvalues() {
                assert!(
                    (-1e-9..=2.0 + 1e-9).contains(&ev),
                    "case {case}: Laplacian eigenvalue {ev}"
                );
            }
            let renorm = renormalized_adjacency(&adj);
            for &ev in SpectralDecomposition::compute(&renorm).unwrap().eigenvalues() {
                assert!(
                    (-1.0 - 1e-9..=1.0 + 1e-9).contains(&ev),
                    "case {case}: renormalized eigenvalue {ev}"
                );
            }
        }
    });
    assert!(ok);
}

// ---------------------------------------------------------------------------
// Criterion 5: finite-difference gradient checks.
// ---------------------------------------------------------------------------

const FD_H: f64 = 1e-5;

fn assert_fd(fd: f64, ad: f64, ctx: &str) {
    if ad.abs() > 1e-8 || fd.abs() > 1e-8 {
        let denom = fd.abs().max(ad.abs());
        assert!((fd - ad).abs() / denom < 1e-4, "{ctx}: fd {fd} vs ad {ad}");
    }
}

/// Central finite differences over every entry of one array against the
/// analytic gradient. `perturb(i, j, delta)` adds `delta` to the entry and
/// `eval()` recomputes the scalar loss from the mutated state; the two
/// closures typically share state through a `RefCell`.
fn fd_check<P, E>(grad: &Array2<f64>, mut perturb: P, mut eval: E, ctx: &str)
where
    P: FnMut(usize, usize, f64),
    E: FnMut() -> f64,
{
    let dim = grad.dim();
    for i in 0..dim.0 {
        for j in 0..dim.1 {
            perturb(i, j, FD_H);
            let up = eval();
            perturb(i, j, -2.0 * FD_H);
            let down = eval();
            perturb(i, j, FD_H);
            let fd = (up - down) / (2.0 * FD_H);
            assert_fd(fd, grad[[i, j]], &format!("{ctx}[{i},{j}]"));
        }
    }
}

fn block_operator(n: usize, seed: u64) -> (Arc<CsrReal<f64>>, Vec<Point3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = random_points(n, &mut rng);
    let cfg = GraphConfig { k: 3, ..Default::default() };
    let adj = build_adjacency(&points, &cfg).unwrap();
    let lap = normalized_laplacian(&adj);
    let resc = rescale_laplacian(&lap, LambdaMax::Bound2).unwrap();
    (Arc::new(CsrReal::from_csr(resc.csr())), points)
}

#[test]
fn criterion_05_gradient_checks() {
    let ok = criterion(5, "finite-difference gradient checks, layers and full model", || {
        let start = Instant::now();
        let labels4: Vec<Option<usize>> =
            (0..8).map(|i| if i == 5 { None } else { Some(i % 4) }).collect();

        // Per-point MLP (dense layers + ReLU), parameters and input.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(60);
            let mlp = PerPointMLP::<f64>::new(3, &[5, 4], &mut rng);
            let coords = random_signal(8, 3, &mut rng);
            let state = std::cell::RefCell::new((mlp, coords));
            let eval = || {
                let (mlp, coords) = &*state.borrow();
                let mut tape = Tape::<f64>::new();
                let x = tape.leaf(coords.clone());
                let mut ids = Vec::new();
                let mut drng = ChaCha8Rng::seed_from_u64(0);
                let y = mlp.forward(&mut tape, x, 0.0, Mode::Eval, &mut drng, &mut ids).unwrap();
                let loss = softmax_cross_entropy(&mut tape, y, &labels4, 4).unwrap();
                let value = tape.value(loss)[[0, 0]];
                let mut grads = tape.backward(loss);
                let pg: Vec<Array2<f64>> = ids
                    .iter()
                    .map(|id| {
                        grads[id.index()]
                            .take()
                            .unwrap_or_else(|| Array2::zeros(tape.value(*id).dim()))
                    })
                    .collect();
                let xg = grads[x.index()].take().unwrap();
                (value, pg, xg)
            };
            let (_, pgrads, xgrad) = eval();
            let num_layers = state.borrow().0.layers.len();
            for li in 0..num_layers {
                fd_check(
                    &pgrads[2 * li],
                    |i, j, d| state.borrow_mut().0.layers[li].weight[[i, j]] += d,
                    || eval().0,
                    &format!("mlp weight {li}"),
                );
                fd_check(
                    &pgrads[2 * li + 1],
                    |i, j, d| state.borrow_mut().0.layers[li].bias[[i, j]] += d,
                    || eval().0,
                    &format!("mlp bias {li}"),
                );
            }
            fd_check(&xgrad, |i, j, d| state.borrow_mut().1[[i, j]] += d, || eval().0, "mlp input");
        }

        // Dropout in train mode under a fixed mask seed, gradient wrt input.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(51);
            let state = std::cell::RefCell::new(random_signal(8, 4, &mut rng));
            let eval = || {
                let xv = state.borrow();
                let mut tape = Tape::<f64>::new();
                let x = tape.leaf(xv.clone());
                let mut drng = ChaCha8Rng::seed_from_u64(7);
                let y = dropout(&mut tape, x, 0.5, Mode::Train, &mut drng).unwrap();
                let loss = softmax_cross_entropy(&mut tape, y, &labels4, 4).unwrap();
                let value = tape.value(loss)[[0, 0]];
                let g = tape.backward(loss)[x.index()].take().unwrap();
                (value, g)
            };
            let (_, grad) = eval();
            fd_check(&grad, |i, j, d| state.borrow_mut()[[i, j]] += d, || eval().0, "dropout input");
        }

        // Global template (column max-pool), gradient wrt input.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(52);
            let state = std::cell::RefCell::new(random_signal(8, 4, &mut rng));
            let eval = || {
                let xv = state.borrow();
                let mut tape = Tape::<f64>::new();
                let x = tape.leaf(xv.clone());
                let pooled = global_template(&mut tape, x).unwrap();
                let loss =
                    softmax_cross_entropy(&mut tape, pooled, &[Some(2usize)], 4).unwrap();
                let value = tape.value(loss)[[0, 0]];
                let g = tape.backward(loss)[x.index()].take().unwrap();
                (value, g)
            };
            let (_, grad) = eval();
            fd_check(
                &grad,
                |i, j, d| state.borrow_mut()[[i, j]] += d,
                || eval().0,
                "global template input",
            );
        }

        // Softmax cross-entropy wrt logits.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(53);
            let state = std::cell::RefCell::new(random_signal(8, 4, &mut rng));
            let eval = || {
                let lv = state.borrow();
                let mut tape = Tape::<f64>::new();
                let l = tape.leaf(lv.clone());
                let loss = softmax_cross_entropy(&mut tape, l, &labels4, 4).unwrap();
                let value = tape.value(loss)[[0, 0]];
                let g = tape.backward(loss)[l.index()].take().unwrap();
                (value, g)
            };
            let (_, grad) = eval();
            fd_check(&grad, |i, j, d| state.borrow_mut()[[i, j]] += d, || eval().0, "softmax-ce");
        }

        // Chebyshev GCN layer in both evaluation orders (recurrence for
        // in <= out, Clenshaw for in > out), parameters and input.
        for &(in_dim, out_dim, tag) in
            &[(4usize, 6usize, "recurrence"), (6, 3, "clenshaw")]
        {
            let (prop, _) = block_operator(8, 54);
            let mut rng = ChaCha8Rng::seed_from_u64(55);
            let layer = ChebGCNLayer::<f64>::new(3, in_dim, out_dim, true, &mut rng);
            let xv = random_signal(8, in_dim, &mut rng);
            let labels: Vec<Option<usize>> = (0..8).map(|i| Some(i % out_dim)).collect();
            let state = std::cell::RefCell::new((layer, xv));
            let eval = || {
                let (layer, xv) = &*state.borrow();
                let mut tape = Tape::<f64>::new();
                let x = tape.leaf(xv.clone());
                let mut ids = Vec::new();
                let y = layer.forward(&mut tape, &prop, x, &mut ids).unwrap();
                let loss = softmax_cross_entropy(&mut tape, y, &labels, out_dim).unwrap();
                let value = tape.value(loss)[[0, 0]];
                let mut grads = tape.backward(loss);
                let pg: Vec<Array2<f64>> = ids
                    .iter()
                    .map(|id| {
                        grads[id.index()]
                            .take()
                            .unwrap_or_else(|| Array2::zeros(tape.value(*id).dim()))
                    })
                    .collect();
                let xg = grads[x.index()].take().unwrap();
                (value, pg, xg)
            };
            let (_, pgrads, xgrad) = eval();
            let nt = state.borrow().0.thetas.len();
            for t in 0..nt {
                fd_check(
                    &pgrads[t],
                    |i, j, d| state.borrow_mut().0.thetas[t][[i, j]] += d,
                    || eval().0,
                    &format!("gcn {tag} theta {t}"),
                );
            }
            fd_check(
                &pgrads[nt],
                |i, j, d| state.borrow_mut().0.bias[[i, j]] += d,
                || eval().0,
                &format!("gcn {tag} bias"),
            );
            fd_check(
                &xgrad,
                |i, j, d| state.borrow_mut().1[[i, j]] += d,
                || eval().0,
                &format!("gcn {tag} input"),
            );
        }

        // Full Full-variant model on an 8-point block.
        {
            let (prop, _) = block_operator(8, 56);
            let mut cfg = ModelConfig::full(4);
            cfg.mlp_widths = vec![8, 8, 16];
            cfg.gcn_hidden = vec![12, 6];
            let model = SegModel::<f64>::new(cfg, 57).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(58);
            let coords = random_signal(8, 3, &mut rng);
            let state = std::cell::RefCell::new(model);
            let eval = || {
                let model = state.borrow();
                let mut tape = Tape::<f64>::new();
                let mut drng = ChaCha8Rng::seed_from_u64(0);
                let (loss, _, ids) = model
                    .forward_loss(&mut tape, &coords, &prop, &labels4, Mode::Eval, &mut drng)
                    .unwrap();
                let value = tape.value(loss)[[0, 0]];
                let grads = model.collect_grads(&tape, loss, &ids);
                (value, grads)
            };
            let (_, grads) = eval();
            for (p, grad) in grads.iter().enumerate() {
                fd_check(
                    grad,
                    |i, j, d| state.borrow_mut().params_mut()[p][[i, j]] += d,
                    || eval().0,
                    &format!("full model param {p}"),
                );
            }
        }
        assert!(start.elapsed().as_secs_f64() < 300.0, "criterion 5 over budget");
    });
    assert!(ok);
}

#[test]
fn criterion_06_permutation_equivariance() {
    let ok = criterion(6, "full-model permutation equivariance", || {
        let n = 24;
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        let adj = random_adjacency(n, &mut rng);
        let lap = normalized_laplacian(&adj);
        let resc = rescale_laplacian(&lap, LambdaMax::Bound2).unwrap();
        let mut cfg = ModelConfig::full(4);
        cfg.mlp_widths = vec![8, 8, 16];
        cfg.gcn_hidden = vec![12, 6];
        let model = SegModel::<f64>::new(cfg, 7).unwrap();
        let coords = random_signal(n, 3, &mut rng);

        let forward = |prop: &Arc<CsrReal<f64>>, coords: &Array2<f64>| -> Array2<f64> {
            let mut tape = Tape::<f64>::new();
            let mut drng = ChaCha8Rng::seed_from_u64(0);
            let (logits, _) =
                model.forward(&mut tape, coords, prop, Mode::Eval, &mut drng).unwrap();
            tape.value(logits).clone()
        };
        let base_prop = Arc::new(CsrReal::from_csr(resc.csr()));
        let base = forward(&base_prop, &coords);

        for trial in 0..20 {
            // Random permutation pi.
            let mut pi: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                pi.swap(i, j);
            }
            // Permute operator entries and coordinates consistently.
            let diag: Vec<f64> = {
                let mut d = vec![0.0; n];
                for (i, &v) in resc.diag().iter().enumerate() {
                    d[pi[i]] = v;
                }
                d
            };
            let off: Vec<(u32, u32, f64)> = resc
                .off_entries()
                .iter()
                .map(|&(r, c, w)| {
                    let (pr, pc) = (pi[r as usize], pi[c as usize]);
                    if pr < pc {
                        (pr as u32, pc as u32, w)
                    } else {
                        (pc as u32, pr as u32, w)
                    }
                })
                .collect();
            let perm_prop = PropagationMatrix::from_parts(resc.kind(), n, diag, off);
            let perm_csr = Arc::new(CsrReal::from_csr(perm_prop.csr()));
            let mut perm_coords = Array2::<f64>::zeros((n, 3));
            for i in 0..n {
                for j in 0..3 {
                    perm_coords[[pi[i], j]] = coords[[i, j]];
                }
            }
            let permuted = forward(&perm_csr, &perm_coords);
            let mut max_diff = 0.0f64;
            for i in 0..n {
                for c in 0..4 {
                    max_diff = max_diff.max((permuted[[pi[i], c]] - base[[i, c]]).abs());
                }
            }
            assert!(max_diff <= 1e-9, "trial {trial}: max deviation {max_diff}");
        }
    });
    assert!(ok);
}

// ---------------------------------------------------------------------------
// Criteria 7-9: synthetic end-to-end training, ablation and K-sweep trends.
// ---------------------------------------------------------------------------

/// Shared protocol: 20 train / 5 test scenes of ~20k points, Full variant,
/// K = 3, library training defaults scaled to batch 8, fast (f32) mode.
/// Widths of the GCN trunk and the graph k are sized for a single CPU core.
const E2E_EPOCHS: usize = 40;
const E2E_GCN_HIDDEN: &[usize] = &[32, 16];
const E2E_GRAPH_K: usize = 16;
const E2E_SEEDS: [u64; 3] = [1, 2, 3];

fn e2e_dataset() -> (Vec<PointCloud>, Vec<PointCloud>) {
    let ds = DatasetSpec {
        num_scenes: 25,
        footprint: (1.0, 1.0),
        density: 9000.0,
        seed: 20_240_817,
        buildings_per_scene: 1,
        trees_per_scene: 1,
        scatter_per_scene: 3,
    };
    let clouds: Vec<PointCloud> =
        (0..ds.num_scenes).map(|i| generate_scene(&scene_spec(&ds, i)).unwrap()).collect();
    let test = clouds[20..].to_vec();
    let train = clouds[..20].to_vec();
    (train, test)
}

fn e2e_configs(seed: u64, variant: Variant, epochs: usize) -> (TrainConfig, ModelConfig, GraphConfig) {
    let tcfg = TrainConfig {
        batch_size: 8,
        epochs,
        seed,
        eval_every: 0,
        variant,
        ..Default::default()
    };
    let mut mcfg = match variant {
        Variant::Full => ModelConfig::full(4),
        Variant::GcnOnly => ModelConfig::gcn_only(4),
    };
    mcfg.gcn_hidden = E2E_GCN_HIDDEN.to_vec();
    // Dropout rate follows the surviving-unit count of the full-width config;
    // 0.8 at width 32 leaves ~6 live units and training never leaves the
    // constant-class predictor. The pooled global template is disabled: with
    // only 20 training blocks it acts as a per-scene fingerprint and the
    // model memorizes layouts instead of the height/shape rule.
    mcfg.dropout_gcn = 0.1;
    mcfg.global_template = false;
    let gcfg = GraphConfig { k: E2E_GRAPH_K, ..Default::default() };
    (tcfg, mcfg, gcfg)
}

fn run_e2e(
    train_clouds: &[PointCloud],
    test_clouds: &[PointCloud],
    seed: u64,
    variant: Variant,
) -> f64 {
    let (tcfg, mcfg, gcfg) = e2e_configs(seed, variant, E2E_EPOCHS);
    let result = train::<f32>(
        train_clouds,
        test_clouds,
        &tcfg,
        &mcfg,
        &gcfg,
        "",
        &mut std::io::sink(),
        &mut std::io::sink(),
    )
    .unwrap();
    let (report, _) = evaluate::<f32>(&result.model, test_clouds, &tcfg, &gcfg).unwrap();
    report.mean_iou
}

#[test]
fn criterion_07_08_09_end_to_end() {
    let (train_clouds, test_clouds) = e2e_dataset();

    let start = Instant::now();
    let mut full = [0.0f64; 3];
    for (i, &seed) in E2E_SEEDS.iter().enumerate() {
        full[i] = run_e2e(&train_clouds, &test_clouds, seed, Variant::Full);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok7 = criterion(7, "synthetic end-to-end, median mIoU over 3 seeds", || {
        let mut sorted = full;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[1];
        assert!(
            median >= 0.85,
            "median test mIoU {median:.4} < 0.85 (seeds: {full:?})"
        );
        assert!(elapsed < 1800.0, "training took {elapsed:.0}s, budget 1800s");
    });

    let mut gcn_only = [0.0f64; 3];
    for (i, &seed) in E2E_SEEDS.iter().enumerate() {
        gcn_only[i] = run_e2e(&train_clouds, &test_clouds, seed, Variant::GcnOnly);
    }
    let ok8 = criterion(8, "ablation trend Full vs GcnOnly", || {
        let mean_full = full.iter().sum::<f64>() / 3.0;
        let mean_gcn = gcn_only.iter().sum::<f64>() / 3.0;
        assert!(
            mean_full + 0.02 >= mean_gcn,
            "mean mIoU Full {mean_full:.4} + 0.02 < GcnOnly {mean_gcn:.4}"
        );
        let wins = full.iter().zip(gcn_only.iter()).filter(|(f, g)| f >= g).count();
        assert!(wins >= 2, "Full won only {wins}/3 seeds (full {full:?}, gcn {gcn_only:?})");
    });

    let ok9 = criterion(9, "Chebyshev-order trend over K = 1..4", || {
        // GcnOnly keeps the per-order sparse work dominant over fixed costs,
        // so the wall-time ordering is robust to scheduler jitter; with the
        // Full variant the MLP dwarfs the per-K increment and noise can
        // reorder adjacent K's.
        let (tcfg, mcfg, gcfg) = e2e_configs(11, Variant::GcnOnly, E2E_EPOCHS);
        let rows = sweep_cheb_order::<f32>(
            &[1, 2, 3, 4],
            &train_clouds,
            &test_clouds,
            &tcfg,
            &mcfg,
            &gcfg,
            &mut std::io::sink(),
        )
        .unwrap();
        let miou: Vec<f64> = rows.iter().map(|r| r.mean_iou).collect();
        let times: Vec<f64> = rows.iter().map(|r| r.wall_time_seconds).collect();
        assert!(
            miou[2] >= miou[0] - 0.02,
            "mIoU(K=3) {:.4} < mIoU(K=1) {:.4} - 0.02",
            miou[2],
            miou[0]
        );
        for w in times.windows(2) {
            assert!(w[1] > w[0], "wall time not strictly increasing: {times:?}");
        }
    });
    assert!(ok7 && ok8 && ok9);
}

#[test]
fn criterion_10_bitwise_determinism() {
    let ok = criterion(10, "two identical train runs are bitwise identical", || {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cfg.toml"),
            r#"
precision = "f64"

[graph]
k = 8

[model]
num_classes = 4
mlp_widths = [8, 8]
gcn_hidden = [8]

[train]
batch_size = 4
epochs = 2
points_per_block = 128
eval_every = 1

[dataset]
num_scenes = 5
footprint = [1.0, 1.0]
density = 400.0
buildings_per_scene = 1
trees_per_scene = 1
scatter_per_scene = 1
"#,
        )
        .unwrap();
        let run = |args: &[&str]| {
            let out = Command::new(env!("CARGO_BIN_EXE_graphseg"))
                .args(args)
                .current_dir(dir.path())
                .output()
                .expect("binary runs");
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        };
        run(&["gen-synthetic", "--config", "cfg.toml", "--seed", "9", "--out", "data"]);
        for out in ["r1", "r2"] {
            run(&[
                "train", "--config", "cfg.toml", "--data", "data", "--seed", "21",
                "--threads", "1", "--out", out,
            ]);
        }
        let file = |rel: &str| std::fs::read(dir.path().join(rel)).unwrap();
        assert_eq!(file("r1/loss.log"), file("r2/loss.log"), "loss logs differ");
        assert!(!file("r1/loss.log").is_empty());
        let ckpts = |run: &str| -> Vec<String> {
            let mut names: Vec<String> = std::fs::read_dir(dir.path().join(run).join("checkpoints"))
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect();
            names.sort();
            names
        };
        let names = ckpts("r1");
        assert_eq!(names, ckpts("r2"));
        assert!(names.contains(&"final.ckpt".to_string()));
        for name in &names {
            assert_eq!(
                file(&format!("r1/checkpoints/{name}")),
                file(&format!("r2/checkpoints/{name}")),
                "checkpoint {name} differs"
            );
        }
    });
    assert!(ok);
}

#[test]
fn criterion_11_metrics_hand_computed() {
    let ok = criterion(11, "metrics match hand-computed confusion matrices", || {
        // Perfect two-class prediction.
        let report =
            ConfusionMatrix::from_rows(&[vec![30, 0], vec![0, 70]]).report().unwrap();
        assert_eq!(report.per_class_iou, vec![Some(1.0), Some(1.0)]);
        assert_eq!(report.mean_iou, 1.0);
        assert_eq!(report.overall_accuracy, 1.0);

        // [[50, 50], [0, 100]]: IoU_0 = 0.5, IoU_1 = 100/150.
        let report =
            ConfusionMatrix::from_rows(&[vec![50, 50], vec![0, 100]]).report().unwrap();
        assert_eq!(report.per_class_iou, vec![Some(0.5), Some(100.0 / 150.0)]);
        assert_eq!(report.mean_iou, (0.5 + 100.0 / 150.0) / 2.0);

        // Constant class-0 prediction on a balanced set.
        let report =
            ConfusionMatrix::from_rows(&[vec![75, 0], vec![75, 0]]).report().unwrap();
        assert_eq!(report.per_class_iou, vec![Some(0.5), Some(0.0)]);
        assert_eq!(report.mean_iou, 0.25);
        assert_eq!(report.per_class_accuracy, vec![Some(1.0), Some(0.0)]);
        assert_eq!(report.mean_accuracy, 0.5);
        assert_eq!(report.overall_accuracy, 0.5);
    });
    assert!(ok);
}

#[test]
fn criterion_12_densify_oracle() {
    let ok = criterion(12, "densify equals brute-force hybrid vote", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1212);
        let cfg = DensifyConfig::default();
        for pair in 0..20 {
            let n = rng.random_range(50..=3000);
            let m = rng.random_range(50..=3000);
            let mut sparse = PointCloud::from_points(random_points(n, &mut rng));
            sparse.labels = Some(
                (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < 0.1 {
                            None
                        } else {
                            Some(rng.random_range(0..4usize))
                        }
                    })
                    .collect(),
            );
            let dense = PointCloud::from_points(random_points(m, &mut rng));
            let got = densify_labels(&sparse, &dense, &cfg).unwrap();
            let want = brute_force_densify(&sparse, &dense, &cfg).unwrap();
            assert_eq!(got, want, "pair {pair}");
        }
    });
    assert!(ok);
}
