use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicelab_nn::check::{central_difference, max_relative_error};
use slicelab_nn::{Mlp, Tensor};

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Loss = sum over outputs of w_ij * y_ij, plus half the squared norm.
fn loss_and_grad(net: &Mlp<f64>, x: &Tensor<f64>, w: &[f64]) -> (f64, Vec<f64>, Tensor<f64>) {
    let (y, tape) = net.forward_tape(x.clone()).unwrap();
    let loss: f64 = y.data().iter().zip(w).map(|(v, c)| c * v + 0.5 * v * v).sum();
    let d_out = Tensor::matrix(y.rows(), y.cols(), y.data().iter().zip(w).map(|(v, c)| c + v).collect()).unwrap();
    let mut grads = vec![0.0; net.param_count()];
    let dx = net.backward(&tape, &d_out, &mut grads, true).unwrap();
    (loss, grads, dx)
}

#[test]
fn parameter_and_input_gradients_match_central_differences_over_five_seeds() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::<f64>::init(6, 16, 3, 1.0, &mut rng);
        let x = random_batch(&mut rng, 9, 6);
        let w: Vec<f64> = (0..27).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grads, dx) = loss_and_grad(&net, &x, &w);

        let widths = net.widths();
        let numeric = central_difference(net.params(), 1e-4, |p| {
            let probe = Mlp::from_parts(widths, p.to_vec()).unwrap();
            loss_and_grad(&probe, &x, &w).0
        });
        let err = max_relative_error(&grads, &numeric, 1e-3);
        assert!(err <= 1e-4, "seed {seed}: parameter gradient rel err {err}");

        let numeric_x = central_difference(x.data(), 1e-4, |xs| {
            loss_and_grad(&net, &Tensor::matrix(9, 6, xs.to_vec()).unwrap(), &w).0
        });
        let err = max_relative_error(dx.data(), &numeric_x, 1e-3);
        let (y, tape) = net.forward_tape(x.clone()).unwrap();
        let d_out = Tensor::matrix(9, 3, y.data().iter().zip(&w).map(|(v, c)| c + v).collect()).unwrap();
        assert_eq!(net.input_grad(&tape, &d_out).data(), dx.data());
        assert!(err <= 1e-4, "seed {seed}: input gradient rel err {err}");
    }
}

#[test]
fn half_squared_norm_gives_outer_product_on_final_layer() {
    // Positive inputs and weights keep every ReLU active, so the last layer
    // sees a plain linear map: dL/dW2 = h1^T y and dL/db2 = sum_rows y.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut net = Mlp::<f64>::zeros(2, 3, 2);
    for p in net.params_mut() {
        *p = rng.random_range(0.1..0.5);
    }
    let x = Tensor::matrix(2, 2, vec![0.5, 1.0, 0.2, 0.3]).unwrap();
    let (y, tape) = net.forward_tape(x.clone()).unwrap();
    let mut grads = vec![0.0; net.param_count()];
    net.backward(&tape, &y, &mut grads, false);

    // recompute the hidden activations by hand
    let p = net.params();
    let (w0, b0) = net.layer_ranges(0);
    let (w1, b1) = net.layer_ranges(1);
    let (w2, b2) = net.layer_ranges(2);
    let dense = |inp: &[f64], w: &[f64], b: &[f64], fan_out: usize| -> Vec<f64> {
        (0..fan_out)
            .map(|j| b[j] + inp.iter().enumerate().map(|(i, v)| v * w[i * fan_out + j]).sum::<f64>())
            .collect()
    };
    let mut expect_w2 = vec![0.0; 6];
    let mut expect_b2 = vec![0.0; 2];
    for r in 0..2 {
        let h0 = dense(x.row(r), &p[w0.clone()], &p[b0.clone()], 3);
        let h1 = dense(&h0, &p[w1.clone()], &p[b1.clone()], 3);
        let out = y.row(r);
        for i in 0..3 {
            for j in 0..2 {
                expect_w2[i * 2 + j] += h1[i] * out[j];
            }
        }
        for j in 0..2 {
            expect_b2[j] += out[j];
        }
    }
    for (g, e) in grads[w2].iter().zip(&expect_w2) {
        assert!((g - e).abs() < 1e-12);
    }
    for (g, e) in grads[b2].iter().zip(&expect_b2) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn constant_loss_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Mlp::<f64>::init(4, 8, 2, 1.0, &mut rng);
    let x = random_batch(&mut rng, 5, 4);
    let (y, tape) = net.forward_tape(x).unwrap();
    let mut grads = vec![0.0; net.param_count()];
    net.backward(&tape, &Tensor::zeros(y.shape().to_vec()), &mut grads, false);
    assert!(grads.iter().all(|g| *g == 0.0));
}
