mod common;

use common::*;
use ggss_lab::autodiff::{relative_error, Graph};
use ggss_lab::models::{Architecture, ClientLoss};
use ggss_lab::rng::SeededRng;
use ggss_lab::Tensor;

#[test]
fn every_primitive_matches_finite_differences() {
    let mut failures = Vec::new();
    for (i, (name, op, shape, positive)) in primitives().into_iter().enumerate() {
        let err = primitive_error(op, &shape, positive, 1000 + i as u64).unwrap();
        if !(err < FD_TOL) {
            failures.push(format!("{name}: {err:e}"));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn hessian_vector_product_of_a_cubic() {
    // f(x) = Σ x_i³ + x_0 x_1, so H v = 6 x ⊙ v + (v_1, v_0, 0).
    let x0 = Tensor::vector(vec![0.5, -1.2, 2.0]);
    let v = Tensor::vector(vec![1.0, 0.3, -0.7]);
    let mut g = Graph::new();
    let x = g.leaf(x0.clone());
    let sq = g.square(x).unwrap();
    let cube = g.mul(sq, x).unwrap();
    let s = g.sum(cube).unwrap();
    let a = g.narrow(x, 0, 0, 1).unwrap();
    let b = g.narrow(x, 0, 1, 1).unwrap();
    let ab = g.mul(a, b).unwrap();
    let ab = g.sum(ab).unwrap();
    let f = g.add(s, ab).unwrap();
    let grad = g.backward_graph(f, &[x]).unwrap().remove(0);
    let vc = g.constant(v.clone());
    let gv = g.mul(grad, vc).unwrap();
    let gv = g.sum(gv).unwrap();
    let hv = g.backward(gv, &[x]).unwrap().remove(0);
    let want: Vec<f64> = (0..3)
        .map(|i| 6.0 * x0.data()[i] * v.data()[i] + [v.data()[1], v.data()[0], 0.0][i])
        .collect();
    assert!(relative_error(hv.data(), &want) < 1e-12, "{hv:?}");
}

#[test]
fn third_derivative_by_repeated_graph_backward() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(0.7));
    let y = g.exp(x).unwrap();
    let y = g.scale(y, 2.0).unwrap();
    let d1 = g.backward_graph(y, &[x]).unwrap().remove(0);
    let d2 = g.backward_graph(d1, &[x]).unwrap().remove(0);
    let d3 = g.backward(d2, &[x]).unwrap().remove(0);
    assert!((d3.item() - 2.0 * 0.7f64.exp()).abs() < 1e-12);
}

#[test]
fn client_gradients_of_the_zoo_match_finite_differences() {
    let mut rng = SeededRng::new(5);
    for arch in Architecture::ZOO {
        for loss in [ClientLoss::CrossEntropy, ClientLoss::HalfSquaredError] {
            let model = zoo_model(arch, loss, 3);
            let x = rng.normal_tensor(&[64]).scale(0.5);
            let err = client_gradient_error(&model, &x).unwrap();
            assert!(err < FD_TOL, "{arch} {}: {err:e}", loss.name());
        }
    }
}

#[test]
fn double_backward_through_client_gradient() {
    let mut rng = SeededRng::new(6);
    for arch in Architecture::ZOO {
        for loss in [ClientLoss::CrossEntropy, ClientLoss::HalfSquaredError, ClientLoss::OutputProjection] {
            let model = zoo_model(arch, loss, 4);
            let x = rng.normal_tensor(&[64]).scale(0.5);
            let v = rng.normal_tensor(&[model.param_count()]);
            let err = double_backward_error(&model, &x, &v).unwrap();
            assert!(err < FD_TOL, "{arch} {}: {err:e}", loss.name());
        }
    }
}

#[test]
fn input_jacobian_columns_match_finite_differences() {
    let mut rng = SeededRng::new(8);
    let model = zoo_model(Architecture::Mlp2, ClientLoss::CrossEntropy, 1);
    let x = rng.normal_tensor(&[64]).scale(0.5);
    let jac = model.input_jacobian(&x, model.label()).unwrap();
    let fd = ggss_lab::analysis::fd_input_jacobian(&model, &x, model.label(), 1e-6).unwrap();
    assert_eq!(jac.shape(), fd.shape());
    assert!(relative_error(jac.data(), fd.data()) < FD_TOL);
}
