use approx::assert_abs_diff_eq;
use ptensor::{Tape, Tensor, TensorError};

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

#[test]
fn matmul_identity_returns_input() {
    let mut tape = Tape::<f64>::new();
    let i3 = tape.constant(Tensor::eye(3));
    let x = tape.constant(t(&[3, 2], &[1.0, -2.0, 3.5, 0.0, 7.0, 9.0]));
    let y = tape.matmul(i3, x).unwrap();
    assert_eq!(tape.value(y), tape.value(x));
}

#[test]
fn matmul_hand_example() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::from_f64(&[2, 1], &[1.0, 1.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.shape(c), &[2, 1]);
    assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
}

#[test]
fn matmul_with_zeros() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::from_f64(&[3, 4], &(0..12).map(|x| x as f64).collect::<Vec<_>>()).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &Tensor::zeros(&[2, 4]));
}

#[test]
fn matmul_shape_mismatch_is_dimension_error() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.matmul(a, b), Err(TensorError::Shape { op: "matmul", .. })));
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::<f64>::new();
    let zero = tape.constant(Tensor::scalar(0.0));
    let e = tape.elu(zero).unwrap();
    assert_eq!(tape.value(e).item(), 0.0);
    let one = tape.constant(Tensor::scalar(1.0));
    let ex = tape.exp(one).unwrap();
    assert_abs_diff_eq!(tape.value(ex).item(), std::f64::consts::E, epsilon = 1e-15);
    let x = tape.constant(t(&[2, 2], &[1.0, -2.0, 0.5, 3.0]));
    let s = tape.add(x, zero).unwrap();
    assert_eq!(tape.value(s), tape.value(x));
}

#[test]
fn elementwise_incompatible_shapes() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(tape.mul(a, b), Err(TensorError::Shape { .. })));
    let c = tape.constant(Tensor::zeros(&[3]));
    assert!(tape.add(a, c).is_err());
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[3], &[0.0, 0.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    for &v in tape.value(y).data() {
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
    }
    let x = tape.constant(t(&[3], &[1000.0, 0.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    let v = tape.value(y).data();
    assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
    assert!(v.iter().all(|p| p.is_finite()));
    let x = tape.constant(t(&[2], &[1.0, 2.0]));
    let y = tape.softmax(x).unwrap();
    // 1/(1+e) and e/(1+e)
    assert_abs_diff_eq!(tape.value(y).data()[0], 0.268_941_421_369_995_1, epsilon = 1e-12);
    assert_abs_diff_eq!(tape.value(y).data()[1], 0.731_058_578_630_004_9, epsilon = 1e-12);
}

#[test]
fn softmax_nan_propagates() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[2, 2], &[f64::NAN, 0.0, 1.0, 2.0]));
    let y = tape.softmax(x).unwrap();
    let v = tape.value(y).data();
    assert!(v[0].is_nan() && v[1].is_nan());
    assert!(v[2].is_finite() && v[3].is_finite());
}

#[test]
fn layer_norm_examples() {
    let mut tape = Tape::<f64>::new();
    let g = tape.constant(t(&[2], &[1.0, 1.0]));
    let b = tape.constant(t(&[2], &[0.0, 0.0]));
    let x = tape.constant(t(&[2, 2], &[5.0, 5.0, 1.0, 3.0]));
    let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
    let v = tape.value(y).data();
    assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(v[2], -1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(v[3], 1.0, epsilon = 1e-9);

    let g0 = tape.constant(t(&[2], &[0.0, 0.0]));
    let b1 = tape.constant(t(&[2], &[0.25, -4.0]));
    let y = tape.layer_norm(x, g0, b1, 1e-5).unwrap();
    assert_eq!(tape.value(y).data(), &[0.25, -4.0, 0.25, -4.0]);
}

#[test]
fn layer_norm_rows_are_standardised() {
    let mut tape = Tape::<f64>::new();
    let g = tape.constant(Tensor::full(&[5], 1.0));
    let b = tape.constant(Tensor::zeros(&[5]));
    let x = tape.constant(t(&[2, 5], &[0.3, -1.2, 4.0, 2.2, 0.0, 10.0, 11.0, 9.5, 12.0, 10.1]));
    let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
    for row in tape.value(y).data().chunks(5) {
        let mean = row.iter().sum::<f64>() / 5.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-4);
    }
}

#[test]
fn backward_square() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let y = tape.square(x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap().item(), 6.0);
}

#[test]
fn backward_sum_of_matvec_matches_outer_product() {
    let mut tape = Tape::<f64>::new();
    let w = tape.leaf(t(&[2, 3], &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6]));
    let x = tape.constant(t(&[3, 1], &[1.5, -2.0, 0.25]));
    let y = tape.matmul(w, x).unwrap();
    let l = tape.sum(y).unwrap();
    tape.backward(l).unwrap();
    let g = tape.grad(w).unwrap();
    // d/dW_ij sum_i (W x)_i = x_j, checked against central differences.
    let base = [0.1, 0.2, 0.3, -0.4, 0.5, 0.6];
    let xs = [1.5, -2.0, 0.25];
    let f = |w: &[f64]| -> f64 { (0..2).map(|i| (0..3).map(|j| w[i * 3 + j] * xs[j]).sum::<f64>()).sum() };
    for k in 0..6 {
        let mut p = base;
        p[k] += 1e-6;
        let mut m = base;
        m[k] -= 1e-6;
        let fd = (f(&p) - f(&m)) / 2e-6;
        assert_abs_diff_eq!(g.data()[k], fd, epsilon = 1e-8);
        assert_abs_diff_eq!(g.data()[k], xs[k % 3], epsilon = 1e-12);
    }
    assert!(tape.grad(x).is_none());
}

#[test]
fn detached_input_gets_no_grad() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let d = tape.detach(x).unwrap();
    let y = tape.square(d).unwrap();
    let z = tape.mul(x, y).unwrap();
    let l = tape.sum(z).unwrap();
    tape.backward(l).unwrap();
    assert!(tape.grad(d).is_none());
    // only the direct path through x contributes: dl/dx = y
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 4.0]);
}

#[test]
fn unreachable_leaf_untouched() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::scalar(2.0));
    let unused = tape.leaf(Tensor::scalar(5.0));
    let y = tape.exp(x).unwrap();
    tape.backward(y).unwrap();
    assert!(tape.grad(unused).is_none());
}

#[test]
fn backward_contract_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let y = tape.square(x).unwrap();
    assert!(matches!(tape.backward(y), Err(TensorError::NotScalar(_))));
    let l = tape.sum(y).unwrap();
    tape.backward(l).unwrap();
    assert!(matches!(tape.backward(l), Err(TensorError::BackwardTwice)));
    tape.reset();
    let x = tape.leaf(Tensor::scalar(1.0));
    let y = tape.square(x).unwrap();
    assert!(tape.backward(y).is_ok());
}

#[test]
fn permute_and_slice_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let p = tape.permute(x, &[1, 0]).unwrap();
    assert_eq!(tape.shape(p), &[3, 2]);
    assert_eq!(tape.value(p).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    let s = tape.slice(x, 1, 1, 2).unwrap();
    assert_eq!(tape.value(s).data(), &[2.0, 3.0, 5.0, 6.0]);
    let c = tape.concat(&[x, s], 1).unwrap();
    assert_eq!(tape.shape(c), &[2, 5]);
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 5.0, 6.0, 5.0, 6.0]);
}
