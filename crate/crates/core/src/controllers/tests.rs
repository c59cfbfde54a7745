use super::*;
use crate::linalg::{apply_permutation, Permutation, PermuteMode};
use crate::network::generate_graph;

fn path3() -> DenseMatrix {
    DenseMatrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]).unwrap()
}

#[test]
fn shift_examples() {
    let s = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
    let x = DenseMatrix::column_vector(&[1.0, 0.0]);
    assert_eq!(graph_shift(&s, &x).unwrap(), DenseMatrix::column_vector(&[0.0, 1.0]));
    assert_eq!(graph_shift(&s, &DenseMatrix::zeros(2, 1)).unwrap(), DenseMatrix::zeros(2, 1));
    let x = DenseMatrix::column_vector(&[0.3, -0.7]);
    assert_eq!(graph_shift(&DenseMatrix::identity(2), &x).unwrap(), x);
    assert!(graph_shift(&s, &DenseMatrix::zeros(3, 1)).is_err());
}

#[test]
fn filter_examples() {
    let s = path3();
    let x = DenseMatrix::column_vector(&[1.0, 2.0, -1.0]);
    let h0 = DenseMatrix::from_rows(&[&[2.0]]).unwrap();
    assert_eq!(graph_filter(&s, &[h0.clone()], &x).unwrap(), x.scale(2.0));
    let one = DenseMatrix::identity(1);
    let y = graph_filter(&s, &[one.clone(), one.clone()], &x).unwrap();
    assert_eq!(y, x.add(&s.matmul(&x).unwrap()).unwrap());
    let zero = DenseMatrix::zeros(1, 1);
    assert_eq!(graph_filter(&s, &[zero.clone(), zero], &x).unwrap(), DenseMatrix::zeros(3, 1));
}

#[test]
fn filter_matches_direct_powers() {
    let g = generate_graph(12, 3, 4).unwrap();
    let mut st = Stream::new(1, "test/filter");
    let taps: Vec<DenseMatrix> = (0..4)
        .map(|_| DenseMatrix::from_vec(2, 3, st.normal_vec(6)).unwrap())
        .collect();
    let x = DenseMatrix::from_vec(12, 2, st.normal_vec(24)).unwrap();
    let got = graph_filter(&g.support, &taps, &x).unwrap();
    let mut want = DenseMatrix::zeros(12, 3);
    let mut sk = DenseMatrix::identity(12);
    for h in &taps {
        want.axpy(1.0, &sk.matmul(&x).unwrap().matmul(h).unwrap()).unwrap();
        sk = sk.matmul(&g.support).unwrap();
    }
    assert!(got.sub(&want).unwrap().max_abs() < 1e-12);
}

#[test]
fn gnn_zero_input_gives_zero() {
    let g = generate_graph(10, 3, 2).unwrap();
    let spec = ControllerSpec::two_layer(ControllerKind::Gnn, 8, 2).unwrap();
    let p = init_params(&spec, 5).unwrap();
    let u = gnn_forward(&g.support, &p, &DenseMatrix::zeros(10, 1)).unwrap();
    assert_eq!(u, DenseMatrix::zeros(10, 1));
}

#[test]
fn gnn_with_identity_is_filter_composition() {
    let g = generate_graph(9, 3, 3).unwrap();
    let spec = ControllerSpec::gnn(&[1, 4, 1], &[2, 1], Nonlinearity::Identity).unwrap();
    let p = init_params(&spec, 9).unwrap();
    let x = DenseMatrix::column_vector(&Stream::new(2, "x").normal_vec(9));
    let h1: Vec<DenseMatrix> = (0..=2).map(|k| p.tap(0, k).unwrap()).collect();
    let h2: Vec<DenseMatrix> = (0..=1).map(|k| p.tap(1, k).unwrap()).collect();
    let mid = graph_filter(&g.support, &h1, &x).unwrap();
    let want = graph_filter(&g.support, &h2, &mid).unwrap();
    let got = gnn_forward(&g.support, &p, &x).unwrap();
    assert!(got.sub(&want).unwrap().max_abs() < 1e-12);
}

#[test]
fn gnn_matches_entrywise_expansion() {
    // N = 3, F₁ = 2, K = (1, 0), written out by hand.
    let s = path3().scale(1.0 / 2f64.sqrt());
    let spec = ControllerSpec::gnn(&[1, 2, 1], &[1, 0], Nonlinearity::Tanh).unwrap();
    let values = vec![0.3, -0.5, 0.7, 0.2, 1.1, -0.4];
    let p = ControllerParams::new(spec, values).unwrap();
    let x = [0.9, -0.2, 0.4];
    let sx: Vec<f64> = (0..3).map(|i| (0..3).map(|j| s[(i, j)] * x[j]).sum()).collect();
    let want: Vec<f64> = (0..3)
        .map(|i| {
            let z0 = (0.3 * x[i] + 0.7 * sx[i]).tanh();
            let z1 = (-0.5 * x[i] + 0.2 * sx[i]).tanh();
            1.1 * z0 - 0.4 * z1
        })
        .collect();
    let got = gnn_forward(&s, &p, &DenseMatrix::column_vector(&x)).unwrap();
    for i in 0..3 {
        assert!((got[(i, 0)] - want[i]).abs() < 1e-15);
    }
}

#[test]
fn mlp_examples() {
    let spec = ControllerSpec::mlp(2, 1, Nonlinearity::Tanh).unwrap();
    assert_eq!(spec.param_count(), 2 * 2 * 2 + 2 + 2);
    let mut values = vec![0.0; spec.param_count()];
    values[10] = 0.5;
    values[11] = -1.5;
    let p = ControllerParams::new(spec.clone(), values).unwrap();
    let x = DenseMatrix::column_vector(&[3.0, 4.0]);
    assert_eq!(mlp_forward(&p, &x).unwrap(), DenseMatrix::column_vector(&[0.5, -1.5]));

    let q = init_params(&spec, 3).unwrap();
    assert_eq!(mlp_forward(&q, &DenseMatrix::zeros(2, 1)).unwrap(), DenseMatrix::zeros(2, 1));

    // W₁ = [[1, 2], [0, -1]], b₁ = (0.1, 0), W₂ = [[1, 0], [2, 1]], b₂ = (0, 0.5).
    let v = vec![1.0, 2.0, 0.0, -1.0, 0.1, 0.0, 1.0, 0.0, 2.0, 1.0, 0.0, 0.5];
    let p = ControllerParams::new(spec, v).unwrap();
    let x = [0.2, -0.3];
    let h0 = (0.2 - 0.6 + 0.1f64).tanh();
    let h1 = (0.3f64).tanh();
    let got = mlp_forward(&p, &DenseMatrix::column_vector(&x)).unwrap();
    assert!((got[(0, 0)] - h0).abs() < 1e-15);
    assert!((got[(1, 0)] - (2.0 * h0 + h1 + 0.5)).abs() < 1e-15);
    assert!(mlp_forward(&p, &DenseMatrix::zeros(3, 1)).is_err());
}

#[test]
fn dmlp_examples() {
    let spec = ControllerSpec::dmlp(1, 1, Nonlinearity::Tanh).unwrap();
    let p = ControllerParams::new(spec, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let u = dmlp_forward(&p, &DenseMatrix::column_vector(&[0.5])).unwrap();
    assert!((u[(0, 0)] - 0.46211715726).abs() < 1e-11);

    let spec = ControllerSpec::dmlp(5, 4, Nonlinearity::Tanh).unwrap();
    let p = init_params(&spec, 1).unwrap();
    assert_eq!(dmlp_forward(&p, &DenseMatrix::zeros(5, 1)).unwrap(), DenseMatrix::zeros(5, 1));
    let x = DenseMatrix::column_vector(&[0.1, 0.2, 0.3, 0.4, 0.5]);
    let mut y = x.clone();
    y[(2, 0)] = -3.0;
    let (ux, uy) = (dmlp_forward(&p, &x).unwrap(), dmlp_forward(&p, &y).unwrap());
    for i in [0, 1, 3, 4] {
        assert_eq!(ux[(i, 0)], uy[(i, 0)]);
    }
    assert_ne!(ux[(2, 0)], uy[(2, 0)]);
    assert!(dmlp_forward(&p, &DenseMatrix::zeros(4, 1)).is_err());
}

#[test]
fn parameter_counts() {
    let spec = ControllerSpec::two_layer(ControllerKind::Gnn, 32, 3).unwrap();
    assert_eq!(spec.param_count(), 160);
    assert_eq!(ControllerSpec::mlp(20, 32, Nonlinearity::Tanh).unwrap().param_count(), 26_260);
    assert_eq!(ControllerSpec::dmlp(20, 32, Nonlinearity::Tanh).unwrap().param_count(), 20 * 97);
    let g20 = generate_graph(20, 5, 1).unwrap();
    let g100 = generate_graph(100, 5, 1).unwrap();
    let p = init_params(&spec, 0).unwrap();
    let x20 = DenseMatrix::zeros(20, 1);
    let x100 = DenseMatrix::zeros(100, 1);
    assert!(rebind(&p, &g20).unwrap().control(&x20).is_ok());
    assert!(rebind(&p, &g100).unwrap().control(&x100).is_ok());
    assert_eq!(p.values.len(), 160);
}

#[test]
fn init_is_deterministic_and_bounded() {
    let spec = ControllerSpec::gnn(&[1, 6, 2], &[3, 1], Nonlinearity::Tanh).unwrap();
    let a = init_params(&spec, 42).unwrap();
    let b = init_params(&spec, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, init_params(&spec, 43).unwrap());
    let bound1 = 1.0 / (4.0f64).sqrt();
    let bound2 = 1.0 / (12.0f64).sqrt();
    let (l1, l2) = a.values.split_at(24);
    assert!(l1.iter().all(|v| v.abs() <= bound1));
    assert!(l2.iter().all(|v| v.abs() <= bound2));

    let mlp = init_params(&ControllerSpec::mlp(4, 2, Nonlinearity::Tanh).unwrap(), 1).unwrap();
    assert!(mlp.values[32..40].iter().all(|&v| v == 0.0));
    assert!(mlp.values[72..].iter().all(|&v| v == 0.0));
}

#[test]
fn spec_validation() {
    assert!(ControllerSpec::graph_filter(&[1, 4, 1], &[2]).is_err());
    assert!(ControllerSpec::gnn(&[1, 0, 1], &[2, 0], Nonlinearity::Tanh).is_err());
    let mut gf = ControllerSpec::two_layer(ControllerKind::GraphFilter, 4, 1).unwrap();
    gf.nonlinearity = Nonlinearity::Tanh;
    assert!(gf.validate().is_err());
    assert!(ControllerSpec::two_layer(ControllerKind::Mlp, 4, 1).is_err());
    assert!(ControllerParams::new(ControllerSpec::dmlp(2, 2, Nonlinearity::Tanh).unwrap(), vec![0.0; 3]).is_err());
    assert_eq!("dmlp".parse::<ControllerKind>().unwrap(), ControllerKind::Dmlp);
    assert_eq!("D-MLP".parse::<ControllerKind>().unwrap(), ControllerKind::Dmlp);
    assert!("cnn".parse::<ControllerKind>().is_err());
}

#[test]
fn rebind_examples() {
    let g = generate_graph(15, 4, 6).unwrap();
    let spec = ControllerSpec::two_layer(ControllerKind::Gnn, 6, 1).unwrap();
    let p = init_params(&spec, 2).unwrap();
    let x = DenseMatrix::column_vector(&Stream::new(3, "x").normal_vec(15));
    let bound = BoundController::bind(p.clone(), &g).unwrap();
    assert_eq!(rebind(&p, &g).unwrap().control(&x).unwrap(), bound.control(&x).unwrap());

    // Edgeless graph: only the k = 0 taps act.
    let empty = GraphSystem::from_adjacency(vec![[0.0, 0.0]; 15], DenseMatrix::zeros(15, 15)).unwrap();
    let got = rebind(&p, &empty).unwrap().control(&x).unwrap();
    let local = ControllerSpec::gnn(&[1, 6, 1], &[0, 0], Nonlinearity::Tanh).unwrap();
    let mut v = p.values[..6].to_vec();
    v.extend_from_slice(&p.values[12..]);
    let want = ControllerParams::new(local, v).unwrap().forward(Some(&empty.support), &x).unwrap();
    assert_eq!(got, want);

    let perm = Permutation::random(15, &mut Stream::new(4, "perm"));
    let moved = GraphSystem::from_adjacency(
        vec![[0.0, 0.0]; 15],
        apply_permutation(&g.adjacency, &perm, PermuteMode::Both).unwrap(),
    )
    .unwrap();
    let px = apply_permutation(&x, &perm, PermuteMode::Rows).unwrap();
    let lhs = rebind(&p, &moved).unwrap().control(&px).unwrap();
    let rhs = apply_permutation(&bound.control(&x).unwrap(), &perm, PermuteMode::Rows).unwrap();
    assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10);

    let d = init_params(&ControllerSpec::dmlp(15, 4, Nonlinearity::Tanh).unwrap(), 0).unwrap();
    assert!(matches!(rebind(&d, &g), Err(Error::WrongKind { .. })));
}

#[test]
fn replicate_examples() {
    let spec = ControllerSpec::dmlp(4, 3, Nonlinearity::Tanh).unwrap();
    let p = init_params(&spec, 8).unwrap();
    assert_eq!(replicate_dmlp(&p, 4, 1).unwrap(), p);
    let big = replicate_dmlp(&p, 8, 1).unwrap();
    assert_eq!(big.spec.n_bound, Some(8));
    assert_eq!(big.values.len(), 8 * 10);
    assert_eq!(&big.values[..40], &p.values[..]);
    for node in big.values.chunks(10).skip(4) {
        assert!(p.values.chunks(10).any(|orig| orig == node));
    }
    assert_eq!(big, replicate_dmlp(&p, 8, 1).unwrap());
    assert!(replicate_dmlp(&p, 3, 1).is_err());
    let g = init_params(&ControllerSpec::two_layer(ControllerKind::Gnn, 2, 1).unwrap(), 0).unwrap();
    assert!(replicate_dmlp(&g, 8, 1).is_err());
}

#[test]
fn bind_checks_node_count() {
    let g = generate_graph(6, 2, 0).unwrap();
    let p = init_params(&ControllerSpec::mlp(5, 1, Nonlinearity::Tanh).unwrap(), 0).unwrap();
    assert!(BoundController::bind(p, &g).is_err());
}

#[test]
fn backward_matches_finite_differences_per_kind() {
    let g = generate_graph(5, 2, 1).unwrap();
    let specs = [
        ControllerSpec::two_layer(ControllerKind::GraphFilter, 3, 2).unwrap(),
        ControllerSpec::two_layer(ControllerKind::Gnn, 3, 2).unwrap(),
        ControllerSpec::mlp(5, 2, Nonlinearity::Tanh).unwrap(),
        ControllerSpec::dmlp(5, 3, Nonlinearity::Tanh).unwrap(),
    ];
    let x = DenseMatrix::column_vector(&Stream::new(0, "x").normal_vec(5));
    let w = DenseMatrix::column_vector(&Stream::new(1, "w").normal_vec(5));
    for spec in specs {
        let p = init_params(&spec, 3).unwrap();
        let support = p.kind().is_graph().then_some(&g.support);
        let (_, tape) = p.forward_taped(support, &x).unwrap();
        let mut grad = vec![0.0; p.values.len()];
        let dx = p.backward(support, &tape, &w, &mut grad).unwrap();
        let f = |q: &ControllerParams, x: &DenseMatrix| -> f64 {
            let u = q.forward(support, x).unwrap();
            u.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in 0..p.values.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.values[i] += h;
            b.values[i] -= h;
            let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "{:?} param {i}: {fd} vs {}", p.kind(), grad[i]);
        }
        for i in 0..5 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[(i, 0)] += h;
            b[(i, 0)] -= h;
            let fd = (f(&p, &a) - f(&p, &b)) / (2.0 * h);
            assert!((fd - dx[(i, 0)]).abs() < 1e-7);
        }
    }
}
