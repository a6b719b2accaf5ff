//! Finite-difference verification for every differentiable tape operation,
//! plus the tape-level algebraic invariants.

use hyperagg::oracles::fd_gradient;
use hyperagg::rng::stream;
use hyperagg::tensor::{Matrix, Tape, Var};

use proptest::prelude::*;
use rand::Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Checks d loss / d X against central differences, where `build` maps the
/// leaf to a scalar loss node and is re-run from scratch for every probe.
fn check_grad<F>(x0: &Matrix, tol: f64, build: F)
where
    F: Fn(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new();
    let x = tape.leaf(x0);
    let loss = build(&mut tape, x);
    assert_eq!(tape.shape(loss), (1, 1), "loss must be scalar");
    tape.backward(loss).unwrap();
    let analytic = tape.grad(x).to_vec();

    let fd = fd_gradient(
        |theta| {
            let m = Matrix::from_vec(x0.rows(), x0.cols(), theta.to_vec()).unwrap();
            let mut t = Tape::new();
            let xv = t.leaf(&m);
            let l = build(&mut t, xv);
            t.data(l)[0]
        },
        x0.data(),
        EPS,
    )
    .unwrap();

    for (i, (a, b)) in analytic.iter().zip(&fd).enumerate() {
        let denom = a.abs().max(b.abs()).max(1e-6);
        let rel = (a - b).abs() / denom;
        assert!(rel < tol, "coordinate {i}: tape {a} vs fd {b} (rel {rel:.2e})");
    }
}

fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, "opgrad");
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Weights the output entries so the scalar loss is sensitive to each one.
fn weighted_sum(tape: &mut Tape, v: Var) -> Var {
    let (r, c) = tape.shape(v);
    let mut rng = stream(99, "mix");
    let w = rand_matrix(r, c, rng.gen());
    let wv = tape.leaf(&w);
    let prod = tape.elementwise_mul(v, wv).unwrap();
    tape.sum_all(prod)
}

#[test]
fn matmul_gradients() {
    let a = rand_matrix(3, 4, 1);
    let b = rand_matrix(4, 2, 2);
    check_grad(&a, TOL, |t, x| {
        let bv = t.leaf(&b);
        let c = t.matmul(x, bv).unwrap();
        weighted_sum(t, c)
    });
    check_grad(&b, TOL, |t, x| {
        let av = t.leaf(&a);
        let c = t.matmul(av, x).unwrap();
        weighted_sum(t, c)
    });
}

#[test]
fn transpose_gradient_of_sum_is_all_ones() {
    let a = rand_matrix(3, 5, 3);
    let mut tape = Tape::new();
    let x = tape.leaf(&a);
    let xt = tape.transpose(x);
    let loss = tape.sum_all(xt);
    tape.backward(loss).unwrap();
    assert!(tape.grad(x).iter().all(|&g| (g - 1.0).abs() < 1e-12));
    check_grad(&a, TOL, |t, x| {
        let xt = t.transpose(x);
        weighted_sum(t, xt)
    });
}

#[test]
fn gelu_gradient() {
    let a = rand_matrix(4, 4, 4);
    check_grad(&a, TOL, |t, x| {
        let g = t.gelu(x);
        weighted_sum(t, g)
    });
}

#[test]
fn elementwise_family_gradients() {
    let a = rand_matrix(3, 3, 5);
    let b = rand_matrix(3, 3, 6);
    check_grad(&a, TOL, |t, x| {
        let bv = t.leaf(&b);
        let s = t.add(x, bv).unwrap();
        let d = t.sub(s, bv).unwrap();
        let m = t.elementwise_mul(d, bv).unwrap();
        let sc = t.scale(m, 0.7);
        weighted_sum(t, sc)
    });
}

#[test]
fn add_row_gradient() {
    let x = rand_matrix(4, 3, 7);
    let bias = rand_matrix(1, 3, 8);
    check_grad(&x, TOL, |t, xv| {
        let bv = t.leaf(&bias);
        let out = t.add_row(xv, bv).unwrap();
        weighted_sum(t, out)
    });
    check_grad(&bias, TOL, |t, bv| {
        let xv = t.leaf(&x);
        let out = t.add_row(xv, bv).unwrap();
        weighted_sum(t, out)
    });
}

#[test]
fn mean_rows_gradient() {
    let a = rand_matrix(5, 3, 9);
    check_grad(&a, TOL, |t, x| {
        let m = t.mean_rows(x).unwrap();
        weighted_sum(t, m)
    });
}

#[test]
fn concat_gradients() {
    let a = rand_matrix(3, 2, 10);
    let b = rand_matrix(3, 4, 11);
    check_grad(&a, TOL, |t, x| {
        let bv = t.leaf(&b);
        let c = t.concat_cols(x, bv).unwrap();
        weighted_sum(t, c)
    });
    let c = rand_matrix(2, 3, 12);
    let d = rand_matrix(4, 3, 13);
    check_grad(&c, TOL, |t, x| {
        let dv = t.leaf(&d);
        let s = t.concat_rows(&[x, dv]).unwrap();
        weighted_sum(t, s)
    });
}

#[test]
fn row_select_gradient_scatters() {
    let a = rand_matrix(5, 3, 14);
    // repeated index accumulates
    check_grad(&a, TOL, |t, x| {
        let sel = t.row_select(x, &[1, 3, 1]).unwrap();
        weighted_sum(t, sel)
    });
    // selecting one row leaves every other row's gradient zero
    let mut tape = Tape::new();
    let x = tape.leaf(&a);
    let sel = tape.row_select(x, &[2]).unwrap();
    let loss = tape.sum_all(sel);
    tape.backward(loss).unwrap();
    let g = tape.grad(x);
    for r in 0..5 {
        for c in 0..3 {
            let expect = if r == 2 { 1.0 } else { 0.0 };
            assert_eq!(g[r * 3 + c], expect);
        }
    }
}

#[test]
fn layer_norm_gradient_tighter_tolerance() {
    let x = rand_matrix(4, 6, 15);
    let gain = rand_matrix(1, 6, 16);
    let bias = rand_matrix(1, 6, 17);
    for target in 0..3 {
        let probe = match target {
            0 => x.clone(),
            1 => gain.clone(),
            _ => bias.clone(),
        };
        check_grad(&probe, 1e-5, |t, v| {
            let (xv, gv, bv) = match target {
                0 => (v, t.leaf(&gain), t.leaf(&bias)),
                1 => (t.leaf(&x), v, t.leaf(&bias)),
                _ => (t.leaf(&x), t.leaf(&gain), v),
            };
            let out = t.layer_norm(xv, gv, bv).unwrap();
            weighted_sum(t, out)
        });
    }
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    let x = rand_matrix(4, 4, 18);
    check_grad(&x, TOL, |t, xv| {
        // same stream every probe, so the mask is part of the function
        let mut rng = stream(7, "dropmask");
        let d = t.dropout(xv, 0.4, true, &mut rng).unwrap();
        weighted_sum(t, d)
    });
}

#[test]
fn softmax_cross_entropy_gradient() {
    let logits = rand_matrix(4, 3, 19);
    let rows = [0, 1, 2, 3];
    let labels = [2, 0, 1, 2];
    check_grad(&logits, 1e-6, |t, x| {
        t.softmax_cross_entropy(x, &rows, &labels).unwrap()
    });
}

#[test]
fn mae_gradient_off_kink() {
    let pred = rand_matrix(5, 1, 20);
    let targets = [10.0, -10.0, 5.0, -5.0, 3.0]; // far from any kink
    check_grad(&pred, TOL, |t, x| {
        t.mae_loss(x, &[0, 1, 2, 3, 4], &targets).unwrap()
    });
}

#[test]
fn spmm_gradient() {
    use hyperagg::tensor::SparseMat;
    use std::rc::Rc;
    let p = Rc::new(SparseMat::new(
        4,
        vec![0, 2, 3, 5, 6],
        vec![0, 2, 1, 0, 3, 2],
        vec![0.5, 0.5, 1.0, 0.3, 0.7, 1.0],
    ));
    let x = rand_matrix(4, 3, 21);
    check_grad(&x, TOL, |t, xv| {
        let y = t.spmm(Rc::clone(&p), xv).unwrap();
        weighted_sum(t, y)
    });
}

#[test]
fn tape_replay_is_bitwise_deterministic() {
    let run = || {
        let x = rand_matrix(4, 4, 22);
        let w = rand_matrix(4, 2, 23);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let wv = tape.param("w", &w);
        let mut rng = stream(5, "replay");
        let d = tape.dropout(xv, 0.3, true, &mut rng).unwrap();
        let h = tape.matmul(d, wv).unwrap();
        let g = tape.gelu(h);
        let loss = tape.sum_all(g);
        tape.backward(loss).unwrap();
        (
            tape.data(loss)[0].to_bits(),
            tape.grad_of_param("w")
                .unwrap()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<u64>>(),
        )
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_associativity(
        p in 1usize..=8, q in 1usize..=8, r in 1usize..=8, s in 1usize..=8,
        seed in 0u64..1000,
    ) {
        let mut rng = stream(seed, "assoc");
        let rnd = |rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Matrix::from_vec(rows, cols, data).unwrap()
        };
        let a = rnd(p, q, &mut rng);
        let b = rnd(q, r, &mut rng);
        let c = rnd(r, s, &mut rng);
        let mut tape = Tape::new();
        let (av, bv, cv) = (tape.leaf(&a), tape.leaf(&b), tape.leaf(&c));
        let ab = tape.matmul(av, bv).unwrap();
        let ab_c = tape.matmul(ab, cv).unwrap();
        let bc = tape.matmul(bv, cv).unwrap();
        let a_bc = tape.matmul(av, bc).unwrap();
        for (x, y) in tape.data(ab_c).iter().zip(tape.data(a_bc)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn transpose_is_involution(rows in 1usize..=6, cols in 1usize..=6, seed in 0u64..1000) {
        let mut rng = stream(seed, "invol");
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Matrix::from_vec(rows, cols, data).unwrap();
        let mut tape = Tape::new();
        let v = tape.leaf(&m);
        let vt = tape.transpose(v);
        let vtt = tape.transpose(vt);
        prop_assert_eq!(tape.data(vtt), m.data());
    }
}
