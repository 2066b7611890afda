use covgen::autodiff::masked_softmax;
use covgen::{clip_by_global_norm, grad_check, GradientSet, ParamSet, Result, Tape, Tensor, Var};
use proptest::prelude::*;

fn vec_in(lo: f64, hi: f64, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

/// `sum(w * op(x, y))` with `x`, `y` bound as parameters 0 and 1.
fn weighted<F>(op: F, w: Vec<f64>) -> impl Fn(&ParamSet) -> Result<(f64, GradientSet)>
where
    F: Fn(&mut Tape, Var, Var) -> Var,
{
    move |ps: &ParamSet| {
        let mut t = Tape::new();
        let x = t.param(0, ps.get_index(0).1.clone());
        let y = t.param(1, ps.get_index(1).1.clone());
        let out = op(&mut t, x, y);
        let shape = t.value(out).shape().to_vec();
        let wv = t.constant(Tensor::new(shape, w[..t.value(out).len()].to_vec())?);
        let prod = t.mul(out, wv);
        let loss = t.sum(prod);
        Ok((t.value(loss).item(), t.backprop(loss, ps)?))
    }
}

fn point(x: Tensor, y: Tensor) -> ParamSet {
    let mut ps = ParamSet::new();
    ps.insert("x", x);
    ps.insert("y", y);
    ps
}

fn check<F>(op: F, x: Tensor, y: Tensor, w: Vec<f64>) -> f64
where
    F: Fn(&mut Tape, Var, Var) -> Var,
{
    grad_check(weighted(op, w), &point(x, y), 1e-6).unwrap().max_rel_error
}

fn mat(r: usize, c: usize, d: &[f64]) -> Tensor {
    Tensor::matrix(r, c, d[..r * c].to_vec()).unwrap()
}

const TOL: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_shift_invariant(z in vec_in(-20.0, 20.0, 6), k in -50.0..50.0f64, bits in prop::collection::vec(any::<bool>(), 6)) {
        let mut mask = bits;
        mask[0] = true;
        let a = masked_softmax(&Tensor::column(z.clone()), &mask).unwrap();
        let b = masked_softmax(&Tensor::column(z.iter().map(|v| v + k).collect()), &mask).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
        prop_assert!((a.sum() - 1.0).abs() < 1e-12);
        for (p, m) in a.data().iter().zip(&mask) {
            prop_assert!(*m || *p == 0.0);
        }
    }

    #[test]
    fn clipping_bounds_norm_and_is_idempotent(g in vec_in(-100.0, 100.0, 7), max in 0.01..50.0f64) {
        let grads = point(mat(2, 2, &g), Tensor::row(g[4..].to_vec()));
        let (once, before) = clip_by_global_norm(&grads, max).unwrap();
        prop_assert!((before - grads.global_norm()).abs() < 1e-9);
        prop_assert!(once.global_norm() <= max + 1e-9);
        let (twice, _) = clip_by_global_norm(&once, max).unwrap();
        prop_assert!(twice.max_abs_diff(&once) < 1e-12);
    }

    #[test]
    fn tape_replay_is_bit_identical(x in vec_in(-2.0, 2.0, 6), y in vec_in(-2.0, 2.0, 6), w in vec_in(-1.0, 1.0, 9)) {
        let f = weighted(|t, a, b| {
            let m = t.matmul_t(a, b, false, true);
            let h = t.tanh(m);
            let s = t.sigmoid(h);
            t.min(h, s)
        }, w);
        let p = point(mat(3, 2, &x), mat(3, 2, &y));
        let (l1, g1) = f(&p).unwrap();
        let (l2, g2) = f(&p).unwrap();
        prop_assert_eq!(l1.to_bits(), l2.to_bits());
        prop_assert_eq!(g1, g2);
    }

    #[test]
    fn matmul_gradients(x in vec_in(-2.0, 2.0, 6), y in vec_in(-2.0, 2.0, 6), w in vec_in(-1.0, 1.0, 9)) {
        prop_assert!(check(|t, a, b| t.matmul(a, b), mat(2, 3, &x), mat(3, 2, &y), w.clone()) < TOL);
        prop_assert!(check(|t, a, b| t.matmul_t(a, b, true, false), mat(3, 2, &x), mat(3, 2, &y), w.clone()) < TOL);
        prop_assert!(check(|t, a, b| t.matmul_t(a, b, false, true), mat(3, 2, &x), mat(3, 2, &y), w.clone()) < TOL);
        prop_assert!(check(|t, a, b| t.matmul_t(a, b, true, true), mat(2, 3, &x), mat(3, 2, &y), w) < TOL);
    }

    #[test]
    fn elementwise_gradients(x in vec_in(-2.0, 2.0, 6), y in vec_in(-2.0, 2.0, 6), w in vec_in(-1.0, 1.0, 6)) {
        let (a, b) = (mat(2, 3, &x), mat(2, 3, &y));
        prop_assert!(check(|t, p, q| t.add(p, q), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, q| t.sub(p, q), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, q| t.mul(p, q), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.tanh(p), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.sigmoid(p), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.scale(p, -1.7), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.one_minus(p), a.clone(), b.clone(), w.clone()) < TOL);
        let pos = a.map(|v| v.abs() + 0.2);
        prop_assert!(check(|t, p, _| t.log(p), pos, b, w) < TOL);
    }

    #[test]
    fn broadcast_row_gradients(x in vec_in(-2.0, 2.0, 6), y in vec_in(-2.0, 2.0, 3), w in vec_in(-1.0, 1.0, 6)) {
        let (a, b) = (mat(2, 3, &x), Tensor::row(y));
        prop_assert!(check(|t, p, q| t.add(p, q), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, q| t.mul(p, q), a, b, w) < TOL);
    }

    #[test]
    fn kinked_gradients_away_from_kinks(x in vec_in(-2.0, 2.0, 6), y in vec_in(-2.0, 2.0, 6), w in vec_in(-1.0, 1.0, 6)) {
        let clear = |u: f64, v: f64| (u - v).abs() > 1e-3;
        prop_assume!(x.iter().zip(&y).all(|(u, v)| clear(*u, *v)));
        prop_assume!(x.iter().all(|u| clear(*u, 0.0) && clear(*u, 0.5)));
        let (a, b) = (mat(2, 3, &x), mat(2, 3, &y));
        prop_assert!(check(|t, p, q| t.min(p, q), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.relu(p), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.floor_at(p, 0.5), a, b, w) < TOL);
    }

    #[test]
    fn structural_gradients(x in vec_in(-2.0, 2.0, 6), y in vec_in(-2.0, 2.0, 4), w in vec_in(-1.0, 1.0, 12)) {
        let (a, b) = (mat(3, 2, &x), mat(2, 2, &y));
        prop_assert!(check(|t, p, q| t.concat(&[p, q], 0), a.clone(), b.clone(), w.clone()) < TOL);
        let joined = check(|t, p, q| {
            let qq = t.matmul(q, q);
            let r = t.gather(p, &[0, 1]);
            t.concat(&[r, qq], 1)
        }, a.clone(), b.clone(), w.clone());
        prop_assert!(joined < TOL);
        prop_assert!(check(|t, p, _| t.gather(p, &[2, 0, 2, 1]), a.clone(), b.clone(), w.clone()) < TOL);
        prop_assert!(check(|t, p, _| t.scatter_add(p, &[1, 1, 3], 5), a.clone(), b.clone(), w.clone()) < TOL);
        let summed = check(|t, p, q| {
            let s = t.sum(p);
            let qs = t.sum(q);
            t.mul(qs, s)
        }, a, b, w);
        prop_assert!(summed < TOL);
    }

    #[test]
    fn softmax_gradients(x in vec_in(-3.0, 3.0, 5), w in vec_in(-1.0, 1.0, 5), bits in prop::collection::vec(any::<bool>(), 5)) {
        let mut mask = bits;
        mask[2] = true;
        let m = mask.clone();
        prop_assert!(check(move |t, p, _| t.masked_softmax(p, &m).unwrap(),
            Tensor::column(x), Tensor::scalar(0.0), w) < TOL);
    }
}

#[test]
fn negative_log_softmax_gradient_is_softmax_minus_onehot() {
    let z = vec![0.3, -1.2, 2.0, 0.7];
    let k = 1;
    let mut t = Tape::new();
    let zv = t.param(0, Tensor::column(z.clone()));
    let s = t.masked_softmax(zv, &[true; 4]).unwrap();
    let pick = t.gather(s, &[k]);
    let lp = t.log(pick);
    let loss = t.neg(lp);
    let mut ps = ParamSet::new();
    ps.insert("z", Tensor::column(z.clone()));
    let g = t.backprop(loss, &ps).unwrap();
    let sm = masked_softmax(&Tensor::column(z), &[true; 4]).unwrap();
    for (i, (gi, si)) in g.get("z").unwrap().data().iter().zip(sm.data()).enumerate() {
        let want = si - if i == k { 1.0 } else { 0.0 };
        assert!((gi - want).abs() < 1e-12);
    }
    let f = |ps: &ParamSet| -> Result<(f64, GradientSet)> {
        let mut t = Tape::new();
        let zv = t.param(0, ps.get_index(0).1.clone());
        let s = t.masked_softmax(zv, &[true; 4])?;
        let pick = t.gather(s, &[k]);
        let lp = t.log(pick);
        let loss = t.neg(lp);
        Ok((t.value(loss).item(), t.backprop(loss, ps)?))
    };
    assert!(grad_check(f, &ps, 1e-5).unwrap().passes(1e-6));
}

#[test]
fn sum_tanh_of_wx_matches_finite_differences() {
    let f = |ps: &ParamSet| -> Result<(f64, GradientSet)> {
        let mut t = Tape::new();
        let w = t.param(0, ps.get_index(0).1.clone());
        let x = t.param(1, ps.get_index(1).1.clone());
        let wx = t.matmul(w, x);
        let h = t.tanh(wx);
        let loss = t.sum(h);
        Ok((t.value(loss).item(), t.backprop(loss, ps)?))
    };
    let p = point(mat(2, 2, &[0.5, -0.3, 0.8, 0.1]), Tensor::column(vec![1.5, -0.7]));
    assert!(grad_check(f, &p, 1e-5).unwrap().passes(1e-6));
}
