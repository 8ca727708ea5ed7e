use ecn_core::{Graph, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small integers keep every partial sum exactly representable, so
/// reassociation inside backward cannot hide behind rounding.
fn integers(shape: Shape, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| r.random_range(-4i32..=4) as f64)
}

#[test]
fn dropout_statistics() {
    let n = 1_000_000;
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::ones(Shape::new(1, 1, 1000, 1000)));
    let y = g.dropout(x, 0.25, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let v = g.value(y).data();
    let zeros = v.iter().filter(|&&e| e == 0.0).count() as f64 / n as f64;
    let mean = v.iter().sum::<f64>() / n as f64;
    assert!((zeros - 0.25).abs() < 0.005, "zero fraction {zeros}");
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
}

fn term(g: &mut Graph<f64>, x: Var, w: &Tensor<f64>, b: &Tensor<f64>) -> Var {
    let w = g.constant(w.clone());
    let b = g.constant(b.clone());
    let y = g.conv2d(x, w, 1, (1, 1)).unwrap();
    let y = g.relu(y).unwrap();
    let y = g.mul(y, b).unwrap();
    g.sum(y).unwrap()
}

struct Case {
    x: Tensor<f64>,
    ws: Vec<Tensor<f64>>,
    bs: Vec<Tensor<f64>>,
}

fn case(seed: u64, k: usize) -> Case {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = integers(Shape::new(2, 3, 4, 4), &mut r);
    let ws = (0..k).map(|_| integers(Shape::new(2, 3, 3, 3), &mut r)).collect();
    let bs = (0..k).map(|_| integers(Shape::new(2, 2, 4, 4), &mut r)).collect();
    Case { x, ws, bs }
}

fn grad_of(c: &Case, terms: &[usize]) -> Tensor<f64> {
    let mut g = Graph::new();
    let x = g.leaf(c.x.clone(), true);
    let mut loss = None;
    for &i in terms {
        let t = term(&mut g, x, &c.ws[i], &c.bs[i]);
        loss = Some(match loss {
            None => t,
            Some(l) => g.add(l, t).unwrap(),
        });
    }
    g.backward(loss.unwrap()).unwrap().get(x).unwrap().clone()
}

#[test]
fn gradient_accumulates_over_uses() {
    for seed in 0..20 {
        for k in 1..=4 {
            let c = case(seed, k);
            let together = grad_of(&c, &(0..k).collect::<Vec<_>>());
            let mut separate = Tensor::zeros(c.x.shape());
            for i in 0..k {
                separate.add_assign(&grad_of(&c, &[i])).unwrap();
            }
            assert_eq!(together, separate, "seed {seed} k {k}");
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    for seed in 100..120 {
        let c = case(seed, 2);
        let mut g = Graph::new();
        let x = g.leaf(c.x.clone(), true);
        let l1 = term(&mut g, x, &c.ws[0], &c.bs[0]);
        let l2 = term(&mut g, x, &c.ws[1], &c.bs[1]);
        let both = g.add(l1, l2).unwrap();
        let scaled = g.scale(both, 0.5).unwrap();
        let g_sum = g.backward(scaled).unwrap().get(x).unwrap().clone();
        let g1 = g.backward(l1).unwrap().get(x).unwrap().clone();
        let g2 = g.backward(l2).unwrap().get(x).unwrap().clone();
        let expected = g1.zip_map(&g2, |a, b| 0.5 * (a + b)).unwrap();
        assert_eq!(g_sum, expected, "seed {seed}");
    }
}
