//! Direct scalar-loop implementations of the dense operators, and drivers
//! that compare the engine against them with `==` in 64-bit precision.

use ecn_core::{Graph, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCES: usize = 100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: Shape, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, r)
}

pub fn small_shape(r: &mut ChaCha8Rng) -> Shape {
    Shape::new(
        r.random_range(1..=8),
        r.random_range(1..=8),
        r.random_range(1..=8),
        r.random_range(1..=8),
    )
}

fn compare(what: &str, i: usize, got: &[f64], expected: &[f64]) -> Result<(), String> {
    if got == expected {
        return Ok(());
    }
    let at = got.iter().zip(expected).position(|(a, b)| a != b).unwrap_or(0);
    Err(format!("{what} instance {i}: element {at} differs"))
}

pub fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, groups: usize, pad: usize) -> Vec<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let (cin_g, cout_g) = (xs.c / groups, ws.n / groups);
    let mut out = Vec::new();
    for n in 0..xs.n {
        for co in 0..ws.n {
            let g = co / cout_g;
            for oy in 0..xs.h {
                for ox in 0..xs.w {
                    let mut acc = 0.0;
                    for ci in 0..cin_g {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = oy as isize + ky as isize - pad as isize;
                                let ix = ox as isize + kx as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                                    acc += w.get(co, ci, ky, kx) * x.get(n, g * cin_g + ci, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

pub fn bn_oracle(x: &Tensor<f64>, gamma: &[f64], beta: &[f64], stats: Option<(&[f64], &[f64])>, eps: f64) -> Vec<f64> {
    let s = x.shape();
    let mut out = vec![0.0; s.len()];
    for c in 0..s.c {
        let (mean, var) = match stats {
            Some((m, v)) => (m[c], v[c]),
            None => {
                let m = (s.n * s.h * s.w) as f64;
                let mut sum = 0.0;
                for n in 0..s.n {
                    for h in 0..s.h {
                        for w in 0..s.w {
                            sum += x.get(n, c, h, w);
                        }
                    }
                }
                let mean = sum / m;
                let mut sq = 0.0;
                for n in 0..s.n {
                    for h in 0..s.h {
                        for w in 0..s.w {
                            let d = x.get(n, c, h, w) - mean;
                            sq += d * d;
                        }
                    }
                }
                (mean, sq / m)
            }
        };
        let sd = (var + eps).sqrt();
        for n in 0..s.n {
            for h in 0..s.h {
                for w in 0..s.w {
                    out[s.offset(n, c, h, w)] = (x.get(n, c, h, w) - mean) / sd * gamma[c] + beta[c];
                }
            }
        }
    }
    out
}

/// Standard 3×3, pointwise and channel-wise kernels in rotation.
pub fn check_conv2d(instances: usize) -> Result<String, String> {
    let mut r = rng(1);
    for i in 0..instances {
        let s = small_shape(&mut r);
        let (groups, wshape, pad) = match i % 3 {
            0 => (1, Shape::new(r.random_range(1..=8), s.c, 3, 3), 1),
            1 => (1, Shape::new(r.random_range(1..=8), s.c, 1, 1), 0),
            _ => (s.c, Shape::new(s.c, 1, 3, 3), 1),
        };
        let (x, w) = (random(s, &mut r), random(wshape, &mut r));
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let y = g.conv2d(xv, wv, groups, (pad, pad)).map_err(|e| e.to_string())?;
        compare("conv2d", i, g.value(y).data(), &conv_oracle(&x, &w, groups, pad))?;
    }
    Ok(format!("conv2d {instances}/{instances}"))
}

/// Train mode with batch statistics and eval mode with running statistics.
pub fn check_batchnorm(instances: usize) -> Result<String, String> {
    let mut r = rng(2);
    for i in 0..instances {
        let mut s = small_shape(&mut r);
        s.n = s.n.max(2);
        let cs = Shape::new(1, s.c, 1, 1);
        let (x, gamma, beta) = (random(s, &mut r), random(cs, &mut r), random(cs, &mut r));
        let mut g = Graph::new();
        let (xv, gv, bv) = (
            g.constant(x.clone()),
            g.constant(gamma.clone()),
            g.constant(beta.clone()),
        );
        let (y, _) = g.batch_norm_train(xv, gv, bv, 1e-5).map_err(|e| e.to_string())?;
        compare(
            "batchnorm train",
            i,
            g.value(y).data(),
            &bn_oracle(&x, gamma.data(), beta.data(), None, 1e-5),
        )?;

        let rm = random(cs, &mut r);
        let rv = Tensor::from_fn(cs, |_, _, _, _| r.random_range(0.1..3.0));
        let y = g
            .batch_norm_eval(xv, gv, bv, &rm, &rv, 1e-5)
            .map_err(|e| e.to_string())?;
        let expect = bn_oracle(&x, gamma.data(), beta.data(), Some((rm.data(), rv.data())), 1e-5);
        compare("batchnorm eval", i, g.value(y).data(), &expect)?;
    }
    Ok(format!("batchnorm {instances}/{instances}"))
}

pub fn check_pooling(instances: usize) -> Result<String, String> {
    let mut r = rng(4);
    for i in 0..instances {
        let s = small_shape(&mut r);
        let x = random(s, &mut r);
        let mut expect = Vec::new();
        for n in 0..s.n {
            for c in 0..s.c {
                let mut acc = 0.0;
                for h in 0..s.h {
                    for w in 0..s.w {
                        acc += x.get(n, c, h, w);
                    }
                }
                expect.push(acc / (s.h * s.w) as f64);
            }
        }
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = g.global_avg_pool(xv).map_err(|e| e.to_string())?;
        compare("pooling", i, g.value(y).data(), &expect)?;
    }
    Ok(format!("pooling {instances}/{instances}"))
}

pub fn check_linear(instances: usize) -> Result<String, String> {
    let mut r = rng(5);
    for i in 0..instances {
        let (n, fin, fout) = (r.random_range(1..=8), r.random_range(1..=8), r.random_range(1..=8));
        let x = random(Shape::new(n, fin, 1, 1), &mut r);
        let w = random(Shape::new(fout, fin, 1, 1), &mut r);
        let b = random(Shape::new(1, fout, 1, 1), &mut r);
        let mut expect = Vec::new();
        for s in 0..n {
            for o in 0..fout {
                let mut acc = 0.0;
                for k in 0..fin {
                    acc += x.get(s, k, 0, 0) * w.get(o, k, 0, 0);
                }
                expect.push(acc + b.data()[o]);
            }
        }
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.linear(xv, wv, bv).map_err(|e| e.to_string())?;
        compare("linear", i, g.value(y).data(), &expect)?;
    }
    Ok(format!("linear {instances}/{instances}"))
}
