//! Finite-difference checks over every operator, every block kind and a full
//! cascading layer, at small randomized shapes in 64-bit precision.
//!
//! Central differences straddling a ReLU kink are meaningless, so draws whose
//! ReLU inputs come too close to zero are replaced before checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{gradcheck, GradcheckReport, Graph, Var};
use crate::blocks::{Block, BlockKind, BlockSpec};
use crate::cascade::{cascade_layer_forward, FeatureState, LayerPlan};
use crate::error::Result;
use crate::forward::{Forward, Mode};
use crate::ops::GridAlignment;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};

pub const TOLERANCE: f64 = 1e-6;
pub const STEP: f64 = 1e-5;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Central differences are only meaningful away from the ReLU kink.
pub const KINK_MARGIN: f64 = 1e-3;
pub const MAX_REDRAWS: usize = 16;
const REDRAW_STRIDE: u64 = 1_000_003;

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub seed: u64,
    pub redraws: usize,
    pub report: GradcheckReport,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= TOLERANCE
    }
}

fn normal(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

/// Magnitudes in [0.2, 1.2] with random signs.
fn off_zero(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..shape.len())
        .map(|_| {
            let m = 0.2 + rng.random::<f64>();
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("sized from shape")
}

fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = normal(g.shape(y), &mut rng);
    g.weighted_sum(y, w)
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

type Case = (
    String,
    Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>,
    Vec<Tensor<f64>>,
);

fn op_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<Case> = Vec::new();
    let s = Shape::new(
        dims(&mut rng, 1, 3),
        dims(&mut rng, 1, 3),
        dims(&mut rng, 2, 4),
        dims(&mut rng, 2, 4),
    );
    let p = seed;

    let (a, b) = (normal(s, &mut rng), normal(s, &mut rng));
    cases.push((
        "add".into(),
        Box::new(move |g, v| {
            let y = g.add(v[0], v[1])?;
            probe(g, y, p)
        }),
        vec![a.clone(), b.clone()],
    ));
    cases.push((
        "mul".into(),
        Box::new(move |g, v| {
            let y = g.mul(v[0], v[1])?;
            probe(g, y, p)
        }),
        vec![a.clone(), b],
    ));
    cases.push((
        "scale".into(),
        Box::new(move |g, v| {
            let y = g.scale(v[0], -1.7)?;
            let y = g.add_scalar(y, 0.3)?;
            probe(g, y, p)
        }),
        vec![a.clone()],
    ));
    cases.push((
        "relu".into(),
        Box::new(move |g, v| {
            let y = g.relu(v[0])?;
            probe(g, y, p)
        }),
        vec![off_zero(s, &mut rng)],
    ));

    let (ci, co) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 4));
    let (h, w) = (dims(&mut rng, 3, 6), dims(&mut rng, 3, 6));
    let x = normal(Shape::new(2, ci, h, w), &mut rng);
    cases.push((
        "conv2d 3x3".into(),
        Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1], 1, (1, 1))?;
            probe(g, y, p)
        }),
        vec![x.clone(), normal(Shape::new(co, ci, 3, 3), &mut rng)],
    ));
    cases.push((
        "conv2d 1x1".into(),
        Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1], 1, (0, 0))?;
            probe(g, y, p)
        }),
        vec![x.clone(), normal(Shape::new(co, ci, 1, 1), &mut rng)],
    ));
    cases.push((
        "conv2d channel-wise".into(),
        Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1], ci, (1, 1))?;
            probe(g, y, p)
        }),
        vec![x.clone(), normal(Shape::new(ci, 1, 3, 3), &mut rng)],
    ));

    let bs = Shape::new(
        dims(&mut rng, 2, 4),
        dims(&mut rng, 1, 4),
        dims(&mut rng, 2, 4),
        dims(&mut rng, 2, 4),
    );
    let cs = Shape::new(1, bs.c, 1, 1);
    let gamma = normal(cs, &mut rng);
    let beta = normal(cs, &mut rng);
    cases.push((
        "batchnorm train".into(),
        Box::new(move |g, v| {
            let (y, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
            probe(g, y, p)
        }),
        vec![normal(bs, &mut rng), gamma.clone(), beta.clone()],
    ));
    let rm = normal(cs, &mut rng);
    let rv = Tensor::from_fn(cs, |_, c, _, _| 0.5 + c as f64 * 0.25);
    cases.push((
        "batchnorm eval".into(),
        Box::new(move |g, v| {
            let y = g.batch_norm_eval(v[0], v[1], v[2], &rm, &rv, 1e-5)?;
            probe(g, y, p)
        }),
        vec![normal(bs, &mut rng), gamma, beta],
    ));

    let (ih, iw) = (dims(&mut rng, 3, 8), dims(&mut rng, 3, 8));
    let (oh, ow) = (dims(&mut rng, 2, ih), dims(&mut rng, 2, iw));
    let rx = normal(Shape::new(2, 2, ih, iw), &mut rng);
    for (name, alignment) in [
        ("bilinear_resize", GridAlignment::HalfPixel),
        ("bilinear_resize corners", GridAlignment::Corners),
    ] {
        cases.push((
            format!("{name} {ih}x{iw}->{oh}x{ow}"),
            Box::new(move |g, v| {
                let y = g.resize(v[0], (oh, ow), alignment)?;
                probe(g, y, p)
            }),
            vec![rx.clone()],
        ));
    }
    cases.push((
        "bilinear_resize 5x5->3x3".into(),
        Box::new(move |g, v| {
            let y = g.resize(v[0], (3, 3), GridAlignment::HalfPixel)?;
            probe(g, y, p)
        }),
        vec![normal(Shape::new(1, 2, 5, 5), &mut rng)],
    ));
    cases.push((
        "bilinear_resize 7x5->4x3".into(),
        Box::new(move |g, v| {
            let y = g.resize(v[0], (4, 3), GridAlignment::HalfPixel)?;
            probe(g, y, p)
        }),
        vec![normal(Shape::new(1, 2, 7, 5), &mut rng)],
    ));

    cases.push((
        "global_avg_pool".into(),
        Box::new(move |g, v| {
            let y = g.global_avg_pool(v[0])?;
            probe(g, y, p)
        }),
        vec![normal(s, &mut rng)],
    ));

    let (n, i, o) = (dims(&mut rng, 1, 4), dims(&mut rng, 1, 6), dims(&mut rng, 2, 5));
    cases.push((
        "linear".into(),
        Box::new(move |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            probe(g, y, p)
        }),
        vec![
            normal(Shape::new(n, i, 1, 1), &mut rng),
            normal(Shape::new(o, i, 1, 1), &mut rng),
            normal(Shape::new(1, o, 1, 1), &mut rng),
        ],
    ));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..o)).collect();
    cases.push((
        "softmax_cross_entropy".into(),
        Box::new(move |g, v| g.softmax_cross_entropy(v[0], &labels)),
        vec![normal(Shape::new(n, o, 1, 1), &mut rng)],
    ));

    let c2 = dims(&mut rng, 1, 3);
    cases.push((
        "slice_channels + concat_channels".into(),
        Box::new(move |g, v| {
            let lo = g.slice_channels(v[0], 0, 1)?;
            let y = g.concat_channels(v[1], lo)?;
            probe(g, y, p)
        }),
        vec![normal(s, &mut rng), normal(Shape::new(s.n, c2, s.h, s.w), &mut rng)],
    ));
    cases.push((
        "dropout".into(),
        Box::new(move |g, v| {
            let y = g.dropout(v[0], 0.3, &mut ChaCha8Rng::seed_from_u64(p))?;
            probe(g, y, p)
        }),
        vec![normal(s, &mut rng)],
    ));

    let cls = dims(&mut rng, 2, 4);
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..cls)).collect();
    cases.push((
        "composite conv-bn-relu-pool-linear".into(),
        Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1], 1, (1, 1))?;
            let (y, _) = g.batch_norm_train(y, v[2], v[3], 1e-5)?;
            let y = g.relu(y)?;
            let y = g.global_avg_pool(y)?;
            let y = g.linear(y, v[4], v[5])?;
            g.softmax_cross_entropy(y, &labels)
        }),
        vec![
            normal(Shape::new(3, 2, 4, 4), &mut rng),
            normal(Shape::new(3, 2, 3, 3), &mut rng),
            off_zero(Shape::new(1, 3, 1, 1), &mut rng),
            normal(Shape::new(1, 3, 1, 1), &mut rng),
            normal(Shape::new(cls, 3, 1, 1), &mut rng),
            normal(Shape::new(1, cls, 1, 1), &mut rng),
        ],
    ));
    cases
}

/// Inputs for a store-backed computation: `x` first, then every trainable
/// parameter, each perturbed through a leaf bound in place of the parameter.
fn store_case(
    name: String,
    store: ParamStore<f64>,
    x: Tensor<f64>,
    seed: u64,
    run: impl Fn(&mut Forward<'_, f64>, Var) -> Result<Var> + 'static,
) -> Case {
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10c);
    let mut inputs = vec![x];
    // move gammas and betas away from their identity start so every path is exercised
    for &id in &ids {
        let mut t = store.value(id).clone();
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v += 0.3 * rng.random::<f64>() - 0.15);
        inputs.push(t);
    }
    let f = move |g: &mut Graph<f64>, v: &[Var]| -> Result<Var> {
        let mut fw = Forward::new(&store, Mode::Train, 1e-5).with_graph(std::mem::take(g));
        for (&id, &var) in ids.iter().zip(&v[1..]) {
            fw.graph.bind_param(id, var);
        }
        let y = run(&mut fw, v[0]);
        *g = fw.finish().0;
        probe(g, y?, seed)
    };
    (name, Box::new(f), inputs)
}

fn block_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
    let mut cases = Vec::new();
    let mut specs: Vec<BlockSpec> = BlockKind::ALL
        .iter()
        .map(|&kind| {
            let c = dims(&mut rng, 1, 4);
            BlockSpec::new(kind, c, c + dims(&mut rng, 0, 3))
        })
        .collect();
    specs.push(BlockSpec::new(BlockKind::RecursiveQuad, 4, 6));
    for spec in specs {
        let (kind, c, o) = (spec.kind, spec.in_ch, spec.out_ch);
        let mut store = ParamStore::new();
        let block = Block::new(spec, "b", &mut store, &mut rng).expect("valid spec");
        let x = normal(Shape::new(2, c, dims(&mut rng, 3, 5), dims(&mut rng, 3, 5)), &mut rng);
        let name = format!(
            "block {} in {c} out {o} iterations {}",
            kind.number(),
            spec.effective_iterations()
        );
        cases.push(store_case(name, store, x, seed, move |f, x| block.forward(f, x)));
    }

    for kind in BlockKind::ALL {
        let (c, growth) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 3));
        let (ih, iw) = (dims(&mut rng, 5, 7), dims(&mut rng, 5, 7));
        let out_hw = (ih * 3 / 4, iw * 3 / 4);
        let spec = BlockSpec::new(kind, c, c + growth);
        let layer = LayerPlan {
            index: 1,
            in_ch: c,
            out_ch: c + growth,
            in_hw: (ih, iw),
            out_hw,
            block: spec,
            params: 0,
        };
        let mut store = ParamStore::new();
        let block = Block::new(spec, "b", &mut store, &mut rng).expect("valid spec");
        let x = normal(Shape::new(2, c, ih, iw), &mut rng);
        let name = format!(
            "cascade layer block {} {ih}x{iw}->{}x{}",
            kind.number(),
            out_hw.0,
            out_hw.1
        );
        cases.push(store_case(name, store, x, seed, move |f, x| {
            let state = FeatureState {
                features: x,
                level_ends: vec![c],
            };
            Ok(cascade_layer_forward(f, &layer, &block, GridAlignment::HalfPixel, &state)?.features)
        }));
    }
    cases
}

fn relu_margin(f: &dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>, inputs: &[Tensor<f64>]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
    f(&mut g, &vars)?;
    Ok(g.relu_margin().unwrap_or(f64::INFINITY))
}

fn cases(seed: u64) -> Vec<Case> {
    op_cases(seed).into_iter().chain(block_cases(seed)).collect()
}

/// Runs every case for every seed. A case whose ReLU inputs come within
/// [`KINK_MARGIN`] of zero is redrawn from a derived seed, up to
/// [`MAX_REDRAWS`] times; `redraws` records how many were needed.
pub fn run_suite(seeds: &[u64]) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let count = cases(seed).len();
        for i in 0..count {
            let mut redraws = 0;
            let (name, f, inputs) = loop {
                let (name, f, inputs) = cases(seed + REDRAW_STRIDE * redraws as u64).swap_remove(i);
                if redraws == MAX_REDRAWS || relu_margin(&f, &inputs)? > KINK_MARGIN {
                    break (name, f, inputs);
                }
                redraws += 1;
            };
            let report = gradcheck(f, &inputs, STEP)?;
            out.push(CaseResult {
                name,
                seed,
                redraws,
                report,
            });
        }
    }
    Ok(out)
}
