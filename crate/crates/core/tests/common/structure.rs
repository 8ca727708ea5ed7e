use ecn_core::blocks::{Block, BlockKind, BlockSpec};
use ecn_core::cascade::{cascade_layer_forward, FeatureState, LayerPlan};
use ecn_core::ops::GridAlignment;
use ecn_core::{Forward, Graph, Mode, ParamKind, ParamStore, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::{random, rng, small_shape};

const ALIGNMENTS: [GridAlignment; 2] = [GridAlignment::HalfPixel, GridAlignment::Corners];
const ITERATIVE: [BlockKind; 4] = [
    BlockKind::Recurrent,
    BlockKind::RecurrentDouble,
    BlockKind::RecursiveSep,
    BlockKind::RecursiveQuad,
];

fn err(e: ecn_core::Error) -> String {
    e.to_string()
}

pub fn resize_identity(instances: usize) -> Result<String, String> {
    let mut r = rng(21);
    for i in 0..instances {
        let x = random(small_shape(&mut r), &mut r);
        for a in ALIGNMENTS {
            let s = x.shape();
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = g.resize(xv, (s.h, s.w), a).map_err(err)?;
            if g.value(y) != &x {
                return Err(format!("instance {i} ({a:?}) is not the identity"));
            }
        }
    }
    Ok(format!("{instances} identity resizes"))
}

pub fn resize_preserves_constants(instances: usize) -> Result<String, String> {
    let mut r = rng(22);
    for i in 0..instances {
        let s = small_shape(&mut r);
        let c: f64 = r.random_range(-100.0..100.0);
        let out = (r.random_range(1..=12), r.random_range(1..=12));
        for a in ALIGNMENTS {
            let mut g = Graph::new();
            let xv = g.constant(Tensor::full(s, c));
            let y = g.resize(xv, out, a).map_err(err)?;
            if g.value(y).data().iter().any(|&v| v != c) {
                return Err(format!("instance {i} ({a:?}) changed the constant {c}"));
            }
        }
    }
    Ok(format!("{instances} constant resizes"))
}

/// Zeroing every block kernel leaves the resized input untouched in the low
/// stream and appends all-zero channels.
pub fn zero_modulation_passes_through() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for kind in BlockKind::ALL {
        let mut store = ParamStore::<f64>::new();
        let block = Block::new(BlockSpec::new(kind, 3, 5), "b", &mut store, &mut rng).map_err(err)?;
        for id in block.param_ids() {
            if store.get(id).kind == ParamKind::Weight {
                store.value_mut(id).fill(0.0);
            }
        }
        let layer = LayerPlan {
            index: 1,
            in_ch: 3,
            out_ch: 5,
            in_hw: (9, 7),
            out_hw: (6, 5),
            block: block.spec,
            params: 0,
        };
        let mut f = Forward::new(&store, Mode::Train, 1e-5);
        let x = Tensor::randn(Shape::new(2, 3, 9, 7), 1.0, &mut rng);
        let xv = f.graph.constant(x);
        let state = FeatureState {
            features: xv,
            level_ends: vec![3],
        };
        let out = cascade_layer_forward(&mut f, &layer, &block, GridAlignment::HalfPixel, &state).map_err(err)?;
        let d = f.graph.resize(xv, (6, 5), GridAlignment::HalfPixel).map_err(err)?;
        let (y, low) = (f.graph.value(out.features), f.graph.value(d));
        for n in 0..2 {
            for c in 0..5 {
                let expect: Vec<f64> = if c < 3 { low.plane(n, c).to_vec() } else { vec![0.0; 30] };
                if y.plane(n, c) != &expect[..] {
                    return Err(format!("block {kind}: channel {c} of sample {n} differs"));
                }
            }
        }
    }
    Ok("all 6 block kinds".into())
}

fn build(kind: BlockKind, seed: u64) -> Result<(ParamStore<f64>, Block), String> {
    let mut store = ParamStore::new();
    let block = Block::new(
        BlockSpec::new(kind, 3, 5),
        "b",
        &mut store,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .map_err(err)?;
    Ok((store, block))
}

fn iteration_outputs(store: &ParamStore<f64>, block: &Block, x: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, String> {
    let mut f = Forward::new(store, Mode::Train, 1e-5);
    let xv = f.graph.constant(x.clone());
    let vars = block.iteration_outputs(&mut f, xv).map_err(err)?;
    Ok(vars.iter().map(|&v| f.graph.value(v).clone()).collect())
}

fn input(seed: u64) -> Tensor<f64> {
    Tensor::randn(Shape::new(2, 3, 5, 5), 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One kernel per stage, whatever the iteration count, and perturbing it
/// changes the output of every iteration.
pub fn kernels_are_shared() -> Result<String, String> {
    let x = input(5);
    for kind in ITERATIVE {
        let (mut store, block) = build(kind, 6)?;
        let stages = match kind {
            BlockKind::RecursiveQuad => 4,
            BlockKind::Recurrent => 1,
            _ => 2,
        };
        let convs = store.iter().filter(|(_, p)| p.kind == ParamKind::Weight).count();
        if block.convs.len() != stages || convs != stages {
            return Err(format!("block {kind}: {convs} kernels for {stages} stages"));
        }
        let before = iteration_outputs(&store, &block, &x)?;
        let w = block.convs[0].weight;
        let bumped = store.value(w).map(|v| v * 1.5 + 0.01);
        store.set_value(w, bumped).map_err(err)?;
        let after = iteration_outputs(&store, &block, &x)?;
        if let Some(k) = (0..3).find(|&k| before[k] == after[k]) {
            return Err(format!("block {kind}: iteration {} ignored the shared kernel", k + 1));
        }
    }
    Ok("blocks 3-6".into())
}

/// Rescaling the second iteration's first batch norm leaves the first
/// iteration untouched and changes the second.
pub fn batch_norms_are_per_iteration() -> Result<String, String> {
    let x = input(8);
    for kind in ITERATIVE {
        let (mut store, block) = build(kind, 9)?;
        if block.bns.len() != 3 {
            return Err(format!(
                "block {kind}: {} batch-norm sets for 3 iterations",
                block.bns.len()
            ));
        }
        let before = iteration_outputs(&store, &block, &x)?;
        let g = block.bns[1][0].gamma;
        let bumped = store.value(g).map(|v| v * 3.0);
        store.set_value(g, bumped).map_err(err)?;
        let after = iteration_outputs(&store, &block, &x)?;
        if before[0] != after[0] || before[1] == after[1] {
            return Err(format!("block {kind}: iteration batch norms are coupled"));
        }
    }
    Ok("blocks 3-6".into())
}
