use ecn_core::blocks::BlockKind;
use ecn_core::cascade::{audit_params, plan_network, CascadeConfig, Ecn, Scale};
use ecn_core::published::{check_cell, published_counts};
use ecn_core::{Forward, Mode, Shape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(block: BlockKind, init: usize, scale: &str, classes: usize) -> CascadeConfig {
    CascadeConfig::new(block, init, scale.parse().unwrap(), classes)
}

#[test]
fn published_parameter_counts_are_reproduced() {
    let rows = published_counts().unwrap();
    assert_eq!(rows.len(), 118);
    for row in &rows {
        let outcome = check_cell(row);
        assert!(outcome.passed(), "{}: {:?}", row.label(), outcome.audit);
    }
}

#[test]
fn depths_for_the_three_scales() {
    let depth = |s| plan_network(&config(BlockKind::Single, 16, s, 10)).unwrap().depth();
    assert_eq!([depth("1/2"), depth("3/4"), depth("7/8")], [3, 6, 12]);
}

#[test]
fn worked_totals() {
    let total = |b: u8, init, s, cls| {
        plan_network(&config(b.try_into().unwrap(), init, s, cls))
            .unwrap()
            .total_params
    };
    assert_eq!(total(1, 16, "1/2", 10), 47482);
    assert_eq!(total(4, 16, "3/4", 100), 220180);
    assert_eq!(total(6, 64, "3/4", 10), 421770);
    assert_eq!(total(1, 16, "7/8", 10), 195082);
    assert_eq!(total(3, 16, "1/2", 10) - total(1, 16, "1/2", 10), 384);
    assert_eq!(total(1, 16, "1/2", 100) - total(1, 16, "1/2", 10), 65 * 90);
    assert_eq!(total(4, 16, "1/2", 10) - total(2, 16, "1/2", 10), 960);
}

#[test]
fn instantiated_counts_match_the_plan_across_the_sweep() {
    for block in BlockKind::ALL {
        for init in [16, 32, 64] {
            for scale in ["1/2", "3/4", "7/8"] {
                for classes in [10, 100] {
                    let plan = plan_network(&config(block, init, scale, classes)).unwrap();
                    let model = Ecn::<f32>::new(plan, 1).unwrap();
                    let report = audit_params(&model.plan, &model.store).unwrap();
                    assert_eq!(report.total, model.store.trainable_count());
                    assert_eq!(report.total, model.plan.total_params);
                }
            }
        }
    }
}

#[test]
fn level_bookkeeping_for_an_eight_channel_network() {
    let mut c = config(BlockKind::Single, 8, "3/4", 10);
    c.growth = Some(8);
    c.input_hw = (24, 24);
    let plan = plan_network(&c).unwrap();
    assert_eq!(plan.level_ends(), [8, 16, 24, 32, 40, 48]);
    let model = Ecn::<f32>::new(plan, 0).unwrap();
    let image = Tensor::randn(Shape::new(1, 3, 24, 24), 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    let dir = tempfile::tempdir().unwrap();
    let maps = model.feature_maps(&image).unwrap();
    let files = ecn_core::cascade::export_feature_maps(&maps, 0, dir.path()).unwrap();
    assert_eq!(files.len(), 6);
    for (i, m) in maps.iter().enumerate() {
        let img = ecn_core::cascade::render_grid(m, 0).unwrap();
        let (h, w) = (m.tensor.shape().h, m.tensor.shape().w);
        assert_eq!(img.height, (i + 1) * h + i, "rows in file {}", i + 1);
        assert_eq!(img.width, 8 * w + 7);
    }
}

#[test]
fn zero_image_renders_flat_gray() {
    let mut c = config(BlockKind::RecursiveSep, 8, "1/2", 10);
    c.input_hw = (16, 16);
    let model = Ecn::<f32>::new(plan_network(&c).unwrap(), 0).unwrap();
    let maps = model.feature_maps(&Tensor::zeros(Shape::new(1, 3, 16, 16))).unwrap();
    for m in &maps {
        let img = ecn_core::cascade::render_grid(m, 0).unwrap();
        let (h, w) = (m.tensor.shape().h, m.tensor.shape().w);
        for y in (0..img.height).filter(|y| (y + 1) % (h + 1) != 0) {
            for x in (0..img.width).filter(|x| (x + 1) % (w + 1) != 0) {
                assert_eq!(img.get(x, y), ecn_core::cascade::visualize::FLAT_GRAY);
            }
        }
    }
}

#[test]
fn untrained_first_batch_loss_is_near_chance() {
    for (block, classes) in [(BlockKind::Single, 10), (BlockKind::RecursiveQuad, 100)] {
        let model = Ecn::<f32>::new(plan_network(&config(block, 16, "1/2", classes)).unwrap(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut total = 0.0;
        for b in 0..100 {
            let x = Tensor::randn(Shape::new(4, 3, 32, 32), 1.0, &mut rng);
            let labels: Vec<usize> = (0..4).map(|i| (b * 4 + i) % classes).collect();
            let mut f = Forward::new(&model.store, Mode::Train, 1e-5);
            let xv = f.graph.constant(x);
            let logits = model.forward(&mut f, xv).unwrap();
            let loss = f.graph.softmax_cross_entropy(logits, &labels).unwrap();
            total += f.graph.value(loss).data()[0] as f64;
        }
        let mean = total / 100.0;
        let chance = (classes as f64).ln();
        assert!(
            (mean - chance).abs() < 0.2 * chance,
            "{classes} classes: {mean} vs {chance}"
        );
    }
}

fn brute_depth(input: usize, p: u32, q: u32, threshold: usize) -> usize {
    let mut e = input;
    let mut d = 0;
    loop {
        e = e * p as usize / q as usize;
        if e < threshold {
            return d;
        }
        d += 1;
    }
}

proptest! {
    #[test]
    fn depth_is_the_floor_chain_length(q in 2u32..20, p_frac in 0.0f64..1.0, input in 1usize..=64, threshold in 1usize..8) {
        let p = 1 + ((q - 1) as f64 * p_frac) as u32;
        prop_assume!(p < q);
        let mut c = CascadeConfig::new(BlockKind::Single, 8, Scale::new(p, q).unwrap(), 10);
        c.input_hw = (input, input);
        c.stop_threshold_px = threshold;
        let expected = brute_depth(input, p, q, threshold);
        match plan_network(&c) {
            Ok(plan) => {
                prop_assert_eq!(plan.depth(), expected);
                let last = plan.layers.last().unwrap().out_hw.0;
                prop_assert!(last >= threshold);
                prop_assert!(c.scale.apply(last) < threshold);
            }
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }
}
