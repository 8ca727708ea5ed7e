use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use ecn_core::cascade::export_feature_maps;
use ecn_core::gradient_suite::{run_suite, TOLERANCE};
use ecn_core::published::{check_cell, published_counts};
use ecn_core::{plan_network, CascadeConfig, Ecn, Shape, Tensor};
use ecn_train::data::{Dataset, DatasetSpec, Normalizer, Split, PIXELS, SIDE};
use ecn_train::metrics::MetricsLog;
use ecn_train::{evaluate, Checkpoint, MetricsRecord, Trainer};

use crate::args::{AuditArgs, DatasetArgs, EvalArgs, GradcheckArgs, PlanArgs, TrainArgs, VisualizeArgs};
use crate::manifest::{self, ImageSource, PlanManifest, RunManifest, VisualizeManifest};

/// `Ok(false)` is a completed command whose checks failed.
pub type Outcome = anyhow::Result<bool>;

pub fn plan(args: &PlanArgs) -> Outcome {
    let config = match &args.manifest {
        Some(path) => {
            let table: toml::Table = manifest::read(path)?;
            let network = table
                .get("network")
                .cloned()
                .with_context(|| format!("{} has no [network] section", path.display()))?;
            network.try_into::<CascadeConfig>()?
        }
        None => args.network.config(None)?,
    };
    let plan = plan_network(&config)?;
    println!("{plan}");
    if let Some(dir) = &args.out {
        manifest::write(
            dir,
            &PlanManifest {
                tool_version: manifest::tool_version(),
                network: config,
                total_params: plan.total_params,
            },
        )?;
    }
    Ok(true)
}

pub fn audit(args: &AuditArgs) -> Outcome {
    let cells: Vec<_> = published_counts()?
        .into_iter()
        .filter(|c| args.group.is_empty() || args.group.contains(&c.group))
        .collect();
    if cells.is_empty() {
        bail!("no reference cells match {:?}", args.group);
    }
    let mut passed = 0;
    for cell in &cells {
        let outcome = check_cell(cell);
        let detail = match &outcome.audit {
            Ok(r) if r.total == cell.params => format!("{}", r.total),
            Ok(r) => format!(
                "expected {}, found {} (stem {}, layers {:?}, head {})",
                cell.params, r.total, r.stem, r.layers, r.head
            ),
            Err(e) => format!("expected {}: {e}", cell.params),
        };
        if outcome.passed() {
            passed += 1;
            if !args.quiet {
                println!("PASS {}: {detail}", cell.label());
            }
        } else {
            println!("FAIL {}: {detail}", cell.label());
        }
    }
    println!("{passed}/{} cells match", cells.len());
    Ok(passed == cells.len())
}

fn load_pair(spec: &DatasetSpec, evaluate_test: bool) -> anyhow::Result<(Dataset, Option<Dataset>)> {
    let train = spec.load(Split::Train)?;
    let test = if evaluate_test {
        Some(spec.load(Split::Test)?)
    } else {
        None
    };
    Ok((train, test))
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:04}.ckpt")
}

pub fn train(args: &TrainArgs, threads: usize) -> Outcome {
    if args.out.join(manifest::FILE).exists() {
        bail!("{} already holds a run", args.out.display());
    }
    let (dataset, network, train_cfg, checkpoint_every, recorded_norm) = match &args.manifest {
        Some(path) => {
            let m: RunManifest = manifest::read(path)?;
            (m.dataset, m.network, m.train, m.checkpoint_every, Some(m.normalizer))
        }
        None => {
            let dataset = args.data.spec(Some(args.seed))?.context("--dataset is required")?;
            let network = args.network.config(Some(dataset.class_count()?))?;
            (dataset, network, args.train_config(), args.checkpoint_every, None)
        }
    };
    train_cfg.validate()?;
    let (train_set, test_set) = load_pair(&dataset, train_cfg.eval_every > 0)?;
    let normalizer = Normalizer::fit(&train_set);
    if recorded_norm.is_some_and(|n| n != normalizer) {
        bail!("training data no longer matches the normalizer recorded in the manifest");
    }
    let plan = plan_network(&network)?;
    let run = RunManifest {
        tool_version: manifest::tool_version(),
        seed: train_cfg.seed,
        threads,
        checkpoint_every,
        dataset,
        network,
        train: train_cfg.clone(),
        normalizer,
    };
    manifest::write(&args.out, &run)?;
    let ckpt_dir = args.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let mut log = MetricsLog::open(&args.out)?;
    let mut trainer = Trainer::new(Ecn::new(plan, train_cfg.seed)?, train_cfg, normalizer)?;
    println!(
        "{} parameters, {} layers",
        trainer.model.plan.total_params,
        trainer.model.plan.depth()
    );
    trainer.run(&train_set, test_set.as_ref(), |t, r| {
        log.append(r)?;
        println!("{}", describe(r));
        if checkpoint_every > 0 && r.epoch % checkpoint_every == 0 {
            Checkpoint::capture(t).save(&ckpt_dir.join(checkpoint_name(r.epoch)))?;
        }
        Ok(())
    })?;
    let final_path = args.out.join("final.ckpt");
    Checkpoint::capture(&trainer).save(&final_path)?;
    println!("final checkpoint {}", final_path.display());
    Ok(true)
}

fn describe(r: &MetricsRecord) -> String {
    let mut s = format!(
        "epoch {} lr {:.6} train loss {:.4} acc {:.4}",
        r.epoch, r.lr, r.train_loss, r.train_acc
    );
    if let (Some(l), Some(a)) = (r.test_loss, r.test_acc) {
        s += &format!(" test loss {l:.4} acc {a:.4}");
    }
    s
}

/// Dataset from flags, else from the run manifest given or found near the checkpoint.
fn dataset_for(data: &DatasetArgs, manifest_path: Option<&Path>, checkpoint: &Path) -> anyhow::Result<DatasetSpec> {
    if let Some(spec) = data.spec(None)? {
        return Ok(spec);
    }
    let path = manifest_path
        .map(Path::to_path_buf)
        .or_else(|| manifest::find_for_checkpoint(checkpoint))
        .context("no --dataset given and no run manifest found next to the checkpoint")?;
    Ok(manifest::read::<RunManifest>(&path)?.dataset)
}

pub fn eval(args: &EvalArgs) -> Outcome {
    let trainer = Checkpoint::load(&args.checkpoint)?.restore()?;
    let spec = dataset_for(&args.data, args.manifest.as_deref(), &args.checkpoint)?;
    let data = spec.load(args.split)?;
    let batch = args.batch.unwrap_or(trainer.config.batch_size);
    let e = evaluate(&trainer.model, &trainer.normalizer, &data, batch)?;
    println!("loss {} accuracy {} samples {}", e.loss, e.accuracy, e.samples);
    Ok(true)
}

pub fn gradcheck(args: &GradcheckArgs) -> Outcome {
    let seeds: Vec<u64> = (1..=args.seeds).collect();
    let results = run_suite(&seeds)?;
    let mut worst: BTreeMap<&str, (f64, bool)> = BTreeMap::new();
    for r in &results {
        if args.verbose {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            println!("{status} {:.3e} seed {} {}", r.report.max_rel_error, r.seed, r.name);
        }
        let key = r.name.split(" in ").next().unwrap_or(&r.name);
        let e = worst.entry(key).or_insert((0.0, true));
        e.0 = e.0.max(r.report.max_rel_error);
        e.1 &= r.passed();
    }
    if !args.verbose {
        for (name, (err, ok)) in &worst {
            println!("{} {err:.3e} {name}", if *ok { "PASS" } else { "FAIL" });
        }
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!(
        "{}/{} cases within {TOLERANCE:e} over {} seeds",
        results.len() - failed,
        results.len(),
        seeds.len()
    );
    Ok(failed == 0)
}

fn normalized_image(bytes: &[u8], norm: &Normalizer) -> Tensor<f32> {
    let data = bytes
        .chunks_exact(SIDE * SIDE)
        .enumerate()
        .flat_map(|(c, plane)| plane.iter().map(move |&p| norm.apply(c, p)))
        .collect();
    Tensor::new(Shape::new(1, 3, SIDE, SIDE), data).expect("image geometry")
}

pub fn visualize(args: &VisualizeArgs) -> Outcome {
    let trainer = Checkpoint::load(&args.checkpoint)?.restore()?;
    let model = &trainer.model;
    if model.plan.config.input_hw != (SIDE, SIDE) {
        bail!("visualization expects a {SIDE}x{SIDE} network");
    }
    let (bytes, source) = match (&args.image, args.index) {
        (Some(path), _) => {
            let b = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            if b.len() != PIXELS {
                bail!("{} has {} bytes, expected {PIXELS}", path.display(), b.len());
            }
            (b, ImageSource::Raw { path: path.clone() })
        }
        (None, Some(index)) => {
            let spec = dataset_for(&args.data, args.manifest.as_deref(), &args.checkpoint)?;
            let data = spec.load(args.split)?;
            if index >= data.len() {
                bail!("index {index} outside the {} samples of the split", data.len());
            }
            let b = data.image(index).to_vec();
            (
                b,
                ImageSource::Dataset {
                    dataset: spec,
                    split: args.split,
                    index,
                },
            )
        }
        (None, None) => bail!("give --image or --index"),
    };
    let maps = model.feature_maps(&normalized_image(&bytes, &trainer.normalizer))?;
    fs::create_dir_all(&args.out)?;
    let files = export_feature_maps(&maps, 0, &args.out)?;
    for f in &files {
        println!("{}", f.display());
    }
    manifest::write(
        &args.out,
        &VisualizeManifest {
            tool_version: manifest::tool_version(),
            checkpoint: args.checkpoint.clone(),
            image: source,
            network: model.plan.config.clone(),
            files: files
                .iter()
                .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
        },
    )?;
    Ok(true)
}
