//! Command-line front end: train forests, classify datasets through the
//! cycle-accurate engine, print the clock-cycle formula table, and dump
//! per-cycle traces.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use rfhw::forest::{classify_one, first_latency, steady_interval, throughput_at, Variant};
use rfhw::majority::{
    issue_interval, iter_worst_case, max_count_popcount, n_iter_max, n_iter_min, n_pipe,
    IterMajority, VoteVector,
};
use rfhw::tree::{step_tree, tree_cycles, FeatureVector, MicroPhase, TreeUnitState};
use rfhw::trainer::{train_forest, TrainConfig};

#[derive(Parser)]
#[command(name = "rfhw", version, about = "Random-forest hardware inference engine model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Iterative,
    Pipelined,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Iterative => Variant::Iterative,
            VariantArg::Pipelined => Variant::Pipelined,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a random forest on an IDX dataset and write the forest file.
    Train {
        #[arg(long)]
        train_images: PathBuf,
        #[arg(long)]
        train_labels: PathBuf,
        /// Output forest file.
        #[arg(long)]
        out: PathBuf,
        /// Number of trees (at least 2).
        #[arg(long, default_value_t = 40)]
        trees: usize,
        /// Decision-node levels per tree.
        #[arg(long, default_value_t = 14)]
        levels: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of the training set bagged per tree, without replacement.
        #[arg(long, default_value_t = 0.75)]
        bagging: f64,
        /// Candidate coordinates drawn per split; defaults to ceil(sqrt(p)).
        #[arg(long)]
        features_per_split: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_samples_leaf: usize,
    },
    /// Classify an IDX dataset through the engine and print a report.
    Classify {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Iterative)]
        variant: VariantArg,
        /// Clock frequency used for the throughput projection, e.g. 303.4e6.
        #[arg(long, default_value_t = 303.4e6)]
        clock_hz: f64,
    },
    /// Print the clock-cycle formula table for a given engine shape.
    Cycles {
        #[arg(long)]
        trees: usize,
        #[arg(long)]
        levels: u32,
    },
    /// Dump a per-cycle trace of one classification (iterative variant).
    Trace {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        image_index: usize,
        /// Output trace file.
        #[arg(long)]
        dump: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train {
            train_images,
            train_labels,
            out,
            trees,
            levels,
            seed,
            bagging,
            features_per_split,
            min_samples_leaf,
        } => cmd_train(
            &train_images,
            &train_labels,
            &out,
            trees,
            levels,
            seed,
            bagging,
            features_per_split,
            min_samples_leaf,
        ),
        Command::Classify {
            forest,
            images,
            labels,
            variant,
            clock_hz,
        } => cmd_classify(&forest, &images, &labels, variant.into(), clock_hz),
        Command::Cycles { trees, levels } => cmd_cycles(trees, levels),
        Command::Trace {
            forest,
            images,
            image_index,
            dump,
        } => cmd_trace(&forest, &images, image_index, &dump),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    train_images: &Path,
    train_labels: &Path,
    out: &Path,
    trees: usize,
    levels: u32,
    seed: u64,
    bagging: f64,
    features_per_split: Option<usize>,
    min_samples_leaf: usize,
) -> anyhow::Result<()> {
    let data = rfhw::io::load_idx(train_images, train_labels).context("loading training data")?;
    let mut config = TrainConfig::new(trees, levels)
        .with_seed(seed)
        .with_bagging_fraction(bagging)
        .with_min_samples_leaf(min_samples_leaf);
    if let Some(m) = features_per_split {
        config = config.with_features_per_split(m);
    }
    config.validate(data.num_features())?;
    eprintln!(
        "training {} trees with {} levels on {} samples ({} features)",
        trees,
        levels,
        data.num_samples(),
        data.num_features()
    );
    let forest = train_forest(&data, &config)?;
    rfhw::io::save_forest(&forest, out).context("writing forest file")?;
    println!("[report]");
    println!("out={}", out.display());
    println!("trees={}", forest.num_trees());
    println!("levels={}", forest.levels());
    println!("classes={}", forest.num_classes());
    println!("features={}", forest.num_features());
    println!("seed={seed}");
    Ok(())
}

fn cmd_classify(
    forest_path: &Path,
    images: &Path,
    labels: &Path,
    variant: Variant,
    clock_hz: f64,
) -> anyhow::Result<()> {
    if clock_hz <= 0.0 {
        bail!("--clock-hz must be positive");
    }
    let forest = rfhw::io::load_forest(forest_path).context("loading forest")?;
    let data = rfhw::io::load_idx(images, labels).context("loading dataset")?;
    if data.num_features() != forest.num_features() as usize {
        bail!(
            "dataset has {} features, forest expects {}",
            data.num_features(),
            forest.num_features()
        );
    }
    if data.num_classes() > forest.num_classes() {
        bail!(
            "dataset labels reach class {}, forest only has {} classes",
            data.num_classes() - 1,
            forest.num_classes()
        );
    }

    let k = forest.num_classes() as usize;
    let mut confusion = vec![0u64; k * k];
    let mut correct = 0u64;
    let mut latency_min = u64::MAX;
    let mut latency_max = 0u64;
    let mut latency_sum = 0u64;
    for i in 0..data.num_samples() {
        let x = FeatureVector::new(data.row(i).to_vec());
        let trace = classify_one(&forest, &x, variant)?;
        let truth = data.label(i as u32) as usize;
        confusion[truth * k + trace.majority_output as usize] += 1;
        if trace.majority_output as usize == truth {
            correct += 1;
        }
        latency_min = latency_min.min(trace.first_latency);
        latency_max = latency_max.max(trace.first_latency);
        latency_sum += trace.first_latency;
    }
    let n = data.num_samples() as u64;
    let accuracy = correct as f64 / n as f64;
    let latency_mean = latency_sum as f64 / n as f64;
    let interval = steady_interval(forest.levels());
    let throughput = throughput_at(clock_hz, forest.levels());

    println!(
        "classified {} images: {} correct ({:.2}% accuracy)",
        n,
        correct,
        accuracy * 100.0
    );
    println!(
        "per-image completion latency: min {latency_min} / mean {latency_mean:.2} / max {latency_max} cycles"
    );
    println!(
        "streaming: first result after {} cycles, then one every {} cycles",
        first_latency(forest.num_trees(), forest.levels()),
        interval
    );
    println!(
        "throughput at {:.4} MHz: {} images/s",
        clock_hz / 1e6,
        throughput
    );
    println!("confusion matrix (rows = true class):");
    for t in 0..k {
        let mut row = String::new();
        for p in 0..k {
            write!(row, "{:6}", confusion[t * k + p])?;
        }
        println!("  {row}");
    }

    println!("[report]");
    println!("variant={}", match variant {
        Variant::Iterative => "iterative",
        Variant::Pipelined => "pipelined",
    });
    println!("images={n}");
    println!("correct={correct}");
    println!("accuracy={accuracy:.6}");
    println!("latency_min={latency_min}");
    println!("latency_max={latency_max}");
    println!("latency_mean={latency_mean:.4}");
    println!("first_latency={}", first_latency(forest.num_trees(), forest.levels()));
    println!("steady_interval={interval}");
    println!("clock_hz={clock_hz}");
    println!("throughput={throughput}");
    for t in 0..k {
        let row: Vec<String> = (0..k).map(|p| confusion[t * k + p].to_string()).collect();
        println!("confusion_{t}={}", row.join(" "));
    }
    Ok(())
}

fn cmd_cycles(trees: usize, levels: u32) -> anyhow::Result<()> {
    if trees < 2 {
        bail!("--trees must be at least 2");
    }
    if levels < 1 {
        bail!("--levels must be at least 1");
    }
    println!("engine shape: {trees} trees, {levels} decision levels");
    println!("  N_iter_min       {:>6}", n_iter_min(trees));
    println!("  N_iter_max       {:>6}", n_iter_max(trees));
    println!("  N_pipe           {:>6}", n_pipe(trees));
    println!("  issue interval   {:>6}", issue_interval(trees));
    println!("  first latency    {:>6}", first_latency(trees, levels));
    println!("  steady interval  {:>6}", steady_interval(levels));
    let worst = iter_worst_case(trees);
    if worst > n_iter_max(trees) {
        println!(
            "note: T={trees} is an all-ones pattern, so a class count can carry {} set bits;\n\
             the measured iterative worst case is {worst} cycles, one more than N_iter_max.",
            max_count_popcount(trees)
        );
    }
    println!("[report]");
    println!("trees={trees}");
    println!("levels={levels}");
    println!("n_iter_min={}", n_iter_min(trees));
    println!("n_iter_max={}", n_iter_max(trees));
    println!("n_pipe={}", n_pipe(trees));
    println!("issue_interval={}", issue_interval(trees));
    println!("first_latency={}", first_latency(trees, levels));
    println!("steady_interval={}", steady_interval(levels));
    println!("iter_worst_case={worst}");
    println!("exceeds_n_iter_max={}", u8::from(worst > n_iter_max(trees)));
    Ok(())
}

fn micro_phase_name(phase: MicroPhase) -> &'static str {
    match phase {
        MicroPhase::FetchNode => "fetch_node",
        MicroPhase::FetchFeature => "fetch_feature",
        MicroPhase::Compare => "compare",
        MicroPhase::EmitLeaf => "emit_leaf",
        MicroPhase::Done => "done",
    }
}

fn cmd_trace(
    forest_path: &Path,
    images: &Path,
    image_index: usize,
    dump: &Path,
) -> anyhow::Result<()> {
    let forest = rfhw::io::load_forest(forest_path).context("loading forest")?;
    let image_bytes = fs::read(images).context("reading image file")?;
    let data = load_images_only(&image_bytes, images)?;
    if image_index >= data.len() {
        bail!("image index {image_index} out of range ({} images)", data.len());
    }
    let x = FeatureVector::new(data[image_index].clone());
    if x.num_features() != forest.num_features() as usize {
        bail!(
            "image has {} features, forest expects {}",
            x.num_features(),
            forest.num_features()
        );
    }

    let mut out = String::new();
    let tree_phase = tree_cycles(forest.levels());
    let mut units: Vec<TreeUnitState> =
        forest.trees().iter().map(|_| TreeUnitState::new()).collect();
    for cycle in 1..=tree_phase {
        let phase = micro_phase_name(units[0].micro_phase());
        let level = units[0].level();
        let addr = units[0].node_address();
        writeln!(
            out,
            "cycle={cycle:04} phase=tree.{phase} level={level} addr={addr:04x}"
        )?;
        for (unit, tree) in units.iter_mut().zip(forest.trees()) {
            step_tree(unit, tree, &x)?;
        }
    }
    let votes: Vec<u16> = units
        .iter()
        .map(|u| u16::from(u.output().expect("tree bank finished")))
        .collect();
    let votes = VoteVector::new(votes, forest.num_classes())?;
    let mut majority = IterMajority::new(&votes)?;
    majority.enable_trace();
    while !majority.output_valid() {
        majority.step()?;
    }
    for (i, line) in majority.trace().iter().enumerate() {
        let rest = line.split_once(' ').map(|(_, r)| r).unwrap_or(line);
        writeln!(out, "cycle={:04} {}", tree_phase + i as u64 + 1, rest)?;
    }
    fs::write(dump, &out).context("writing trace file")?;
    println!("[report]");
    println!("dump={}", dump.display());
    println!("lines={}", out.lines().count());
    println!("class={}", majority.output().expect("majority finished"));
    println!("total_cycles={}", tree_phase + majority.cycle());
    Ok(())
}

/// Parse just the image side of an IDX pair (the trace command needs no
/// labels).
fn load_images_only(bytes: &[u8], path: &Path) -> anyhow::Result<Vec<Vec<u8>>> {
    if bytes.len() < 16 {
        bail!("{}: truncated IDX header", path.display());
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if magic != 0x0000_0803 {
        bail!("{}: bad IDX image magic {magic:#010x}", path.display());
    }
    let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rows = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_be_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        bail!(
            "{}: expected {expected} bytes, found {}",
            path.display(),
            bytes.len()
        );
    }
    Ok(bytes[16..]
        .chunks(rows * cols)
        .map(|c| c.to_vec())
        .collect())
}
