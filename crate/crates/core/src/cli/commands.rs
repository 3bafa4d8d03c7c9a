use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    ArchArgs, CliError, CliResult, CycleChoice, EvalArgs, GenArgs, GraphArgs, ParamsArgs, PoissonArgs, Precision,
    ReproArgs, SmootherChoice, Subset, TrainArgs, TrainOptions, EXIT_DATA, EXIT_MISMATCH, EXIT_USAGE,
};
use crate::cyclegraph::{
    build_graph, count_parameters_with, emit_dot, published_target, ArchSpec, CountConvention, Family, ParamRow,
    PARAMS_CSV_HEADER,
};
use crate::mgsolve::{solve, CycleKind, Grid, PoissonProblem, ResidualHistory, SmootherConfig};
use crate::segmetrics::{evaluate_classes, summarize, write_metrics_csv, LabelMask, MetricRow};
use crate::segnet::{
    prepare, split_indices, train, AdamConfig, CheckpointManifest, Example, LossCurve, Model, TrainConfig,
    CHECKPOINT_MANIFEST,
};
use crate::synthdata::{generate, load_dataset, DatasetManifest, StoredCase};
use crate::tensorad::{BnMode, Scalar};
use crate::Error;

const PREDICT_BATCH: usize = 8;

#[derive(Serialize)]
struct RunRecord<'a, A: Serialize> {
    subcommand: &'a str,
    seed: u64,
    args: &'a A,
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::new(super::EXIT_FAILURE, format!("cannot create {}: {e}", dir.display())))
}

fn write_record<A: Serialize>(dir: &Path, name: &str, seed: u64, args: &A) -> CliResult<()> {
    let record = RunRecord {
        subcommand: name.split('_').next().unwrap_or(name),
        seed,
        args,
    };
    let text = serde_json::to_string_pretty(&record).map_err(Error::from)? + "\n";
    fs::write(dir.join(format!("run_{name}.json")), text)?;
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn grouped(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::new(EXIT_USAGE, msg)
}

fn arch_spec(arch: &ArchArgs) -> ArchSpec {
    let spec = ArchSpec::new(arch.family, arch.convention.grids(arch.depth));
    spec.with_policy(arch.policy.unwrap_or(spec.channel_policy))
}

fn arch_tag(family: Family, depth: usize) -> String {
    format!("{family}_d{depth}")
}

// ---------------------------------------------------------------- poisson

pub fn cmd_poisson(args: &PoissonArgs) -> CliResult<Vec<(CycleKind, ResidualHistory)>> {
    if !matches!(args.dim, 1 | 2) {
        return Err(usage(format!("--dim must be 1 or 2, got {}", args.dim)));
    }
    let grid = Grid::new(args.dim, args.n)?;
    let config = match args.smoother {
        SmootherChoice::GaussSeidel => SmootherConfig::gauss_seidel(args.pre_sweeps, args.post_sweeps),
        SmootherChoice::Jacobi => SmootherConfig::jacobi(args.omega, args.pre_sweeps, args.post_sweeps),
    };
    config.validate()?;
    let kinds: Vec<CycleKind> = match args.cycle {
        CycleChoice::V => vec![CycleKind::V],
        CycleChoice::W => vec![CycleKind::W],
        CycleChoice::Fmg => vec![CycleKind::Fmg],
        CycleChoice::All => CycleKind::ALL.to_vec(),
    };
    create_out(&args.out)?;
    let problem = PoissonProblem::sine(grid);
    let mut results = Vec::new();
    for kind in kinds {
        let outcome = solve(&problem, kind, &config, args.tol, args.max_cycles)?;
        let path = args.out.join(format!("residuals_{kind}.csv"));
        write_file(&path, |w| outcome.history.write_csv(w))?;
        let last = outcome.history.last().expect("history starts at cycle 0");
        println!(
            "{kind:>3}: {} cycles, {:.1} work units, residual {:.3e}{}",
            last.cycle,
            last.work_units,
            last.residual_l2,
            if outcome.converged { "" } else { " (tolerance not reached)" }
        );
        results.push((kind, outcome.history));
    }
    write_record(&args.out, "poisson", args.seed, args)?;
    Ok(results)
}

// ---------------------------------------------------------------- params

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsReport {
    pub row: ParamRow,
    pub grids: usize,
    pub convention: CountConvention,
    /// Published count for this configuration, if there is one.
    pub target: Option<u64>,
}

impl ParamsReport {
    pub fn relative_error(&self, expected: u64) -> f64 {
        (self.row.params as f64 - expected as f64).abs() / expected as f64
    }
}

pub fn cmd_params(args: &ParamsArgs) -> CliResult<ParamsReport> {
    let spec = arch_spec(&args.arch)
        .with_dims(args.dims)
        .with_channels(args.in_channels, args.out_channels)
        .with_base(args.base);
    let convention = args.arch.convention;
    let graph = build_graph(&spec)?;
    let params = count_parameters_with(&graph, convention);
    let published_setup = convention == CountConvention::Published
        && spec.spatial_dims == 3
        && (spec.in_channels, spec.out_channels, spec.base_features) == (4, 4, 32)
        && spec.channel_policy == ArchSpec::default_policy(spec.family);
    let report = ParamsReport {
        row: ParamRow {
            family: spec.family,
            depth: args.arch.depth,
            dims: spec.spatial_dims,
            policy: spec.channel_policy.name().into(),
            params,
        },
        grids: spec.depth,
        convention,
        target: published_setup.then(|| published_target(spec.family, args.arch.depth)).flatten(),
    };

    println!(
        "{} depth {} ({} grids, {}D, {}, {} counting): {} parameters",
        spec.family,
        args.arch.depth,
        spec.depth,
        spec.spatial_dims,
        spec.channel_policy,
        convention,
        grouped(params)
    );
    if let Some(t) = report.target {
        println!(
            "published: {} (difference {:+}, {:+.2}%)",
            grouped(t),
            params as i64 - t as i64,
            100.0 * (params as f64 - t as f64) / t as f64
        );
    }

    create_out(&args.out)?;
    let csv = args.out.join(&args.csv);
    let fresh = fs::metadata(&csv).map_or(true, |m| m.len() == 0);
    let mut f = OpenOptions::new().create(true).append(true).open(&csv)?;
    if fresh {
        writeln!(f, "{PARAMS_CSV_HEADER}")?;
    }
    writeln!(f, "{}", report.row.csv_line())?;
    write_record(&args.out, "params", args.seed, args)?;

    if let Some(expected) = args.expect {
        if params != expected && !(report.relative_error(expected) <= args.rel_tol) {
            return Err(CliError::new(
                EXIT_MISMATCH,
                format!(
                    "expected {} parameters, counted {} (relative error {:.3}%)",
                    grouped(expected),
                    grouped(params),
                    100.0 * report.relative_error(expected)
                ),
            ));
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------- graph

pub fn cmd_graph(args: &GraphArgs) -> CliResult<PathBuf> {
    let spec = arch_spec(&args.arch)
        .with_dims(args.dims)
        .with_channels(args.in_channels, args.out_channels)
        .with_base(args.base);
    let graph = build_graph(&spec)?;
    create_out(&args.out)?;
    let path = args.out.join(format!("graph_{}.dot", arch_tag(spec.family, args.arch.depth)));
    fs::write(&path, emit_dot(&graph))?;
    write_record(&args.out, "graph", args.seed, args)?;
    println!("{} nodes, {} edges -> {}", graph.len(), graph.edges().len(), path.display());
    Ok(path)
}

// ---------------------------------------------------------------- gen

pub fn cmd_gen(args: &GenArgs) -> CliResult<DatasetManifest> {
    let manifest = generate(args.count, args.size, args.seed, &args.out)?;
    write_record(&args.out, "gen", args.seed, args)?;
    println!(
        "{} cases of {}x{} (seed {}) -> {}",
        manifest.cases.len(),
        manifest.size,
        manifest.size,
        manifest.seed,
        args.out.display()
    );
    Ok(manifest)
}

// ---------------------------------------------------------------- train

fn load_data(dir: &Path) -> CliResult<(DatasetManifest, Vec<StoredCase>)> {
    load_dataset(dir).map_err(|e| {
        CliError::data(match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("dataset {}: {io}", dir.display()))),
            other => other,
        })
    })
}

fn check_compatible(spec: &ArchSpec, manifest: &DatasetManifest) -> CliResult<()> {
    let multiple = 1usize << (spec.depth - 1);
    if !manifest.size.is_multiple_of(multiple) {
        return Err(CliError::new(
            EXIT_DATA,
            format!("{}x{} images cannot pass through {} grids (need a multiple of {multiple})", manifest.size, manifest.size, spec.depth),
        ));
    }
    if spec.in_channels != 1 || spec.out_channels != usize::from(manifest.num_classes) || spec.spatial_dims != 2 {
        return Err(CliError::new(
            EXIT_DATA,
            format!(
                "network maps {} channels to {} classes in {}D; the dataset has 1-channel 2D images with {} classes",
                spec.in_channels, spec.out_channels, spec.spatial_dims, manifest.num_classes
            ),
        ));
    }
    Ok(())
}

fn train_config(options: &TrainOptions, seed: u64) -> TrainConfig {
    TrainConfig {
        adam: AdamConfig {
            learning_rate: options.lr,
            ..AdamConfig::default()
        },
        batch_size: options.batch_size,
        epochs: options.epochs,
        seed,
        validation_fraction: options.val_fraction,
        augment: !options.no_augment,
    }
}

fn train_with<T: Scalar>(
    spec: &ArchSpec,
    cases: &[StoredCase],
    config: &TrainConfig,
    tag: &str,
    checkpoint: &Path,
) -> CliResult<LossCurve> {
    let mut model = Model::<T>::new(spec, config.seed)?;
    let examples: Vec<Example<T>> = prepare(cases, spec.out_channels)?;
    let epochs = config.epochs;
    let curve = train(&mut model, &examples, config, |e| {
        println!(
            "{tag} epoch {:>3}/{epochs}: train {:.5} val {:.5}",
            e.epoch, e.train_loss, e.val_loss
        );
    })?;
    model.save(checkpoint)?;
    Ok(curve)
}

/// Trains one network; returns the loss curve and the checkpoint directory.
pub fn cmd_train(args: &TrainArgs) -> CliResult<(LossCurve, PathBuf)> {
    let spec = arch_spec(&args.arch).with_base(args.options.base);
    spec.validate()?;
    let config = train_config(&args.options, args.seed);
    config.validate()?;
    let (manifest, cases) = load_data(&args.data)?;
    check_compatible(&spec, &manifest)?;

    create_out(&args.out)?;
    let tag = arch_tag(spec.family, args.arch.depth);
    let checkpoint = args.out.join(format!("checkpoint_{tag}"));
    let curve = match args.options.precision {
        Precision::F32 => train_with::<f32>(&spec, &cases, &config, &tag, &checkpoint)?,
        Precision::F64 => train_with::<f64>(&spec, &cases, &config, &tag, &checkpoint)?,
    };
    write_file(&args.out.join(format!("curve_{tag}.csv")), |w| curve.write_csv(w))?;
    write_record(&args.out, &format!("train_{tag}"), args.seed, args)?;
    Ok((curve, checkpoint))
}

// ---------------------------------------------------------------- eval

fn predict_all<T: Scalar>(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    cases: &[&StoredCase],
) -> CliResult<Vec<Vec<u8>>> {
    let mut model = Model::<T>::load(checkpoint).map_err(CliError::data)?;
    check_compatible(model.spec(), manifest)?;
    let mode = if model.batch_norms().iter().all(|b| b.stats.initialized) {
        BnMode::Eval
    } else {
        BnMode::BatchStats
    };
    let owned: Vec<StoredCase> = cases.iter().map(|&c| c.clone()).collect();
    let examples: Vec<Example<T>> = prepare(&owned, usize::from(manifest.num_classes))?;
    let mut labels = Vec::with_capacity(cases.len());
    for chunk in examples.chunks(PREDICT_BATCH) {
        let refs: Vec<&Example<T>> = chunk.iter().collect();
        let (x, _) = crate::segnet::batch(&refs, None)?;
        labels.extend(model.predict(&x, mode)?);
    }
    Ok(labels)
}

/// Scores a checkpoint; returns the per-case rows followed by the mean and
/// standard-deviation rows.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<Vec<MetricRow>> {
    let manifest_path = args.checkpoint.join(CHECKPOINT_MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::new(EXIT_DATA, format!("checkpoint {}: {e}", manifest_path.display())))?;
    let checkpoint: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_DATA, format!("checkpoint {}: {e}", manifest_path.display())))?;
    let (manifest, cases) = load_data(&args.data)?;
    check_compatible(&checkpoint.spec, &manifest)?;

    let indices: Vec<usize> = match args.subset {
        Subset::All => (0..cases.len()).collect(),
        Subset::Validation => {
            if !(args.val_fraction > 0.0 && args.val_fraction < 1.0) {
                return Err(usage("--val-fraction must lie strictly between 0 and 1"));
            }
            split_indices(cases.len(), args.seed, args.val_fraction).validation
        }
    };
    let selected: Vec<&StoredCase> = indices.iter().map(|&i| &cases[i]).collect();
    let predictions = match checkpoint.precision.as_str() {
        "f32" => predict_all::<f32>(&args.checkpoint, &manifest, &selected)?,
        "f64" => predict_all::<f64>(&args.checkpoint, &manifest, &selected)?,
        other => return Err(CliError::new(EXIT_DATA, format!("unknown checkpoint precision `{other}`"))),
    };

    let mut rows = Vec::new();
    for (case, labels) in selected.iter().zip(predictions) {
        let truth = &case.labels;
        let pred = LabelMask::new(truth.shape(), labels, truth.spacing(), truth.num_classes())?;
        for metrics in evaluate_classes(&pred, truth, &manifest.class_map).map_err(CliError::data)? {
            rows.push(MetricRow {
                case_id: case.case_id.clone(),
                metrics,
            });
        }
    }
    let summary = summarize(&rows);
    rows.extend(summary.iter().cloned());

    create_out(&args.out)?;
    let path = args.out.join(&args.name);
    write_file(&path, |w| write_metrics_csv(&rows, w))?;
    let record_name = format!("eval_{}", args.name.trim_end_matches(".csv"));
    write_record(&args.out, &record_name, args.seed, args)?;
    for r in summary.iter().filter(|r| r.case_id == "mean") {
        println!("{} mean: {}", r.metrics.class, r.csv_line());
    }
    println!("{} cases -> {}", selected.len(), path.display());
    Ok(rows)
}

// ---------------------------------------------------------------- repro

pub const SUMMARY_CSV_HEADER: &str = "family,depth,seed,epochs,train_loss,val_loss,dice_whole,dice_core,dice_inner";

#[derive(Debug, Clone, PartialEq)]
pub struct ReproSummary {
    pub curves: Vec<(Family, LossCurve)>,
    pub metrics: Vec<(Family, Vec<MetricRow>)>,
    pub residuals: Vec<(CycleKind, ResidualHistory)>,
}

fn mean_dice(rows: &[MetricRow], class: &str) -> Option<f64> {
    rows.iter()
        .find(|r| r.case_id == "mean" && r.metrics.class == class)
        .map(|r| r.metrics.dice)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| crate::segmetrics::UNDEFINED.to_string(), |x| x.to_string())
}

/// Runs the whole toy comparison into one directory.
pub fn cmd_repro(args: &ReproArgs) -> CliResult<ReproSummary> {
    create_out(&args.out)?;
    let data = args.out.join("data");
    cmd_gen(&GenArgs {
        count: args.count,
        size: args.size,
        seed: args.seed,
        out: data.clone(),
    })?;

    let mut curves = Vec::new();
    let mut metrics = Vec::new();
    for family in Family::ALL {
        let arch = ArchArgs {
            family,
            depth: args.depth,
            convention: CountConvention::Published,
            policy: None,
        };
        let (curve, checkpoint) = cmd_train(&TrainArgs {
            arch,
            data: data.clone(),
            options: args.options.clone(),
            out: args.out.clone(),
            seed: args.seed,
        })?;
        curves.push((family, curve));
        let rows = cmd_eval(&EvalArgs {
            checkpoint,
            data: data.clone(),
            subset: Subset::Validation,
            val_fraction: args.options.val_fraction,
            name: format!("metrics_{}.csv", arch_tag(family, args.depth)),
            out: args.out.clone(),
            seed: args.seed,
        })?;
        metrics.push((family, rows));
    }

    let residuals = cmd_poisson(&PoissonArgs {
        dim: 2,
        n: args.n,
        cycle: CycleChoice::All,
        smoother: SmootherChoice::GaussSeidel,
        omega: 2.0 / 3.0,
        pre_sweeps: 2,
        post_sweeps: 2,
        tol: 1e-12,
        max_cycles: args.max_cycles,
        out: args.out.clone(),
        seed: args.seed,
    })?;

    write_file(&args.out.join("summary.csv"), |w| {
        writeln!(w, "{SUMMARY_CSV_HEADER}")?;
        for ((family, curve), (_, rows)) in curves.iter().zip(&metrics) {
            let last = curve.last();
            writeln!(
                w,
                "{family},{},{},{},{},{},{},{},{}",
                args.depth,
                args.seed,
                args.options.epochs,
                opt_cell(last.map(|e| e.train_loss)),
                opt_cell(last.map(|e| e.val_loss)),
                opt_cell(mean_dice(rows, "whole")),
                opt_cell(mean_dice(rows, "core")),
                opt_cell(mean_dice(rows, "inner")),
            )?;
        }
        Ok(())
    })?;
    write_record(&args.out, "repro", args.seed, args)?;
    Ok(ReproSummary {
        curves,
        metrics,
        residuals,
    })
}
