use std::fs;
use std::path::{Path, PathBuf};

use calfuse::calibration::CalibrationReport;
use calfuse::fusion::{FusionConfig, FusionMethod};
use calfuse::metrics::EVAL_CSV_HEADER;
use calfuse::overlay::overlay_rgb;
use calfuse::pipeline::{
    calibrate_all, comparison_table, evaluate, load_eval_reports, load_prediction_dir, run_fusion,
    EvalSource, FusionRun,
};
use calfuse::synth::{gen_dataset, SynthSpec};
use calfuse::tensor_store::{load_manifest, read_mask, write_rgb_png, Split};
use calfuse::{Error, Result};

use crate::{CalibrateArgs, Command, EvaluateArgs, FuseArgs, OverlayArgs, ReportArgs, SynthArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => synth(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Fuse(args) => fuse(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Overlay(args) => overlay(args),
        Command::Report(args) => report(args),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Writes every `(path, bytes)` pair, creating parent directories.
fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    for (path, bytes) in files {
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        fs::write(path, bytes).map_err(io_err(path))?;
    }
    Ok(())
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config("--bins must be at least 1".into()));
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            SynthSpec::from_json(&text).map_err(|e| match e {
                Error::Json(_) => Error::Config(format!("{}: {e}", path.display())),
                other => other,
            })?
        }
        None => SynthSpec::five_model_pool(args.seed.unwrap_or(42)),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let manifest = gen_dataset(&spec, &args.out)?;
    println!(
        "wrote {} images x {} models; manifest {}",
        spec.images.total(),
        spec.models.len(),
        manifest.display()
    );
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    check_bins(args.bins)?;
    let manifest = load_manifest(&args.manifest)?;
    let reports = calibrate_all(&manifest, args.split, args.bins)?;
    let mut files = Vec::new();
    for r in &reports {
        files.push((
            args.out.join(format!("{}.calibration.json", r.model_id)),
            r.to_json()?.into_bytes(),
        ));
        files.push((
            args.out.join(format!("{}.reliability.csv", r.model_id)),
            r.reliability_csv().into_bytes(),
        ));
    }
    create_dir(&args.out)?;
    write_all(&files)?;
    for r in &reports {
        println!(
            "{}: ece {:.4} mce {:.4} over {} pixels",
            r.model_id, r.ece, r.mce, r.n
        );
    }
    Ok(())
}

fn load_reports(dir: &Path, members: &[String]) -> Result<Vec<CalibrationReport>> {
    members
        .iter()
        .map(|id| {
            let path = dir.join(format!("{id}.calibration.json"));
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            CalibrationReport::from_json(&text).map_err(|e| Error::InFile {
                path,
                source: Box::new(e),
            })
        })
        .collect()
}

fn fuse(args: FuseArgs) -> Result<()> {
    check_bins(args.bins)?;
    let manifest = load_manifest(&args.manifest)?;
    let members = args
        .members
        .clone()
        .unwrap_or_else(|| manifest.models.iter().map(|m| m.model_id.clone()).collect());
    for id in &members {
        manifest
            .model(id)
            .map_err(|_| Error::Config(format!("member `{id}` is not in the manifest")))?;
    }
    let mut methods: Vec<FusionMethod> = Vec::new();
    for &m in &args.method {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let reports = if methods.iter().any(|m| m.needs_calibration()) {
        match &args.calibration {
            Some(dir) => load_reports(dir, &members)?,
            None => calibrate_all(&manifest, Split::Validation, args.bins)?,
        }
    } else {
        Vec::new()
    };

    let runs: Vec<FusionRun> = methods
        .iter()
        .map(|&method| {
            let config = FusionConfig {
                method,
                members: members.clone(),
                split: args.split,
                bins: args.bins,
                epsilon: args.epsilon,
            };
            run_fusion(&manifest, config, &reports)
        })
        .collect::<Result<_>>()?;

    let mut files = Vec::new();
    for run in &runs {
        let dir = args.out.join(run.plan.config.method.as_str());
        for (id, fused) in &run.images {
            files.push((dir.join(format!("{id}.png")), fused.mask.encode_png()?));
            files.push((dir.join(format!("{id}.cbpm")), fused.probs.encode()));
        }
        files.push((
            dir.join("fusion_log.json"),
            run.plan.log().to_json()?.into_bytes(),
        ));
    }
    create_dir(&args.out)?;
    write_all(&files)?;
    for run in &runs {
        println!(
            "{}: {} images from {} members",
            run.plan.config.method,
            run.images.len(),
            run.plan.members.len()
        );
    }
    Ok(())
}

fn default_name(args: &EvaluateArgs) -> Result<String> {
    if let Some(name) = &args.name {
        return Ok(name.clone());
    }
    if let Some(model) = &args.model {
        return Ok(model.clone());
    }
    args.predictions
        .as_deref()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::Config("cannot derive a report name; pass --name".into()))
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    check_bins(args.bins)?;
    let name = default_name(&args)?;
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(Error::Config(format!("invalid report name `{name}`")));
    }
    let manifest = load_manifest(&args.manifest)?;
    let source = match (&args.model, &args.predictions) {
        (Some(model), None) => EvalSource::Model(model),
        (None, Some(dir)) => EvalSource::Masks(load_prediction_dir(&manifest, args.split, dir)?),
        _ => {
            return Err(Error::Config(
                "pass exactly one of --model and --predictions".into(),
            ))
        }
    };
    let report = evaluate(
        &manifest,
        args.split,
        &name,
        source,
        args.positive_class,
        args.bins,
    )?;
    let csv = format!("{EVAL_CSV_HEADER}{}", report.csv_rows());
    let files = vec![
        (
            args.out.join(format!("{name}.eval.json")),
            report.to_json()?.into_bytes(),
        ),
        (args.out.join(format!("{name}.eval.csv")), csv.into_bytes()),
    ];
    create_dir(&args.out)?;
    write_all(&files)?;
    let cell = |k: &str| calfuse::metrics::percent_cell(report.metric(k));
    println!(
        "{name}: accuracy {} f1 {} specificity {} over {} images",
        cell("accuracy"),
        cell("f1"),
        cell("specificity"),
        report.images.len()
    );
    Ok(())
}

fn overlay(args: OverlayArgs) -> Result<()> {
    let pred = read_mask(&args.pred)?;
    let truth = read_mask(&args.truth)?;
    let rgb = overlay_rgb(&pred, &truth, args.positive_class)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_rgb_png(pred.width(), pred.height(), &rgb, &args.out)
}

fn report(args: ReportArgs) -> Result<()> {
    let reports = load_eval_reports(&args.evals)?;
    if reports.is_empty() {
        return Err(Error::Config(format!(
            "no *.eval.json files in {}",
            args.evals.display()
        )));
    }
    let (text, csv) = comparison_table(&reports);
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_all(&[
            (out.join("comparison.txt"), text.clone().into_bytes()),
            (out.join("comparison.csv"), csv.into_bytes()),
        ])?;
    }
    print!("{text}");
    Ok(())
}
