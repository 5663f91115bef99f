use std::fs;
use std::path::Path;

use gisr_core::degradation::{synth_scene_dataset_with, GuidedPair};
use gisr_core::gradcheck_suite::run_suite;
use gisr_core::io::{load_dataset, save_dataset, RunConfig, TensorContainer};
use gisr_core::madunet::{MadUNet, ModelConfig};
use gisr_core::metrics::MetricReport;
use gisr_core::training::{model_from_container, split_dataset, LogRow, Trainer};
use gisr_tensor::{bicubic_resize, no_grad, DType, Element, Tensor};

use crate::export::{read_image, squared_error_map, write_heat_map, write_png};
use crate::{
    Cli, CliError, CliResult, Command, EvalArgs, GradcheckArgs, InferArgs, Precision, Split,
    SynthArgs, TrainArgs,
};

const METRIC_NAMES: [&str; 7] = ["psnr", "ssim", "sam", "ergas", "scc", "q", "rmse"];

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.data.seed = s;
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    match cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Infer(a) => infer(a),
        Command::Gradcheck(a) => gradcheck(a, cli.seed.unwrap_or(0)),
    }
}

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| user(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn synth(mut cfg: RunConfig, a: SynthArgs) -> CliResult<()> {
    if let Some(v) = a.out {
        cfg.paths.dataset = v;
    }
    if let Some(v) = a.pairs {
        cfg.data.pairs = v;
    }
    if let Some(v) = a.size {
        cfg.data.size = v;
    }
    if let Some(v) = a.ratio {
        cfg.model.ratio = v;
    }
    if let Some(v) = a.bands {
        cfg.model.target_bands = v;
    }
    if let Some(v) = a.guide_bands {
        cfg.model.guide_bands = v;
    }
    if let Some(v) = a.noise {
        cfg.degradation.noise_sigma = v;
    }
    cfg.validate()?;
    let spec = cfg.degradation.spec(cfg.model.ratio)?;
    let data = synth_scene_dataset_with(
        cfg.data.pairs,
        cfg.model.target_bands,
        cfg.model.guide_bands,
        cfg.data.size,
        &spec,
        cfg.data.seed,
    )?;
    save_dataset(&data, &cfg.paths.dataset)?;
    println!(
        "wrote {} pairs ({} entries) to {}",
        data.len(),
        3 * data.len(),
        cfg.paths.dataset.display()
    );
    Ok(())
}

/// Sets ratio and band counts from the data, reporting any override.
fn adopt_data_shape(model: &mut ModelConfig, first: &GuidedPair) {
    let found = [
        ("ratio", &mut model.ratio, first.ratio),
        ("target_bands", &mut model.target_bands, first.gt.shape()[0]),
        (
            "guide_bands",
            &mut model.guide_bands,
            first.guide.shape()[0],
        ),
    ];
    for (name, slot, v) in found {
        if *slot != v {
            eprintln!("note: model.{name} set to {v} to match the dataset (config had {slot})");
            *slot = v;
        }
    }
}

/// Fails with the first config key that disagrees with the data.
fn check_compat(model: &ModelConfig, pair: &GuidedPair) -> CliResult<()> {
    let checks = [
        ("ratio", model.ratio, pair.ratio),
        ("target_bands", model.target_bands, pair.gt.shape()[0]),
        ("guide_bands", model.guide_bands, pair.guide.shape()[0]),
    ];
    for (name, want, got) in checks {
        if want != got {
            return Err(user(format!(
                "shape error: {name}: checkpoint model expects {want}, data has {got}"
            )));
        }
    }
    Ok(())
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> CliResult<()> {
    if let Some(v) = a.dataset {
        cfg.paths.dataset = v;
    }
    if let Some(v) = a.out_dir {
        cfg.paths.out_dir = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.stages {
        cfg.model.stages = v;
    }
    if let Some(v) = a.channels {
        cfg.model.channels = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if a.no_memory {
        cfg.model.use_memory = false;
    }
    if a.no_cnl {
        cfg.model.use_cnl = false;
    }
    let data = load_dataset(&cfg.paths.dataset)?;
    let first = data
        .first()
        .ok_or_else(|| user(format!("{} holds no pairs", cfg.paths.dataset.display())))?;
    adopt_data_shape(&mut cfg.model, first);
    cfg.model.validate()?;
    cfg.train.validate()?;

    let resume = a.resume.as_deref().map(TensorContainer::read).transpose()?;
    let dtype = match &resume {
        Some(c) => checkpoint_dtype(c)?,
        None if a.precision == Precision::F64 => DType::F64,
        None => DType::F32,
    };
    create_dir(&cfg.paths.out_dir)?;
    write_text(&cfg.paths.out_dir.join("config.json"), &cfg.to_json())?;
    match dtype {
        DType::F32 => train_as::<f32>(&cfg, &data, resume.as_ref()),
        DType::F64 => train_as::<f64>(&cfg, &data, resume.as_ref()),
    }
}

fn train_as<T: Element>(
    cfg: &RunConfig,
    data: &[GuidedPair],
    resume: Option<&TensorContainer>,
) -> CliResult<()> {
    let split = split_dataset(data.len());
    let (train, val) = (&data[split.train], &data[split.val]);
    if train.is_empty() {
        return Err(user(format!(
            "{} pairs leave an empty training split",
            data.len()
        )));
    }
    let mut trainer = match resume {
        Some(c) => {
            let t = Trainer::<T>::restore(c, cfg.train.clone())?;
            eprintln!(
                "resuming at epoch {} with the checkpoint's model config",
                t.epoch
            );
            t
        }
        None => Trainer::new(MadUNet::<T>::new(cfg.model.clone())?, cfg.train.clone())?,
    };
    check_compat(&trainer.model.config, &data[0])?;
    let out = &cfg.paths.out_dir;
    let (last, best, log) = (
        out.join("last.gisr"),
        out.join("best.gisr"),
        out.join("log.csv"),
    );
    eprintln!("{}", LogRow::CSV_HEADER);
    trainer.fit(train, val, cfg.train.epochs, |t, row| {
        eprintln!("{}", row.to_csv());
        t.checkpoint()?.write(&last)?;
        t.best_model_container()?.write(&best)?;
        fs::write(&log, t.log_csv()).map_err(|e| gisr_core::CoreError::io(&log, e))
    })?;
    match &trainer.best {
        Some(b) => println!(
            "best epoch {} with validation PSNR {:.3} dB; checkpoints in {}",
            b.epoch,
            b.val_psnr,
            out.display()
        ),
        None => println!("no validation pairs; checkpoints in {}", out.display()),
    }
    Ok(())
}

fn checkpoint_dtype(c: &TensorContainer) -> CliResult<DType> {
    c.entries()
        .iter()
        .find(|e| e.name.starts_with("param."))
        .map(|e| e.dtype)
        .ok_or_else(|| user("checkpoint holds no parameters"))
}

/// Forward pass on one `[bands, h, w]` pair, returned as f64.
fn predict<T: Element>(
    model: &MadUNet<T>,
    lr: &Tensor<f64>,
    guide: &Tensor<f64>,
) -> CliResult<Tensor<f64>> {
    let batch = |t: &Tensor<f64>| -> CliResult<Tensor<T>> {
        let mut dims = vec![1];
        dims.extend_from_slice(t.shape());
        let v = t.data().iter().map(|&x| T::from_f64_lossy(x)).collect();
        Ok(Tensor::from_vec(&dims, v)?)
    };
    let (l, p) = (batch(lr)?, batch(guide)?);
    let out = no_grad(|| model.forward(&l, &p))?.output;
    Ok(Tensor::from_vec(&out.shape()[1..], out.to_f64_vec())?)
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> CliResult<()> {
    if let Some(v) = a.dataset {
        cfg.paths.dataset = v;
    }
    let c = TensorContainer::read(&a.checkpoint)?;
    let data = load_dataset(&cfg.paths.dataset)?;
    let s = split_dataset(data.len());
    let range = match a.split {
        Split::All => 0..data.len(),
        Split::Train => s.train,
        Split::Val => s.val,
        Split::Test => s.test,
    };
    let csv = match checkpoint_dtype(&c)? {
        DType::F32 => eval_as::<f32>(&c, &data, range)?,
        DType::F64 => eval_as::<f64>(&c, &data, range)?,
    };
    match &a.out {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn csv_row(label: &str, model: &MetricReport, base: &MetricReport) -> String {
    let mut s = label.to_string();
    for v in model.values().iter().chain(base.values().iter()) {
        s.push_str(&format!(",{v:.6}"));
    }
    s
}

fn eval_as<T: Element>(
    c: &TensorContainer,
    data: &[GuidedPair],
    range: std::ops::Range<usize>,
) -> CliResult<String> {
    let model = model_from_container::<T>(c)?;
    let mut header = String::from("image");
    for prefix in ["", "bicubic_"] {
        for m in METRIC_NAMES {
            header.push_str(&format!(",{prefix}{m}"));
        }
    }
    let mut lines = vec![header];
    let (mut ours, mut base) = (Vec::new(), Vec::new());
    for i in range {
        let pair = &data[i];
        check_compat(&model.config, pair)?;
        let pred = predict(&model, &pair.lr, &pair.guide)?;
        let bic = bicubic_resize(&pair.lr, pair.ratio, 1)?;
        let m = MetricReport::compute(&pred, &pair.gt, pair.ratio)?;
        let b = MetricReport::compute(&bic, &pair.gt, pair.ratio)?;
        lines.push(csv_row(&i.to_string(), &m, &b));
        ours.push(m);
        base.push(b);
    }
    if ours.is_empty() {
        return Err(user("selected split holds no pairs"));
    }
    let (mo, mb) = (MetricReport::mean(&ours), MetricReport::mean(&base));
    lines.push(csv_row("mean", &mo, &mb));
    eprintln!(
        "{} images: PSNR {:.3} dB (bicubic {:.3} dB)",
        ours.len(),
        mo.psnr,
        mb.psnr
    );
    let mut out = lines.join("\n");
    out.push('\n');
    Ok(out)
}

fn infer(a: InferArgs) -> CliResult<()> {
    let c = TensorContainer::read(&a.checkpoint)?;
    let (lr, guide, gt) = match (&a.dataset, &a.lr, &a.guide) {
        (Some(d), _, _) => {
            let data = load_dataset(d)?;
            let n = data.len();
            let pair = data
                .into_iter()
                .nth(a.index)
                .ok_or_else(|| user(format!("index {} out of range for {n} pairs", a.index)))?;
            (pair.lr, pair.guide, Some(pair.gt))
        }
        (None, Some(l), Some(p)) => (
            read_image(l)?,
            read_image(p)?,
            a.gt.as_deref().map(read_image).transpose()?,
        ),
        _ => return Err(user("infer needs --dataset, or --lr and --guide")),
    };
    match checkpoint_dtype(&c)? {
        DType::F32 => infer_as::<f32>(&c, &lr, &guide, gt.as_ref(), &a.out_dir),
        DType::F64 => infer_as::<f64>(&c, &lr, &guide, gt.as_ref(), &a.out_dir),
    }
}

fn infer_as<T: Element>(
    c: &TensorContainer,
    lr: &Tensor<f64>,
    guide: &Tensor<f64>,
    gt: Option<&Tensor<f64>>,
    out_dir: &Path,
) -> CliResult<()> {
    let model = model_from_container::<T>(c)?;
    let cfg = &model.config;
    for (what, t, want) in [
        ("target", lr, cfg.target_bands),
        ("guidance", guide, cfg.guide_bands),
    ] {
        if t.shape()[0] != want {
            return Err(user(format!(
                "{what} has {} bands, checkpoint model expects {want}",
                t.shape()[0]
            )));
        }
    }
    let pred = predict(&model, lr, guide)?;
    create_dir(out_dir)?;
    let mut full = TensorContainer::new();
    full.insert("H", &pred)?;
    full.write(out_dir.join("pred.gisr"))?;
    write_png(&pred, &out_dir.join("pred.png"))?;
    let (h, w) = (pred.shape()[1], pred.shape()[2]);
    println!("prediction {}x{} written to {}", h, w, out_dir.display());
    if let Some(gt) = gt {
        let err = squared_error_map(&pred, gt)?;
        let max = write_heat_map(&err, h, w, &out_dir.join("residual.png"))?;
        let m = MetricReport::compute(&pred, gt, cfg.ratio)?;
        println!(
            "PSNR {:.3} dB, SSIM {:.4}, max squared error {max:.3e}",
            m.psnr, m.ssim
        );
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs, seed: u64) -> CliResult<()> {
    let reports = run_suite(a.op.as_deref(), seed)?;
    println!(
        "{:<18} {:>12} {:>12} {:>8}  result",
        "check", "max_rel_err", "max_abs_err", "entries"
    );
    for r in &reports {
        println!(
            "{:<18} {:>12.3e} {:>12.3e} {:>8}  {}",
            r.name,
            r.max_rel_err,
            r.max_abs_err,
            r.checked,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!(
            "{failed} of {} gradient checks failed",
            reports.len()
        )));
    }
    println!("all {} checks passed", reports.len());
    Ok(())
}
