use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use spikesr::events::downsample_2x;
use spikesr::events::io::{load_events, save_events, EventFormat, LoadOptions};
use spikesr::events::synth::{corpus_seed, synth_moving_bar, MovingBar};
use spikesr::events::voxel::{from_voxel_grid, to_voxel_grid_at};
use spikesr::metrics::{rmse_st, EvalConfig, MetricsReport};
use spikesr::model::{count_flops, count_params, forward, Checkpoint, NetworkSpec};
use spikesr::training::{train_with, SamplePair, TrainConfig, TrainReport};
use spikesr::EventStream;

use crate::{config, manifest, render as ppm};
use crate::{DownsampleArgs, EvalArgs, InferArgs, InfoArgs, RenderArgs, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing inputs or inconsistent data; exit code 2.
    Usage(String),
    /// Failure while doing the work; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<spikesr::Error> for CliError {
    fn from(e: spikesr::Error) -> Self {
        use spikesr::Error as E;
        match e {
            E::Config(_) | E::Shape(_) | E::EmptyDataset => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn runtime(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", path.display())))
    }
}

fn input_format(path: &Path) -> Result<EventFormat> {
    EventFormat::from_path(path).ok_or_else(|| {
        CliError::Usage(format!(
            "{}: unknown stream format (expected .evbin, .csv or .bin)",
            path.display()
        ))
    })
}

fn output_format(path: &Path) -> Result<EventFormat> {
    match EventFormat::from_path(path) {
        Some(f @ (EventFormat::Evbin | EventFormat::Csv)) => Ok(f),
        _ => Err(CliError::Usage(format!(
            "{}: output must end in .evbin or .csv",
            path.display()
        ))),
    }
}

fn load_stream(path: &Path, geometry: Option<(u16, u16)>) -> Result<EventStream> {
    require_file(path)?;
    let format = input_format(path)?;
    let opts = LoadOptions {
        geometry,
        ..LoadOptions::default()
    };
    load_events(path, format, opts).map_err(|e| runtime(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| runtime(path, e))
}

fn save_stream(stream: &EventStream, path: &Path) -> Result<()> {
    let format = output_format(path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
    }
    save_events(stream, path, format).map_err(|e| runtime(path, e))
}

/// Steps of `dt_ms` needed to cover `[origin, end]`, at least one.
fn steps_for_span(origin_us: u64, end_us: u64, dt_ms: f64) -> usize {
    let span = end_us.saturating_sub(origin_us) as f64;
    ((span / (dt_ms * 1000.0)).ceil() as usize).max(1)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if !(a.dur > 0.0 && a.dur.is_finite()) {
        return Err(CliError::Usage(format!("--dur must be positive, got {}", a.dur)));
    }
    let (width, height) = a.size;
    fs::create_dir_all(&a.out).map_err(|e| runtime(&a.out, e))?;
    let mut pairs = Vec::new();
    for i in 0..a.n {
        let cfg = MovingBar {
            velocity: a.velocity,
            events_per_edge_px: a.events_per_px,
            ..MovingBar::new(width, height, a.dur, corpus_seed(a.seed, i))
        };
        let stream = synth_moving_bar(&cfg)?;
        let name = format!("bar_{i:04}");
        save_stream(&stream, &a.out.join(format!("{name}.evbin")))?;
        pairs.push((format!("{name}.lr.evbin"), format!("{name}.evbin")));
    }
    let listing = format!("# lr,hr\n{}", manifest::render(&pairs));
    write_file(&a.out.join("manifest.txt"), listing.as_bytes())?;
    println!("wrote {} streams ({width}x{height}, {} ms) to {}", a.n, a.dur, a.out.display());
    Ok(())
}

fn is_stream_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    path.is_file() && !name.contains(".lr.") && EventFormat::from_path(path).is_some()
}

/// `name.ext` becomes `name.lr.ext`; read-only `.bin` inputs get `.lr.evbin`.
fn lr_twin_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let ext = match EventFormat::from_path(path)? {
        EventFormat::Csv => "csv",
        EventFormat::Evbin | EventFormat::NmnistBin => "evbin",
    };
    Some(format!("{stem}.lr.{ext}"))
}

pub fn downsample(a: &DownsampleArgs) -> Result<()> {
    let mut files = Vec::new();
    for input in &a.inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| runtime(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_stream_file(p))
                .collect();
            found.sort();
            files.extend(found);
        } else if input.is_file() {
            input_format(input)?;
            files.push(input.clone());
        } else {
            return Err(CliError::Usage(format!("no such file or directory: {}", input.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::Usage("no stream files found in the given inputs".to_string()));
    }

    let mut failed = 0;
    for src in &files {
        let result = (|| -> Result<(PathBuf, EventStream)> {
            let name = lr_twin_name(src).ok_or_else(|| runtime(src, "cannot derive output name"))?;
            let dir = match &a.out_dir {
                Some(d) => d.clone(),
                None => src.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let hr = load_stream(src, a.geometry)?;
            let lr = downsample_2x(&hr);
            let dst = dir.join(name);
            save_stream(&lr, &dst)?;
            Ok((dst, lr))
        })();
        match result {
            Ok((dst, lr)) => println!(
                "{} -> {} ({} events, {}x{})",
                src.display(),
                dst.display(),
                lr.len(),
                lr.width(),
                lr.height()
            ),
            Err(e) => {
                failed += 1;
                eprintln!("failed: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} files failed", files.len())));
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => config::load(p)?,
        None => config::TrainFile::default(),
    };
    let defaults = TrainConfig::default();
    let variant = a.variant.or(file.variant).unwrap_or(defaults.variant);
    let cfg = TrainConfig {
        epochs: a.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch: a.batch.or(file.batch).unwrap_or(defaults.batch),
        lr: a.lr.or(file.lr).unwrap_or(defaults.lr),
        seed: a.seed.or(file.seed).unwrap_or(defaults.seed),
        steps: a.steps.or(file.steps).unwrap_or(defaults.steps),
        dt_ms: a.dt.or(file.dt_ms).unwrap_or(defaults.dt_ms),
        variant,
        mode: a
            .mode
            .or(file.mode)
            .unwrap_or_else(|| NetworkSpec::for_variant(variant).default_mode()),
        val_fraction: a.val_fraction.or(file.val_fraction).unwrap_or(defaults.val_fraction),
    };
    cfg.validate()?;

    let manifest_path = a
        .manifest
        .clone()
        .or(file.manifest)
        .ok_or_else(|| CliError::Usage("a manifest is required (--manifest or [data] manifest)".to_string()))?;
    let checkpoint_path = a
        .out
        .clone()
        .or(file.checkpoint)
        .unwrap_or_else(|| PathBuf::from("model.evsrw"));
    let report_path = a
        .report
        .clone()
        .or(file.report)
        .unwrap_or_else(|| checkpoint_path.with_extension("csv"));
    let val_path = report_path.with_extension("val.csv");

    let entries = manifest::read(&manifest_path)?;
    for e in &entries {
        require_file(&e.first)?;
        require_file(&e.second)?;
    }
    let mut pairs = Vec::with_capacity(entries.len());
    for e in &entries {
        pairs.push(SamplePair {
            name: e.label.clone(),
            lr: load_stream(&e.first, None)?,
            hr: load_stream(&e.second, None)?,
        });
    }

    println!(
        "training {} on {} pairs: {} epochs, batch {}, lr {}, mode {}, seed {}",
        cfg.variant,
        pairs.len(),
        cfg.epochs,
        cfg.batch,
        cfg.lr,
        cfg.mode,
        cfg.seed
    );
    let (checkpoint, report) = train_with(&cfg, &pairs, |r| {
        println!(
            "epoch {:>3}  train_loss {:.6}  w [{:.4}, {:.4}, {:.4}]  val_rmse_st {:.6}",
            r.epoch, r.train_loss, r.w[0], r.w[1], r.w[2], r.val_rmse_st
        );
    })?;

    write_file(&checkpoint_path, &checkpoint.encode()?)?;
    write_file(&report_path, report.to_csv().as_bytes())?;
    write_file(&val_path, report.val_samples_csv().as_bytes())?;
    print_train_summary(&report, &checkpoint_path, &report_path);
    Ok(())
}

fn print_train_summary(report: &TrainReport, checkpoint: &Path, report_path: &Path) {
    println!("initial val_rmse_st: {}", report.initial_val_rmse_st);
    println!("final val_rmse_st: {}", report.final_val_rmse_st());
    println!("checkpoint: {}", checkpoint.display());
    println!("report: {}", report_path.display());
}

pub fn infer(a: &InferArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.input)?;
    output_format(&a.output)?;
    if a.steps == Some(0) {
        return Err(CliError::Usage("--steps must be >= 1".to_string()));
    }
    let bytes = fs::read(&a.checkpoint).map_err(|e| runtime(&a.checkpoint, e))?;
    let ckpt = Checkpoint::decode(&bytes).map_err(|e| runtime(&a.checkpoint, e))?;
    let spec = &ckpt.spec;
    if let Some(v) = a.variant {
        if v != spec.variant {
            return Err(CliError::Usage(format!(
                "checkpoint holds a {} network, not {v}",
                spec.variant
            )));
        }
    }
    let mode = a.mode.unwrap_or_else(|| spec.default_mode());
    spec.check_mode(mode)?;

    let lr = load_stream(&a.input, None)?;
    let (w2, h2) = (lr.width() as usize * spec.scale, lr.height() as usize * spec.scale);
    let (w2, h2) = (
        u16::try_from(w2).map_err(|_| CliError::Usage(format!("output width {w2} too large")))?,
        u16::try_from(h2).map_err(|_| CliError::Usage(format!("output height {h2} too large")))?,
    );
    if lr.is_empty() {
        eprintln!("warning: {} has no events; writing an empty stream", a.input.display());
        save_stream(&EventStream::empty(w2, h2), &a.output)?;
        return Ok(());
    }

    let steps = a
        .steps
        .or(ckpt.steps)
        .unwrap_or_else(|| steps_for_span(lr.t0(), lr.t1(), spec.dt_ms));
    let vox = to_voxel_grid_at(&lr, lr.t0(), steps, spec.dt_ms)?;
    if vox.dropped > 0 {
        eprintln!("warning: {} events fall outside the {steps}-step window", vox.dropped);
    }
    let (out, _) = forward(spec, &ckpt.weights, &vox.tensor, mode)?;
    let pred = from_voxel_grid(&out, lr.t0())?;
    save_stream(&pred, &a.output)?;
    println!(
        "{} -> {} ({} events in, {} out, {}x{}, {steps} steps, {mode})",
        a.input.display(),
        a.output.display(),
        lr.len(),
        pred.len(),
        pred.width(),
        pred.height()
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = match (&a.pred, &a.gt, &a.manifest) {
        (Some(p), Some(g), None) => vec![(String::new(), p.clone(), g.clone())],
        (None, None, Some(m)) => manifest::read(m)?
            .into_iter()
            .map(|e| (e.label, e.first, e.second))
            .collect(),
        _ => {
            return Err(CliError::Usage(
                "give either --pred and --gt, or --manifest".to_string(),
            ))
        }
    };
    if pairs.is_empty() {
        return Err(CliError::Usage("manifest lists no pairs".to_string()));
    }
    if !(a.dt > 0.0) || !(a.block_ms > 0.0) {
        return Err(CliError::Usage("--dt and --block-ms must be positive".to_string()));
    }
    if a.steps == Some(0) {
        return Err(CliError::Usage("--steps must be >= 1".to_string()));
    }
    for (_, p, g) in &pairs {
        require_file(p)?;
        require_file(g)?;
    }

    let mut loaded = Vec::with_capacity(pairs.len());
    for (name, p, g) in &pairs {
        let (pred, gt) = (load_stream(p, None)?, load_stream(g, None)?);
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(CliError::Usage(format!(
                "geometry mismatch: {} is {}x{} but {} is {}x{}",
                p.display(),
                pred.width(),
                pred.height(),
                g.display(),
                gt.width(),
                gt.height()
            )));
        }
        loaded.push((name, pred, gt));
    }

    let mut reports = Vec::with_capacity(loaded.len());
    for (_, pred, gt) in &loaded {
        let steps = a.steps.unwrap_or_else(|| {
            let origin = if gt.is_empty() { pred.t0() } else { gt.t0() };
            steps_for_span(origin, pred.t1().max(gt.t1()), a.dt)
        });
        let cfg = EvalConfig {
            steps,
            dt_ms: a.dt,
            block_ms: a.block_ms,
        };
        reports.push(rmse_st(pred, gt, cfg)?);
    }

    let text = if a.manifest.is_some() {
        let mut out = format!("name,{}\n", MetricsReport::csv_header());
        for ((name, _, _), r) in loaded.iter().zip(&reports) {
            out.push_str(&format!("{name},{}\n", r.to_csv_row()));
        }
        if let Some(mean) = MetricsReport::mean(&reports) {
            out.push_str(&format!("mean,{}\n", mean.to_csv_row()));
        }
        out
    } else {
        reports[0].to_key_values()
    };
    match &a.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let stream = load_stream(&a.input, a.geometry)?;
    let windows = ppm::windows(&stream, a.start_ms, a.window_ms, a.every).map_err(CliError::Usage)?;
    let paths: Vec<PathBuf> = if a.every.is_none() {
        vec![a.out.clone()]
    } else {
        let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
        let dir = a.out.parent().unwrap_or(Path::new(""));
        (0..windows.len()).map(|i| dir.join(format!("{stem}_{i:04}.ppm"))).collect()
    };
    for (w, path) in windows.iter().zip(&paths) {
        let (on, off) = ppm::accumulate(&stream, *w);
        write_file(path, &ppm::to_ppm(stream.width(), stream.height(), &on, &off))?;
    }
    println!("wrote {} frame(s)", paths.len());
    Ok(())
}

pub fn info(a: &InfoArgs) -> Result<()> {
    let (spec, ckpt) = match (&a.checkpoint, a.variant) {
        (Some(path), _) => {
            require_file(path)?;
            let bytes = fs::read(path).map_err(|e| runtime(path, e))?;
            let c = Checkpoint::decode(&bytes).map_err(|e| runtime(path, e))?;
            (c.spec.clone(), Some(c))
        }
        (None, Some(v)) => (NetworkSpec::for_variant(v), None),
        (None, None) => return Err(CliError::Usage("give --variant or --checkpoint".to_string())),
    };

    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("variant: {}", spec.variant));
    line(format!("params: {}", count_params(&spec)));
    line(format!("default mode: {}", spec.default_mode()));
    let passes = if spec.variant == spikesr::model::Variant::Ultralight { 2 } else { 1 };
    line(format!("passes per input: {passes}"));
    let mut hw = a.dims.map(|(h, w, _)| (h, w));
    if let Some((h, w, t)) = a.dims {
        line(format!("input: {}x{h}x{w}x{t} per pass", spec.io_channels()));
    }
    for (i, (l, n)) in spec.layers.iter().zip(&spec.neurons).enumerate() {
        let mut desc = format!(
            "layer{}: {} {}->{} kernel {}x{} stride {} padding {}, {} weights",
            i,
            l.kind.name(),
            l.in_channels,
            l.out_channels,
            l.kernel_h,
            l.kernel_w,
            l.stride,
            l.padding,
            l.weight_count()
        );
        if let (Some((h, w)), Some((_, _, t))) = (hw, a.dims) {
            let (oh, ow) = l.output_hw(h, w)?;
            desc.push_str(&format!(", output {}x{oh}x{ow}x{t}", l.out_channels));
            hw = Some((oh, ow));
        }
        line(desc);
        line(format!(
            "neuron{}: v_th={} tau_s={} tau_r={} lambda={} tau_rho={} rho={}",
            i,
            n.v_th,
            n.tau_s,
            n.tau_r,
            n.lambda,
            n.tau_rho,
            n.rho
        ));
    }
    if let Some(c) = &ckpt {
        line(format!("seed: {}", c.seed));
        if let Some(steps) = c.steps {
            line(format!("trained steps: {steps}"));
        }
        line(format!(
            "log_var: {} {} {}",
            c.log_var[0], c.log_var[1], c.log_var[2]
        ));
    }
    if let Some((h, w, t)) = a.dims {
        line(format!("flops: {}", count_flops(&spec, h, w, t)));
    }
    print!("{out}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twin_names() {
        assert_eq!(lr_twin_name(Path::new("d/a.evbin")).as_deref(), Some("a.lr.evbin"));
        assert_eq!(lr_twin_name(Path::new("a.csv")).as_deref(), Some("a.lr.csv"));
        assert_eq!(lr_twin_name(Path::new("x/00001.bin")).as_deref(), Some("00001.lr.evbin"));
        assert_eq!(lr_twin_name(Path::new("a.txt")), None);
    }

    #[test]
    fn span_steps() {
        assert_eq!(steps_for_span(0, 0, 1.0), 1);
        assert_eq!(steps_for_span(100, 10_100, 1.0), 10);
        assert_eq!(steps_for_span(0, 10_001, 1.0), 11);
        assert_eq!(steps_for_span(5, 0, 1.0), 1);
    }

    #[test]
    fn error_classes() {
        let usage: CliError = spikesr::Error::Config("x".into()).into();
        let runtime: CliError = spikesr::Error::NonFinite("y".into()).into();
        assert_eq!(usage.exit_code(), 2);
        assert_eq!(runtime.exit_code(), 1);
        assert_eq!(CliError::from(spikesr::Error::EmptyDataset).exit_code(), 2);
    }
}
