use std::io::Write;
use std::path::Path;

use laneaf_core::bench::{run_bench, BenchConfig};
use laneaf_core::encoder::encode_with;
use laneaf_core::grid::{label_agreement, ScalarGrid};
use laneaf_core::losses::{total_loss, LossInputs};
use laneaf_core::metrics::{lane_f1, point_accuracy};
use laneaf_core::synth::{generate_scene, perturb_fields, perturb_mask, Dash};
use laneaf_core::{
    binarize, decode, encode, io, lanes_from_label_mask, AffinityFields, BinaryMask, DecodeConfig,
    EncodeConfig, LabelMask, LaneSet,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{apply, FileConfig};
use crate::{
    overlay, BenchArgs, Cli, CliError, Command, DecodeArgs, DecodeFlags, EncodeArgs, EvalArgs, EvalMode, LossArgs,
    OverlayArgs, PerturbArgs, RoundtripArgs, SynthArgs,
};

pub const THREADS_ENV: &str = "LANEAF_CODEC_THREADS";

type Res<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> Res<u8> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Encode(a) => cmd_encode(a, &cfg),
        Command::Decode(a) => cmd_decode(a, &cfg),
        Command::Roundtrip(a) => cmd_roundtrip(a, &cfg),
        Command::Eval(a) => cmd_eval(a, &cfg),
        Command::Loss(a) => cmd_loss(a, &cfg),
        Command::Synth(a) => cmd_synth(a, &cfg),
        Command::Perturb(a) => cmd_perturb(a, &cfg),
        Command::Bench(a) => cmd_bench(a, &cfg),
        Command::Overlay(a) => cmd_overlay(a),
    }
}

/// Write to stdout; a closed pipe (`| head`) ends output quietly.
fn emit(text: &str) -> Res<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Res<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Format(e.to_string()))?;
    emit(&format!("{text}\n"))
}

fn decode_config(cfg: &FileConfig, flags: &DecodeFlags) -> Res<DecodeConfig> {
    let mut d = cfg.decode;
    apply(&mut d.tau, flags.tau);
    apply(&mut d.min_lane_pixels, flags.min_lane_pixels);
    if flags.max_lanes.is_some() {
        d.max_lanes = flags.max_lanes;
    }
    d.validate()?;
    Ok(d)
}

fn cmd_encode(a: EncodeArgs, cfg: &FileConfig) -> Res<u8> {
    let mask = io::read_mask(&a.mask)?;
    let ecfg = EncodeConfig {
        vaf_sign_form: a.literal_vaf || cfg.encode.literal_vaf,
    };
    let (fields, report) = encode_with::<f32>(&mask, &ecfg);
    io::write_fields(&fields, &a.out_fields)?;
    if let Some(bw) = &a.bw {
        io::write_binary_mask(&binarize(&mask), bw)?;
    }
    print_json(&json!({
        "height": mask.height(),
        "width": mask.width(),
        "lanes_encoded": report.lanes_encoded,
        "rows_touched_per_lane": report.rows_touched_per_lane,
        "degenerate_rows": report.degenerate_rows,
    }))?;
    Ok(0)
}

fn cmd_decode(a: DecodeArgs, cfg: &FileConfig) -> Res<u8> {
    let dcfg = decode_config(cfg, &a.decode)?;
    let bw = io::read_binary_mask(&a.bw)?;
    let fields = io::read_fields(&a.fields)?;
    let (mask, trace) = decode(&bw, &fields, &dcfg)?;
    io::write_mask(&mask, &a.out_mask)?;
    if let Some(p) = &a.lanes_json {
        io::write_lanes_json(&lanes_from_label_mask(&mask), p)?;
    }
    if let Some(p) = &a.trace {
        let text = trace.to_string();
        if p.as_os_str() == "-" {
            emit(&text)?;
        } else {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        }
    }
    Ok(0)
}

/// Worker pool sized by `LANEAF_CODEC_THREADS`, or all cores when unset.
pub fn worker_pool() -> Res<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Invalid(e.to_string()))
}

fn roundtrip_one(path: &Path, dcfg: &DecodeConfig, min_agreement: f64) -> (u8, serde_json::Value) {
    let run = || -> Res<(u8, serde_json::Value)> {
        let gt = io::read_mask(path)?;
        let (fields, _) = encode::<f32>(&gt);
        let (out, _) = decode(&binarize(&gt), &fields, dcfg)?;
        let ag = label_agreement(&gt, &out)?;
        let pass = ag.fraction >= min_agreement && (min_agreement < 1.0 || ag.is_exact());
        Ok((
            if pass { 0 } else { 1 },
            json!({
                "path": path.display().to_string(),
                "agreement": ag.fraction,
                "lanes_gt": ag.lanes_a,
                "lanes_decoded": ag.lanes_b,
                "pass": pass,
                "mapping": ag.mapping,
                "confusion": ag.confusion,
            }),
        ))
    };
    run().unwrap_or_else(|e| {
        (
            e.exit_code(),
            json!({ "path": path.display().to_string(), "error": e.to_string() }),
        )
    })
}

fn cmd_roundtrip(a: RoundtripArgs, cfg: &FileConfig) -> Res<u8> {
    let dcfg = decode_config(cfg, &a.decode)?;
    let mut min_agreement = cfg.roundtrip.min_agreement;
    apply(&mut min_agreement, a.min_agreement);
    if !(0.0..=1.0).contains(&min_agreement) {
        return Err(CliError::Invalid(format!("min-agreement {min_agreement} outside [0, 1]")));
    }
    let pool = worker_pool()?;
    let results: Vec<(u8, serde_json::Value)> =
        pool.install(|| a.masks.par_iter().map(|p| roundtrip_one(p, &dcfg, min_agreement)).collect());
    let mut text = String::new();
    for (_, v) in &results {
        text.push_str(&format!("{v}\n"));
    }
    emit(&text)?;
    Ok(results.iter().map(|r| r.0).max().unwrap_or(0))
}

enum LaneSource {
    Mask(LabelMask),
    Json(LaneSet),
}

fn read_lane_source(path: &Path) -> Res<LaneSource> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(b"P5") {
        Ok(LaneSource::Mask(io::parse_mask(&bytes)?))
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::Format(format!("{}: neither a P5 mask nor UTF-8 JSON", path.display())))?;
        Ok(LaneSource::Json(io::lanes_from_json(text)?))
    }
}

impl LaneSource {
    fn dims(&self) -> Option<(usize, usize)> {
        match self {
            LaneSource::Mask(m) => Some(m.dims()),
            LaneSource::Json(_) => None,
        }
    }

    fn lanes(&self) -> LaneSet {
        match self {
            LaneSource::Mask(m) => lanes_from_label_mask(m),
            LaneSource::Json(l) => l.clone(),
        }
    }
}

fn resolve_dims(found: &[Option<(usize, usize)>], height: Option<usize>, width: Option<usize>) -> Res<(usize, usize)> {
    let mut dims: Option<(usize, usize)> = None;
    for d in found.iter().flatten() {
        if dims.is_some_and(|x| x != *d) {
            return Err(laneaf_core::Error::Dimension {
                expected: dims.unwrap(),
                actual: *d,
            }
            .into());
        }
        dims = Some(*d);
    }
    match (dims, height, width) {
        (Some(d), None, None) => Ok(d),
        (Some(d), h, w) => {
            let given = (h.unwrap_or(d.0), w.unwrap_or(d.1));
            if given != d {
                return Err(CliError::Invalid(format!("--height/--width {given:?} disagree with input size {d:?}")));
            }
            Ok(d)
        }
        (None, Some(h), Some(w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(CliError::Invalid("image size unknown: pass --height and --width".into())),
    }
}

fn cmd_eval(a: EvalArgs, cfg: &FileConfig) -> Res<u8> {
    let mut m = cfg.metrics.clone();
    apply(&mut m.point_tolerance, a.point_tolerance);
    apply(&mut m.lane_accuracy_threshold, a.lane_accuracy_threshold);
    apply(&mut m.lane_width, a.lane_width);
    apply(&mut m.iou_threshold, a.iou_threshold);
    if a.row_anchors.is_some() {
        m.row_anchors = a.row_anchors.clone();
    }
    m.exhaustive_check |= a.exhaustive;
    m.validate()?;

    let pred = read_lane_source(&a.pred)?;
    let gt = read_lane_source(&a.gt)?;
    let report = match a.mode {
        EvalMode::Point => point_accuracy(&pred.lanes(), &gt.lanes(), &m)?,
        EvalMode::Iou => {
            let (h, w) = resolve_dims(&[pred.dims(), gt.dims()], a.height, a.width)?;
            lane_f1(&pred.lanes(), &gt.lanes(), h, w, &m)?
        }
    };
    print_json(&report)?;
    Ok(0)
}

fn prob_grid(path: &Path, binary: bool) -> Res<ScalarGrid<f64>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let (h, w, v) = io::parse_pgm(&bytes).map_err(laneaf_core::Error::from)?;
    let values = v
        .into_iter()
        .map(|b| if binary { (b > 0) as u8 as f64 } else { b as f64 / 255.0 })
        .collect();
    Ok(ScalarGrid::new(h, w, values)?)
}

fn cmd_loss(a: LossArgs, cfg: &FileConfig) -> Res<u8> {
    let mut w = cfg.loss.w;
    apply(&mut w, a.w);
    let targets = prob_grid(&a.targets, true)?;
    let outputs = prob_grid(&a.outputs, false)?;
    let af_targets: AffinityFields<f64> = io::read_fields(&a.af_targets)?.cast();
    let af_preds: AffinityFields<f64> = io::read_fields(&a.af_preds)?.cast();
    let fg_mask = match &a.fg_mask {
        Some(p) => io::read_binary_mask(p)?,
        None => BinaryMask::new(
            targets.height(),
            targets.width(),
            targets.values().iter().map(|&t| t > 0.0).collect(),
        )?,
    };
    let values = total_loss(
        &LossInputs {
            targets,
            outputs,
            af_targets,
            af_preds,
            fg_mask,
        },
        w,
    )?;
    print_json(&values)?;
    Ok(0)
}

fn cmd_synth(a: SynthArgs, cfg: &FileConfig) -> Res<u8> {
    let mut spec = cfg.scene.clone();
    apply(&mut spec.height, a.height);
    apply(&mut spec.width, a.width);
    apply(&mut spec.num_lanes, a.lanes);
    apply(&mut spec.thickness, a.thickness);
    apply(&mut spec.min_separation, a.min_separation);
    apply(&mut spec.max_bend, a.max_bend);
    apply(&mut spec.seed, a.seed);
    if let Some(period) = a.dash_period {
        let duty = a.dash_duty.or(spec.dash.map(|d| d.duty)).unwrap_or(0.5);
        spec.dash = Some(Dash { period, duty });
    }
    spec.converge |= a.converge;

    let mask = generate_scene(&spec)?;
    io::write_mask(&mask, &a.out)?;
    if let Some(p) = &a.fields {
        io::write_fields(&encode::<f32>(&mask).0, p)?;
    }
    if let Some(p) = &a.bw {
        io::write_binary_mask(&binarize(&mask), p)?;
    }
    if let Some(p) = &a.lanes_json {
        io::write_lanes_json(&lanes_from_label_mask(&mask), p)?;
    }
    print_json(&json!({
        "height": mask.height(),
        "width": mask.width(),
        "lanes": mask.lane_labels().len(),
        "foreground_pixels": mask.foreground_count(),
        "seed": spec.seed,
    }))?;
    Ok(0)
}

fn cmd_perturb(a: PerturbArgs, cfg: &FileConfig) -> Res<u8> {
    let mut noise = cfg.noise;
    apply(&mut noise.angle_sigma, a.angle_sigma);
    apply(&mut noise.mask_flip_prob, a.flip_prob);
    apply(&mut noise.seed, a.seed);
    let fields = io::read_fields(&a.fields)?;
    let noisy = perturb_fields(&fields, &noise)?;
    if let (Some(src), Some(dst)) = (&a.bw, &a.bw_out) {
        let bw = io::read_binary_mask(src)?;
        io::write_binary_mask(&perturb_mask(&bw, &noise)?, dst)?;
    }
    io::write_fields(&noisy, &a.out_fields)?;
    Ok(0)
}

fn cmd_bench(a: BenchArgs, cfg: &FileConfig) -> Res<u8> {
    let b = cfg.bench;
    let mut bc = BenchConfig {
        height: b.height,
        width: b.width,
        lanes: b.lanes,
        iters: b.iters,
        seed: b.seed,
        decode: decode_config(cfg, &a.decode)?,
    };
    apply(&mut bc.height, a.height);
    apply(&mut bc.width, a.width);
    apply(&mut bc.lanes, a.lanes);
    apply(&mut bc.iters, a.iters);
    apply(&mut bc.seed, a.seed);
    print_json(&run_bench(&bc)?)?;
    Ok(0)
}

fn cmd_overlay(a: OverlayArgs) -> Res<u8> {
    let source = read_lane_source(&a.input)?;
    let bw = a.bw.as_deref().map(io::read_binary_mask).transpose()?;
    let bw_dims = bw.as_ref().map(|b| b.dims());
    let (h, w) = resolve_dims(&[source.dims(), bw_dims], a.height, a.width)?;
    let rgb = match &source {
        LaneSource::Mask(m) => {
            let bw = bw.unwrap_or_else(|| binarize(m));
            overlay::render_mask(m, Some(&bw))
        }
        LaneSource::Json(lanes) => overlay::render_lanes(lanes, h, w, a.lane_width, bw.as_ref())?,
    };
    io::write_ppm(h, w, &rgb, &a.out)?;
    Ok(0)
}
