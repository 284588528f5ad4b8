use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde_json::{json, Value};
use xdec_core::config::RunConfig;
use xdec_core::data::{generate_corpus, plan_batches, plan_for_steps, write_dataset, Dataset};
use xdec_core::decoder::TaskMode;
use xdec_core::encoders::Image;
use xdec_core::error::Error;
use xdec_core::metrics::{evaluate, EvalTask};
use xdec_core::model::{answer_names, category_names, XDecoderModel};
use xdec_core::tasks::{
    compose_referring_caption, compose_region_retrieval, generate_caption, instance_inference,
    panoptic_inference, referring_segment, run_retrieval, run_vqa, semantic_inference, ReferringResult,
};
use xdec_core::training::{load_checkpoint, run_training, save_checkpoint, TrainState};

use crate::overlay;
use crate::{Cli, Command, ComposeArgs, DatagenArgs, EvalArgs, InferArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.class(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.detail(),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| Error::io(path, e).into()
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Datagen(a) => datagen(&config, cli.out, a),
        Command::Train(a) => train(config, cli.out, a),
        Command::Eval(a) => eval(cli.out, a),
        Command::Infer(a) => infer(a),
        Command::Compose(a) => compose(a),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.data.seed = s;
        config.train.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn print_json(value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

fn datagen(config: &RunConfig, out: Option<PathBuf>, args: DatagenArgs) -> CliResult<()> {
    let out = out.unwrap_or_else(|| PathBuf::from(&config.data.path));
    if out.exists() {
        let non_empty = fs::read_dir(&out).map_err(io_err(&out))?.next().is_some();
        if non_empty {
            if !args.force {
                return Err(Error::input(format!(
                    "{} is not empty; pass --force to overwrite",
                    out.display()
                ))
                .into());
            }
            fs::remove_dir_all(&out).map_err(io_err(&out))?;
        }
    }
    let (train, eval) = generate_corpus(&config.data)?;
    let tm = write_dataset(&out.join("train"), &train, config.data.seed)?;
    let em = write_dataset(&out.join("eval"), &eval, config.data.seed)?;
    print_json(&json!({
        "path": out,
        "seed": config.data.seed,
        "train": tm.counts,
        "eval": em.counts,
    }))
}

fn train(config: RunConfig, out: Option<PathBuf>, args: TrainArgs) -> CliResult<()> {
    let mut state = match &args.resume {
        Some(p) => load_checkpoint(p)?,
        None => TrainState::new(&config)?,
    };
    let config = state.config.clone();
    let data = args
        .data
        .unwrap_or_else(|| Path::new(&config.data.path).join("train"));
    let samples = Dataset::open(&data)?.samples()?;
    let vqa_pool: Vec<usize> = if config.train.vqa_ratio[0] > 0 {
        (0..samples.len()).filter(|&i| !samples[i].questions().is_empty()).collect()
    } else {
        Vec::new()
    };
    let plan = match args.steps.or(config.train.steps) {
        Some(n) => plan_for_steps(samples.len(), &vqa_pool, &config.train, n)?,
        None => plan_batches(samples.len(), &vqa_pool, &config.train, config.train.epochs)?,
    };
    if state.step > plan.steps.len() {
        return Err(Error::input(format!(
            "checkpoint is at step {} but the plan has {} steps",
            state.step,
            plan.steps.len()
        ))
        .into());
    }
    let out = out.unwrap_or_else(|| PathBuf::from("run"));
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let log_path = out.join("train_log.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(args.resume.is_some())
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    let mut last = None;
    run_training(&mut state, &plan, &samples, |record, st| {
        let line = serde_json::to_string(record)?;
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        if let Some(k) = args.save_every.filter(|&k| k > 0) {
            if st.step % k == 0 {
                save_checkpoint(st, &out.join(format!("checkpoint-{:06}.xdec", st.step)))?;
            }
        }
        last = Some(record.losses.total);
        Ok(())
    })?;
    let ckpt = out.join("checkpoint.xdec");
    save_checkpoint(&state, &ckpt)?;
    print_json(&json!({
        "steps": state.step,
        "checkpoint": ckpt,
        "log": log_path,
        "final_loss": last,
    }))
}

fn eval(out: Option<PathBuf>, args: EvalArgs) -> CliResult<()> {
    let tasks = match &args.tasks {
        Some(names) => names
            .iter()
            .map(|n| EvalTask::from_name(n.trim()).map_err(|e| usage(e.detail())))
            .collect::<CliResult<Vec<_>>>()?,
        None => EvalTask::defaults(),
    };
    let state = load_checkpoint(&args.checkpoint)?;
    let data = args
        .data
        .unwrap_or_else(|| Path::new(&state.config.data.path).join("eval"));
    let samples = Dataset::open(&data)?.samples()?;
    let report = evaluate(&state.model, &samples, &tasks, &state.config.eval)?;
    let value = serde_json::to_value(&report).map_err(Error::from)?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("metrics.json");
        let text = serde_json::to_string_pretty(&value).map_err(Error::from)?;
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    print_json(&value)
}

fn load_image(path: &Path) -> CliResult<(RgbImage, Image)> {
    let rgb = image::open(path).map_err(Error::from)?.to_rgb8();
    let img = Image::from_rgb8(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())?;
    Ok((rgb, img))
}

fn category_name(c: usize) -> &'static str {
    category_names().get(c).copied().unwrap_or("background")
}

fn referring_json(r: &ReferringResult) -> Value {
    json!({
        "query": r.query,
        "score": r.score,
        "height": r.height,
        "width": r.width,
        "area": r.mask.iter().filter(|&&b| b).count(),
        "mask": r.mask.iter().map(|&b| u8::from(b)).collect::<Vec<_>>(),
    })
}

fn write_overlay(path: &Path, image: &RgbImage, labels: &[u32], height: usize) -> CliResult<()> {
    let stride = image.height() as usize / height.max(1);
    overlay::render(image, labels, stride.max(1))
        .save(path)
        .map_err(|e| Error::from(e).into())
}

fn infer(args: InferArgs) -> CliResult<()> {
    let need = |v: &Option<String>, flag: &str| {
        v.clone()
            .ok_or_else(|| usage(format!("--task {} needs {flag}", args.task)))
    };
    match args.task.as_str() {
        "refer" => {
            need(&args.phrase, "--phrase")?;
        }
        "vqa" => {
            need(&args.question, "--question")?;
        }
        "retrieval" if args.texts.is_empty() => {
            return Err(usage("--task retrieval needs at least one --text"));
        }
        "panoptic" | "semantic" | "instance" | "caption" | "retrieval" => {}
        other => {
            return Err(usage(format!(
                "unknown task {other:?} (panoptic, semantic, instance, refer, caption, vqa, retrieval)"
            )))
        }
    }
    let state = load_checkpoint(&args.checkpoint)?;
    let model: &XDecoderModel = &state.model;
    let (rgb, image) = load_image(&args.image)?;
    let overlay_labels: Option<(Vec<u32>, usize)>;
    let result = match args.task.as_str() {
        "panoptic" | "semantic" | "instance" => {
            let features = model.encode_images(std::slice::from_ref(&image))?;
            let out = model.decode(features.input(TaskMode::GenericSeg))?;
            let concepts = model.category_concepts()?;
            let (h, w) = (out.height, out.width);
            match args.task.as_str() {
                "panoptic" => {
                    let r = panoptic_inference(&out, &concepts)?.remove(0);
                    overlay_labels = Some((r.segment_map.clone(), h));
                    json!({
                        "task": "panoptic",
                        "height": h,
                        "width": w,
                        "segments": r.segments.iter().map(|s| json!({
                            "id": s.id,
                            "category": category_name(s.category),
                            "score": s.score,
                            "area": r.segment_map.iter().filter(|&&v| v == s.id).count(),
                        })).collect::<Vec<_>>(),
                        "segment_map": r.segment_map,
                    })
                }
                "semantic" => {
                    let r = semantic_inference(&out, &concepts)?.remove(0);
                    let labels: Vec<u32> = r.labels.iter().map(|l| l.map_or(0, |c| c as u32 + 1)).collect();
                    overlay_labels = Some((labels, h));
                    json!({
                        "task": "semantic",
                        "height": h,
                        "width": w,
                        "categories": category_names(),
                        "labels": r.labels,
                    })
                }
                _ => {
                    let r = instance_inference(&out, &concepts)?.remove(0);
                    let mut labels = vec![0u32; h * w];
                    // later (lower-scoring) instances never cover earlier ones
                    for (k, inst) in r.iter().enumerate().rev() {
                        for (l, &on) in labels.iter_mut().zip(&inst.mask) {
                            if on {
                                *l = k as u32 + 1;
                            }
                        }
                    }
                    overlay_labels = Some((labels, h));
                    json!({
                        "task": "instance",
                        "height": h,
                        "width": w,
                        "instances": r.iter().map(|i| json!({
                            "category": category_name(i.category),
                            "score": i.score,
                            "area": i.mask.iter().filter(|&&b| b).count(),
                        })).collect::<Vec<_>>(),
                    })
                }
            }
        }
        "refer" => {
            let phrase = need(&args.phrase, "--phrase")?;
            let r = referring_segment(model, &image, &phrase)?;
            overlay_labels = Some((r.mask.iter().map(|&b| u32::from(b)).collect(), r.height));
            json!({ "task": "refer", "phrase": phrase, "result": referring_json(&r) })
        }
        "caption" => {
            overlay_labels = None;
            let c = generate_caption(model, &image, state.config.eval.max_caption_len, state.config.eval.beam_size)?;
            json!({ "task": "caption", "caption": c.text, "tokens": c.tokens })
        }
        "vqa" => {
            overlay_labels = None;
            let question = need(&args.question, "--question")?;
            let set: Vec<usize> = (0..answer_names().len()).collect();
            let a = run_vqa(model, &image, &question, &set)?;
            json!({ "task": "vqa", "question": question, "answer": answer_names()[a] })
        }
        _ => {
            overlay_labels = None;
            let texts: Vec<&str> = args.texts.iter().map(String::as_str).collect();
            let r = run_retrieval(model, std::slice::from_ref(&image), &texts)?;
            json!({
                "task": "retrieval",
                "texts": texts,
                "scores": r.affinity,
                "ranking": r.image_to_text[0],
            })
        }
    };
    if let Some(path) = &args.overlay {
        match &overlay_labels {
            Some((labels, h)) => write_overlay(path, &rgb, labels, *h)?,
            None => return Err(usage(format!("--overlay is not available for --task {}", args.task))),
        }
    }
    print_json(&result)
}

fn compose(args: ComposeArgs) -> CliResult<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let model = &state.model;
    match args.mode.as_str() {
        "refer-caption" => {
            if args.images.len() != 1 {
                return Err(usage("refer-caption takes exactly one --image"));
            }
            let (_, image) = load_image(&args.images[0])?;
            let (r, c) = compose_referring_caption(
                model,
                &image,
                &args.phrase,
                state.config.eval.max_caption_len,
                state.config.eval.beam_size,
            )?;
            print_json(&json!({
                "mode": "refer-caption",
                "phrase": args.phrase,
                "region": referring_json(&r),
                "caption": c.text,
            }))
        }
        "region-retrieval" => {
            let images = args
                .images
                .iter()
                .map(|p| load_image(p).map(|x| x.1))
                .collect::<CliResult<Vec<_>>>()?;
            let (best, r) = compose_region_retrieval(model, &images, &args.phrase)?;
            print_json(&json!({
                "mode": "region-retrieval",
                "phrase": args.phrase,
                "image_index": best,
                "image": args.images[best],
                "region": referring_json(&r),
            }))
        }
        other => Err(usage(format!(
            "unknown mode {other:?} (refer-caption, region-retrieval)"
        ))),
    }
}
