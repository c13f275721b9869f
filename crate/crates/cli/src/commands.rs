use std::collections::{BTreeSet, HashMap};
use std::fmt::Display;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use structmark::io::{parse_annotations, parse_boundaries, write_annotations, write_pgm, Annotation};
use structmark::rng::{indexed_seed, sub_seed};
use structmark::smoothing::fit_gaussian_label_detailed;
use structmark::synth::EpochRecord;
use structmark::{
    build_edge_heatmap, crop_patch, evaluate, generate_dataset, refine_edge_heatmap, run_bench, run_toy, sample_label,
    Heatmap, LandmarkSet,
};

use crate::config::RunConfig;
use crate::table::{epochs_field, speedup_field, Table};

pub struct Common {
    pub out: PathBuf,
    pub dump_intermediates: bool,
}

fn write_pgm_file(path: &Path, h: &Heatmap) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create `{}`", path.display()))?;
    write_pgm(h, BufWriter::new(file))?;
    Ok(())
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} file `{}`", path.display()))
}

fn required_path(cfg: &RunConfig, flag: Option<&Path>, key: &str, value: &str) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p.to_path_buf()),
        None if !value.is_empty() => Ok(cfg.resolve(value)),
        None => bail!(
            "no {key} file given (use --{} or the `{key}` config key)",
            key.replace('_', "-")
        ),
    }
}

pub fn toy(cfg: &RunConfig, common: &Common, objective: Option<&str>) -> Result<()> {
    let mut section = cfg.toy.clone();
    if let Some(o) = objective {
        section.objective = o.to_string();
    }
    let toy = section.to_core()?;
    let trace = run_toy(&toy)?;

    let mut steps = Table::new(&common.out, "toy_trace.csv", &["step", "k", "theta_k", "grad_k"]);
    let mut summary = Table::new(
        &common.out,
        "toy_summary.csv",
        &[
            "step",
            "objective",
            "loss",
            "argmax",
            "soft_argmax",
            "target_gap",
            "mismatch",
        ],
    );
    for s in &trace.snapshots {
        for (k, (t, g)) in s.theta.iter().zip(&s.grad).enumerate() {
            steps.row(&[&s.step, &k, t, g])?;
        }
        let mismatch = s.argmax != toy.target && (s.soft_argmax - toy.target as f64).abs() < 0.5;
        summary.row(&[
            &s.step,
            &toy.objective.name(),
            &s.loss,
            &s.argmax,
            &s.soft_argmax,
            &s.target_gap(toy.target),
            &mismatch,
        ])?;
    }
    steps.write()?;
    summary.write()?;
    let last = trace.last();
    println!(
        "toy objective={} step={} argmax={} soft_argmax={:.6} loss={:.6e} mismatch={}",
        toy.objective.name(),
        last.step,
        last.argmax,
        last.soft_argmax,
        last.loss,
        trace.mismatch()
    );
    Ok(())
}

fn history_table(dir: &Path, name: &str) -> Table {
    Table::new(dir, name, &["seed", "epoch", "objective", "train_loss", "eval_nme"])
}

fn push_history(t: &mut Table, seed: u64, objective: &str, history: &[EpochRecord]) -> Result<()> {
    for r in history {
        t.row(&[&seed, &r.epoch, &objective, &r.train_loss, &r.eval_nme])?;
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, common: &Common, objective: Option<&str>, epochs: Option<usize>) -> Result<()> {
    let mut section = cfg.synth.clone();
    if let Some(o) = objective {
        section.objective_a = o.to_string();
    }
    if let Some(e) = epochs {
        section.epochs = e;
    }
    let seeds: Vec<u64> = (0..section.n_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let bench = section.to_core(seeds, &cfg.smooth)?;

    if section.export_dataset {
        let data = generate_dataset(&bench.dataset)?;
        let annotations: Vec<Annotation> = data
            .iter()
            .enumerate()
            .map(|(i, s)| Annotation {
                id: format!("s{i:04}"),
                landmarks: s.landmarks.clone(),
            })
            .collect();
        let path = common.out.join("dataset_annotations.txt");
        write_annotations(&annotations, BufWriter::new(File::create(&path)?))?;
        let mut header = vec!["id".to_string(), "norm_distance".to_string()];
        header.extend((0..bench.dataset.width * bench.dataset.height).map(|k| format!("p{k}")));
        let mut pixels = Table::new(&common.out, "dataset_pixels.csv", &header);
        for (a, s) in annotations.iter().zip(&data) {
            let mut fields: Vec<&dyn Display> = vec![&a.id, &s.norm_distance];
            fields.extend(s.image.pixels.iter().map(|p| p as &dyn Display));
            pixels.row(&fields)?;
        }
        pixels.write()?;
    }

    let report = run_bench(&bench)?;
    let (name_a, name_b) = (bench.objective_a.name(), bench.objective_b.name());
    let (file_a, file_b) = if name_a == name_b {
        (format!("history_{name_a}_a.csv"), format!("history_{name_b}_b.csv"))
    } else {
        (format!("history_{name_a}.csv"), format!("history_{name_b}.csv"))
    };
    let mut hist_a = history_table(&common.out, &file_a);
    let mut hist_b = history_table(&common.out, &file_b);
    let mut conv = Table::new(
        &common.out,
        "convergence.csv",
        &[
            "seed",
            "objective_a",
            "objective_b",
            "learning_rate_a",
            "learning_rate_b",
            "target_nme",
            "epochs_a",
            "epochs_b",
            "speedup",
        ],
    );
    for run in &report.runs {
        let c = &run.convergence;
        push_history(&mut hist_a, run.seed, name_a, &c.history_a)?;
        push_history(&mut hist_b, run.seed, name_b, &c.history_b)?;
        conv.row(&[
            &run.seed,
            &name_a,
            &name_b,
            &report.learning_rate_a,
            &report.learning_rate_b,
            &bench.target_nme,
            &epochs_field(c.epochs_a),
            &epochs_field(c.epochs_b),
            &speedup_field(c.speedup),
        ])?;
        println!(
            "synth seed={} {name_a}(lr={}) epochs={} {name_b}(lr={}) epochs={} speedup={}",
            run.seed,
            report.learning_rate_a,
            epochs_field(c.epochs_a),
            report.learning_rate_b,
            epochs_field(c.epochs_b),
            speedup_field(c.speedup)
        );
    }
    hist_a.write()?;
    hist_b.write()?;
    conv.write()?;
    Ok(())
}

pub fn smooth(cfg: &RunConfig, common: &Common, annotations: Option<&Path>, boundaries: Option<&Path>) -> Result<()> {
    let smoothing = cfg.smooth.to_core()?;
    if cfg.smooth.n_samples == 0 {
        bail!("invalid [smooth] config: n_samples must be at least 1");
    }
    let ann_path = required_path(cfg, annotations, "annotations", &cfg.smooth.annotations)?;
    let bnd_path = required_path(cfg, boundaries, "boundaries", &cfg.smooth.boundaries)?;
    let samples = parse_annotations(&read_text(&ann_path, "annotations")?)
        .with_context(|| format!("in `{}`", ann_path.display()))?;
    let boundary = parse_boundaries(&read_text(&bnd_path, "boundaries")?)
        .with_context(|| format!("in `{}`", bnd_path.display()))?;
    if samples.is_empty() {
        bail!("`{}` holds no samples", ann_path.display());
    }

    let dump_dir = common.out.join("intermediates");
    if common.dump_intermediates {
        std::fs::create_dir_all(&dump_dir).with_context(|| format!("cannot create `{}`", dump_dir.display()))?;
    }
    let size = smoothing.edge_map_size;
    let base_seed = sub_seed(cfg.seed, "smooth");
    let mut labels = Table::new(
        &common.out,
        "labels.csv",
        &[
            "sample_id",
            "landmark_id",
            "mean_u",
            "mean_v",
            "cov_uu",
            "cov_uv",
            "cov_vv",
        ],
    );
    let mut draws = Table::new(
        &common.out,
        "samples.csv",
        &["sample_id", "landmark_id", "draw", "u", "v"],
    );
    for (si, sample) in samples.iter().enumerate() {
        sample
            .landmarks
            .check_bounds(size, size)
            .with_context(|| format!("sample `{}` does not fit the {size}x{size} edge map", sample.id))?;
        boundary
            .validate_for(&sample.landmarks)
            .with_context(|| format!("sample `{}`", sample.id))?;
        let raw = build_edge_heatmap(&sample.landmarks, &boundary, &smoothing)?;
        let refined = refine_edge_heatmap(&raw, &smoothing)?;
        for (n, &y) in sample.landmarks.points().iter().enumerate() {
            let fit = fit_gaussian_label_detailed(&refined, y, &smoothing)?;
            let g = fit.label;
            labels.row(&[
                &sample.id,
                &n,
                &g.mean.u,
                &g.mean.v,
                &g.cov[0][0],
                &g.cov[0][1],
                &g.cov[1][1],
            ])?;
            let seed = indexed_seed(base_seed, &[si as u64, n as u64]);
            for (d, c) in sample_label(&g, cfg.smooth.n_samples, seed, (size, size))?
                .iter()
                .enumerate()
            {
                draws.row(&[&sample.id, &n, &d, &c.u, &c.v])?;
            }
            if common.dump_intermediates {
                let centre = y.round_clamped(size, size);
                let panels = [
                    ("c_edge", crop_patch(&raw, centre, smoothing.patch_half)),
                    ("d_refined", fit.edge_patch),
                    ("e_center", fit.center_patch),
                    ("f_joint", fit.joint_patch),
                    ("g_label", g.density_patch(smoothing.patch_half)),
                ];
                for (panel, h) in panels {
                    write_pgm_file(&dump_dir.join(format!("{}_lm{n}_{panel}.pgm", sample.id)), &h)?;
                }
            }
        }
    }
    labels.write()?;
    draws.write()?;
    println!(
        "smooth samples={} landmarks={} labels written to {}",
        samples.len(),
        samples[0].landmarks.len(),
        common.out.join("labels.csv").display()
    );
    Ok(())
}

fn norm_distance(set: &LandmarkSet, pair: [usize; 2]) -> Result<f64> {
    let p = set.points();
    match (p.get(pair[0]), p.get(pair[1])) {
        (Some(a), Some(b)) => Ok(a.distance(*b)),
        _ => bail!(
            "normaliser landmarks {pair:?} are out of range for {} landmarks",
            p.len()
        ),
    }
}

pub fn eval(cfg: &RunConfig, common: &Common, predictions: Option<&Path>, ground_truth: Option<&Path>) -> Result<()> {
    let pred_path = required_path(cfg, predictions, "predictions", &cfg.eval.predictions)?;
    let gt_path = required_path(cfg, ground_truth, "ground_truth", &cfg.eval.ground_truth)?;
    let preds = parse_annotations(&read_text(&pred_path, "predictions")?)
        .with_context(|| format!("in `{}`", pred_path.display()))?;
    let gts = parse_annotations(&read_text(&gt_path, "ground truth")?)
        .with_context(|| format!("in `{}`", gt_path.display()))?;
    if gts.is_empty() {
        bail!("`{}` holds no samples", gt_path.display());
    }

    let by_id: HashMap<&str, &Annotation> = preds.iter().map(|a| (a.id.as_str(), a)).collect();
    let gt_ids: BTreeSet<&str> = gts.iter().map(|a| a.id.as_str()).collect();
    let missing_pred: Vec<&str> = gts
        .iter()
        .map(|a| a.id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let missing_gt: Vec<&str> = preds
        .iter()
        .map(|a| a.id.as_str())
        .filter(|id| !gt_ids.contains(id))
        .collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        let mut msg = String::from("sample ids differ between files");
        if !missing_gt.is_empty() {
            msg += &format!("; missing from ground truth: {}", missing_gt.join(", "));
        }
        if !missing_pred.is_empty() {
            msg += &format!("; missing from predictions: {}", missing_pred.join(", "));
        }
        bail!(msg);
    }
    if preds.len() != gts.len() {
        bail!("duplicate sample ids in the input files");
    }

    let mut p_sets = Vec::with_capacity(gts.len());
    let mut g_sets = Vec::with_capacity(gts.len());
    let mut norms = Vec::with_capacity(gts.len());
    for g in &gts {
        let p = by_id[g.id.as_str()];
        norms.push(norm_distance(&g.landmarks, cfg.eval.norm_landmarks).with_context(|| format!("sample `{}`", g.id))?);
        p_sets.push(p.landmarks.clone());
        g_sets.push(g.landmarks.clone());
    }
    let report = evaluate(&p_sets, &g_sets, &norms, &cfg.eval.to_core()).context("evaluation failed")?;

    let mut per = Table::new(&common.out, "nme_per_sample.csv", &["sample_id", "nme"]);
    for (g, e) in gts.iter().zip(&report.per_sample_nme) {
        per.row(&[&g.id, e])?;
    }
    per.row(&[&"mean", &report.nme_mean])?;
    let mut ced = Table::new(&common.out, "ced.csv", &["threshold", "fraction"]);
    for (t, f) in &report.ced_points {
        ced.row(&[t, f])?;
    }
    let mut summary = Table::new(
        &common.out,
        "eval_summary.csv",
        &["n_samples", "nme", "fr_threshold", "fr", "auc_threshold", "auc"],
    );
    summary.row(&[
        &gts.len(),
        &report.nme_mean,
        &cfg.eval.fr_threshold,
        &report.fr,
        &cfg.eval.auc_threshold,
        &report.auc,
    ])?;
    per.write()?;
    ced.write()?;
    summary.write()?;
    println!(
        "eval samples={} NME={} FR={} AUC={}",
        gts.len(),
        report.nme_mean,
        report.fr,
        report.auc
    );
    Ok(())
}
