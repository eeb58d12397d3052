//! The nine pipeline stages, each cached by an input hash and re-run only
//! when its inputs change. Stages form a linear chain; running one checks
//! that every earlier stage is recorded and fresh, naming the first one
//! that is not.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use osrlab_core::checkpoint;
use osrlab_core::datasets::{openness, split_kk_uu, LabeledDataset, SplitSpec};
use osrlab_core::eval::{compare_distribution_distances, msp_unknown_scores, roc_auroc};
use osrlab_core::mining::{fit_threshold_curve, mine_kut, AuxScore, ScoredAux, SweepContext};
use osrlab_core::nn::{train_backbone, AugmentConfig, BackboneNet, TrainConfig};
use osrlab_core::osrnet::{assemble, build_feature_bank, estimate_delta, train_cs, CsTrainConfig, FeatureBank, Verdict};
use osrlab_core::seed;
use osrlab_core::tensor::argmax;

use crate::config::PipelineConfig;
use crate::dataset_io::{read_dataset, write_dataset};
use crate::error::CliError;
use crate::manifest::{Hasher, RunManifest};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Split,
    TrainBackbone,
    ScoreAux,
    FitThreshold,
    Mine,
    TrainCs,
    Assemble,
    Evaluate,
    Report,
}

pub const ALL_STAGES: [Stage; 9] = [
    Stage::Split,
    Stage::TrainBackbone,
    Stage::ScoreAux,
    Stage::FitThreshold,
    Stage::Mine,
    Stage::TrainCs,
    Stage::Assemble,
    Stage::Evaluate,
    Stage::Report,
];

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::TrainBackbone => "train-backbone",
            Stage::ScoreAux => "score-aux",
            Stage::FitThreshold => "fit-threshold",
            Stage::Mine => "mine",
            Stage::TrainCs => "train-cs",
            Stage::Assemble => "assemble",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Option<Stage> {
        ALL_STAGES.iter().copied().find(|s| s.name() == name)
    }

    fn index(&self) -> usize {
        ALL_STAGES.iter().position(|s| s == self).unwrap()
    }

    fn predecessor(&self) -> Option<Stage> {
        let i = self.index();
        if i == 0 {
            None
        } else {
            Some(ALL_STAGES[i - 1])
        }
    }

    /// Config sections whose change invalidates this stage (later stages
    /// inherit invalidation through the hash chain).
    fn config_fingerprint(&self, cfg: &PipelineConfig) -> String {
        let json = |v: serde_json::Value| v.to_string();
        match self {
            Stage::Split => json(serde_json::json!({
                "seeds": cfg.run.seeds,
                "dataset": cfg.dataset,
                "aux": cfg.aux,
                "split": cfg.split,
            })),
            Stage::TrainBackbone => json(serde_json::json!({ "backbone": cfg.backbone })),
            Stage::ScoreAux => String::new(),
            Stage::FitThreshold => json(serde_json::json!({
                "threshold": cfg.threshold,
                "cs": cfg.cs,
            })),
            Stage::Mine => String::new(),
            Stage::TrainCs => json(serde_json::json!({ "cs": cfg.cs })),
            Stage::Assemble => json(serde_json::json!({ "delta": cfg.delta, "cs": cfg.cs })),
            Stage::Evaluate => json(serde_json::json!({ "eval": cfg.eval })),
            Stage::Report => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug)]
pub struct StageRun {
    pub stage: Stage,
    pub status: StageStatus,
}

fn stage_input_hash(
    cfg: &PipelineConfig,
    stage: Stage,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<u64, CliError> {
    let mut h = Hasher::new();
    h.update(stage.name().as_bytes());
    h.update(stage.config_fingerprint(cfg).as_bytes());
    if let Some(prev) = stage.predecessor() {
        let rec = manifest
            .stages
            .get(prev.name())
            .ok_or_else(|| CliError::Dependency {
                stage: prev.name().to_string(),
            })?;
        h.update(rec.input_hash.as_bytes());
        for out in &rec.outputs {
            h.update(out.as_bytes());
            let path = out_dir.join(out);
            let bytes = std::fs::read(&path).map_err(|_| CliError::Dependency {
                stage: prev.name().to_string(),
            })?;
            h.update(&bytes);
        }
    }
    Ok(h.finish())
}

/// Runs one stage (all seeds), honoring the manifest cache. Prerequisite
/// stages must be recorded and fresh; the first unsatisfied one is named.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageRun, CliError> {
    let out_dir = &cfg.run.out_dir;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::load(out_dir)?;

    // verify the whole prefix of the chain, in order
    for prior in &ALL_STAGES[..stage.index()] {
        let hash = stage_input_hash(cfg, *prior, &manifest, out_dir)?;
        if !manifest.is_current(out_dir, prior.name(), hash) {
            return Err(CliError::Dependency {
                stage: prior.name().to_string(),
            });
        }
    }

    let hash = stage_input_hash(cfg, stage, &manifest, out_dir)?;
    if manifest.is_current(out_dir, stage.name(), hash) {
        return Ok(StageRun {
            stage,
            status: StageStatus::Skipped,
        });
    }

    let started = Instant::now();
    let outputs = execute(cfg, stage)?;
    let rel: Vec<String> = outputs
        .iter()
        .map(|p| {
            p.strip_prefix(out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    manifest.record(stage.name(), hash, rel, started.elapsed().as_millis() as u64);
    manifest.save(out_dir)?;
    Ok(StageRun {
        stage,
        status: StageStatus::Ran,
    })
}

/// The `pipeline` command: exactly the nine stages in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<StageRun>, CliError> {
    let mut runs = Vec::with_capacity(ALL_STAGES.len());
    for stage in ALL_STAGES {
        runs.push(run_stage(cfg, stage)?);
    }
    Ok(runs)
}

fn seed_dir(cfg: &PipelineConfig, seed_value: u64) -> PathBuf {
    cfg.run.out_dir.join(format!("seed_{seed_value}"))
}

fn execute(cfg: &PipelineConfig, stage: Stage) -> Result<Vec<PathBuf>, CliError> {
    match stage {
        Stage::Split => execute_split(cfg),
        Stage::TrainBackbone => execute_train_backbone(cfg),
        Stage::ScoreAux => execute_score_aux(cfg),
        Stage::FitThreshold => execute_fit_threshold(cfg),
        Stage::Mine => execute_mine(cfg),
        Stage::TrainCs => execute_train_cs(cfg),
        Stage::Assemble => execute_assemble(cfg),
        Stage::Evaluate => execute_evaluate(cfg),
        Stage::Report => report::execute_report(cfg),
    }
}

fn class_ids_for(ds: &LabeledDataset, names: &[String]) -> Result<BTreeSet<usize>, CliError> {
    names
        .iter()
        .map(|n| {
            ds.class_names()
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| CliError::runtime(format!("class {n:?} not found in dataset")))
        })
        .collect()
}

fn execute_split(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let base = cfg.dataset.load(&cfg.base_dir)?;
    let aux = cfg.aux.load(&cfg.base_dir)?;
    let mut files = write_dataset(&cfg.run.out_dir.join("aux"), "aux", &aux)?;

    let kk_ids = class_ids_for(&base, &cfg.split.kk_classes)?;
    let uu_ids = class_ids_for(&base, &cfg.split.uu_classes)?;
    for &seed_value in &cfg.run.seeds {
        let spec = SplitSpec {
            kk_class_ids: kk_ids.clone(),
            uu_class_ids: uu_ids.clone(),
            seed: seed_value,
        };
        let split = split_kk_uu(&base, &spec, cfg.split.test_fraction)?;
        let dir = seed_dir(cfg, seed_value).join("split");
        files.extend(write_dataset(&dir, "d_kk_train", &split.d_kk_train)?);
        files.extend(write_dataset(&dir, "d_kk_test", &split.d_kk_test)?);
        files.extend(write_dataset(&dir, "d_uu_test", &split.d_uu_test)?);

        let n_kk = cfg.split.kk_classes.len();
        let n_total = n_kk + cfg.split.uu_classes.len();
        let open = openness(n_kk, n_total)?;
        let path = dir.join("openness.txt");
        std::fs::write(
            &path,
            format!("kk_classes {n_kk}\ntotal_test_classes {n_total}\nopenness {open}\n"),
        )?;
        files.push(path);
    }
    Ok(files)
}

fn build_backbone(cfg: &PipelineConfig, ds: &LabeledDataset, seed_value: u64) -> Result<BackboneNet, CliError> {
    let n_classes = ds.class_names().len();
    let init_seed = seed::derive_tagged(cfg.backbone.seed, "split", &[seed_value]);
    let net = match cfg.backbone.arch.as_str() {
        "mlp" => {
            let dim = ds.sample_len();
            BackboneNet::mlp(dim, &cfg.backbone.hidden, cfg.backbone.fc1_width, n_classes, init_seed)?
        }
        "image_cnn" => match ds.sample_shape() {
            [c, h, w] => BackboneNet::image_cnn(*c, *h, *w, n_classes, init_seed)?,
            other => {
                return Err(CliError::runtime(format!(
                    "image_cnn needs [C, H, W] samples, got {other:?}"
                )))
            }
        },
        other => return Err(CliError::runtime(format!("unknown arch {other:?}"))),
    };
    Ok(net)
}

fn execute_train_backbone(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let train = read_dataset(&sdir.join("split"), "d_kk_train")?;
        let mut net = build_backbone(cfg, &train, seed_value)?;
        let train_cfg = TrainConfig {
            epochs: cfg.backbone.epochs,
            batch_size: cfg.backbone.batch_size,
            seed: seed::derive_tagged(cfg.backbone.seed, "train", &[seed_value]),
            gdx: cfg.backbone.gdx(),
            augment: if cfg.backbone.augment {
                Some(AugmentConfig {
                    hflip: true,
                    max_shift: 2,
                })
            } else {
                None
            },
        };
        let rep = train_backbone(&mut net, &train, &train_cfg)?;
        let dir = sdir.join("backbone");
        std::fs::create_dir_all(&dir)?;
        let ckpt = dir.join("backbone.ckpt");
        checkpoint::save_backbone(&net, &ckpt)?;
        files.push(ckpt);

        let mut log = String::from("epoch,mean_loss\n");
        for (i, l) in rep.epoch_losses.iter().enumerate() {
            log.push_str(&format!("{i},{l}\n"));
        }
        if let Some(halt) = &rep.halted {
            log.push_str(&format!("# halted: {halt}\n"));
        }
        let log_path = dir.join("train_log.csv");
        std::fs::write(&log_path, log)?;
        files.push(log_path);
    }
    Ok(files)
}

fn execute_score_aux(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let aux = read_dataset(&cfg.run.out_dir.join("aux"), "aux")?;
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let net = checkpoint::load_backbone(&sdir.join("backbone").join("backbone.ckpt"))?;
        let scored = osrlab_core::mining::score_aux(&net, &aux)?;
        let dir = sdir.join("scores");
        std::fs::create_dir_all(&dir)?;
        let mut csv = String::from("item,max_prob,entropy_bits\n");
        for (i, s) in scored.scores.iter().enumerate() {
            csv.push_str(&format!("{i},{},{}\n", s.max_prob, s.entropy_bits));
        }
        let path = dir.join("aux_scores.csv");
        std::fs::write(&path, csv)?;
        files.push(path);
    }
    Ok(files)
}

fn read_aux_scores(path: &Path) -> Result<Vec<AuxScore>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut scores = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::runtime(format!("malformed score row {line:?}")));
        }
        scores.push(AuxScore {
            max_prob: fields[1]
                .parse()
                .map_err(|_| CliError::runtime("bad max_prob"))?,
            entropy_bits: fields[2]
                .parse()
                .map_err(|_| CliError::runtime("bad entropy"))?,
        });
    }
    Ok(scores)
}

fn load_scored_aux(cfg: &PipelineConfig, seed_value: u64) -> Result<ScoredAux, CliError> {
    let aux = read_dataset(&cfg.run.out_dir.join("aux"), "aux")?;
    let scores = read_aux_scores(&seed_dir(cfg, seed_value).join("scores").join("aux_scores.csv"))?;
    if scores.len() != aux.len() {
        return Err(CliError::runtime(format!(
            "{} scores for {} aux items",
            scores.len(),
            aux.len()
        )));
    }
    Ok(ScoredAux {
        dataset: aux,
        scores,
    })
}

fn cs_train_config(cfg: &PipelineConfig, seed_value: u64) -> CsTrainConfig {
    CsTrainConfig {
        hidden_widths: cfg.cs.h_grid.clone(),
        folds: cfg.cs.folds,
        epochs: cfg.cs.epochs,
        batch_size: cfg.cs.batch_size,
        seed: seed::derive_tagged(cfg.cs.seed, "split", &[seed_value]),
        gdx: cfg.cs.gdx(),
    }
}

fn execute_fit_threshold(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let dir = sdir.join("threshold");
        std::fs::create_dir_all(&dir)?;
        let curve_path = dir.join("curve.txt");

        if cfg.threshold.policy == "fixed" {
            let t = cfg.threshold.fixed_t.expect("validated");
            std::fs::write(&curve_path, format!("policy fixed\nt_star {t}\n"))?;
            files.push(curve_path);
            continue;
        }

        let net = checkpoint::load_backbone(&sdir.join("backbone").join("backbone.ckpt"))?;
        let scored = load_scored_aux(cfg, seed_value)?;
        let d_kk_train = read_dataset(&sdir.join("split"), "d_kk_train")?;
        let eval_kk = read_dataset(&sdir.join("split"), "d_kk_test")?;
        let eval_uu = read_dataset(&sdir.join("split"), "d_uu_test")?;
        let cs_cfg = cs_train_config(cfg, seed_value);
        let ctx = SweepContext {
            backbone: &net,
            scored: &scored,
            d_kk_train: &d_kk_train,
            eval_kk: &eval_kk,
            eval_uu: &eval_uu,
            cs_config: &cs_cfg,
            replicates: cfg.threshold.replicates,
        };
        let sweep = osrlab_core::mining::sweep_thresholds(&ctx, &cfg.threshold.candidates)?;

        let mut csv = String::from("t,auroc,mean_admitted_entropy,kut_size,cs_h\n");
        for p in &sweep.points {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.t,
                fmt(p.auroc),
                fmt(p.mean_admitted_entropy),
                p.kut_size,
                p.chosen_width.map(|w| w.to_string()).unwrap_or_default()
            ));
        }
        let sweep_path = dir.join("sweep.csv");
        std::fs::write(&sweep_path, csv)?;
        files.push(sweep_path);

        let valid: Vec<(f64, f64)> = sweep
            .points
            .iter()
            .filter_map(|p| p.auroc.map(|a| (p.t, a)))
            .collect();
        let mut curve_text = String::from("policy sweep\n");
        for w in &sweep.warnings {
            curve_text.push_str(&format!("# {w}\n"));
        }
        let t_star = if valid.len() >= 4 {
            let curve = fit_threshold_curve(&valid)?;
            let [a, b, c, d] = curve.coefficients;
            curve_text.push_str(&format!("coefficients {a} {b} {c} {d}\n"));
            curve_text.push_str(&format!("t_star {}\n", curve.t_star));
            for (t, y) in &curve.sample_points {
                curve_text.push_str(&format!("point {t} {y}\n"));
            }
            curve.t_star
        } else {
            // not enough valid points for a cubic; fall back to the best
            // sampled candidate
            let best = valid
                .iter()
                .cloned()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| CliError::runtime("no sweep candidate produced an AUROC"))?;
            curve_text.push_str("# fewer than 4 valid points; t_star is the best sampled candidate\n");
            curve_text.push_str(&format!("t_star {}\n", best.0));
            best.0
        };
        let _ = t_star;
        std::fs::write(&curve_path, curve_text)?;
        files.push(curve_path);
    }
    Ok(files)
}

fn read_t_star(path: &Path) -> Result<f64, CliError> {
    let text = std::fs::read_to_string(path)?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("t_star ") {
            return rest
                .parse()
                .map_err(|_| CliError::runtime(format!("bad t_star in {}", path.display())));
        }
    }
    Err(CliError::runtime(format!("no t_star in {}", path.display())))
}

fn execute_mine(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let t_star = read_t_star(&sdir.join("threshold").join("curve.txt"))?;
        let scored = load_scored_aux(cfg, seed_value)?;
        let mined = mine_kut(&scored, t_star)?;
        if let Some(w) = &mined.warning {
            eprintln!("warning: {w}");
        }
        let dir = sdir.join("mine");
        files.extend(write_dataset(&dir, "kut", &mined.kut)?);

        let mut csv = String::from("item,max_prob,entropy_bits,admitted\n");
        for (i, s) in scored.scores.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{},{},{}\n",
                s.max_prob,
                s.entropy_bits,
                if s.max_prob > t_star { 1 } else { 0 }
            ));
        }
        let path = dir.join("mining_report.csv");
        std::fs::write(&path, csv)?;
        files.push(path);
    }
    Ok(files)
}

/// Stratified delta-holdout split of a feature bank, pure in
/// (bank labels, fraction, seed).
pub fn delta_holdout_rows(
    bank: &FeatureBank,
    fraction: f64,
    seed_value: u64,
) -> (Vec<usize>, Vec<usize>) {
    use rand_shim::shuffle;
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for label in [0u8, 1u8] {
        let mut idxs: Vec<usize> = (0..bank.len()).filter(|&i| bank.labels[i] == label).collect();
        shuffle(
            &mut idxs,
            seed::derive_tagged(seed_value, "delta-holdout", &[u64::from(label)]),
        );
        let n_hold = ((idxs.len() as f64) * fraction).round() as usize;
        let n_hold = n_hold.clamp(1, idxs.len().saturating_sub(1).max(1));
        holdout.extend_from_slice(&idxs[..n_hold]);
        train.extend_from_slice(&idxs[n_hold..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    (train, holdout)
}

/// Tiny seeded Fisher-Yates so this crate does not need a rand dependency.
mod rand_shim {
    pub fn shuffle(items: &mut [usize], seed_value: u64) {
        let mut state = seed_value | 1;
        let mut next = || {
            // xorshift64*
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            state.wrapping_mul(0x2545F4914F6CDD1D)
        };
        for i in (1..items.len()).rev() {
            let j = (next() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

fn rebuild_bank(cfg: &PipelineConfig, seed_value: u64) -> Result<(BackboneNet, FeatureBank), CliError> {
    let sdir = seed_dir(cfg, seed_value);
    let net = checkpoint::load_backbone(&sdir.join("backbone").join("backbone.ckpt"))?;
    let d_kk_train = read_dataset(&sdir.join("split"), "d_kk_train")?;
    let kut = read_dataset(&sdir.join("mine"), "kut")?;
    if kut.is_empty() {
        return Err(CliError::runtime("KUT set empty; lower T"));
    }
    let bank = build_feature_bank(&net, &d_kk_train, &kut)?;
    Ok((net, bank))
}

fn execute_train_cs(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let (_, bank) = rebuild_bank(cfg, seed_value)?;
        let cs_cfg = cs_train_config(cfg, seed_value);
        let (train_rows, _) = delta_holdout_rows(&bank, cfg.cs.delta_holdout_fraction, cs_cfg.seed);
        let train_bank = bank.subset(&train_rows)?;
        let (cs, selection) = train_cs(&train_bank, &cs_cfg)?;

        let dir = sdir.join("cs");
        std::fs::create_dir_all(&dir)?;
        let ckpt = dir.join("cs.ckpt");
        checkpoint::save_cs(&cs, &ckpt)?;
        files.push(ckpt);

        let mut csv = String::from("h,mean_auroc,fold_aurocs\n");
        for c in &selection.candidates {
            let folds: Vec<String> = c.fold_aurocs.iter().map(|a| a.to_string()).collect();
            csv.push_str(&format!("{},{},{}\n", c.hidden_width, c.mean_auroc, folds.join(";")));
        }
        csv.push_str(&format!("# chosen {}\n", selection.chosen_width));
        let sel_path = dir.join("selection.csv");
        std::fs::write(&sel_path, csv)?;
        files.push(sel_path);
    }
    Ok(files)
}

fn execute_assemble(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let (net, bank) = rebuild_bank(cfg, seed_value)?;
        let cs = checkpoint::load_cs(&sdir.join("cs").join("cs.ckpt"))?;
        let cs_cfg = cs_train_config(cfg, seed_value);
        let (_, holdout_rows) = delta_holdout_rows(&bank, cfg.cs.delta_holdout_fraction, cs_cfg.seed);
        let holdout = bank.subset(&holdout_rows)?;
        let scores = cs.score(&holdout.features)?;
        let roc = roc_auroc(&scores, &holdout.labels)?;
        let est = estimate_delta(&roc, &cfg.costs(), holdout.count(1), holdout.count(0))?;
        let osr = assemble(net, cs, est.delta)?;

        let dir = sdir.join("assemble");
        std::fs::create_dir_all(&dir)?;
        let ckpt = dir.join("recognizer.ckpt");
        checkpoint::save_recognizer(&osr, &ckpt)?;
        files.push(ckpt);

        let path = dir.join("delta_report.txt");
        std::fs::write(
            &path,
            format!(
                "s_op {}\ndelta {}\nfpr {}\ntpr {}\ndegenerate {}\nholdout_auroc {}\n",
                est.s_op, est.delta, est.fpr, est.tpr, est.degenerate, roc.auroc
            ),
        )?;
        files.push(path);
    }
    Ok(files)
}

/// Minimal single-file vector plot of a ROC curve.
fn roc_svg(roc: &osrlab_core::eval::RocCurve) -> String {
    let size = 400.0;
    let margin = 40.0;
    let span = size - 2.0 * margin;
    let px = |fpr: f64| margin + fpr * span;
    let py = |tpr: f64| size - margin - tpr * span;
    let mut path = String::new();
    for (i, p) in roc.points.iter().enumerate() {
        path.push_str(&format!(
            "{}{:.2},{:.2}",
            if i == 0 { "M" } else { " L" },
            px(p.fpr),
            py(p.tpr)
        ));
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" ",
            "viewBox=\"0 0 {s} {s}\">\n",
            "<rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n",
            "<line x1=\"{m}\" y1=\"{e}\" x2=\"{e}\" y2=\"{m}\" stroke=\"#bbb\" ",
            "stroke-dasharray=\"4\"/>\n",
            "<rect x=\"{m}\" y=\"{m}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"#333\"/>\n",
            "<path d=\"{path}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
            "<text x=\"{mid}\" y=\"{lbl}\" text-anchor=\"middle\" font-size=\"13\">FPR</text>\n",
            "<text x=\"12\" y=\"{mid}\" font-size=\"13\" transform=\"rotate(-90 12 {mid})\" ",
            "text-anchor=\"middle\">TPR</text>\n",
            "<text x=\"{mid}\" y=\"24\" text-anchor=\"middle\" font-size=\"13\">AUROC {auroc:.4}</text>\n",
            "</svg>\n"
        ),
        s = size,
        m = margin,
        e = size - margin,
        w = span,
        path = path,
        mid = size / 2.0,
        lbl = size - 10.0,
        auroc = roc.auroc,
    )
}

fn read_kv(path: &Path, key: &str) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(&format!("{key} ")) {
            return Ok(rest.to_string());
        }
    }
    Err(CliError::runtime(format!("no {key} in {}", path.display())))
}

fn execute_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let sdir = seed_dir(cfg, seed_value);
        let osr = checkpoint::load_recognizer(&sdir.join("assemble").join("recognizer.ckpt"))?;
        let kk_test = read_dataset(&sdir.join("split"), "d_kk_test")?;
        let uu_test = read_dataset(&sdir.join("split"), "d_uu_test")?;
        let kut = read_dataset(&sdir.join("mine"), "kut")?;

        // detection: confidence scores, KK = 0, UU = 1
        let mut scores = osr.confidence_scores(&kk_test)?;
        let mut labels = vec![0u8; scores.len()];
        scores.extend(osr.confidence_scores(&uu_test)?);
        labels.extend(std::iter::repeat_n(1u8, uu_test.len()));
        let roc = roc_auroc(&scores, &labels)?;

        let dir = sdir.join("eval");
        std::fs::create_dir_all(&dir)?;
        let mut roc_csv = String::from("threshold,fpr,tpr\n");
        for p in &roc.points {
            roc_csv.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        let roc_path = dir.join("roc.csv");
        std::fs::write(&roc_path, roc_csv)?;
        files.push(roc_path);

        let svg_path = dir.join("roc.svg");
        std::fs::write(&svg_path, roc_svg(&roc))?;
        files.push(svg_path);

        // verdicts over both test folds
        let mut verdicts = String::from("item_id,argmax_class,max_prob,S,verdict\n");
        for (tag, ds) in [("kk", &kk_test), ("uu", &uu_test)] {
            let inferences = osr.infer(&ds.full_batch()?)?;
            for (i, inf) in inferences.iter().enumerate() {
                let verdict = match inf.verdict {
                    Verdict::Known(_) => "known",
                    Verdict::Unknown => "unknown",
                };
                verdicts.push_str(&format!(
                    "{tag}_{i},{},{},{},{verdict}\n",
                    inf.argmax_class, inf.max_prob, inf.confidence
                ));
            }
        }
        let verdicts_path = dir.join("verdicts.csv");
        std::fs::write(&verdicts_path, verdicts)?;
        files.push(verdicts_path);

        // closed-set accuracy of the backbone argmax on the KK test fold
        let pass = osr.backbone.forward(&kk_test.full_batch()?)?;
        let predictions: Vec<usize> = (0..kk_test.len()).map(|i| argmax(pass.probs.outer(i))).collect();
        let kk_accuracy = osrlab_core::eval::accuracy(&predictions, &kk_test.class_ids())?;

        // max-softmax baseline on the same folds
        let mut msp = msp_unknown_scores(&osr.backbone, &kk_test)?;
        msp.extend(msp_unknown_scores(&osr.backbone, &uu_test)?);
        let msp_auroc = roc_auroc(&msp, &labels)?.auroc;
        let baseline_path = dir.join("baseline.txt");
        std::fs::write(
            &baseline_path,
            format!("msp_auroc {}\nosrnet_auroc {}\n", msp_auroc, roc.auroc),
        )?;
        files.push(baseline_path);

        // distribution distances from the KK test fold
        let table = compare_distribution_distances(
            &osr.backbone,
            &kk_test,
            &[("d_kut".to_string(), &kut), ("d_uu_test".to_string(), &uu_test)],
            cfg.mmd_kernel(),
        )?;
        let mut dist_csv = String::from("name,mmd\n");
        for (name, d) in &table {
            dist_csv.push_str(&format!("{name},{d}\n"));
        }
        let dist_path = dir.join("distances.csv");
        std::fs::write(&dist_path, dist_csv)?;
        files.push(dist_path);
        let mmd_kk_kut = table
            .iter()
            .find(|(n, _)| n == "d_kut")
            .map(|(_, d)| *d)
            .unwrap_or(f64::NAN);

        // metrics row
        let open: f64 = read_kv(&sdir.join("split").join("openness.txt"), "openness")?
            .parse()
            .map_err(|_| CliError::runtime("bad openness"))?;
        let t_star = read_t_star(&sdir.join("threshold").join("curve.txt"))?;
        let delta: f64 = read_kv(&sdir.join("assemble").join("delta_report.txt"), "delta")?
            .parse()
            .map_err(|_| CliError::runtime("bad delta"))?;
        let chosen_h = {
            let text = std::fs::read_to_string(sdir.join("cs").join("selection.csv"))?;
            text.lines()
                .find_map(|l| l.strip_prefix("# chosen "))
                .map(str::to_string)
                .ok_or_else(|| CliError::runtime("selection.csv missing chosen width"))?
        };
        let mean_entropy_kut = {
            let text = std::fs::read_to_string(sdir.join("mine").join("mining_report.csv"))?;
            let mut sum = 0.0;
            let mut n = 0usize;
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() == 4 && f[3] == "1" {
                    sum += f[2].parse::<f64>().map_err(|_| CliError::runtime("bad entropy"))?;
                    n += 1;
                }
            }
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        };

        let header = "seed,openness,T,|D_KUT|,cs_H,delta,auroc,kk_accuracy,mean_entropy_kut,mmd_kk_kut";
        let row = format!(
            "{seed_value},{open},{t_star},{},{chosen_h},{delta},{},{kk_accuracy},{mean_entropy_kut},{mmd_kk_kut}",
            kut.len(),
            roc.auroc
        );
        let metrics_path = dir.join("metrics_row.csv");
        std::fs::write(&metrics_path, format!("{header}\n{row}\n"))?;
        files.push(metrics_path);
    }
    Ok(files)
}
