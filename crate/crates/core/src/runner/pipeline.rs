use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ChangeMapKind, ExperimentConfig, Paradigm};
use crate::error::{Error, Result};
use crate::metrics::{accumulate_sharded, report, ConfusionMatrix, MetricReport, UndefinedPolicy};
use crate::raster::{read_raster, BandKind, BandTag, GeoGrid};
use crate::sampling::{argmax_scores, assign_split, extract_patches, mosaic_labels, partition_blocks};
use crate::synth::{generate_scene, perturb_predictions, SceneSpec};
use crate::taxonomy::{
    binarize_change, build_transition_map, remap_labels, ClassScheme, RemapDefault, RemapTable, TransitionRuleSet,
};

/// Salt separating the change-map noise stream from the label noise stream
/// of a synthetic run.
const CHANGE_NOISE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Transition categories.
    Multiclass,
    /// Change / no change.
    Binary,
    /// Habitat labels at t2.
    Segmentation,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Multiclass => "multiclass",
            Task::Binary => "binary",
            Task::Segmentation => "segmentation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub scenario: String,
    pub task: Task,
    #[serde(skip)]
    pub confusion: ConfusionMatrix,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub level: String,
    pub modalities: Vec<BandTag>,
    pub change_oa: f64,
    pub change_macro_iou: f64,
    pub change_macro_f1: f64,
    pub segmentation_oa: f64,
    pub segmentation_macro_iou: f64,
    pub segmentation_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct InputRecord {
    pub role: String,
    /// Path as written in the config.
    pub path: PathBuf,
    pub resolved: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub paradigm: Paradigm,
    pub evaluations: Vec<Evaluation>,
    /// Predicted (or supplied) transition map of the primary scenario.
    pub change_map: GeoGrid,
    pub ablation: Option<Vec<AblationRow>>,
    pub inputs: Vec<InputRecord>,
    pub seeds: BTreeMap<String, u64>,
}

impl RunResult {
    pub fn find(&self, scenario: &str, task: Task) -> Option<&Evaluation> {
        self.evaluations
            .iter()
            .find(|e| e.scenario == scenario && e.task == task)
    }
}

/// Class scheme, transition rules and optional reference remap of a run.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    pub scheme: ClassScheme,
    pub rules: TransitionRuleSet,
    pub remap: Option<RemapTable>,
}

impl Taxonomy {
    pub fn habitat() -> Self {
        Self {
            scheme: ClassScheme::habitat(),
            rules: TransitionRuleSet::habitat(),
            remap: None,
        }
    }

    pub fn categories(&self) -> &ClassScheme {
        self.rules.categories()
    }

    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let t = &cfg.taxonomy;
        let scheme = match &t.scheme {
            Some(p) => ClassScheme::load(&cfg.resolve(p))?,
            None => ClassScheme::habitat(),
        };
        let categories = match &t.categories {
            Some(p) => Some(ClassScheme::load(&cfg.resolve(p))?),
            None => None,
        };
        let rules = match (&t.rules, categories) {
            (Some(p), cats) => {
                let path = cfg.resolve(p);
                let file = File::open(&path).map_err(|e| Error::io_at(&path, e))?;
                let cats = cats.unwrap_or_else(ClassScheme::transition_categories);
                TransitionRuleSet::from_csv_reader(file, cats, scheme.len())?
            }
            (None, Some(_)) => return Err(Error::Config("taxonomy.categories requires taxonomy.rules".into())),
            (None, None) => TransitionRuleSet::habitat(),
        };
        if rules.n_classes() != scheme.len() {
            return Err(Error::SchemeMismatch(format!(
                "scheme has {} classes but the bundled rules cover {}; supply taxonomy.rules",
                scheme.len(),
                rules.n_classes()
            )));
        }
        let remap = match &t.remap {
            Some(p) => {
                let default = match &t.remap_default {
                    Some(s) => s.parse()?,
                    None => RemapDefault::Error,
                };
                Some(RemapTable::load(&cfg.resolve(p), default)?)
            }
            None => None,
        };
        Ok(Self { scheme, rules, remap })
    }

    fn prepare_reference(&self, grid: GeoGrid) -> Result<GeoGrid> {
        match &self.remap {
            Some(t) => remap_labels(&grid, t),
            None => Ok(grid),
        }
    }
}

/// Reads a label raster; a stack of continuous score bands is reduced to
/// labels by argmax, extra categorical bands are dropped.
pub fn load_label_raster(path: &Path) -> Result<GeoGrid> {
    let g = read_raster(path)?;
    let first = &g.bands()[0];
    match first.kind() {
        BandKind::Continuous => argmax_scores(&g),
        BandKind::Categorical if g.bands().len() == 1 => Ok(g),
        BandKind::Categorical => GeoGrid::new(*g.geometry(), vec![first.clone()]),
    }
}

/// Pixels of the configured evaluation role, or `None` for all pixels.
pub fn evaluation_region(cfg: &ExperimentConfig, width: usize, height: usize) -> Result<Option<Vec<bool>>> {
    match cfg.split.evaluate_role.role() {
        None => Ok(None),
        Some(role) => {
            let p = partition_blocks(width, height, cfg.split.block_size)?;
            let a = assign_split(&p, cfg.split.seed, cfg.split.fractions)?;
            Ok(Some(a.pixel_mask(role)))
        }
    }
}

/// Confusion matrix and report of `pred` against `reference`, restricted to
/// `region` when given.
pub fn evaluate(
    scenario: &str,
    task: Task,
    pred: &GeoGrid,
    reference: &GeoGrid,
    scheme: &ClassScheme,
    region: Option<&[bool]>,
    policy: UndefinedPolicy,
) -> Result<Evaluation> {
    let masked;
    let reference = match region {
        Some(keep) => {
            if keep.len() != reference.geometry().len() {
                return Err(Error::InvalidParameter(
                    "evaluation region does not match the raster".into(),
                ));
            }
            masked = reference.masked(keep);
            &masked
        }
        None => reference,
    };
    let confusion = accumulate_sharded(pred, reference, None, scheme.len(), rayon::current_num_threads())?;
    let report = report(&confusion, scheme, policy)?;
    Ok(Evaluation {
        scenario: scenario.to_string(),
        task,
        confusion,
        report,
    })
}

/// Post-classification comparison: transition maps from (ref t1, pred t2)
/// and (ref t1, ref t2), evaluated as multiclass and binary change, plus
/// t2 segmentation. Returns the evaluations and the predicted change map.
pub fn post_classification(
    scenario: &str,
    ref_t1: &GeoGrid,
    ref_t2: &GeoGrid,
    pred_t2: &GeoGrid,
    tax: &Taxonomy,
    region: Option<&[bool]>,
    policy: UndefinedPolicy,
) -> Result<(Vec<Evaluation>, GeoGrid)> {
    let truth = build_transition_map(ref_t1, ref_t2, &tax.rules)?;
    let predicted = build_transition_map(ref_t1, pred_t2, &tax.rules)?;
    let nc = tax.rules.no_change();
    let evals = vec![
        evaluate(
            scenario,
            Task::Multiclass,
            &predicted,
            &truth,
            tax.categories(),
            region,
            policy,
        )?,
        evaluate(
            scenario,
            Task::Binary,
            &binarize_change(&predicted, nc)?,
            &binarize_change(&truth, nc)?,
            &ClassScheme::binary_change(),
            region,
            policy,
        )?,
        evaluate(
            scenario,
            Task::Segmentation,
            pred_t2,
            ref_t2,
            &tax.scheme,
            region,
            policy,
        )?,
    ];
    Ok((evals, predicted))
}

fn check_categories(grid: &GeoGrid, k: u32, which: &str) -> Result<()> {
    let (vals, nd) = grid.labels()?;
    match vals.iter().find(|&&v| v >= k && Some(v) != nd) {
        Some(v) => Err(Error::CategoryMismatch(format!(
            "{which} value {v} is not one of {k} categories"
        ))),
        None => Ok(()),
    }
}

/// Direct change evaluation of a supplied change map against the truth
/// transition map. A multiclass map yields multiclass and binary reports, a
/// binary map only the binary one.
pub fn direct_change(
    scenario: &str,
    change_map: &GeoGrid,
    kind: ChangeMapKind,
    truth: &GeoGrid,
    tax: &Taxonomy,
    region: Option<&[bool]>,
    policy: UndefinedPolicy,
) -> Result<Vec<Evaluation>> {
    let cats = tax.categories();
    check_categories(truth, cats.len() as u32, "truth change map")?;
    let nc = tax.rules.no_change();
    let truth_bin = binarize_change(truth, nc)?;
    let binary = ClassScheme::binary_change();
    match kind {
        ChangeMapKind::Binary => {
            check_categories(change_map, 2, "binary change map")?;
            Ok(vec![evaluate(
                scenario,
                Task::Binary,
                change_map,
                &truth_bin,
                &binary,
                region,
                policy,
            )?])
        }
        ChangeMapKind::Multiclass => {
            check_categories(change_map, cats.len() as u32, "change map")?;
            Ok(vec![
                evaluate(scenario, Task::Multiclass, change_map, truth, cats, region, policy)?,
                evaluate(
                    scenario,
                    Task::Binary,
                    &binarize_change(change_map, nc)?,
                    &truth_bin,
                    &binary,
                    region,
                    policy,
                )?,
            ])
        }
    }
}

fn input_record(cfg: &ExperimentConfig, role: &str, p: &Path) -> InputRecord {
    InputRecord {
        role: role.to_string(),
        path: p.to_path_buf(),
        resolved: cfg.resolve(p),
    }
}

fn input_records(cfg: &ExperimentConfig) -> Vec<InputRecord> {
    let t = &cfg.taxonomy;
    let mut out: Vec<InputRecord> = cfg
        .inputs
        .entries()
        .into_iter()
        .map(|(role, p)| input_record(cfg, role, p))
        .collect();
    for (role, p) in [
        ("scheme", &t.scheme),
        ("categories", &t.categories),
        ("rules", &t.rules),
        ("remap", &t.remap),
    ] {
        if let Some(p) = p {
            out.push(input_record(cfg, role, p));
        }
    }
    for level in &cfg.modality_ladder {
        out.push(input_record(
            cfg,
            &format!("ladder:{}", level.name),
            &level.predictions_t2,
        ));
    }
    out
}

fn split_seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([("split".to_string(), cfg.split.seed)])
}

fn load_input(cfg: &ExperimentConfig, p: &Option<PathBuf>, name: &str) -> Result<GeoGrid> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::MissingInput(format!("inputs.{name}")))?;
    load_label_raster(&cfg.resolve(p))
}

fn load_references(cfg: &ExperimentConfig, tax: &Taxonomy) -> Result<(GeoGrid, GeoGrid)> {
    Ok((
        tax.prepare_reference(load_input(cfg, &cfg.inputs.reference_t1, "reference_t1")?)?,
        tax.prepare_reference(load_input(cfg, &cfg.inputs.reference_t2, "reference_t2")?)?,
    ))
}

fn preflight(cfg: &ExperimentConfig, expected: Paradigm) -> Result<()> {
    if cfg.paradigm != expected {
        return Err(Error::Config(format!(
            "config is a {} run, not {expected}",
            cfg.paradigm
        )));
    }
    cfg.validate()?;
    cfg.check_inputs_exist()
}

pub fn run_post_classification(cfg: &ExperimentConfig) -> Result<RunResult> {
    preflight(cfg, Paradigm::PostClassification)?;
    let tax = Taxonomy::load(cfg)?;
    let (ref_t1, ref_t2) = load_references(cfg, &tax)?;
    let pred_t2 = load_input(cfg, &cfg.inputs.predictions_t2, "predictions_t2")?;
    let region = evaluation_region(cfg, ref_t1.width(), ref_t1.height())?;
    let policy = cfg.undefined_policy;
    let (mut evaluations, change_map) = post_classification(
        "post_classification",
        &ref_t1,
        &ref_t2,
        &pred_t2,
        &tax,
        region.as_deref(),
        policy,
    )?;
    if cfg.inputs.predictions_t1.is_some() {
        let pred_t1 = load_input(cfg, &cfg.inputs.predictions_t1, "predictions_t1")?;
        evaluations.push(evaluate(
            "post_classification_t1",
            Task::Segmentation,
            &pred_t1,
            &ref_t1,
            &tax.scheme,
            region.as_deref(),
            policy,
        )?);
    }
    Ok(RunResult {
        paradigm: cfg.paradigm,
        evaluations,
        change_map,
        ablation: None,
        inputs: input_records(cfg),
        seeds: split_seeds(cfg),
    })
}

pub fn run_direct_change(cfg: &ExperimentConfig) -> Result<RunResult> {
    preflight(cfg, Paradigm::DirectChange)?;
    let tax = Taxonomy::load(cfg)?;
    let change_map = load_input(cfg, &cfg.inputs.change_map, "change_map")?;
    let truth = match &cfg.inputs.truth_change_map {
        Some(_) => load_input(cfg, &cfg.inputs.truth_change_map, "truth_change_map")?,
        None => {
            let (t1, t2) = load_references(cfg, &tax)?;
            build_transition_map(&t1, &t2, &tax.rules)?
        }
    };
    let region = evaluation_region(cfg, truth.width(), truth.height())?;
    let evaluations = direct_change(
        "direct_change",
        &change_map,
        cfg.change_map_kind,
        &truth,
        &tax,
        region.as_deref(),
        cfg.undefined_policy,
    )?;
    Ok(RunResult {
        paradigm: cfg.paradigm,
        evaluations,
        change_map,
        ablation: None,
        inputs: input_records(cfg),
        seeds: split_seeds(cfg),
    })
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<RunResult> {
    preflight(cfg, Paradigm::Ablation)?;
    let tax = Taxonomy::load(cfg)?;
    let (ref_t1, ref_t2) = load_references(cfg, &tax)?;
    let region = evaluation_region(cfg, ref_t1.width(), ref_t1.height())?;
    let mut evaluations = Vec::new();
    let mut rows = Vec::new();
    let mut change_map = None;
    for level in &cfg.modality_ladder {
        let pred = load_label_raster(&cfg.resolve(&level.predictions_t2))?;
        let (evals, map) = post_classification(
            &level.name,
            &ref_t1,
            &ref_t2,
            &pred,
            &tax,
            region.as_deref(),
            cfg.undefined_policy,
        )?;
        let get = |t: Task| &evals.iter().find(|e| e.task == t).expect("task evaluated").report;
        let (change, seg) = (get(Task::Multiclass), get(Task::Segmentation));
        rows.push(AblationRow {
            level: level.name.clone(),
            modalities: level.modalities.clone(),
            change_oa: change.overall_accuracy,
            change_macro_iou: change.macro_iou,
            change_macro_f1: change.macro_f1,
            segmentation_oa: seg.overall_accuracy,
            segmentation_macro_iou: seg.macro_iou,
            segmentation_macro_f1: seg.macro_f1,
        });
        evaluations.extend(evals);
        change_map = Some(map);
    }
    Ok(RunResult {
        paradigm: cfg.paradigm,
        evaluations,
        change_map: change_map.ok_or_else(|| Error::Config("ablation requires ≥1 level".into()))?,
        ablation: Some(rows),
        inputs: input_records(cfg),
        seeds: split_seeds(cfg),
    })
}

fn oracle(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OracleViolation(what()))
    }
}

fn is_perfect(e: &Evaluation) -> bool {
    e.report.overall_accuracy == 1.0
        && e.report
            .classes
            .iter()
            .all(|c| c.iou.is_none_or(|v| v == 1.0) && c.f1.is_none_or(|v| v == 1.0))
}

/// Generates the scene, checks the generator truth against the taxonomy
/// and the tiling round-trip, then evaluates both paradigms with perfect
/// and perturbed predictions. Any failed check is an `OracleViolation`.
pub fn run_synthetic_end_to_end(spec: &SceneSpec, cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    spec.validate()?;
    let tax = Taxonomy::load(cfg)?;
    let noise = cfg.synthetic.as_ref().map_or(0.2, |s| s.noise_rate);
    let scene = generate_scene(spec, &tax.rules)?;

    let derived = build_transition_map(&scene.t1, &scene.t2, &tax.rules)?;
    oracle(derived == scene.truth, || {
        "generator truth differs from the taxonomy transition map".into()
    })?;

    let (patch, overlap) = (cfg.tiling.patch_size, cfg.tiling.overlap);
    let mut tiled = Vec::with_capacity(2);
    for (name, g) in [("t1", &scene.t1), ("t2", &scene.t2)] {
        let (_, patches) = extract_patches(g, patch, overlap)?;
        let back = mosaic_labels(&patches, g.geometry())?;
        oracle(back == *g, || format!("tiling round-trip altered the {name} labels"))?;
        tiled.push(back);
    }
    let pred_t2 = tiled.pop().expect("two grids tiled");

    let region = evaluation_region(cfg, spec.width, spec.height)?;
    let region = region.as_deref();
    let policy = cfg.undefined_policy;
    let k = tax.scheme.len();
    let mut evaluations = Vec::new();

    let (perfect_post, change_map) = post_classification(
        "post_classification_perfect",
        &scene.t1,
        &scene.t2,
        &pred_t2,
        &tax,
        region,
        policy,
    )?;
    let noisy_t2 = perturb_predictions(&scene.t2, k, noise, spec.seed)?;
    let (noisy_post, _) = post_classification(
        "post_classification_perturbed",
        &scene.t1,
        &scene.t2,
        &noisy_t2,
        &tax,
        region,
        policy,
    )?;

    let kind = ChangeMapKind::Multiclass;
    let perfect_direct = direct_change(
        "direct_change_perfect",
        &scene.truth,
        kind,
        &scene.truth,
        &tax,
        region,
        policy,
    )?;
    let noisy_map = perturb_predictions(
        &scene.truth,
        tax.categories().len(),
        noise,
        spec.seed ^ CHANGE_NOISE_SALT,
    )?;
    let noisy_direct = direct_change(
        "direct_change_perturbed",
        &noisy_map,
        kind,
        &scene.truth,
        &tax,
        region,
        policy,
    )?;

    for e in perfect_post.iter().chain(&perfect_direct) {
        oracle(is_perfect(e), || {
            format!("perfect {} {} evaluation scored below 1", e.scenario, e.task)
        })?;
    }
    let multiclass = |v: &[Evaluation]| {
        v.iter()
            .find(|e| e.task == Task::Multiclass)
            .map(|e| e.confusion.clone())
    };
    oracle(multiclass(&perfect_post) == multiclass(&perfect_direct), || {
        "post-classification and direct evaluation of the same change map disagree".into()
    })?;

    evaluations.extend(perfect_post);
    evaluations.extend(noisy_post);
    evaluations.extend(perfect_direct);
    evaluations.extend(noisy_direct);

    let mut seeds = split_seeds(cfg);
    seeds.insert("scene".into(), spec.seed);
    seeds.insert("label_noise".into(), spec.seed);
    seeds.insert("change_noise".into(), spec.seed ^ CHANGE_NOISE_SALT);
    Ok(RunResult {
        paradigm: Paradigm::Synthetic,
        evaluations,
        change_map,
        ablation: None,
        inputs: input_records(cfg),
        seeds,
    })
}

pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<RunResult> {
    preflight(cfg, Paradigm::Synthetic)?;
    let spec = &cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("synthetic run needs a `synthetic` section".into()))?
        .scene;
    run_synthetic_end_to_end(spec, cfg)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    match cfg.paradigm {
        Paradigm::PostClassification => run_post_classification(cfg),
        Paradigm::DirectChange => run_direct_change(cfg),
        Paradigm::Ablation => run_ablation(cfg),
        Paradigm::Synthetic => run_synthetic(cfg),
    }
}
