use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gliomics::evalx::{
    classify_survival, cross_validate, evaluate, filter_gtr, format_table, predict_table, EvalReport, FeatureSource,
    ModelKind, ModelSpec, Thresholds,
};
use gliomics::featsel::{read_feature_list, rfe_select, FeatureTable, ImportanceKind, RfeParams, SelectionReport};
use gliomics::fusion::{majority_vote, postprocess, seg_metrics, PostprocessParams, SegScore};
use gliomics::imgvol::{
    read_intensity_volume, read_label_volume, write_label_volume, zscore_normalize, Connectivity, Mask, RoiKind,
};
use gliomics::invasive::{ric, MveParams};
use gliomics::pipeline::{extract_all, extract_cohort, run_study, ExtractConfig, PipelineConfig};
use gliomics::prognosis::{ForestParams, ModelDocument};
use gliomics::synthgen::{make_cohort, CohortSpec};
use gliomics::{Error, Result};
use serde_json::{json, Value};

use crate::args::*;

/// What a command prints: JSON for `--json`, text otherwise.
pub struct Output {
    pub json: Value,
    pub text: String,
    pub warnings: Vec<String>,
}

impl Output {
    fn new(json: Value, text: String) -> Self {
        Self {
            json,
            text,
            warnings: Vec::new(),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what} {}: {e}", path.display())))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serialisable")
}

fn thresholds(a: &ThresholdArgs) -> Result<Thresholds> {
    let th = Thresholds {
        low: a.t_low,
        high: a.t_high,
    };
    th.validate()?;
    Ok(th)
}

fn load_table(path: &Path, gtr_only: bool) -> Result<(FeatureTable, Vec<String>)> {
    let t = FeatureTable::read_csv(path)?;
    if !gtr_only {
        return Ok((t, Vec::new()));
    }
    let g = filter_gtr(&t);
    let mut warnings = Vec::new();
    if g.n_rows() == 0 {
        warnings.push(format!("{}: no GTR subjects left after filtering", path.display()));
    }
    Ok((g, warnings))
}

fn model_spec(a: &ModelArgs) -> Result<ModelSpec> {
    let mut spec = match &a.spec {
        Some(p) => read_json::<ModelSpec>(p, "model spec")?,
        None => ModelSpec::preset(a.model.as_deref().unwrap_or_default())?,
    };
    if let Some(p) = &a.features {
        spec.features = FeatureSource::Columns(read_feature_list(p)?);
    }
    if let Some(n) = a.trees {
        if let ModelKind::Forest(f) = &mut spec.model {
            f.n_trees = n;
        }
    }
    Ok(spec)
}

fn roi_kind(r: Roi) -> RoiKind {
    match r {
        Roi::Wt => RoiKind::WT,
        Roi::Tc => RoiKind::TC,
        Roi::Et => RoiKind::ET,
        Roi::Ed => RoiKind::ED,
    }
}

pub fn extract(a: &ExtractArgs) -> Result<Output> {
    let cfg = ExtractConfig {
        rois: a.rois.iter().map(|r| roi_kind(*r)).collect(),
        morphology: !a.no_morphology,
        texture: !a.no_texture,
        ric: !a.no_ric,
        mve: MveParams::default(),
    };
    cfg.validate()?;
    if let Some(dir) = &a.cohort {
        let cf = extract_cohort(dir, &cfg)?;
        if let Some(out) = &a.out {
            cf.table.write_csv(out)?;
        }
        let mut text = format!(
            "extracted {} subjects x {} features",
            cf.table.n_rows(),
            cf.table.n_features()
        );
        if let Some(out) = &a.out {
            let _ = write!(text, " -> {}", out.display());
        }
        text.push('\n');
        for e in &cf.excluded {
            let _ = writeln!(text, "excluded {}: {}", e.subject, e.reason);
        }
        let mut o = Output::new(
            json!({
                "subjects": cf.table.n_rows(),
                "features": cf.table.n_features(),
                "excluded": to_value(&cf.excluded),
            }),
            text,
        );
        o.warnings = cf.warnings;
        return Ok(o);
    }
    let input = a.input.as_ref().expect("clap requires --in or --cohort");
    let vol = read_label_volume(input)?;
    let subject = a.subject.clone().unwrap_or_else(|| {
        input
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "subject".into())
    });
    let brain = match &a.brain_mask {
        Some(p) => {
            let b = read_intensity_volume(p)?;
            let data = b.data().iter().map(|v| *v != 0.0).collect();
            Some(Mask::new(*b.geometry(), data, RoiKind::Brain)?)
        }
        None => None,
    };
    let fv = extract_all(&vol, brain.as_ref(), &cfg).map_err(|e| e.for_subject(subject.clone()))?;
    let mut table = FeatureTable::empty(fv.names.clone());
    table.push_row(
        subject.clone(),
        fv.values.clone(),
        a.survival_days.unwrap_or(f64::NAN),
        a.age.unwrap_or(f64::NAN),
        gliomics::featsel::Resection::NA,
    )?;
    table.validate()?;
    if let Some(out) = &a.out {
        table.write_csv(out)?;
    }
    let mut text = String::new();
    if a.out.is_none() {
        for (n, v) in fv.names.iter().zip(&fv.values) {
            let _ = writeln!(text, "{n:<40} {v}");
        }
    } else {
        let _ = writeln!(text, "{subject}: {} features -> {}", fv.values.len(), a.out.as_ref().unwrap().display());
    }
    let mut o = Output::new(
        json!({ "subject": subject, "names": fv.names, "values": fv.values }),
        text,
    );
    o.warnings = fv.warnings;
    Ok(o)
}

pub fn ric_cmd(a: &RicArgs) -> Result<Output> {
    let vol = read_label_volume(&a.input)?;
    let params = MveParams {
        tol: a.tol,
        ..MveParams::default()
    };
    let r = ric(&vol, &params)?;
    let fmt = |v: [f64; 3]| format!("{:.4} {:.4} {:.4}", v[0], v[1], v[2]);
    let text = format!(
        "RIC {:.6}\nWT semi-axes (mm) {}\nTC semi-axes (mm) {}\n",
        r.ric,
        fmt(r.wt_ellipsoid.semi_axes),
        fmt(r.tc_ellipsoid.semi_axes)
    );
    Ok(Output::new(to_value(&r), text))
}

fn selection_text(rep: &SelectionReport) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "removed {} correlated features", rep.removed_correlated.len());
    if !rep.constant_features.is_empty() {
        let _ = writeln!(t, "constant features: {}", rep.constant_features.join(", "));
    }
    let _ = writeln!(t, "\n{:>6}  {:>12}  {:>10}", "size", "CV RMSE", "SE");
    for c in &rep.cv_curve {
        let mark = if c.size == rep.optimal_size { " *" } else { "" };
        let _ = writeln!(t, "{:>6}  {:>12.2}  {:>10.2}{mark}", c.size, c.rmse, c.rmse_se);
    }
    let w = rep.ranking.iter().map(|r| r.name.len()).max().unwrap_or(7).max(7);
    let _ = writeln!(t, "\n{:<w$}  {:>14}", "Feature", "Importance (%)");
    for r in &rep.ranking {
        let _ = writeln!(t, "{:<w$}  {:>14.1}", r.name, r.importance);
    }
    t
}

pub fn select(a: &SelectArgs) -> Result<Output> {
    let (table, warnings) = load_table(&a.table, a.gtr_only)?;
    let pool: Vec<String> = table.feature_names.iter().filter(|n| !a.exclude.contains(n)).cloned().collect();
    let params = RfeParams {
        correlation_threshold: a.threshold,
        sizes: a.sizes.clone(),
        folds: a.folds,
        forest: ForestParams {
            n_trees: a.trees,
            ..ForestParams::default()
        },
        one_at_a_time: a.one_at_a_time,
        importance: match a.importance {
            Importance::Impurity => ImportanceKind::Impurity,
            Importance::Permutation => ImportanceKind::Permutation,
        },
        tie_se: a.tie_se,
    };
    let rep = rfe_select(&table.select_columns(&pool)?, &params, a.seed)?;
    if let Some(p) = &a.out {
        write_file(p, &pretty(&rep))?;
    }
    if let Some(p) = &a.list {
        write_file(p, &rep.selected_list())?;
    }
    let mut o = Output::new(to_value(&rep), selection_text(&rep));
    o.warnings = warnings;
    Ok(o)
}

pub fn train(a: &TrainArgs) -> Result<Output> {
    let th = thresholds(&a.thresholds)?;
    let (table, warnings) = load_table(&a.table, a.gtr_only)?;
    let spec = model_spec(&a.model)?;
    let fitted = spec.fit(&table, a.seed)?;
    write_file(&a.out, &fitted.document.to_json())?;
    if let (Some(p), Some(sel)) = (&a.selection_out, &fitted.selection) {
        write_file(p, &pretty(sel))?;
    }
    let report = evaluate(&fitted.document, &table, "train", &th)?;
    let text = format!(
        "{} ({}) on {}\n\n{}",
        spec.name,
        fitted.document.model.kind_name(),
        fitted.document.features.join(", "),
        format_table(std::slice::from_ref(&report))
    );
    let mut o = Output::new(
        json!({
            "model": spec.name,
            "kind": fitted.document.model.kind_name(),
            "features": fitted.document.features,
            "train": to_value(&report),
        }),
        text,
    );
    o.warnings = warnings;
    Ok(o)
}

pub fn predict(a: &PredictArgs) -> Result<Output> {
    let th = thresholds(&a.thresholds)?;
    let doc = ModelDocument::read(&a.model)?;
    let table = FeatureTable::read_csv(&a.table)?;
    let pred = predict_table(&doc, &table)?;
    let mut csv = String::from("subject,predicted_days,predicted_class\n");
    let mut rows = Vec::new();
    for (s, p) in table.subjects.iter().zip(&pred) {
        let class = classify_survival(p.max(0.0), &th)?;
        let cname = to_value(&class);
        let cname = cname.as_str().unwrap_or_default();
        let _ = writeln!(csv, "{s},{p},{cname}");
        rows.push(json!({ "subject": s, "predicted_days": p, "predicted_class": cname }));
    }
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    Ok(Output::new(Value::Array(rows), csv))
}

fn eval_output(reports: &[EvalReport], extra: String) -> Output {
    let json = if reports.len() == 1 {
        to_value(&reports[0])
    } else {
        to_value(&reports)
    };
    let mut o = Output::new(json, format!("{}{extra}", format_table(reports)));
    o.warnings = reports.iter().flat_map(|r| r.metrics.warnings.clone()).collect();
    o
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<Output> {
    let th = thresholds(&a.thresholds)?;
    let doc = ModelDocument::read(&a.model)?;
    let (table, warnings) = load_table(&a.table, a.gtr_only)?;
    let report = evaluate(&doc, &table, &a.split, &th)?;
    if let Some(p) = &a.out {
        write_file(p, &report.to_json())?;
    }
    let mut o = eval_output(std::slice::from_ref(&report), String::new());
    o.warnings.extend(warnings);
    Ok(o)
}

pub fn cv(a: &CvArgs) -> Result<Output> {
    let th = thresholds(&a.thresholds)?;
    let (table, warnings) = load_table(&a.table, a.gtr_only)?;
    let spec = model_spec(&a.model)?;
    let report = cross_validate(&table, &spec, a.k, a.seed, &th)?;
    if let Some(p) = &a.out {
        write_file(p, &report.to_json())?;
    }
    let mut folds = String::from("\nfold     n  Accuracy         MSE\n");
    for (f, m) in report.per_fold.iter().flatten().enumerate() {
        let _ = writeln!(folds, "{f:>4}  {:>4}  {:>8.2}  {:>10.0}", m.n, m.accuracy, m.mse);
    }
    let mut o = eval_output(std::slice::from_ref(&report), folds);
    o.warnings.extend(warnings);
    Ok(o)
}

pub fn study(a: &StudyArgs, config: Option<&Path>) -> Result<Output> {
    let mut cfg = match config {
        Some(p) => read_json::<PipelineConfig>(p, "pipeline config")?,
        None => {
            let cohort = a
                .cohort
                .clone()
                .or_else(|| a.features_csv.as_ref().map(|_| PathBuf::new()))
                .ok_or_else(|| Error::Config("study needs --cohort, --features-csv or --config".into()))?;
            let out = a.out.clone().ok_or_else(|| Error::Config("study needs --out".into()))?;
            let seed = a.seed.ok_or_else(|| Error::Config("study needs --seed".into()))?;
            PipelineConfig::new(cohort, out, seed)
        }
    };
    if let Some(c) = &a.cohort {
        cfg.cohort_dir = c.clone();
    }
    if let Some(f) = &a.features_csv {
        cfg.features_csv = Some(f.clone());
    }
    if let Some(h) = &a.holdout {
        cfg.holdout_dir = Some(h.clone());
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.k {
        cfg.folds = k;
    }
    if a.all_resections {
        cfg.gtr_only = false;
    }
    let res = run_study(&cfg)?;
    let mut extra = String::new();
    for e in &res.excluded {
        let _ = writeln!(extra, "excluded {}: {}", e.subject, e.reason);
    }
    let _ = writeln!(extra, "artifacts in {}", cfg.output_dir.display());
    let mut o = Output::new(
        json!({ "reports": to_value(&res.reports), "excluded": to_value(&res.excluded) }),
        format!("{}{extra}", format_table(&res.reports)),
    );
    o.warnings = res.warnings;
    Ok(o)
}

pub fn fuse(a: &FuseArgs) -> Result<Output> {
    let members = a.inputs.iter().map(read_label_volume).collect::<Result<Vec<_>>>()?;
    let fused = majority_vote(&members, a.weights.as_deref())?;
    write_label_volume(&a.out, &fused)?;
    let counts: Vec<usize> = [0u8, 1, 2, 4]
        .iter()
        .map(|l| fused.data().iter().filter(|v| *v == l).count())
        .collect();
    Ok(Output::new(
        json!({ "members": members.len(), "voxels": { "0": counts[0], "1": counts[1], "2": counts[2], "4": counts[3] } }),
        format!(
            "fused {} members -> {} (labels 1/2/4: {}/{}/{} voxels)\n",
            members.len(),
            a.out.display(),
            counts[1],
            counts[2],
            counts[3]
        ),
    ))
}

pub fn postproc(a: &PostprocArgs) -> Result<Output> {
    if a.z_et.is_some() && a.t1gd.is_none() {
        return Err(Error::Config("--z-et needs --t1gd for the intensity filter".into()));
    }
    let connectivity = Connectivity::from_count(a.connectivity)
        .ok_or_else(|| Error::Config(format!("connectivity must be 6 or 26, got {}", a.connectivity)))?;
    let vol = read_label_volume(&a.input)?;
    let intensity = match &a.t1gd {
        Some(p) => {
            let raw = read_intensity_volume(p)?;
            Some(if a.no_zscore {
                raw
            } else {
                // z-score over the nonzero (skull-stripped brain) voxels
                let data = raw.data().iter().map(|v| *v != 0.0).collect();
                let brain = Mask::new(*raw.geometry(), data, RoiKind::Brain)?;
                zscore_normalize(&raw, Some(&brain))?
            })
        }
        None => None,
    };
    let params = PostprocessParams {
        min_wt: a.min_wt,
        min_et: a.min_et,
        et_floor: a.et_floor,
        hierarchy_repair: !a.no_repair,
        intensity_filter: intensity.is_some(),
        z_et: a.z_et.unwrap_or(0.0),
        connectivity,
    };
    let (out, log) = postprocess(&vol, intensity.as_ref(), &params)?;
    write_label_volume(&a.out, &out)?;
    let text = format!(
        "WT voxels removed            {}\nsmall ET -> 1                {}\nET below floor -> 1          {}\nenclosed ED -> 1             {}\ndark ET -> 1                 {}\n",
        log.wt_removed, log.et_small_relabelled, log.et_floor_relabelled, log.ed_enclosed_relabelled, log.et_dark_relabelled
    );
    Ok(Output::new(to_value(&log), text))
}

pub fn segmetrics(a: &SegmetricsArgs) -> Result<Output> {
    let p = read_label_volume(&a.pred)?;
    let r = read_label_volume(&a.reference)?;
    let s: SegScore = seg_metrics(&p, &r, a.hd95)?;
    let hd = |v: f64| if v.is_finite() { format!("{v:.3}") } else { "inf".into() };
    let hd_name = if a.hd95 { "HD95 (mm)" } else { "HD (mm)" };
    let mut text = format!("{:<6}  {:>8}  {:>10}\n", "Region", "Dice", hd_name);
    for (name, r) in [("ET", s.et), ("WT", s.wt), ("TC", s.tc)] {
        let _ = writeln!(text, "{name:<6}  {:>8.4}  {:>10}", r.dice, hd(r.hausdorff));
    }
    Ok(Output::new(to_value(&s), text))
}

pub fn synth(a: &SynthArgs) -> Result<Output> {
    let mut spec = match &a.spec {
        Some(p) => read_json::<CohortSpec>(p, "cohort spec")?,
        None => CohortSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.n {
        spec.n_subjects = n;
    }
    if a.t1gd {
        spec.write_t1gd = true;
    }
    let cohort = make_cohort(&spec, &a.out)?;
    Ok(Output::new(
        json!({ "subjects": cohort.records.len(), "seed": spec.seed, "records": to_value(&cohort.records) }),
        format!("wrote {} subjects to {}\n", cohort.records.len(), a.out.display()),
    ))
}
