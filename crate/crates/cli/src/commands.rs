//! Subcommand implementations. Each writes its primary output first and the
//! run manifest beside it.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use svdd_core::baselines::{select_cv, select_dfn, select_md};
use svdd_core::datagen::{generate_shape, Bounds, LabeledGrid, ShapeKind};
use svdd_core::eval::PolygonStudyConfig;
use svdd_core::io;
use svdd_core::smoothing::{ci_contains_zero, fit_pspline, SplineConfig};
use svdd_core::tuning::{
    locate_plateau, select_bandwidth_peak, sweep_objective, BandwidthGrid, PeakOptions,
};
use svdd_core::{train as train_model, DataMatrix, KernelSpec, Label, SolverConfig, SvddError};

use crate::manifest::RunManifest;
use crate::{
    GridArgs, GridFlags, GridPreset, KernelArg, Method, ScoreArgs, ShapeArg, ShapesArgs,
    ShuttleArgs, SimulateArgs, SolverFlags, TrainArgs, TuneArgs,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn load_data(path: &Path) -> Result<DataMatrix> {
    let data = io::read_dataset(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(data.x)
}

/// `report.json` -> `report.curve.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

impl GridFlags {
    fn resolve(&self) -> Result<BandwidthGrid> {
        let preset = match self.preset {
            GridPreset::Low => BandwidthGrid::low_dimensional(),
            GridPreset::High => BandwidthGrid::high_dimensional(),
        };
        Ok(BandwidthGrid::new(
            self.s_min.unwrap_or(preset.s_min),
            self.s_max.unwrap_or(preset.s_max),
            self.s_step.unwrap_or(preset.step),
        )?)
    }
}

impl SolverFlags {
    fn config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            f: self.f,
            kkt_tol: self.kkt_tol,
            max_iterations: self.max_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct TuneReport {
    method: Method,
    s: f64,
    s_low: Option<f64>,
    s_high: Option<f64>,
    n: usize,
    f: f64,
    grid: Option<BandwidthGrid>,
    lambda: Option<f64>,
    /// `(s, V*)` for Peak, `(s, criterion)` for CV and DFN.
    curve: Option<Vec<(f64, f64)>>,
}

struct Selection {
    report: TuneReport,
    write_curve: Box<dyn FnOnce(&Path) -> Result<()>>,
}

fn pairs_writer(name: &'static str, pairs: Vec<(f64, f64)>) -> Box<dyn FnOnce(&Path) -> Result<()>> {
    Box::new(move |path| {
        let mut w = create(path)?;
        io::write_pairs(&mut w, name, &pairs)?;
        w.flush()?;
        Ok(())
    })
}

/// Runs a selector. On a missing plateau the diagnostic curve is written to
/// `curve_path` before the error is returned.
fn select(
    x: &DataMatrix,
    method: Method,
    grid: &BandwidthGrid,
    config: &SolverConfig,
    epsilon: f64,
    options: &PeakOptions,
    curve_path: Option<&Path>,
) -> Result<Selection> {
    let report = |s, curve: Option<Vec<(f64, f64)>>, g: Option<BandwidthGrid>| TuneReport {
        method,
        s,
        s_low: None,
        s_high: None,
        n: x.rows(),
        f: config.f,
        grid: g,
        lambda: None,
        curve,
    };
    match method {
        Method::Md => {
            let r = select_md(x, config.f)?;
            Ok(Selection {
                report: report(r.s, None, None),
                write_curve: Box::new(|_| Ok(())),
            })
        }
        Method::Cv | Method::Dfn => {
            let (r, name) = if method == Method::Cv {
                (select_cv(x, grid, epsilon)?, "cv")
            } else {
                (select_dfn(x, grid)?, "dfn")
            };
            let pairs = r.curve.unwrap_or_default();
            Ok(Selection {
                report: report(r.s, Some(pairs.clone()), Some(*grid)),
                write_curve: pairs_writer(name, pairs),
            })
        }
        Method::Peak if options.early_stop => {
            let sel = select_bandwidth_peak(x, config.f, grid, config, &SplineConfig::default(), options)?;
            let curve_pairs = sel.curve.s_values.iter().copied().zip(sel.curve.v_star.iter().copied()).collect();
            let mut rep = report(sel.peak.recommended, Some(curve_pairs), Some(*grid));
            rep.s_low = Some(sel.peak.s_low);
            rep.s_high = Some(sel.peak.s_high);
            rep.lambda = Some(sel.peak.fit.lambda_used);
            Ok(Selection {
                report: rep,
                write_curve: Box::new(move |path| {
                    let mut w = create(path)?;
                    io::write_curve(&mut w, &sel.curve, Some((&sel.peak.fit, &sel.peak.zero_mask)))?;
                    w.flush()?;
                    Ok(())
                }),
            })
        }
        Method::Peak => {
            let curve = sweep_objective(x, config.f, grid, config)?;
            let fit = fit_pspline(curve.interior_s(), &curve.d2, &SplineConfig::default())?;
            let peak = match locate_plateau(curve.interior_s(), fit.clone(), options.min_run) {
                Ok(p) => p,
                Err(e) => {
                    if let Some(path) = curve_path {
                        let mask = ci_contains_zero(&fit);
                        let mut w = create(path)?;
                        io::write_curve(&mut w, &curve, Some((&fit, &mask)))?;
                        w.flush()?;
                        log::warn!("no plateau; diagnostic curve written to {}", path.display());
                    }
                    return Err(e.into());
                }
            };
            let curve_pairs = curve.s_values.iter().copied().zip(curve.v_star.iter().copied()).collect();
            let mut rep = report(peak.recommended, Some(curve_pairs), Some(*grid));
            rep.s_low = Some(peak.s_low);
            rep.s_high = Some(peak.s_high);
            rep.lambda = Some(peak.fit.lambda_used);
            Ok(Selection {
                report: rep,
                write_curve: Box::new(move |path| {
                    let mut w = create(path)?;
                    io::write_curve(&mut w, &curve, Some((&peak.fit, &peak.zero_mask)))?;
                    w.flush()?;
                    Ok(())
                }),
            })
        }
    }
}

fn peak_options(min_run: usize, early_stop: bool) -> PeakOptions {
    PeakOptions {
        min_run,
        early_stop,
        ..PeakOptions::default()
    }
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let x = load_data(&args.data)?;
    let config = args.solver.config()?;
    let spec = match (args.kernel, args.tune) {
        (KernelArg::Linear, None) => KernelSpec::linear(),
        (KernelArg::Linear, Some(_)) => bail!("bandwidth tuning applies to the gaussian kernel only"),
        (KernelArg::Gaussian, Some(method)) => {
            let grid = args.grid.resolve()?;
            let options = peak_options(svdd_core::tuning::DEFAULT_MIN_RUN, false);
            let sel = select(&x, method, &grid, &config, svdd_core::baselines::DEFAULT_CV_EPSILON, &options, None)?;
            log::info!("{method:?} selected s = {}", sel.report.s);
            KernelSpec::gaussian(sel.report.s)?
        }
        (KernelArg::Gaussian, None) => KernelSpec::gaussian(args.s.context("--s is required")?)?,
    };
    let model = train_model(&x, &spec, &config)?;
    let mut w = create(&args.out)?;
    io::write_model(&mut w, &model)?;
    w.flush()?;
    RunManifest::new("train", args)?
        .input(&args.data)?
        .output(&args.out)
        .write_beside(&args.out)?;
    println!(
        "trained on {} rows: {} support vectors, R^2 = {}",
        x.rows(),
        model.sv_indices.len(),
        model.r_squared
    );
    Ok(())
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let x = load_data(&args.data)?;
    let config = args.solver.config()?;
    let grid = args.grid.resolve()?;
    let curve_path = args.curve.clone().unwrap_or_else(|| sibling(&args.out, "curve.csv"));
    let options = peak_options(args.min_run, args.early_stop);
    let mut manifest = RunManifest::new("tune", args)?.input(&args.data)?;
    let sel = match select(&x, args.method, &grid, &config, args.epsilon, &options, Some(&curve_path)) {
        Ok(sel) => sel,
        Err(e) => {
            if matches!(e.downcast_ref::<SvddError>(), Some(SvddError::NoPeakFound { .. })) && curve_path.exists() {
                manifest.output(&curve_path).write_beside(&curve_path)?;
            }
            return Err(e);
        }
    };
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &sel.report)?;
    w.flush()?;
    manifest = manifest.output(&args.out);
    if args.method != Method::Md {
        (sel.write_curve)(&curve_path)?;
        manifest = manifest.output(&curve_path);
    }
    manifest.write_beside(&args.out)?;
    match (sel.report.s_low, sel.report.s_high) {
        (Some(lo), Some(hi)) => println!("{:?}: s = {} (range {lo} to {hi})", args.method, sel.report.s),
        _ => println!("{:?}: s = {}", args.method, sel.report.s),
    }
    Ok(())
}

fn label_name(label: Label) -> &'static str {
    match label {
        Label::Inlier => "inlier",
        Label::Outlier => "outlier",
    }
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let model = io::read_model(open(&args.model)?)?;
    let table = io::read_table(open(&args.data)?).with_context(|| format!("reading {}", args.data.display()))?;
    let mut header: Vec<String> = table.header.clone();
    if let Some(dataset) = &table.dataset {
        if dataset.labels.is_some() {
            *header.last_mut().expect("label column") = "input_label".into();
        }
    }
    header.extend(["dist_sq", "r_sq", "label"].map(String::from));

    let mut csv = csv_writer(&args.out)?;
    csv.write_record(&header)?;
    if let Some(dataset) = &table.dataset {
        let dist = model.score_rows(&dataset.x)?;
        for (i, row) in dataset.x.iter_rows().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(labels) = &dataset.labels {
                record.push(labels[i].to_string());
            }
            record.push(dist[i].to_string());
            record.push(model.r_squared.to_string());
            record.push(label_name(model.label_for(dist[i])).into());
            csv.write_record(&record)?;
        }
    }
    csv.flush()?;
    RunManifest::new("score", args)?
        .input(&args.model)?
        .input(&args.data)?
        .output(&args.out)
        .write_beside(&args.out)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

/// Bounding box padded by 10% per side; a flat axis gets half a unit.
fn plot_bounds(points: &DataMatrix) -> Result<Bounds> {
    let mut b = Bounds::of_data(points)?.padded(0.1);
    if b.width() == 0.0 {
        b.x_min -= 0.5;
        b.x_max += 0.5;
    }
    if b.height() == 0.0 {
        b.y_min -= 0.5;
        b.y_max += 0.5;
    }
    Ok(b)
}

/// Lattice index nearest to `p`.
fn nearest_cell(b: &Bounds, n: usize, p: &[f64]) -> usize {
    let axis = |v: f64, lo: f64, extent: f64| {
        (((v - lo) / extent) * (n - 1) as f64).round().clamp(0.0, (n - 1) as f64) as usize
    };
    axis(p[1], b.y_min, b.height()) * n + axis(p[0], b.x_min, b.width())
}

pub fn grid(args: &GridArgs) -> Result<()> {
    let model = io::read_model(open(&args.model)?)?;
    if model.dims() != 2 {
        return Err(SvddError::Dimension {
            expected: 2,
            got: model.dims(),
        }
        .into());
    }
    let source = match &args.data {
        Some(path) => load_data(path)?,
        None => model.support_vectors.clone(),
    };
    let bounds = plot_bounds(&source)?;
    let n = args.resolution;
    let lattice = LabeledGrid::lattice(bounds, (n, n))?;
    let dist = model.score_rows(&lattice)?;
    let mut near_sv = vec![false; lattice.rows()];
    for sv in model.support_vectors.iter_rows() {
        near_sv[nearest_cell(&bounds, n, sv)] = true;
    }

    let mut csv = csv_writer(&args.out)?;
    csv.write_record(["x", "y", "dist_sq", "label", "is_sv_nearby"])?;
    for (i, p) in lattice.iter_rows().enumerate() {
        csv.write_record([
            p[0].to_string(),
            p[1].to_string(),
            dist[i].to_string(),
            label_name(model.label_for(dist[i])).into(),
            u8::from(near_sv[i]).to_string(),
        ])?;
    }
    csv.flush()?;
    let mut manifest = RunManifest::new("grid", args)?.input(&args.model)?;
    if let Some(path) = &args.data {
        manifest = manifest.input(path)?;
    }
    manifest.output(&args.out).write_beside(&args.out)?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = if args.full {
        PolygonStudyConfig::full()
    } else {
        PolygonStudyConfig::default()
    };
    if let Some(v) = &args.vertices {
        config.vertex_counts = v.clone();
    }
    if let Some(p) = args.polygons {
        config.polygons_per_count = p;
    }
    if let Some(s) = args.samples {
        config.sample_size = s;
    }
    config.seed = args.seed;
    config.grid = args.grid.resolve()?;
    config.resolution = (args.resolution, args.resolution);
    config.settings = svdd_core::eval::PeakSettings::with_fraction(args.f)?;
    config.validate()?;

    let report = svdd_core::eval::polygon_study(&config)?;
    let rows_path = args.out_dir.join("polygon_report.csv");
    let summary_path = args.out_dir.join("ratio_summary.csv");
    let mut w = create(&rows_path)?;
    io::write_polygon_rows(&mut w, &report.rows)?;
    w.flush()?;
    let mut w = create(&summary_path)?;
    io::write_ratio_summary(&mut w, &report.summary)?;
    w.flush()?;
    RunManifest::new("simulate", args)?
        .seed(args.seed)
        .output(&rows_path)
        .output(&summary_path)
        .write_beside(&rows_path)?;

    for s in &report.summary {
        println!(
            "k = {:>2}: median ratio {:.3} (min {:.3}, max {:.3})",
            s.vertex_count, s.median, s.min, s.max
        );
    }
    let failed = report.failures().count();
    if failed > 0 {
        println!("{failed} of {} polygons failed; see the error column", report.rows.len());
    }
    Ok(())
}

pub fn shapes(args: &ShapesArgs) -> Result<()> {
    let kind = match args.kind {
        ShapeArg::Banana => ShapeKind::Banana,
        ShapeArg::Star => ShapeKind::Star,
        ShapeArg::ThreeCluster => ShapeKind::ThreeCluster,
    };
    let x = generate_shape(kind, args.n, args.noise, args.seed)?;
    let mut w = create(&args.out)?;
    io::write_dataset(&mut w, &x, None)?;
    w.flush()?;
    RunManifest::new("shapes", args)?
        .seed(args.seed)
        .output(&args.out)
        .write_beside(&args.out)?;
    Ok(())
}

pub fn shuttle(args: &ShuttleArgs) -> Result<()> {
    let Some(input) = &args.input else {
        println!("download the Statlog shuttle data from {}", io::SHUTTLE_URL);
        println!("then pass the unpacked file with --input");
        return Ok(());
    };
    let out_dir = args.out_dir.as_ref().context("--out-dir is required with --input")?;
    let data = io::read_shuttle(open(input)?).with_context(|| format!("reading {}", input.display()))?;
    let split = io::split_class_sample(&data, 1, args.sample_class1, args.seed)?;
    let train_path = out_dir.join("train.csv");
    let eval_path = out_dir.join("eval.csv");
    let mut w = create(&train_path)?;
    io::write_dataset(&mut w, &split.train, None)?;
    w.flush()?;
    let labels: Vec<i64> = split.eval_labels.iter().map(|&b| i64::from(b)).collect();
    let mut w = create(&eval_path)?;
    io::write_dataset(&mut w, &split.eval, Some(&labels))?;
    w.flush()?;
    RunManifest::new("shuttle", args)?
        .seed(args.seed)
        .input(input)?
        .output(&train_path)
        .output(&eval_path)
        .write_beside(&train_path)?;
    println!(
        "{} rows read; {} class-one rows for training, {} rows for evaluation",
        data.classes.len(),
        split.train.rows(),
        split.eval.rows()
    );
    Ok(())
}
