mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use sparsemap::io::{self, Label};
use sparsemap::mls::PolynomialOrder;
use sparsemap::octree::{build_octree, write_leaf_list};
use sparsemap::outlier::{radius_filter, statistical_filter, RadiusFilterParams, StatFilterParams};
use sparsemap::par;
use sparsemap::pipeline::{
    evaluate, run_pipeline, FilterSpec, MlsDefaults, PipelineSpec, Reference,
};
use sparsemap::report::{self, collect_pairs, emit_report, write_rows};
use sparsemap::sweep::{sweep, DataSource, SweepSpec};
use sparsemap::synth::{self, generate_scene, SceneSpec};
use sparsemap::{Error, Result};

use args::*;

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_usage() {
        1
    } else if e.is_degenerate() {
        3
    } else {
        2
    }
}

fn read_config<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn dump_config<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(p, text)?;
    }
    Ok(())
}

impl MlsFlags {
    fn apply(&self, mls: &mut MlsDefaults) -> Result<()> {
        if let Some(r) = self.search_radius {
            mls.search_radius = Some(r);
        }
        if let Some(f) = self.radius_factor {
            mls.radius_factor = f;
        }
        if let Some(f) = self.voxel_factor {
            mls.voxel_factor = f;
        }
        if let Some(o) = self.order {
            mls.polynomial_order = PolynomialOrder::from_degree(o)?;
        }
        if let Some(b) = self.bandwidth {
            mls.gaussian_bandwidth = Some(b);
        }
        if self.no_project_originals {
            mls.project_originals = false;
        }
        Ok(())
    }
}

impl StageFlags {
    fn given(&self) -> Vec<(&'static str, &'static str)> {
        let mut v = Vec::new();
        let mut push = |set: bool, flag, kind| {
            if set {
                v.push((flag, kind));
            }
        };
        push(self.r.is_some(), "r", "radius");
        push(self.b.is_some(), "b", "radius");
        push(self.l.is_some(), "l", "statistical");
        push(self.h.is_some(), "h", "statistical");
        push(self.u_r.is_some(), "u_r", "sample-local-plane");
        push(self.u_sz.is_some(), "u_sz", "sample-local-plane");
        push(self.u_s.is_some(), "u_s", "sample-local-plane");
        push(self.d.is_some(), "d", "random-uniform-density");
        push(self.s_vs.is_some(), "s_vs", "voxel-grid-dilation");
        push(self.d_i.is_some(), "d_i", "voxel-grid-dilation");
        v
    }

    /// Overrides matching fields in every stage; a flag that matches no
    /// stage is a usage error.
    fn apply(&self, stages: &mut [FilterSpec]) -> Result<()> {
        for (flag, kind) in self.given() {
            if !stages.iter().any(|s| s.kind() == kind) {
                return Err(usage(format!(
                    "--{flag} given but the pipeline has no {kind} stage"
                )));
            }
        }
        for s in stages {
            match s {
                FilterSpec::Radius { r, b } => {
                    set(r, self.r);
                    set(b, self.b);
                }
                FilterSpec::Statistical { l, h } => {
                    set(l, self.l);
                    set(h, self.h);
                }
                FilterSpec::SampleLocalPlane { u_r, u_sz, u_s } => {
                    set(u_r, self.u_r);
                    set(u_sz, self.u_sz);
                    set(u_s, self.u_s);
                }
                FilterSpec::RandomUniformDensity { d, .. } => set(d, self.d),
                FilterSpec::VoxelGridDilation { s_vs, d_i } => {
                    if self.s_vs.is_some() {
                        *s_vs = self.s_vs;
                    }
                    set(d_i, self.d_i);
                }
            }
        }
        Ok(())
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn required<T>(v: Option<T>, flag: &str, method: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("{method} needs --{flag}")))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec: SceneSpec = match &a.config {
        Some(p) => read_config(p)?,
        None => SceneSpec::default(),
    };
    set(&mut spec.seed, a.seed);
    set(&mut spec.noise_sigma, a.noise_sigma);
    set(&mut spec.outlier_fraction, a.outlier_fraction);
    set(&mut spec.sparse_fraction, a.sparse_fraction);
    set(&mut spec.gt_density, a.gt_density);
    dump_config(&spec, a.dump_config.as_deref())?;
    let scene = generate_scene(&spec)?;
    scene.write_bundle(&a.out)?;
    println!(
        "ground truth {} points, estimated {} points ({} outliers), {} poses -> {}",
        scene.ground_truth.len(),
        scene.estimated.len(),
        scene.outlier_count(),
        scene.gt_traj.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let cloud = io::read_cloud(&a.input)?;
    let (out, rep) = match a.method {
        FilterMethod::Radius => {
            let p = RadiusFilterParams {
                r: required(a.stage.r, "r", "radius filter")?,
                b: required(a.stage.b, "b", "radius filter")?,
            };
            radius_filter(&cloud, &p)?
        }
        FilterMethod::Statistical => {
            let d = StatFilterParams::default();
            let p = StatFilterParams {
                l: a.stage.l.unwrap_or(d.l),
                h: a.stage.h.unwrap_or(d.h),
            };
            statistical_filter(&cloud, &p)?
        }
    };
    io::write_cloud_auto(&out, &a.output)?;
    if let Some(path) = &a.labels {
        let mut labels = vec![Label::Inlier; cloud.len()];
        for &i in &rep.removed {
            labels[i] = Label::Outlier;
        }
        io::write_labels(&labels, path)?;
    }
    println!("kept {} of {} points", rep.kept.len(), cloud.len());
    Ok(())
}

fn cmd_upsample(a: &UpsampleArgs) -> Result<()> {
    let stage = match a.method {
        UpsampleMethod::SampleLocalPlane => FilterSpec::SampleLocalPlane {
            u_r: required(a.stage.u_r, "u_r", "sample-local-plane")?,
            u_sz: required(a.stage.u_sz, "u_sz", "sample-local-plane")?,
            u_s: required(a.stage.u_s, "u_s", "sample-local-plane")?,
        },
        UpsampleMethod::RandomUniformDensity => FilterSpec::RandomUniformDensity {
            d: required(a.stage.d, "d", "random-uniform-density")?,
            seed: None,
        },
        UpsampleMethod::VoxelGridDilation => FilterSpec::VoxelGridDilation {
            s_vs: a.stage.s_vs,
            d_i: a.stage.d_i.unwrap_or(3),
        },
    };
    let mut spec = PipelineSpec::new(vec![stage]);
    spec.seed = a.seed;
    a.stage.apply(&mut spec.stages)?;
    a.mls.apply(&mut spec.mls)?;
    let cloud = io::read_cloud(&a.input)?;
    let (out, rec) = run_pipeline(&cloud, &spec)?;
    io::write_cloud_auto(&out, &a.output)?;
    println!(
        "{}: {} -> {} points",
        rec[0].description,
        cloud.len(),
        out.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct StageRow {
    stage: usize,
    description: String,
    input_points: usize,
    output_points: usize,
    time_s: Option<f64>,
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => {
            let s: PipelineSpec = read_config(p)?;
            s.validate()?;
            s
        }
        None => PipelineSpec::default(),
    };
    set(&mut spec.seed, a.seed);
    a.stage.apply(&mut spec.stages)?;
    a.mls.apply(&mut spec.mls)?;
    spec.validate()?;
    dump_config(&spec, a.dump_config.as_deref())?;
    let cloud = io::read_cloud(&a.input)?;
    let (out, records) = run_pipeline(&cloud, &spec)?;
    io::write_cloud_auto(&out, &a.output)?;
    for r in &records {
        println!(
            "stage {} {}: {} -> {}",
            r.stage, r.description, r.input_points, r.output_points
        );
    }
    if let Some(path) = &a.stages_csv {
        let rows: Vec<StageRow> = records
            .into_iter()
            .map(|r| StageRow {
                stage: r.stage,
                description: r.description,
                input_points: r.input_points,
                output_points: r.output_points,
                time_s: a.timing.then(|| (r.seconds * 1000.0).round() / 1000.0),
            })
            .collect();
        write_rows(&rows, path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    deviation_percent: f64,
    mean_error: f64,
    matched_fraction: f64,
    matched: usize,
    points: usize,
    max_dist: f64,
    scale_x: f64,
    scale_y: f64,
    scale_z: f64,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pick = |explicit: &Option<std::path::PathBuf>, name: &str| -> Result<std::path::PathBuf> {
        match (explicit, &a.bundle) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(name)),
            (None, None) => Err(usage(format!(
                "eval needs --bundle or an explicit path for {name}"
            ))),
        }
    };
    let estimated = io::read_cloud(&pick(&a.estimated, synth::BUNDLE_ESTIMATED)?)?;
    let ground_truth = io::read_cloud(&pick(&a.ground_truth, synth::BUNDLE_GROUND_TRUTH)?)?;
    let est_traj = io::read_trajectory(&pick(&a.est_traj, synth::BUNDLE_EST_TRAJ)?)?;
    let gt_traj = io::read_trajectory(&pick(&a.gt_traj, synth::BUNDLE_GT_TRAJ)?)?;
    let r = Reference {
        ground_truth: &ground_truth,
        estimated_traj: &est_traj,
        ground_truth_traj: &gt_traj,
        max_dist: a.max_dist,
    };
    let e = evaluate(&estimated, &r)?;
    let row = EvalRow {
        deviation_percent: e.error.percent_error,
        mean_error: e.error.mean_error,
        matched_fraction: e.error.matched_fraction,
        matched: e.error.matched,
        points: estimated.len(),
        max_dist: e.max_dist,
        scale_x: e.scale.x,
        scale_y: e.scale.y,
        scale_z: e.scale.z,
    };
    println!(
        "deviation {}% mean error {} matched {}/{} scale ({}, {}, {})",
        row.deviation_percent,
        row.mean_error,
        row.matched,
        row.points,
        row.scale_x,
        row.scale_y,
        row.scale_z
    );
    if let Some(path) = &a.output {
        write_rows(&[row], path)?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => {
            let s: SweepSpec = read_config(p)?;
            s.validate()?;
            s
        }
        None => SweepSpec::default(),
    };
    if let Some(b) = &a.bundle {
        spec.data = DataSource::Bundle(b.clone());
    }
    set(&mut spec.parallelism, a.parallelism);
    dump_config(&spec, a.dump_config.as_deref())?;
    let outcome = sweep(&spec)?;
    let sequence = a.sequence.clone().unwrap_or_else(|| {
        a.out
            .file_name()
            .map_or_else(|| "sequence".into(), |n| n.to_string_lossy().into_owned())
    });
    let files = emit_report(
        &outcome.records,
        Some(&outcome.baseline),
        &sequence,
        &a.out,
        a.timing,
    )?;
    let failed = outcome.records.iter().filter(|r| !r.is_ok()).count();
    println!("{} combinations, {failed} failed", outcome.records.len());
    if let Some(d) = outcome.baseline.deviation_percent() {
        println!("raw deviation {d}%");
    }
    match outcome.best() {
        Some(b) => println!(
            "best #{} deviation {}% ({} points): {}",
            b.index,
            b.deviation_percent().unwrap_or(f64::NAN),
            b.output_points.unwrap_or(0),
            b.pipeline
        ),
        None => println!("no combination succeeded"),
    }
    println!("metrics -> {}", files.metrics.display());
    Ok(())
}

fn cmd_octree(a: &OctreeArgs) -> Result<()> {
    let cloud = io::read_cloud(&a.input)?;
    let tree = build_octree(&cloud, a.resolution)?;
    write_leaf_list(&tree, &a.output)?;
    let st = tree.stats();
    println!(
        "depth {} leaf edge {} occupied leaves {} free fraction {}",
        tree.depth(),
        tree.leaf_edge(),
        st.occupied_leaves,
        st.free_volume_fraction
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let pairs = collect_pairs(&a.input)?;
    report::write_rows(&pairs, &a.output)?;
    for p in &pairs {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v}"));
        println!(
            "{}: raw {}% processed {}%",
            p.sequence,
            show(p.raw_deviation_percent),
            show(p.processed_deviation_percent)
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Upsample(a) => cmd_upsample(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Octree(a) => cmd_octree(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match par::with_threads(cli.threads, || run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
