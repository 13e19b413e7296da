//! Filter composition and evaluation.
//!
//! A pipeline is an ordered list of stages applied one after another to a
//! point cloud. Lengths that depend on the data (MLS search radius, voxel
//! edge) may be left unset and are then derived from the median
//! nearest-neighbor spacing of the cloud entering the stage.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::{default_gate, map_error, Alignment, MapError, ScaleFactor};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Trajectory};
use crate::mls::{MlsParams, PolynomialOrder};
use crate::outlier::{radius_filter, statistical_filter, RadiusFilterParams, StatFilterParams};
use crate::spatial::median_spacing;
use crate::upsample::{
    upsample_random_uniform_density, upsample_sample_local_plane, upsample_voxel_grid_dilation,
    RandomUniformDensityParams, SampleLocalPlaneParams, VoxelGridDilationParams,
};

/// Current configuration schema version.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FilterSpec {
    Radius {
        r: f64,
        b: usize,
    },
    Statistical {
        #[serde(default = "default_l")]
        l: usize,
        #[serde(default = "default_h")]
        h: f64,
    },
    SampleLocalPlane {
        u_r: f64,
        u_sz: f64,
        u_s: usize,
    },
    RandomUniformDensity {
        d: usize,
        /// Falls back to the pipeline seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    VoxelGridDilation {
        /// Voxel edge; unset means `voxel_factor` times the median spacing.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_vs: Option<f64>,
        #[serde(default = "default_d_i")]
        d_i: usize,
    },
}

fn default_l() -> usize {
    StatFilterParams::default().l
}
fn default_h() -> f64 {
    StatFilterParams::default().h
}
fn default_d_i() -> usize {
    3
}

impl FilterSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            FilterSpec::Radius { .. } => "radius",
            FilterSpec::Statistical { .. } => "statistical",
            FilterSpec::SampleLocalPlane { .. } => "sample-local-plane",
            FilterSpec::RandomUniformDensity { .. } => "random-uniform-density",
            FilterSpec::VoxelGridDilation { .. } => "voxel-grid-dilation",
        }
    }

    pub fn is_upsampler(&self) -> bool {
        matches!(
            self,
            FilterSpec::SampleLocalPlane { .. }
                | FilterSpec::RandomUniformDensity { .. }
                | FilterSpec::VoxelGridDilation { .. }
        )
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind())?;
        match self {
            FilterSpec::Radius { r, b } => write!(f, "r={r} b={b}")?,
            FilterSpec::Statistical { l, h } => write!(f, "l={l} h={h}")?,
            FilterSpec::SampleLocalPlane { u_r, u_sz, u_s } => {
                write!(f, "u_r={u_r} u_sz={u_sz} u_s={u_s}")?
            }
            FilterSpec::RandomUniformDensity { d, seed } => match seed {
                Some(s) => write!(f, "d={d} seed={s}")?,
                None => write!(f, "d={d}")?,
            },
            FilterSpec::VoxelGridDilation { s_vs, d_i } => match s_vs {
                Some(s) => write!(f, "s_vs={s} d_i={d_i}")?,
                None => write!(f, "s_vs=auto d_i={d_i}")?,
            },
        }
        write!(f, ")")
    }
}

/// MLS settings shared by all upsampling stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlsDefaults {
    /// Fixed search radius; unset means `radius_factor` times the median spacing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_radius: Option<f64>,
    pub radius_factor: f64,
    pub polynomial_order: PolynomialOrder,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_bandwidth: Option<f64>,
    pub project_originals: bool,
    /// Automatic voxel edge in units of median spacing.
    pub voxel_factor: f64,
}

impl Default for MlsDefaults {
    fn default() -> Self {
        MlsDefaults {
            search_radius: None,
            radius_factor: 5.0,
            polynomial_order: PolynomialOrder::Plane,
            gaussian_bandwidth: None,
            project_originals: true,
            voxel_factor: 0.75,
        }
    }
}

impl MlsDefaults {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("radius_factor", self.radius_factor),
            ("voxel_factor", self.voxel_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(())
    }

    /// Concrete MLS parameters for a stage whose input has the given spacing.
    pub fn resolve(&self, spacing: Option<f64>) -> Result<MlsParams> {
        let r = match self.search_radius {
            Some(r) => r,
            None => self.radius_factor * positive_spacing(spacing)?,
        };
        let mut p = MlsParams::new(r).with_order(self.polynomial_order);
        p.gaussian_bandwidth = self.gaussian_bandwidth;
        p.project_originals = self.project_originals;
        p.validate()?;
        Ok(p)
    }
}

fn positive_spacing(spacing: Option<f64>) -> Result<f64> {
    match spacing {
        Some(s) if s > 0.0 => Ok(s),
        _ => Err(Error::DegenerateNeighborhood(
            "cannot derive a length scale: median spacing is zero or undefined".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default = "config_version")]
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mls: MlsDefaults,
    pub stages: Vec<FilterSpec>,
}

fn config_version() -> u32 {
    CONFIG_VERSION
}

impl Default for PipelineSpec {
    /// Statistical filter with `h = 1.8` followed by three passes of voxel
    /// grid dilation on an automatically sized grid.
    fn default() -> Self {
        PipelineSpec {
            version: CONFIG_VERSION,
            seed: 0,
            mls: MlsDefaults::default(),
            stages: vec![
                FilterSpec::Statistical { l: 50, h: 1.8 },
                FilterSpec::VoxelGridDilation { s_vs: None, d_i: 3 },
            ],
        }
    }
}

impl PipelineSpec {
    pub fn new(stages: Vec<FilterSpec>) -> Self {
        PipelineSpec {
            stages,
            ..PipelineSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("pipeline needs at least one stage".into()));
        }
        self.mls.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: PipelineSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline spec serializes")
    }

    /// Single stage with the same MLS settings and seed.
    pub fn single(&self, stage: usize) -> PipelineSpec {
        PipelineSpec {
            stages: vec![self.stages[stage].clone()],
            ..self.clone()
        }
    }

    pub fn describe(&self) -> String {
        self.stages
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" > ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// The stage as run, with automatic lengths filled in.
    pub description: String,
    pub input_points: usize,
    pub output_points: usize,
    /// Wall-clock seconds spent in the stage, file I/O excluded.
    pub seconds: f64,
}

/// Applies one stage.
pub fn run_stage(
    cloud: &PointCloud,
    filter: &FilterSpec,
    spec: &PipelineSpec,
) -> Result<(PointCloud, String)> {
    let spacing = || median_spacing(cloud);
    match filter {
        FilterSpec::Radius { r, b } => {
            let (out, _) = radius_filter(cloud, &RadiusFilterParams { r: *r, b: *b })?;
            Ok((out, filter.to_string()))
        }
        FilterSpec::Statistical { l, h } => {
            let (out, _) = statistical_filter(cloud, &StatFilterParams { l: *l, h: *h })?;
            Ok((out, filter.to_string()))
        }
        FilterSpec::SampleLocalPlane { u_r, u_sz, u_s } => {
            let mls = spec.mls.resolve(spacing())?;
            let p = SampleLocalPlaneParams {
                u_r: *u_r,
                u_sz: *u_sz,
                u_s: *u_s,
            };
            let out = upsample_sample_local_plane(cloud, &mls, &p)?;
            Ok((out, format!("{filter} mls_r={}", mls.search_radius)))
        }
        FilterSpec::RandomUniformDensity { d, seed } => {
            let mls = spec.mls.resolve(spacing())?;
            let p = RandomUniformDensityParams {
                d: *d,
                seed: seed.unwrap_or(spec.seed),
            };
            let out = upsample_random_uniform_density(cloud, &mls, &p)?;
            Ok((out, format!("{filter} mls_r={}", mls.search_radius)))
        }
        FilterSpec::VoxelGridDilation { s_vs, d_i } => {
            let sp = spacing();
            let mls = spec.mls.resolve(sp)?;
            let s_vs = match s_vs {
                Some(s) => *s,
                None => spec.mls.voxel_factor * positive_spacing(sp)?,
            };
            let out = upsample_voxel_grid_dilation(
                cloud,
                &mls,
                &VoxelGridDilationParams { s_vs, d_i: *d_i },
            )?;
            Ok((
                out,
                format!(
                    "{}(s_vs={s_vs} d_i={d_i}) mls_r={}",
                    filter.kind(),
                    mls.search_radius
                ),
            ))
        }
    }
}

/// Applies every stage in order. Errors carry the failing stage index.
pub fn run_pipeline(
    cloud: &PointCloud,
    spec: &PipelineSpec,
) -> Result<(PointCloud, Vec<StageRecord>)> {
    spec.validate()?;
    let mut current = cloud.clone();
    let mut records = Vec::with_capacity(spec.stages.len());
    for (i, filter) in spec.stages.iter().enumerate() {
        let start = Instant::now();
        let (next, description) = run_stage(&current, filter, spec).map_err(|e| Error::Stage {
            stage: i,
            kind: filter.kind().to_string(),
            source: Box::new(e),
        })?;
        let seconds = start.elapsed().as_secs_f64();
        log::debug!(
            "stage {i} {description}: {} -> {} points",
            current.len(),
            next.len()
        );
        records.push(StageRecord {
            stage: i,
            description,
            input_points: current.len(),
            output_points: next.len(),
            seconds,
        });
        current = next;
    }
    Ok((current, records))
}

/// Everything needed to score an estimated map.
#[derive(Debug, Clone)]
pub struct Reference<'a> {
    pub ground_truth: &'a PointCloud,
    pub estimated_traj: &'a Trajectory,
    pub ground_truth_traj: &'a Trajectory,
    /// Correspondence gate; unset means the default for the ground truth.
    pub max_dist: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scale: ScaleFactor,
    pub max_dist: f64,
    pub error: MapError,
}

/// Scales `estimated` into the ground-truth frame using the trajectories and
/// measures its deviation from the ground truth.
pub fn evaluate(estimated: &PointCloud, reference: &Reference<'_>) -> Result<Evaluation> {
    let alignment =
        Alignment::from_trajectories(reference.estimated_traj, reference.ground_truth_traj)?;
    let aligned = alignment.apply(estimated);
    let max_dist = match reference.max_dist {
        Some(d) => d,
        None => default_gate(reference.ground_truth)?,
    };
    let error = map_error(&aligned, reference.ground_truth, max_dist)?;
    Ok(Evaluation {
        scale: alignment.scale,
        max_dist,
        error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Status {
    Ok,
    Failed(String),
}

/// One scored pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Position of the parameter combination in the sweep grid.
    pub index: usize,
    pub pipeline: String,
    pub status: Status,
    pub input_points: usize,
    pub output_points: Option<usize>,
    pub evaluation: Option<Evaluation>,
    pub stages: Vec<StageRecord>,
}

impl EvalRecord {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn deviation_percent(&self) -> Option<f64> {
        self.evaluation.map(|e| e.error.percent_error)
    }

    pub fn total_seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }

    /// Record for the unprocessed map.
    pub fn baseline(estimated: &PointCloud, reference: &Reference<'_>) -> EvalRecord {
        let (status, evaluation) = match evaluate(estimated, reference) {
            Ok(e) => (Status::Ok, Some(e)),
            Err(e) => (Status::Failed(e.to_string()), None),
        };
        EvalRecord {
            index: 0,
            pipeline: "raw".into(),
            status,
            input_points: estimated.len(),
            output_points: Some(estimated.len()),
            evaluation,
            stages: Vec::new(),
        }
    }
}

/// Runs the pipeline and scores its output. Never fails: errors become a
/// failed record.
pub fn run_and_evaluate(
    index: usize,
    estimated: &PointCloud,
    spec: &PipelineSpec,
    reference: &Reference<'_>,
) -> EvalRecord {
    let mut record = EvalRecord {
        index,
        pipeline: spec.describe(),
        status: Status::Ok,
        input_points: estimated.len(),
        output_points: None,
        evaluation: None,
        stages: Vec::new(),
    };
    match run_pipeline(estimated, spec) {
        Ok((out, stages)) => {
            record.output_points = Some(out.len());
            record.stages = stages;
            match evaluate(&out, reference) {
                Ok(e) => record.evaluation = Some(e),
                Err(e) => record.status = Status::Failed(format!("evaluation: {e}")),
            }
        }
        Err(e) => record.status = Status::Failed(e.to_string()),
    }
    record
}
