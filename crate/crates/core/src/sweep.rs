//! Parameter sweeps: every combination of per-stage value grids is run as an
//! independent pipeline against the same data and scored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Trajectory};
use crate::io;
use crate::par;
use crate::pipeline::{
    run_and_evaluate, EvalRecord, FilterSpec, MlsDefaults, PipelineSpec, Reference, CONFIG_VERSION,
};
use crate::synth::{self, generate_scene, Scene, SceneSpec};

/// A single value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(v) => v.clone(),
        }
    }
}

impl<T> From<Vec<T>> for Grid<T> {
    fn from(v: Vec<T>) -> Self {
        Grid::Many(v)
    }
}

fn one<T>(v: T) -> Grid<T> {
    Grid::One(v)
}

/// Value grids for one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StageGrid {
    Radius {
        r: Grid<f64>,
        b: Grid<usize>,
    },
    Statistical {
        #[serde(default = "default_l")]
        l: Grid<usize>,
        #[serde(default = "default_h")]
        h: Grid<f64>,
    },
    SampleLocalPlane {
        u_r: Grid<f64>,
        u_sz: Grid<f64>,
        u_s: Grid<usize>,
    },
    RandomUniformDensity {
        d: Grid<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    VoxelGridDilation {
        /// Unset means automatic.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_vs: Option<Grid<f64>>,
        #[serde(default = "default_d_i")]
        d_i: Grid<usize>,
    },
}

fn default_l() -> Grid<usize> {
    one(50)
}
fn default_h() -> Grid<f64> {
    one(1.8)
}
fn default_d_i() -> Grid<usize> {
    one(3)
}

/// Cartesian product, last list varying fastest.
fn product<A: Clone, B: Clone, C>(a: &[A], b: &[B], f: impl Fn(A, B) -> C) -> Vec<C> {
    a.iter()
        .flat_map(|x| {
            b.iter()
                .map(|y| f(x.clone(), y.clone()))
                .collect::<Vec<_>>()
        })
        .collect()
}

impl StageGrid {
    /// Every concrete stage in the grid.
    pub fn expand(&self) -> Vec<FilterSpec> {
        match self {
            StageGrid::Radius { r, b } => {
                product(&r.values(), &b.values(), |r, b| FilterSpec::Radius { r, b })
            }
            StageGrid::Statistical { l, h } => product(&l.values(), &h.values(), |l, h| {
                FilterSpec::Statistical { l, h }
            }),
            StageGrid::SampleLocalPlane { u_r, u_sz, u_s } => {
                let pairs = product(&u_r.values(), &u_sz.values(), |a, b| (a, b));
                product(&pairs, &u_s.values(), |(u_r, u_sz), u_s| {
                    FilterSpec::SampleLocalPlane { u_r, u_sz, u_s }
                })
            }
            StageGrid::RandomUniformDensity { d, seed } => d
                .values()
                .into_iter()
                .map(|d| FilterSpec::RandomUniformDensity { d, seed: *seed })
                .collect(),
            StageGrid::VoxelGridDilation { s_vs, d_i } => {
                let s: Vec<Option<f64>> = match s_vs {
                    None => vec![None],
                    Some(g) => g.values().into_iter().map(Some).collect(),
                };
                product(&s, &d_i.values(), |s_vs, d_i| {
                    FilterSpec::VoxelGridDilation { s_vs, d_i }
                })
            }
        }
    }
}

impl From<&FilterSpec> for StageGrid {
    fn from(f: &FilterSpec) -> Self {
        match f.clone() {
            FilterSpec::Radius { r, b } => StageGrid::Radius {
                r: one(r),
                b: one(b),
            },
            FilterSpec::Statistical { l, h } => StageGrid::Statistical {
                l: one(l),
                h: one(h),
            },
            FilterSpec::SampleLocalPlane { u_r, u_sz, u_s } => StageGrid::SampleLocalPlane {
                u_r: one(u_r),
                u_sz: one(u_sz),
                u_s: one(u_s),
            },
            FilterSpec::RandomUniformDensity { d, seed } => {
                StageGrid::RandomUniformDensity { d: one(d), seed }
            }
            FilterSpec::VoxelGridDilation { s_vs, d_i } => StageGrid::VoxelGridDilation {
                s_vs: s_vs.map(one),
                d_i: one(d_i),
            },
        }
    }
}

/// Where the sweep data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generate a synthetic scene.
    Synthetic(SceneSpec),
    /// Read a scene bundle directory (labels are not needed).
    Bundle(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SceneSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "config_version")]
    pub version: u32,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses the library default.
    #[serde(default)]
    pub parallelism: usize,
    /// Correspondence gate; unset means the ground-truth default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dist: Option<f64>,
    #[serde(default)]
    pub mls: MlsDefaults,
    pub stages: Vec<StageGrid>,
}

fn config_version() -> u32 {
    CONFIG_VERSION
}

impl Default for SweepSpec {
    /// Brackets the recommended statistical filter and dilation settings.
    fn default() -> Self {
        SweepSpec {
            version: CONFIG_VERSION,
            data: DataSource::default(),
            seed: 0,
            parallelism: 0,
            max_dist: None,
            mls: MlsDefaults::default(),
            stages: vec![
                StageGrid::Statistical {
                    l: vec![30, 50].into(),
                    h: vec![0.5, 1.0, 1.8, 3.0].into(),
                },
                StageGrid::VoxelGridDilation {
                    s_vs: None,
                    d_i: vec![1, 2, 3].into(),
                },
            ],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("sweep needs at least one stage".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.expand().is_empty() {
                return Err(Error::Config(format!("stage {i} has an empty value grid")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    /// Sweep over exactly one pipeline.
    pub fn from_pipeline(pipeline: &PipelineSpec, data: DataSource) -> Self {
        SweepSpec {
            version: CONFIG_VERSION,
            data,
            seed: pipeline.seed,
            parallelism: 0,
            max_dist: None,
            mls: pipeline.mls,
            stages: pipeline.stages.iter().map(StageGrid::from).collect(),
        }
    }

    /// Number of combinations.
    pub fn len(&self) -> usize {
        self.stages.iter().map(|s| s.expand().len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every pipeline in the grid, in combination-index order (last stage
    /// varying fastest).
    pub fn combinations(&self) -> Vec<PipelineSpec> {
        let per_stage: Vec<Vec<FilterSpec>> = self.stages.iter().map(|s| s.expand()).collect();
        let mut combos: Vec<Vec<FilterSpec>> = vec![Vec::new()];
        for options in &per_stage {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    options.iter().map(move |o| {
                        let mut c = prefix.clone();
                        c.push(o.clone());
                        c
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .map(|stages| PipelineSpec {
                version: CONFIG_VERSION,
                seed: self.seed,
                mls: self.mls,
                stages,
            })
            .collect()
    }
}

/// Estimated map plus everything needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub estimated: PointCloud,
    pub ground_truth: PointCloud,
    pub estimated_traj: Trajectory,
    pub ground_truth_traj: Trajectory,
}

impl From<Scene> for Dataset {
    fn from(s: Scene) -> Self {
        Dataset {
            estimated: s.estimated,
            ground_truth: s.ground_truth,
            estimated_traj: s.est_traj,
            ground_truth_traj: s.gt_traj,
        }
    }
}

impl Dataset {
    pub fn load(source: &DataSource) -> Result<Self> {
        match source {
            DataSource::Synthetic(spec) => Ok(generate_scene(spec)?.into()),
            DataSource::Bundle(dir) => Self::read_bundle(dir),
        }
    }

    pub fn read_bundle(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            estimated: io::read_cloud(&dir.join(synth::BUNDLE_ESTIMATED))?,
            ground_truth: io::read_cloud(&dir.join(synth::BUNDLE_GROUND_TRUTH))?,
            estimated_traj: io::read_trajectory(&dir.join(synth::BUNDLE_EST_TRAJ))?,
            ground_truth_traj: io::read_trajectory(&dir.join(synth::BUNDLE_GT_TRAJ))?,
        })
    }

    pub fn reference(&self, max_dist: Option<f64>) -> Reference<'_> {
        Reference {
            ground_truth: &self.ground_truth,
            estimated_traj: &self.estimated_traj,
            ground_truth_traj: &self.ground_truth_traj,
            max_dist,
        }
    }
}

/// Sweep output: combinations in rank order plus the unprocessed baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<EvalRecord>,
    pub baseline: EvalRecord,
}

impl SweepOutcome {
    /// Best successful row, if any.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.records.first().filter(|r| r.is_ok())
    }
}

/// Orders records: successful rows by deviation, then combination index;
/// failed rows last.
pub fn rank(records: &mut [EvalRecord]) {
    records.sort_by(
        |a, b| match (a.deviation_percent(), b.deviation_percent()) {
            (Some(x), Some(y)) if a.is_ok() && b.is_ok() => {
                x.total_cmp(&y).then(a.index.cmp(&b.index))
            }
            _ => b.is_ok().cmp(&a.is_ok()).then(a.index.cmp(&b.index)),
        },
    );
}

/// Runs every combination against `data`.
pub fn sweep_dataset(spec: &SweepSpec, data: &Dataset) -> Result<SweepOutcome> {
    spec.validate()?;
    let combos = spec.combinations();
    let reference = data.reference(spec.max_dist);
    log::info!("sweeping {} combinations", combos.len());
    let (mut records, baseline) = par::with_threads(spec.parallelism, || {
        let records = par::map_range(combos.len(), |i| {
            run_and_evaluate(i, &data.estimated, &combos[i], &reference)
        });
        (records, EvalRecord::baseline(&data.estimated, &reference))
    });
    rank(&mut records);
    Ok(SweepOutcome { records, baseline })
}

/// Loads `spec.data` and sweeps it.
pub fn sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let data = Dataset::load(&spec.data)?;
    sweep_dataset(spec, &data)
}
