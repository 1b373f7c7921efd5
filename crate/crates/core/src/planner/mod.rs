//! Candidate lattice scoring, low-quality selection and waypoint ordering.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{look_at, Intrinsics, Pose};
use crate::error::{Error, LoadError, Result};
use crate::evaluator::{fit_to_model, EvaluatorModel};
use crate::geometry::{distance, Aabb, Mat3, Vec3};
use crate::nerf::{render_view, RadianceField, Sampling};

pub type GridIndex = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub bounds: Aabb,
    pub increment: f64,
}

impl GridSpec {
    /// Lattice points per axis: positions `min + k·increment ≤ max`.
    pub fn counts(&self) -> [usize; 3] {
        let e = self.bounds.extent();
        // Tolerate round-off so an extent that is an exact multiple keeps
        // its far endpoint.
        e.map(|v| (v / self.increment + 1e-9).floor() as usize + 1)
    }

    pub fn position(&self, index: GridIndex) -> Vec3 {
        [0, 1, 2].map(|a| self.bounds.min[a] + index[a] as f64 * self.increment)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.increment > 0.0 && self.increment.is_finite()) {
            return Err(Error::validation("increment", "must be positive"));
        }
        if !self.bounds.is_valid() {
            return Err(Error::validation("bounds", "min must not exceed max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: GridIndex,
    pub pose: Pose,
}

/// Lattice poses in lexicographic index order, each facing `target` with
/// +Z up. Points where that orientation is undefined (on the target, or
/// directly above or below it) are skipped.
pub fn sample_candidate_poses(spec: &GridSpec, target: Vec3) -> Result<Vec<Candidate>> {
    spec.validate()?;
    let [nx, ny, nz] = spec.counts();
    let mut out = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let index = [i, j, k];
                if let Ok(pose) = look_at(spec.position(index), target, [0.0, 0.0, 1.0]) {
                    out.push(Candidate { index, pose });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEntry {
    pub index: GridIndex,
    pub pose: Pose,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    pub spec: GridSpec,
    pub entries: Vec<GridEntry>,
}

/// How candidate views are rendered before scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpec {
    pub intrinsics: Intrinsics,
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
}

/// Renders every candidate and scores it with the evaluator in inference
/// mode. Midpoint sampling makes the result a pure function of its inputs.
pub fn evaluate_field(
    field: &RadianceField,
    evaluator: &EvaluatorModel,
    spec: GridSpec,
    candidates: &[Candidate],
    view: &ViewSpec,
) -> Result<ProbabilityGrid> {
    if candidates.is_empty() {
        return Err(Error::validation("candidates", "nothing to evaluate"));
    }
    let entries = candidates
        .par_iter()
        .map(|c| {
            let img = render_view(
                field,
                &c.pose,
                &view.intrinsics,
                view.samples_per_ray,
                view.near,
                view.far,
                Sampling::Midpoint,
            );
            let probability = evaluator
                .predict(&fit_to_model(evaluator, &img))
                .map_err(|e| Error::Candidate {
                    index: c.index,
                    source: Box::new(e),
                })?;
            Ok(GridEntry {
                index: c.index,
                pose: c.pose,
                probability,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityGrid { spec, entries })
}

/// Positions (into `grid.entries`) of entries with probability below `tau`,
/// in grid order.
pub fn select_low_quality(grid: &ProbabilityGrid, tau: f64) -> Vec<usize> {
    (0..grid.entries.len()).filter(|&i| grid.entries[i].probability < tau).collect()
}

fn neighbors(index: GridIndex) -> impl Iterator<Item = GridIndex> {
    (0..3).flat_map(move |axis| {
        [-1i64, 1].into_iter().filter_map(move |d| {
            let v = index[axis] as i64 + d;
            (v >= 0).then(|| {
                let mut n = index;
                n[axis] = v as usize;
                n
            })
        })
    })
}

/// Drops selected entries whose probability differs from any existing
/// 6-connected neighbor by more than `jump_threshold`.
pub fn filter_abrupt_changes(grid: &ProbabilityGrid, selected: &[usize], jump_threshold: f64) -> Vec<usize> {
    let lookup: HashMap<GridIndex, f64> = grid.entries.iter().map(|e| (e.index, e.probability)).collect();
    selected
        .iter()
        .copied()
        .filter(|&s| {
            let e = &grid.entries[s];
            let max_jump = neighbors(e.index)
                .filter_map(|n| lookup.get(&n))
                .map(|p| (p - e.probability).abs())
                .fold(0.0f64, f64::max);
            max_jump <= jump_threshold
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub index: GridIndex,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub start: Pose,
    pub waypoints: Vec<Waypoint>,
    pub path_length: f64,
}

/// Greedy nearest-neighbor tour from `start`; equal distances go to the
/// lexicographically smaller grid index.
pub fn plan_path(start: &Pose, waypoints: &[Waypoint]) -> MissionPlan {
    let mut remaining: Vec<Waypoint> = waypoints.to_vec();
    remaining.sort_by(|a, b| a.index.cmp(&b.index));
    let mut here = start.position();
    let mut ordered = Vec::with_capacity(remaining.len());
    let mut length = 0.0;
    while !remaining.is_empty() {
        let mut best = 0;
        let mut best_d = distance(here, remaining[0].pose.position());
        for (k, w) in remaining.iter().enumerate().skip(1) {
            let d = distance(here, w.pose.position());
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        let w = remaining.remove(best);
        length += best_d;
        here = w.pose.position();
        ordered.push(w);
    }
    MissionPlan {
        start: *start,
        waypoints: ordered,
        path_length: length,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanPose {
    position: Vec3,
    orientation: Mat3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanWaypoint {
    index: GridIndex,
    position: Vec3,
    orientation: Mat3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    start: PlanPose,
    path_length: f64,
    waypoints: Vec<PlanWaypoint>,
}

/// Plan file schema: `{"start": {position, orientation}, "path_length",
/// "waypoints": [{index, position, orientation}]}` with `orientation` the
/// row-major camera-to-world rotation.
pub fn write_plan(plan: &MissionPlan, path: &Path) -> Result<()> {
    let file = PlanFile {
        start: PlanPose {
            position: plan.start.position(),
            orientation: *plan.start.rotation(),
        },
        path_length: plan.path_length,
        waypoints: plan
            .waypoints
            .iter()
            .map(|w| PlanWaypoint {
                index: w.index,
                position: w.pose.position(),
                orientation: *w.pose.rotation(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_plan(path: &Path) -> Result<MissionPlan> {
    if !path.is_file() {
        return Err(LoadError::MissingManifest(path.to_path_buf()).into());
    }
    let corrupt = |reason: String| -> Error {
        LoadError::CorruptManifest {
            path: path.to_path_buf(),
            reason,
        }
        .into()
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PlanFile = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let start = Pose::new(file.start.orientation, file.start.position).map_err(|e| corrupt(e.to_string()))?;
    let waypoints = file
        .waypoints
        .into_iter()
        .map(|w| {
            Ok(Waypoint {
                index: w.index,
                pose: Pose::new(w.orientation, w.position).map_err(|e| corrupt(e.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MissionPlan {
        start,
        waypoints,
        path_length: file.path_length,
    })
}

pub const GRID_CSV_HEADER: &str = "i,j,k,x,y,z,probability";

pub fn write_grid_csv(grid: &ProbabilityGrid, path: &Path) -> Result<()> {
    let mut csv = String::from(GRID_CSV_HEADER);
    csv.push('\n');
    for e in &grid.entries {
        let p = e.pose.position();
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            e.index[0], e.index[1], e.index[2], p[0], p[1], p[2], e.probability
        )
        .expect("write to String");
    }
    fs::write(path, csv).map_err(|e| Error::io(path, e))
}

/// Reads a grid CSV back, re-deriving poses from `spec` and `target`.
pub fn read_grid_csv(path: &Path, spec: GridSpec, target: Vec3) -> Result<ProbabilityGrid> {
    if !path.is_file() {
        return Err(LoadError::MissingManifest(path.to_path_buf()).into());
    }
    let corrupt = |reason: String| -> Error {
        LoadError::CorruptManifest {
            path: path.to_path_buf(),
            reason,
        }
        .into()
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(GRID_CSV_HEADER) {
        return Err(corrupt(format!("expected header `{GRID_CSV_HEADER}`")));
    }
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(corrupt(format!("row {}: expected 7 fields", n + 1)));
        }
        let idx = |k: usize| f[k].parse::<usize>().map_err(|e| corrupt(format!("row {}: {e}", n + 1)));
        let index = [idx(0)?, idx(1)?, idx(2)?];
        let probability = f[6].parse::<f64>().map_err(|e| corrupt(format!("row {}: {e}", n + 1)))?;
        let pose = look_at(spec.position(index), target, [0.0, 0.0, 1.0]).map_err(|e| corrupt(e.to_string()))?;
        entries.push(GridEntry {
            index,
            pose,
            probability,
        });
    }
    Ok(ProbabilityGrid { spec, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec(inc: f64) -> GridSpec {
        GridSpec {
            bounds: Aabb::new([0.0; 3], [1.0; 3]),
            increment: inc,
        }
    }

    fn grid_of(probs: &[(GridIndex, f64)]) -> ProbabilityGrid {
        let spec = unit_spec(1.0);
        ProbabilityGrid {
            spec,
            entries: probs
                .iter()
                .map(|&(index, probability)| GridEntry {
                    index,
                    pose: Pose::identity(),
                    probability,
                })
                .collect(),
        }
    }

    #[test]
    fn lattice_counts() {
        let c = sample_candidate_poses(&unit_spec(0.5), [5.0, 5.0, 5.0]).unwrap();
        assert_eq!(c.len(), 27);
        let flat = GridSpec {
            bounds: Aabb::new([0.0; 3], [1.0, 1.0, 0.0]),
            increment: 1.0,
        };
        assert_eq!(sample_candidate_poses(&flat, [0.5, 0.5, -1.0]).unwrap().len(), 4);
        let big = unit_spec(3.0);
        assert_eq!(sample_candidate_poses(&big, [5.0; 3]).unwrap().len(), 1);
    }

    #[test]
    fn candidates_face_target() {
        let target = [0.3, -2.0, 0.1];
        for c in sample_candidate_poses(&unit_spec(0.25), target).unwrap() {
            let to = crate::geometry::sub(target, c.pose.position());
            assert!(crate::geometry::angle_between(c.pose.forward(), to) < 1e-9);
        }
    }

    #[test]
    fn degenerate_lattice_points_are_skipped() {
        // (0.5, 0.5, z) sits directly above/below the target.
        let c = sample_candidate_poses(&unit_spec(0.5), [0.5, 0.5, 0.0]).unwrap();
        assert_eq!(c.len(), 27 - 3);
    }

    #[test]
    fn threshold_selection() {
        let g = grid_of(&[([0, 0, 0], 0.9), ([1, 0, 0], 0.65), ([2, 0, 0], 0.6), ([3, 0, 0], 0.95)]);
        assert_eq!(select_low_quality(&g, 0.7), vec![1, 2]);
        assert!(select_low_quality(&g, 0.0).is_empty());
        assert_eq!(select_low_quality(&g, 1.0 + 1e-12).len(), 4);
    }

    #[test]
    fn isolated_dip_is_dropped_and_smooth_kept() {
        let mut cells = vec![([1, 1, 1], 0.1)];
        for n in neighbors([1, 1, 1]) {
            cells.push((n, 0.9));
        }
        let g = grid_of(&cells);
        assert!(filter_abrupt_changes(&g, &[0], 0.5).is_empty());

        let g = grid_of(&[
            ([1, 1, 1], 0.6),
            ([0, 1, 1], 0.5),
            ([2, 1, 1], 0.75),
            ([1, 0, 1], 0.55),
            ([1, 2, 1], 0.7),
        ]);
        assert_eq!(filter_abrupt_changes(&g, &[0], 0.5), vec![0]);
        let lonely = grid_of(&[([4, 4, 4], 0.0)]);
        assert_eq!(filter_abrupt_changes(&lonely, &[0], 0.5), vec![0]);
    }

    fn wp(x: f64, index: GridIndex) -> Waypoint {
        Waypoint {
            index,
            pose: Pose::new(crate::geometry::IDENTITY3, [x, 0.0, 0.0]).unwrap(),
        }
    }

    #[test]
    fn collinear_path() {
        let start = Pose::identity();
        let plan = plan_path(&start, &[wp(3.0, [3, 0, 0]), wp(1.0, [1, 0, 0]), wp(2.0, [2, 0, 0])]);
        let xs: Vec<f64> = plan.waypoints.iter().map(|w| w.pose.position()[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
        assert_eq!(plan.path_length, 3.0);
        let empty = plan_path(&start, &[]);
        assert!(empty.waypoints.is_empty());
        assert_eq!(empty.path_length, 0.0);
    }

    #[test]
    fn equidistant_tie_goes_to_smaller_index() {
        let plan = plan_path(&Pose::identity(), &[wp(1.0, [2, 0, 0]), wp(-1.0, [1, 0, 0])]);
        assert_eq!(plan.waypoints[0].index, [1, 0, 0]);
    }

    #[test]
    fn plan_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let start = look_at([0.1, 0.2, 0.3], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        let w = Waypoint {
            index: [1, 2, 3],
            pose: look_at([2.0 / 3.0, 0.7, 1.1], [0.0; 3], [0.0, 0.0, 1.0]).unwrap(),
        };
        let plan = plan_path(&start, &[w]);
        let p = dir.path().join("plan.json");
        write_plan(&plan, &p).unwrap();
        assert_eq!(read_plan(&p).unwrap(), plan);
    }
}
