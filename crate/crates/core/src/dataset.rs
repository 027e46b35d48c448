//! Trajectory grids, labeled/unlabeled point sampling, and CSV persistence.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::swing::{self, State, SwingParams, Trajectory};

/// Header of the trajectory CSV format.
pub const CSV_HEADER: [&str; 4] = ["p1", "t", "delta", "omega"];

// Independent random streams derived from one dataset seed.
const STREAM_TRAINING: u64 = 1;
const STREAM_COLLOCATION: u64 = 2;
const STREAM_PAIRS: u64 = 3;

/// Seeded generator for one named stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rectangle `[0, t_end] × [p_min, p_max]` in which the surrogate is trained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t_end: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Domain {
    pub fn contains(&self, t: f64, p1: f64) -> bool {
        (0.0..=self.t_end).contains(&t) && (self.p_min..=self.p_max).contains(&p1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !(self.p_min < self.p_max) {
            return Err(Error::InvalidArgument(format!("degenerate domain {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub t_end: f64,
    pub output_step: f64,
    pub n_trajectories: usize,
    pub init: State,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            p_min: 0.08,
            p_max: 0.18,
            t_end: 20.0,
            output_step: 0.1,
            n_trajectories: 100,
            init: State::new(0.1, 0.1),
            seed: 1,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain().validate()?;
        if self.n_trajectories == 0 {
            return Err(Error::InvalidArgument("n_trajectories must be >= 1".into()));
        }
        swing::grid_intervals(self.t_end, self.output_step)?;
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        Domain {
            t_end: self.t_end,
            p_min: self.p_min,
            p_max: self.p_max,
        }
    }

    /// Evenly spaced power inputs; a single trajectory sits at `p_min`.
    pub fn power_levels(&self) -> Vec<f64> {
        let n = self.n_trajectories;
        if n == 1 {
            return vec![self.p_min];
        }
        let step = (self.p_max - self.p_min) / (n - 1) as f64;
        let mut levels: Vec<f64> = (0..n).map(|k| self.p_min + k as f64 * step).collect();
        levels[n - 1] = self.p_max;
        levels
    }
}

/// Labeled sample `(t, p1) ↦ δ` drawn from the ground-truth grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub t: f64,
    pub p1: f64,
    pub delta: f64,
}

/// Unlabeled point where only the physics residual is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollocationPoint {
    pub t: f64,
    pub p1: f64,
}

/// Integrates one trajectory per power level, in parallel.
pub fn generate_grid(spec: &DatasetSpec, params: &SwingParams) -> Result<Vec<Trajectory>> {
    generate_grid_with(spec, params, Execution::default())
}

pub fn generate_grid_with(
    spec: &DatasetSpec,
    params: &SwingParams,
    exec: Execution,
) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    params.validate()?;
    let levels = spec.power_levels();
    par::map(&levels, exec, |&p1| {
        swing::integrate(params, p1, spec.init, spec.t_end, spec.output_step)
    })
    .into_iter()
    .collect()
}

pub fn total_samples(grid: &[Trajectory]) -> usize {
    grid.iter().map(Trajectory::len).sum()
}

/// Draws `n_u` distinct grid samples uniformly without replacement.
pub fn sample_training_points(
    grid: &[Trajectory],
    n_u: usize,
    seed: u64,
) -> Result<Vec<TrainingPoint>> {
    let available = total_samples(grid);
    if n_u > available {
        return Err(Error::InsufficientSamples {
            requested: n_u,
            available,
        });
    }
    let mut starts = Vec::with_capacity(grid.len());
    let mut acc = 0;
    for traj in grid {
        starts.push(acc);
        acc += traj.len();
    }
    let mut rng = stream_rng(seed, STREAM_TRAINING);
    let picks = rand::seq::index::sample(&mut rng, available, n_u);
    Ok(picks
        .into_iter()
        .map(|flat| {
            let ti = starts.partition_point(|&s| s <= flat) - 1;
            let traj = &grid[ti];
            let k = flat - starts[ti];
            TrainingPoint {
                t: traj.times[k],
                p1: traj.p1,
                delta: traj.states[k].delta,
            }
        })
        .collect())
}

/// Latin-hypercube design: each of the `n` equal-width strata of every
/// coordinate holds exactly one point.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (dim, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (point, stratum) in points.iter_mut().zip(strata) {
            let u: f64 = rng.gen();
            point[dim] = lo + (stratum as f64 + u) / n as f64 * (hi - lo);
        }
    }
    points
}

pub fn sample_collocation_points(
    n_f: usize,
    domain: &Domain,
    seed: u64,
) -> Result<Vec<CollocationPoint>> {
    if n_f == 0 {
        return Err(Error::InvalidArgument("n_f must be >= 1".into()));
    }
    domain.validate()?;
    let mut rng = stream_rng(seed, STREAM_COLLOCATION);
    let pts = latin_hypercube(
        n_f,
        &[(0.0, domain.t_end), (domain.p_min, domain.p_max)],
        &mut rng,
    );
    Ok(pts
        .into_iter()
        .map(|x| CollocationPoint { t: x[0], p1: x[1] })
        .collect())
}

/// `(m, d)` ground-truth pairs for identification studies, by seeded LHS.
pub fn identification_pairs(
    n_pairs: usize,
    m_range: (f64, f64),
    d_range: (f64, f64),
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = stream_rng(seed, STREAM_PAIRS);
    latin_hypercube(n_pairs, &[m_range, d_range], &mut rng)
        .into_iter()
        .map(|x| (x[0], x[1]))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Row {
    p1: f64,
    t: f64,
    delta: f64,
    omega: f64,
}

pub fn write_csv<W: Write>(trajectories: &[Trajectory], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for traj in trajectories {
        for (&t, s) in traj.times.iter().zip(&traj.states) {
            w.serialize(Row {
                p1: traj.p1,
                t,
                delta: s.delta,
                omega: s.omega,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(trajectories: &[Trajectory], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(trajectories, std::io::BufWriter::new(file))
}

/// Reads rows back into trajectories. A new trajectory starts whenever `p1`
/// changes or time fails to increase.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.is_empty() || headers.len() == 1 && headers[0].is_empty() {
        return Err(Error::Malformed("missing header row".into()));
    }
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Malformed(format!(
            "expected header {}, found {}",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out: Vec<Trajectory> = Vec::new();
    for (line, rec) in r.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| Error::Malformed(format!("row {}: {e}", line + 2)))?;
        match out.last_mut() {
            Some(traj) if traj.p1 == row.p1 && row.t > *traj.times.last().unwrap() => {
                traj.times.push(row.t);
                traj.states.push(State::new(row.delta, row.omega));
            }
            _ => out.push(Trajectory {
                p1: row.p1,
                times: vec![row.t],
                states: vec![State::new(row.delta, row.omega)],
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::Malformed("no data rows".into()));
    }
    Ok(out)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            n_trajectories: 4,
            t_end: 2.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_short_trajectory() {
        let spec = DatasetSpec {
            n_trajectories: 1,
            t_end: 0.1,
            output_step: 0.1,
            ..Default::default()
        };
        let grid = generate_grid(&spec, &SwingParams::default()).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].len(), 2);
    }

    #[test]
    fn default_grid_sample_count_and_shared_init() {
        let spec = DatasetSpec::default();
        let grid = generate_grid(&spec, &SwingParams::default()).unwrap();
        assert_eq!(grid.len(), 100);
        assert_eq!(total_samples(&grid), 20_100);
        assert!(grid.iter().all(|t| t.states[0] == State::new(0.1, 0.1)));
        assert_eq!(grid[0].p1, 0.08);
        assert_eq!(grid[99].p1, 0.18);
    }

    #[test]
    fn power_levels_evenly_spaced() {
        let levels = DatasetSpec::default().power_levels();
        for w in levels.windows(2) {
            assert!((w[1] - w[0] - 0.1 / 99.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        let bad = DatasetSpec {
            p_min: 0.2,
            p_max: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DatasetSpec {
            n_trajectories: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exhaustive_draw_is_a_permutation() {
        let grid = generate_grid(&small_spec(), &SwingParams::default()).unwrap();
        let total = total_samples(&grid);
        let pts = sample_training_points(&grid, total, 5).unwrap();
        assert_eq!(pts.len(), total);
        let mut keys: Vec<(u64, u64)> =
            pts.iter().map(|p| (p.p1.to_bits(), p.t.to_bits())).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), total);
        // Not returned in grid order.
        assert!(pts.windows(2).any(|w| w[0].p1 != w[1].p1 || w[1].t < w[0].t));
    }

    #[test]
    fn training_labels_come_from_the_grid() {
        let grid = generate_grid(&small_spec(), &SwingParams::default()).unwrap();
        let pts = sample_training_points(&grid, 40, 9).unwrap();
        assert_eq!(pts.len(), 40);
        for p in pts {
            let traj = grid.iter().find(|g| g.p1 == p.p1).unwrap();
            let k = traj.times.iter().position(|&t| t == p.t).unwrap();
            assert_eq!(traj.states[k].delta, p.delta);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let grid = generate_grid(&small_spec(), &SwingParams::default()).unwrap();
        let a = sample_training_points(&grid, 30, 1).unwrap();
        assert_eq!(a, sample_training_points(&grid, 30, 1).unwrap());
        assert_ne!(a, sample_training_points(&grid, 30, 2).unwrap());
        let d = small_spec().domain();
        assert_eq!(
            sample_collocation_points(50, &d, 3).unwrap(),
            sample_collocation_points(50, &d, 3).unwrap()
        );
    }

    #[test]
    fn too_many_training_points() {
        let grid = generate_grid(&small_spec(), &SwingParams::default()).unwrap();
        let err = sample_training_points(&grid, total_samples(&grid) + 1, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
    }

    #[test]
    fn collocation_single_point_and_bounds() {
        let d = DatasetSpec::default().domain();
        let one = sample_collocation_points(1, &d, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!(d.contains(one[0].t, one[0].p1));
        let many = sample_collocation_points(8000, &d, 0).unwrap();
        assert!(many.iter().all(|c| d.contains(c.t, c.p1)));
        assert!(sample_collocation_points(0, &d, 0).is_err());
    }

    #[test]
    fn collocation_time_strata_hold_one_point_each() {
        let d = DatasetSpec::default().domain();
        let n = 500;
        let pts = sample_collocation_points(n, &d, 17).unwrap();
        let mut seen = vec![0usize; n];
        let mut seen_p = vec![0usize; n];
        for c in &pts {
            seen[((c.t / d.t_end) * n as f64).floor().min((n - 1) as f64) as usize] += 1;
            let u = (c.p1 - d.p_min) / (d.p_max - d.p_min);
            seen_p[(u * n as f64).floor().min((n - 1) as f64) as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(seen_p.iter().all(|&c| c == 1));
    }

    #[test]
    fn identification_pairs_inside_ranges() {
        let pairs = identification_pairs(10, (0.1, 0.4), (0.05, 0.15), 3);
        assert_eq!(pairs.len(), 10);
        assert!(pairs
            .iter()
            .all(|&(m, d)| (0.1..=0.4).contains(&m) && (0.05..=0.15).contains(&d)));
    }

    #[test]
    fn csv_golden_format() {
        let traj = Trajectory::new(
            0.1,
            vec![0.0, 0.1],
            vec![State::new(0.1, 0.1), State::new(0.11234567890123456, -1e-7)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&[traj], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "p1,t,delta,omega\n0.1,0.0,0.1,0.1\n0.1,0.1,0.11234567890123456,-1e-7\n"
        );
    }

    #[test]
    fn csv_round_trip() {
        let grid = generate_grid(&small_spec(), &SwingParams::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&grid, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), grid);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_csv("".as_bytes()), Err(Error::Malformed(_))));
        assert!(matches!(
            read_csv("p1,t,delta,omega\n".as_bytes()),
            Err(Error::Malformed(_))
        ));
        assert!(read_csv("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
        assert!(read_csv("p1,t,delta,omega\n0.1,0.0,0.1\n".as_bytes()).is_err());
        assert!(read_csv("p1,t,delta,omega\n0.1,0.0,x,0.1\n".as_bytes()).is_err());
    }
}
