//! Seeded generation of synthetic longitudinal binary data.
//!
//! Every subject draws from its own ChaCha8 stream: the generator is seeded
//! with the design seed and `set_stream(i)` selects subject `i`. Subjects can
//! therefore be generated in parallel and still reproduce the sequential output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MblDataset, Subject};
use crate::error::{MblError, Result};
use crate::family::{MeanModel, SharedBetaModel};
use crate::model::{ModelDocument, ModelSpec, ParamVector};

/// Placement of `n` equally spaced standardized times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGrid {
    /// `j / n` for `j = 1..n`.
    #[default]
    Right,
    /// `j / (n + 1)` for `j = 1..n`.
    Interior,
}

impl TimeGrid {
    pub fn times(self, n: usize) -> Vec<f64> {
        let denom = match self {
            TimeGrid::Right => n as f64,
            TimeGrid::Interior => (n + 1) as f64,
        };
        (1..=n).map(|j| j as f64 / denom).collect()
    }
}

/// A run of subjects sharing a duration and an observation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectGroup {
    pub subjects: usize,
    pub observations: usize,
    #[serde(default = "one")]
    pub duration: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratingModel {
    Latent { model: ModelDocument },
    SharedBeta(SharedBetaModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub groups: Vec<SubjectGroup>,
    #[serde(default)]
    pub grid: TimeGrid,
    pub model: GeneratingModel,
    pub seed: u64,
}

impl SimDesign {
    pub fn n_subjects(&self) -> usize {
        self.groups.iter().map(|g| g.subjects).sum()
    }

    /// Generating model as a flat mean model plus coefficients.
    fn resolve(&self) -> Result<(Box<dyn MeanModel>, Vec<f64>)> {
        match &self.model {
            GeneratingModel::Latent { model } => {
                let (spec, params) = model.clone().into_parts()?;
                let params =
                    params.ok_or_else(|| MblError::Config("latent generating model needs coefficients".into()))?;
                Ok((Box::new(spec), params.to_flat()))
            }
            GeneratingModel::SharedBeta(m) => Ok((Box::new(m.spec()?), m.to_flat())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.n_subjects() == 0 {
            return Err(MblError::Config("design has no subjects".into()));
        }
        for g in &self.groups {
            if g.observations == 0 {
                return Err(MblError::Config("every subject needs at least one observation".into()));
            }
            if !(g.duration.is_finite() && g.duration > 0.0) {
                return Err(MblError::Config(format!("duration {} must be positive", g.duration)));
            }
        }
        let (_, theta) = self.resolve()?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(MblError::Config("non-finite generating coefficient".into()));
        }
        Ok(())
    }
}

/// Generating coefficients of the shared-curvature simulation study.
pub fn shared_curvature_truth() -> SharedBetaModel {
    SharedBetaModel { intercepts: vec![0.5, 0.5, 0.0], slopes: vec![1.0, 1.0, 1.0], beta: -1.0 }
}

/// The 200-subject design: 50 subjects each with 5, 6, 7 and 8 time points,
/// three responses, all durations 1.
pub fn shared_curvature_design(seed: u64, grid: TimeGrid) -> SimDesign {
    SimDesign {
        groups: (5..=8).map(|n| SubjectGroup { subjects: 50, observations: n, duration: 1.0 }).collect(),
        grid,
        model: GeneratingModel::SharedBeta(shared_curvature_truth()),
        seed,
    }
}

pub fn simulate_shared_curvature(seed: u64) -> MblDataset {
    simulate_shared_curvature_with_grid(seed, TimeGrid::Right)
}

pub fn simulate_shared_curvature_with_grid(seed: u64, grid: TimeGrid) -> MblDataset {
    simulate_general(&shared_curvature_design(seed, grid)).expect("built-in design is valid")
}

/// Independent Bernoulli outcomes given the generating model's probabilities.
pub fn simulate_general(design: &SimDesign) -> Result<MblDataset> {
    design.validate()?;
    let (model, theta) = design.resolve()?;
    let k = model.n_responses();

    let layout: Vec<(f64, usize)> =
        design.groups.iter().flat_map(|g| std::iter::repeat_n((g.duration, g.observations), g.subjects)).collect();

    let subjects: Vec<Subject> = layout
        .par_iter()
        .enumerate()
        .map(|(i, &(duration, n))| {
            let mut rng = subject_rng(design.seed, i);
            let times = design.grid.times(n);
            let mut pi = vec![0.0; k];
            let outcomes = times
                .iter()
                .map(|&t| {
                    model.mean(&theta, t, duration, &mut pi);
                    pi.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect()
                })
                .collect();
            Subject { duration, times, outcomes }
        })
        .collect();

    MblDataset::new(k, subjects)
}

/// RNG for subject `index` under `seed`.
pub fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Convenience constructor for a latent-model design.
pub fn latent_design(groups: Vec<SubjectGroup>, spec: &ModelSpec, params: &ParamVector, seed: u64) -> SimDesign {
    SimDesign {
        groups,
        grid: TimeGrid::Right,
        model: GeneratingModel::Latent { model: ModelDocument::new(spec, Some(params)) },
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expit;

    #[test]
    fn shared_curvature_shape() {
        let ds = simulate_shared_curvature(7);
        assert_eq!(ds.n_subjects(), 200);
        assert_eq!(ds.n_responses, 3);
        assert_eq!(ds.n_obs(), 50 * (5 + 6 + 7 + 8));
        assert_eq!(ds.subjects[0].times, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(ds.subjects[199].n_obs(), 8);
        assert!(ds.subjects.iter().all(|s| s.duration == 1.0));
        assert!(ds.has_detectable_boundaries());
    }

    #[test]
    fn interior_grid_excludes_endpoints() {
        let ds = simulate_shared_curvature_with_grid(1, TimeGrid::Interior);
        assert_eq!(ds.subjects[0].times.last().copied(), Some(5.0 / 6.0));
        assert!(ds.observations().all(|(_, t, _)| t > 0.0 && t < 1.0));
    }

    #[test]
    fn shared_curvature_probabilities() {
        let truth = shared_curvature_truth();
        assert!((truth.probability(1.0, 0) - 0.6225).abs() < 1e-4);
        assert_eq!(truth.probability(1.0, 2), 0.5);
        assert!((truth.probability(0.5, 2) - 0.5622).abs() < 1e-4);
        assert_eq!(truth.probability(0.5, 2), expit(0.25));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = simulate_shared_curvature(11);
        let b = simulate_shared_curvature(11);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a, simulate_shared_curvature(12));
    }

    #[test]
    fn parallel_matches_sequential_streams() {
        let design = shared_curvature_design(5, TimeGrid::Right);
        let ds = simulate_general(&design).unwrap();
        let truth = shared_curvature_truth();
        // regenerate subject 123 by hand from its stream
        let s = &ds.subjects[123];
        let mut rng = subject_rng(5, 123);
        for (j, &t) in s.times.iter().enumerate() {
            for k in 0..3 {
                let y = u8::from(rng.gen::<f64>() < truth.probability(t, k));
                assert_eq!(y, s.outcomes[j][k]);
            }
        }
    }

    #[test]
    fn zero_link_is_fair_coin() {
        let spec = ModelSpec::uniform(2, 1);
        let params = ParamVector::zeros(&spec);
        let design =
            latent_design(vec![SubjectGroup { subjects: 5000, observations: 10, duration: 3.0 }], &spec, &params, 3);
        let ds = simulate_general(&design).unwrap();
        let total = ds.n_obs() as f64;
        for c in ds.event_counts() {
            assert!((c as f64 / total - 0.5).abs() < 0.005);
        }
    }

    #[test]
    fn invalid_designs() {
        let mut d = shared_curvature_design(1, TimeGrid::Right);
        d.groups[0].observations = 0;
        assert!(matches!(simulate_general(&d), Err(MblError::Config(_))));
        let mut d = shared_curvature_design(1, TimeGrid::Right);
        d.groups.clear();
        assert!(simulate_general(&d).is_err());
        let spec = ModelSpec::uniform(1, 0);
        let mut d = latent_design(
            vec![SubjectGroup { subjects: 1, observations: 1, duration: 1.0 }],
            &spec,
            &ParamVector::zeros(&spec),
            0,
        );
        if let GeneratingModel::Latent { model } = &mut d.model {
            model.coefficients = None;
        }
        assert!(simulate_general(&d).is_err());
    }

    #[test]
    fn design_json_roundtrip() {
        let d = shared_curvature_design(9, TimeGrid::Interior);
        let json = serde_json::to_string_pretty(&d).unwrap();
        let back: SimDesign = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
