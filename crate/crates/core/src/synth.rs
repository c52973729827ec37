//! Deterministic synthetic classification tasks on low-dimensional manifolds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::experts::LabeledDataset;
use crate::split::{rng, SeededRng};
use crate::{Error, Matrix, Result};

/// Shape of the data manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    /// Class-conditional Gaussians inside an `intrinsic_dim` subspace.
    AffineSubspace,
    /// Class-conditional Gaussians spread over the whole ambient space.
    GaussianClusters,
    /// Like [`ManifoldKind::AffineSubspace`] but only the first `active_dim`
    /// latent coordinates vary, so the task lives inside the subspace of any
    /// task that shares its basis and offset.
    Nested,
}

fn default_separation() -> f32 {
    2.0
}
fn default_spread() -> f32 {
    1.0
}
fn default_samples() -> usize {
    1000
}

/// Parameters of one synthetic task. Tasks that share `basis_seed` draw
/// their subspaces from the same orthonormal basis, so non-overlapping
/// `subspace_offset` ranges give mutually orthogonal subspaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub name: String,
    pub kind: ManifoldKind,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub classes: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Standard deviation of isotropic ambient noise.
    pub noise: f32,
    pub seed: u64,
    #[serde(default)]
    pub basis_seed: u64,
    /// First basis column spanned by this task.
    #[serde(default)]
    pub subspace_offset: usize,
    /// Standard deviation of the class means in latent space.
    #[serde(default = "default_separation")]
    pub class_separation: f32,
    /// Within-class standard deviation in latent space.
    #[serde(default = "default_spread")]
    pub class_spread: f32,
    /// Norm of the task's affine offset.
    #[serde(default)]
    pub offset_norm: f32,
    /// Seed of the affine offset direction; defaults to `seed`.
    #[serde(default)]
    pub offset_seed: Option<u64>,
    /// Seed of the individual draws; defaults to `seed`. Two specs that differ
    /// only here sample the same distribution.
    #[serde(default)]
    pub sample_seed: Option<u64>,
    /// Varying latent coordinates for [`ManifoldKind::Nested`].
    #[serde(default)]
    pub active_dim: Option<usize>,
}

impl SyntheticTaskSpec {
    /// Affine-subspace task with the crate's default class geometry.
    pub fn subspace(
        name: impl Into<String>,
        intrinsic_dim: usize,
        ambient_dim: usize,
        classes: usize,
        samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ManifoldKind::AffineSubspace,
            intrinsic_dim,
            ambient_dim,
            classes,
            samples,
            noise: 0.1,
            seed,
            basis_seed: 0,
            subspace_offset: 0,
            class_separation: default_separation(),
            class_spread: default_spread(),
            offset_norm: 0.0,
            offset_seed: None,
            sample_seed: None,
            active_dim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intrinsic_dim == 0 || self.intrinsic_dim >= self.ambient_dim {
            return Err(Error::Parameter(format!(
                "intrinsic dimension {} must lie in 1..{}",
                self.intrinsic_dim, self.ambient_dim
            )));
        }
        if self.kind != ManifoldKind::GaussianClusters
            && self.subspace_offset + self.intrinsic_dim > self.ambient_dim
        {
            return Err(Error::Parameter(format!(
                "subspace columns {}..{} exceed ambient dimension {}",
                self.subspace_offset,
                self.subspace_offset + self.intrinsic_dim,
                self.ambient_dim
            )));
        }
        if self.classes == 0 || self.samples == 0 {
            return Err(Error::Parameter("classes and samples must be positive".into()));
        }
        if let Some(a) = self.active_dim {
            if a == 0 || a > self.intrinsic_dim {
                return Err(Error::Parameter(format!(
                    "active dimension {a} must lie in 1..={}",
                    self.intrinsic_dim
                )));
            }
        }
        let scales = [self.noise, self.class_separation, self.class_spread, self.offset_norm];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Parameter("scales must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn active(&self) -> usize {
        match self.kind {
            ManifoldKind::Nested => self.active_dim.unwrap_or(self.intrinsic_dim.div_ceil(2)),
            _ => self.intrinsic_dim,
        }
    }
}

/// The subspace basis (`ambient × intrinsic`, orthonormal columns) and the
/// affine offset of a generated task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskGeometry {
    pub basis: Matrix<f64>,
    pub offset: Vec<f64>,
}

fn normal(r: &mut SeededRng) -> f64 {
    StandardNormal.sample(r)
}

/// Orthonormal `d × d` basis shared by every task with the same seed.
fn orthonormal_basis(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let gaussian = DMatrix::<f64>::from_fn(d, d, |_, _| normal(&mut r));
    gaussian.qr().q()
}

/// Generates the dataset described by `spec`.
pub fn generate_synthetic_task(spec: &SyntheticTaskSpec) -> Result<LabeledDataset> {
    Ok(generate_with_geometry(spec)?.0)
}

/// [`generate_synthetic_task`] that also returns the geometry used.
pub fn generate_with_geometry(spec: &SyntheticTaskSpec) -> Result<(LabeledDataset, TaskGeometry)> {
    spec.validate()?;
    let d = spec.ambient_dim;
    let k = spec.intrinsic_dim;
    let mut r = rng(spec.seed);

    let mut offset_rng = rng(spec.offset_seed.unwrap_or(spec.seed) ^ 0x5eed_0ff5);
    let dir: Vec<f64> = (0..d).map(|_| normal(&mut offset_rng)).collect();
    let len = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
    let offset: Vec<f64> = dir.iter().map(|v| v / len * spec.offset_norm as f64).collect();

    let subspace = spec.kind != ManifoldKind::GaussianClusters;
    let basis = if subspace {
        let q = orthonormal_basis(d, spec.basis_seed);
        let cols = q.columns(spec.subspace_offset, k);
        let mut m = Matrix::<f64>::zeros(d, k);
        for i in 0..d {
            for j in 0..k {
                m.set(i, j, cols[(i, j)]);
            }
        }
        m
    } else {
        Matrix::zeros(d, 0)
    };
    let latent_dim = if subspace { k } else { d };
    let active = if subspace { spec.active() } else { d };

    let class_means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..latent_dim)
                .map(|j| {
                    let v = normal(&mut r) * spec.class_separation as f64;
                    if j < active { v } else { 0.0 }
                })
                .collect()
        })
        .collect();

    if let Some(s) = spec.sample_seed {
        r = rng(s ^ 0x5a3b_1e5e);
    }
    let mut labels: Vec<usize> = (0..spec.samples).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut r);

    let mut data = Vec::with_capacity(spec.samples * d);
    let mut z = alloc::vec![0.0f64; latent_dim];
    for &label in &labels {
        for (j, zj) in z.iter_mut().enumerate() {
            let v = class_means[label][j] + normal(&mut r) * spec.class_spread as f64;
            *zj = if j < active { v } else { 0.0 };
        }
        for i in 0..d {
            let signal = if subspace {
                (0..k).map(|j| basis.get(i, j) * z[j]).sum::<f64>()
            } else {
                z[i]
            };
            let noise = normal(&mut r) * spec.noise as f64;
            data.push((offset[i] + signal + noise) as f32);
        }
    }
    let features = Matrix::new(spec.samples, d, data)?;
    let dataset = LabeledDataset::new(features, labels, spec.classes, spec.name.clone())?;
    Ok((dataset, TaskGeometry { basis, offset }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let s = SyntheticTaskSpec::subspace("a", 3, 10, 2, 50, 7);
        assert_eq!(
            generate_synthetic_task(&s).unwrap(),
            generate_synthetic_task(&s).unwrap()
        );
    }

    #[test]
    fn noiseless_samples_lie_in_the_subspace() {
        let mut s = SyntheticTaskSpec::subspace("a", 4, 16, 3, 200, 11);
        s.noise = 0.0;
        s.offset_norm = 5.0;
        s.subspace_offset = 6;
        let (data, geo) = generate_with_geometry(&s).unwrap();
        for row in data.features().row_iter() {
            let c: Vec<f64> = row.iter().zip(&geo.offset).map(|(&x, o)| x as f64 - o).collect();
            // residual of the orthogonal projection onto the basis
            let coeff: Vec<f64> = (0..4)
                .map(|j| (0..16).map(|i| geo.basis.get(i, j) * c[i]).sum())
                .collect();
            for i in 0..16 {
                let proj: f64 = (0..4).map(|j| geo.basis.get(i, j) * coeff[j]).sum();
                assert!((c[i] - proj).abs() < 1e-5, "residual {}", c[i] - proj);
            }
        }
    }

    #[test]
    fn offsets_into_shared_basis_are_orthogonal() {
        let mut a = SyntheticTaskSpec::subspace("a", 3, 12, 2, 10, 1);
        let mut b = a.clone();
        a.subspace_offset = 0;
        b.subspace_offset = 3;
        b.seed = 2;
        let (_, ga) = generate_with_geometry(&a).unwrap();
        let (_, gb) = generate_with_geometry(&b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..12).map(|r| ga.basis.get(r, i) * gb.basis.get(r, j)).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_intrinsic_at_least_ambient() {
        let s = SyntheticTaskSpec::subspace("a", 8, 8, 2, 10, 1);
        assert!(matches!(generate_synthetic_task(&s), Err(Error::Parameter(_))));
    }

    #[test]
    fn balanced_labels() {
        let s = SyntheticTaskSpec::subspace("a", 2, 5, 4, 400, 3);
        let d = generate_synthetic_task(&s).unwrap();
        for c in 0..4 {
            assert_eq!(d.labels().iter().filter(|&&l| l == c).count(), 100);
        }
    }
}
