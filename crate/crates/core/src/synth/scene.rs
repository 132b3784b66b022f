use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use super::{derive_seed, normalize_or_basis, random_unit, SynthError};

/// Texture field dimension and the range of its length scales (scene units).
const TEXTURE_DIM: usize = 16;
const TEXTURE_SCALES: (f64, f64) = (0.05, 0.4);

/// Rectangle `origin + s·u + t·v` for `s, t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub origin: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Surface {
    pub fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }

    pub fn point(&self, s: f64, t: f64) -> Vector3<f64> {
        self.origin + self.u * s + self.v * t
    }

    /// Ray parameter of the first intersection of `origin + λ·dir`, λ > 0.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.u.cross(&self.v);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let lambda = n.dot(&(self.origin - origin)) / denom;
        if lambda <= 0.0 {
            return None;
        }
        let rel = origin + dir * lambda - self.origin;
        let s = rel.dot(&self.u) / self.u.norm_squared();
        let t = rel.dot(&self.v) / self.v.norm_squared();
        ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t)).then_some(lambda)
    }
}

/// World plane `normal · X = offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: Vector3<f64>,
    pub group: usize,
}

/// Smooth random field `X ↦ cos(ω_k·X + φ_k)` used as surface texture.
/// Component `k` has a Gaussian random frequency with length scale spread
/// log-uniformly over `scales`, so some structure survives at any viewing
/// distance once fine detail is blurred away.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureField {
    pub frequencies: Vec<Vector3<f64>>,
    pub phases: Vec<f64>,
}

impl TextureField {
    pub fn random<R: Rng>(rng: &mut R, dim: usize, scales: (f64, f64)) -> Self {
        let frequencies = (0..dim)
            .map(|k| {
                let t = if dim > 1 {
                    k as f64 / (dim - 1) as f64
                } else {
                    0.0
                };
                let length = scales.0 * (scales.1 / scales.0).powf(t);
                Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ) / length
            })
            .collect();
        let phases = (0..dim).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
        Self {
            frequencies,
            phases,
        }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vec<f64> {
        self.eval_blurred(x, 0.0)
    }

    /// Field convolved with an isotropic Gaussian of std `sigma`: each
    /// component is attenuated by `exp(-σ²|ω|²/2)`.
    pub fn eval_blurred(&self, x: &Vector3<f64>, sigma: f64) -> Vec<f64> {
        self.frequencies
            .iter()
            .zip(&self.phases)
            .map(|(w, p)| (-0.5 * sigma * sigma * w.norm_squared()).exp() * (w.dot(x) + p).cos())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: Vec<ScenePoint>,
    pub surfaces: Vec<Surface>,
    pub planar_patch: Option<Plane>,
    /// Unit descriptor per group id.
    pub descriptor_table: Vec<Vec<f64>>,
    pub texture: TextureField,
    pub seed: u64,
}

impl Scene {
    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_table.first().map_or(0, Vec::len)
    }

    pub fn descriptor_of(&self, point: usize) -> &[f64] {
        &self.descriptor_table[self.points[point].group]
    }

    /// Number of points whose group has at least one other member.
    pub fn shared_point_count(&self) -> usize {
        let mut sizes = vec![0usize; self.descriptor_table.len()];
        for p in &self.points {
            sizes[p.group] += 1;
        }
        self.points.iter().filter(|p| sizes[p.group] > 1).count()
    }
}

fn back_wall() -> Surface {
    Surface {
        origin: Vector3::new(-4.0, -3.0, 0.0),
        u: Vector3::new(8.0, 0.0, 0.0),
        v: Vector3::new(0.0, 6.0, 0.0),
    }
}

/// Back wall, floor and left wall of a box corner, seen from the +z side.
fn corner_surfaces() -> Vec<Surface> {
    vec![
        back_wall(),
        Surface {
            origin: Vector3::new(-4.0, -3.0, 0.0),
            u: Vector3::new(8.0, 0.0, 0.0),
            v: Vector3::new(0.0, 0.0, 4.0),
        },
        Surface {
            origin: Vector3::new(-4.0, -3.0, 0.0),
            u: Vector3::new(0.0, 6.0, 0.0),
            v: Vector3::new(0.0, 0.0, 4.0),
        },
    ]
}

/// Scene on the three inner faces of a box corner around the origin.
pub fn build_scene(
    n_points: usize,
    ambiguity_fraction: f64,
    descriptor_dim: usize,
    seed: u64,
) -> Result<Scene, SynthError> {
    build(
        corner_surfaces(),
        n_points,
        ambiguity_fraction,
        descriptor_dim,
        seed,
    )
}

/// Scene on the single plane `z = 0`, which is also its planar patch.
pub fn build_planar_scene(
    n_points: usize,
    ambiguity_fraction: f64,
    descriptor_dim: usize,
    seed: u64,
) -> Result<Scene, SynthError> {
    build(
        vec![back_wall()],
        n_points,
        ambiguity_fraction,
        descriptor_dim,
        seed,
    )
}

fn build(
    surfaces: Vec<Surface>,
    n_points: usize,
    ambiguity_fraction: f64,
    descriptor_dim: usize,
    seed: u64,
) -> Result<Scene, SynthError> {
    if !(0.0..1.0).contains(&ambiguity_fraction) {
        return Err(SynthError::InvalidFraction(ambiguity_fraction));
    }
    if n_points < 8 {
        return Err(SynthError::TooFewPoints(n_points));
    }
    if descriptor_dim == 0 {
        return Err(SynthError::InvalidSettings(
            "descriptor_dim: must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5CE4E));

    let areas: Vec<f64> = surfaces.iter().map(Surface::area).collect();
    let total: f64 = areas.iter().sum();
    let positions: Vec<Vector3<f64>> = (0..n_points)
        .map(|_| {
            let mut pick = rng.gen::<f64>() * total;
            let mut idx = 0;
            while idx + 1 < areas.len() && pick >= areas[idx] {
                pick -= areas[idx];
                idx += 1;
            }
            let (s, t) = (rng.gen::<f64>(), rng.gen::<f64>());
            surfaces[idx].point(s, t)
        })
        .collect();

    // Shared groups: pairs, with one triple when the count is odd.
    let mut n_shared = (ambiguity_fraction * n_points as f64).ceil() as usize;
    if n_shared == 1 {
        n_shared = 2;
    }
    let shared = index::sample(&mut rng, n_points, n_shared).into_vec();
    let mut chunk_of = vec![None; n_points];
    let n_chunks = n_shared / 2;
    for (k, &p) in shared.iter().enumerate() {
        chunk_of[p] = Some((k / 2).min(n_chunks.saturating_sub(1)));
    }
    let mut chunk_group = vec![None; n_chunks];
    let mut next_group = 0;
    let mut points = Vec::with_capacity(n_points);
    for (i, position) in positions.into_iter().enumerate() {
        let group = match chunk_of[i] {
            Some(c) => *chunk_group[c].get_or_insert_with(|| {
                next_group += 1;
                next_group - 1
            }),
            None => {
                next_group += 1;
                next_group - 1
            }
        };
        points.push(ScenePoint { position, group });
    }

    let descriptor_table = (0..next_group)
        .map(|_| random_unit(&mut rng, descriptor_dim))
        .collect();
    let texture = TextureField::random(&mut rng, TEXTURE_DIM, TEXTURE_SCALES);
    Ok(Scene {
        points,
        surfaces,
        planar_patch: Some(Plane {
            normal: Vector3::new(0.0, 0.0, 1.0),
            offset: 0.0,
        }),
        descriptor_table,
        texture,
        seed,
    })
}

/// Unit texture descriptor at a surface point, blurred over a footprint of
/// std `sigma` scene units.
pub(crate) fn texture_descriptor(scene: &Scene, x: &Vector3<f64>, sigma: f64) -> Vec<f64> {
    let mut d = scene.texture.eval_blurred(x, sigma);
    normalize_or_basis(&mut d);
    d
}
