use nalgebra::{Matrix3, Matrix4, Rotation3, SMatrix, SVector, Vector3};

use super::types::{
    CameraIntrinsics, CameraPose, EssentialMatrix, FundamentalMatrix, HomogeneousPoint2, PointMatch,
};
use super::GeometryError;

/// Linear triangulation of a normalized-coordinate correspondence between the
/// canonical camera `[I | 0]` and `[R | t]`. Returns the point in camera A's
/// frame, or `None` when it lies at infinity.
pub fn triangulate(
    a: &HomogeneousPoint2,
    b: &HomogeneousPoint2,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    let av = a.to_vector();
    let bv = b.to_vector();
    // Rows of the projection matrices.
    let pa = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ];
    let mut pb = [[0.0; 4]; 3];
    for r in 0..3 {
        for c in 0..3 {
            pb[r][c] = rotation[(r, c)];
        }
        pb[r][3] = translation[r];
    }
    let mut m = Matrix4::zeros();
    for c in 0..4 {
        m[(0, c)] = av.x * pa[2][c] - pa[0][c];
        m[(1, c)] = av.y * pa[2][c] - pa[1][c];
        m[(2, c)] = bv.x * pb[2][c] - pb[0][c];
        m[(3, c)] = bv.y * pb[2][c] - pb[1][c];
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let idx = svd.singular_values.imin();
    let x = v_t.row(idx);
    if x[3].abs() < 1e-12 * x.norm() {
        return None;
    }
    Some(Vector3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]))
}

/// Recovers the relative pose (A-camera to B-camera, unit translation) from a
/// fundamental matrix. The cheirality test over `matches` selects among the
/// four essential-matrix decompositions.
pub fn recover_pose(
    f: &FundamentalMatrix,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    matches: &[PointMatch],
) -> Result<CameraPose, GeometryError> {
    let e = EssentialMatrix::project(&(k_b.matrix().transpose() * f.matrix() * k_a.matrix()))?;
    let svd = e.matrix().svd(true, true);
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::SvdFailed),
    };
    // Sort so the null direction is last.
    let s = svd.singular_values;
    let null = s.imin();
    if null != 2 {
        u.swap_columns(null, 2);
        v_t.swap_rows(null, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).into_owned().normalize();
    let candidates = [(r1, t), (r1, -t), (r2, t), (r2, -t)];

    let normalized: Vec<(HomogeneousPoint2, HomogeneousPoint2)> = matches
        .iter()
        .map(|m| (k_a.normalize(&m.a), k_b.normalize(&m.b)))
        .collect();

    let mut scores: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(idx, (r, t))| {
            let count = normalized
                .iter()
                .filter(|(a, b)| match triangulate(a, b, r, t) {
                    Some(x) => x.z > 0.0 && (r * x + t).z > 0.0,
                    None => false,
                })
                .count();
            (count, idx)
        })
        .collect();
    scores.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    if scores[0].0 == scores[1].0 {
        return Err(GeometryError::CheiralityTie);
    }
    let (rotation, translation) = candidates[scores[0].1];
    CameraPose::new(rotation, translation)
}

/// Residuals within this many pixels are weighted quadratically by
/// [`refine_relative_pose`]; larger ones linearly.
const HUBER_PX: f64 = 1.0;

/// Signed pixel Sampson residuals `bᵀFa / √den` of `matches` under the
/// relative pose `(rotation, translation)`; `None` for degenerate ones.
fn pose_residuals(
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    matches: &[PointMatch],
) -> Vec<Option<f64>> {
    let f = k_b.inverse().transpose() * super::skew(translation) * rotation * k_a.inverse();
    matches
        .iter()
        .map(|m| {
            let (av, bv) = (m.a.to_vector(), m.b.to_vector());
            let fa = f * av;
            let ftb = f.transpose() * bv;
            let den = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
            (den >= super::DEGENERATE_DENOMINATOR).then(|| bv.dot(&fa) / den.sqrt())
        })
        .collect()
}

fn huber_cost(residuals: &[Option<f64>]) -> f64 {
    residuals
        .iter()
        .flatten()
        .map(|r| {
            let a = r.abs();
            if a <= HUBER_PX {
                0.5 * r * r
            } else {
                HUBER_PX * (a - 0.5 * HUBER_PX)
            }
        })
        .sum()
}

/// Levenberg-Marquardt refinement of a relative pose (unit translation)
/// minimizing the Huber-robust pixel Sampson error over `matches`.
/// Rotation is updated on the left by the exponential map and translation
/// on its tangent plane. Returns the input pose when no step improves it.
pub fn refine_relative_pose(
    pose: &CameraPose,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    matches: &[PointMatch],
    max_iterations: usize,
) -> Result<CameraPose, GeometryError> {
    pose.validate()?;
    let norm = pose.translation.norm();
    if !(norm > 0.0) {
        return Err(GeometryError::ZeroBaseline);
    }
    if matches.len() < 5 {
        return Err(GeometryError::InsufficientMatches {
            needed: 5,
            got: matches.len(),
        });
    }
    let mut rotation = pose.rotation;
    let mut translation = pose.translation / norm;

    let apply = |r: &Matrix3<f64>,
                 t: &Vector3<f64>,
                 basis: &(Vector3<f64>, Vector3<f64>),
                 p: &SVector<f64, 5>| {
        let dr = Rotation3::new(Vector3::new(p[0], p[1], p[2])).into_inner();
        ((dr * r), (t + basis.0 * p[3] + basis.1 * p[4]).normalize())
    };

    let mut residuals = pose_residuals(&rotation, &translation, k_a, k_b, matches);
    let mut cost = huber_cost(&residuals);
    let mut lambda = 1e-3;
    const H: f64 = 1e-7;
    for _ in 0..max_iterations {
        let helper = if translation.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let b1 = translation.cross(&helper).normalize();
        let basis = (b1, translation.cross(&b1));

        let mut jac = vec![SVector::<f64, 5>::zeros(); matches.len()];
        for k in 0..5 {
            let mut p = SVector::<f64, 5>::zeros();
            p[k] = H;
            let (rp, tp) = apply(&rotation, &translation, &basis, &p);
            p[k] = -H;
            let (rm, tm) = apply(&rotation, &translation, &basis, &p);
            let plus = pose_residuals(&rp, &tp, k_a, k_b, matches);
            let minus = pose_residuals(&rm, &tm, k_a, k_b, matches);
            for (j, (a, b)) in jac.iter_mut().zip(plus.iter().zip(&minus)) {
                if let (Some(a), Some(b)) = (a, b) {
                    j[k] = (a - b) / (2.0 * H);
                }
            }
        }
        let mut normal = SMatrix::<f64, 5, 5>::zeros();
        let mut grad = SVector::<f64, 5>::zeros();
        for (j, r) in jac.iter().zip(&residuals) {
            if let Some(r) = r {
                let w = if r.abs() <= HUBER_PX {
                    1.0
                } else {
                    HUBER_PX / r.abs()
                };
                normal += w * j * j.transpose();
                grad += w * *r * j;
            }
        }

        let mut improved = false;
        while lambda < 1e10 {
            let mut damped = normal;
            for k in 0..5 {
                damped[(k, k)] += lambda * normal[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-grad))) else {
                lambda *= 10.0;
                continue;
            };
            let (r_new, t_new) = apply(&rotation, &translation, &basis, &step);
            let res_new = pose_residuals(&r_new, &t_new, k_a, k_b, matches);
            let cost_new = huber_cost(&res_new);
            if cost_new < cost {
                let converged = cost - cost_new <= 1e-12 * cost || step.amax() < 1e-12;
                rotation = r_new;
                translation = t_new;
                residuals = res_new;
                cost = cost_new;
                lambda = (lambda * 0.1).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    // Re-orthonormalize against drift from repeated products.
    let svd = rotation.svd(true, true);
    let rotation = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => u * v_t,
        _ => return Err(GeometryError::SvdFailed),
    };
    CameraPose::new(rotation, translation)
}
