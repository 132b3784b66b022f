use nalgebra::{DMatrix, Matrix3};

use super::types::{
    skew, CameraIntrinsics, CameraPose, FundamentalMatrix, HomogeneousPoint2, PointMatch,
};
use super::{GeometryError, DEGENERATE_DENOMINATOR};

/// Error-free product: `a·b = p + e` exactly.
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated sum, accurate to about one rounding of the exact result.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0;
    for t in terms {
        let s = sum + t;
        let bp = s - sum;
        carry += (sum - (s - bp)) + (t - bp);
        sum = s;
    }
    sum + carry
}

/// `Σⱼ m[i][j]·v[j]` with compensated accumulation.
fn row_dot(m: &Matrix3<f64>, i: usize, v: &nalgebra::Vector3<f64>) -> f64 {
    compensated_sum((0..3).flat_map(|j| {
        let (p, e) = two_product(m[(i, j)], v[j]);
        [p, e]
    }))
}

/// `uᵀ m v` summed over all nine triple products, each split exactly into
/// leading parts before compensated accumulation.
fn bilinear(u: &nalgebra::Vector3<f64>, m: &Matrix3<f64>, v: &nalgebra::Vector3<f64>) -> f64 {
    compensated_sum((0..3).flat_map(|i| {
        (0..3).flat_map(move |j| {
            let (p, e) = two_product(u[i], m[(i, j)]);
            let (q, f) = two_product(p, v[j]);
            [q, f, e * v[j]]
        })
    }))
}

/// Epipolar lines `F a` (in B) and `Fᵀ b` (in A) plus the algebraic residual `bᵀ F a`.
fn epipolar_terms(
    f: &FundamentalMatrix,
    a: &HomogeneousPoint2,
    b: &HomogeneousPoint2,
) -> (f64, f64, f64) {
    let m = f.matrix();
    let mt = m.transpose();
    let av = a.to_vector();
    let bv = b.to_vector();
    let (fa0, fa1) = (row_dot(m, 0, &av), row_dot(m, 1, &av));
    let (ftb0, ftb1) = (row_dot(&mt, 0, &bv), row_dot(&mt, 1, &bv));
    // Averaging both contraction orders makes the result exactly symmetric
    // under (F, a, b) -> (Fᵀ, b, a).
    let residual = 0.5 * (bilinear(&bv, m, &av) + bilinear(&av, &mt, &bv));
    (residual, fa0 * fa0 + fa1 * fa1, ftb0 * ftb0 + ftb1 * ftb1)
}

/// First-order approximation of the reprojection error of `(a, b)` under `f`:
///
/// `(bᵀFa)² / ((Fa)₁² + (Fa)₂² + (Fᵀb)₁² + (Fᵀb)₂²)`
pub fn sampson_distance(
    f: &FundamentalMatrix,
    a: &HomogeneousPoint2,
    b: &HomogeneousPoint2,
) -> Result<f64, GeometryError> {
    let (r, qa, qb) = epipolar_terms(f, a, b);
    let den = qa + qb;
    if den < DEGENERATE_DENOMINATOR {
        return Err(GeometryError::DegenerateDenominator);
    }
    Ok(r * r / den)
}

/// Sum of squared point-to-epipolar-line distances in both images.
pub fn symmetric_epipolar_error(
    f: &FundamentalMatrix,
    a: &HomogeneousPoint2,
    b: &HomogeneousPoint2,
) -> Result<f64, GeometryError> {
    let (r, qa, qb) = epipolar_terms(f, a, b);
    if qa < DEGENERATE_DENOMINATOR || qb < DEGENERATE_DENOMINATOR {
        return Err(GeometryError::DegenerateDenominator);
    }
    Ok(r * r * (1.0 / qa + 1.0 / qb))
}

/// Isotropic similarity moving the centroid to the origin with mean distance √2.
pub fn hartley_normalization<'a, I>(points: I) -> Result<Matrix3<f64>, GeometryError>
where
    I: IntoIterator<Item = &'a HomogeneousPoint2> + Clone,
{
    let mut n = 0usize;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for p in points.clone() {
        let v = p.to_vector();
        cx += v.x;
        cy += v.y;
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::InsufficientMatches { needed: 1, got: 0 });
    }
    cx /= n as f64;
    cy /= n as f64;
    let mean_dist = points
        .into_iter()
        .map(|p| {
            let v = p.to_vector();
            (v.x - cx).hypot(v.y - cy)
        })
        .sum::<f64>()
        / n as f64;
    if !(mean_dist > 1e-300) || !mean_dist.is_finite() {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

/// Null vector of a design matrix with nine columns, plus the ratio of the
/// second-smallest to the largest singular value.
pub(crate) fn nullspace9(design: DMatrix<f64>) -> Result<([f64; 9], f64), GeometryError> {
    let rows = design.nrows();
    // Thin SVD of a matrix with fewer than nine rows would drop the null vector.
    let design = if rows < 9 {
        design.resize_vertically(9, 0.0)
    } else {
        design
    };
    let svd = design.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::SvdFailed)?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let largest = s[order[0]];
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let smallest = order[order.len() - 1];
    let second = s[order[order.len() - 2]];
    let mut out = [0.0; 9];
    for (k, v) in out.iter_mut().enumerate() {
        *v = v_t[(smallest, k)];
    }
    Ok((out, second / largest))
}

/// Ratio below which the design matrix is considered to have a two-dimensional nullspace.
const DEGENERACY_RATIO: f64 = 1e-10;

/// Normalized eight-point estimate of the fundamental matrix from `n ≥ 8` matches.
pub fn normalized_eight_point(matches: &[PointMatch]) -> Result<FundamentalMatrix, GeometryError> {
    if matches.len() < 8 {
        return Err(GeometryError::InsufficientMatches {
            needed: 8,
            got: matches.len(),
        });
    }
    let ta = hartley_normalization(matches.iter().map(|m| &m.a))?;
    let tb = hartley_normalization(matches.iter().map(|m| &m.b))?;

    let mut design = DMatrix::<f64>::zeros(matches.len(), 9);
    for (row, m) in matches.iter().enumerate() {
        let a = ta * m.a.to_vector();
        let b = tb * m.b.to_vector();
        let coeffs = [
            b.x * a.x,
            b.x * a.y,
            b.x,
            b.y * a.x,
            b.y * a.y,
            b.y,
            a.x,
            a.y,
            1.0,
        ];
        for (c, v) in coeffs.iter().enumerate() {
            design[(row, c)] = *v;
        }
    }
    let (null, ratio) = nullspace9(design)?;
    if ratio < DEGENERACY_RATIO {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let f_norm = FundamentalMatrix::raw(Matrix3::from_row_slice(&null)).rank2_projected()?;
    FundamentalMatrix::new(tb.transpose() * f_norm.matrix() * ta)
}

/// Ground-truth fundamental matrix `kB⁻ᵀ [t]ₓ R kA⁻¹` of two posed cameras.
pub fn fundamental_from_poses(
    pose_a: &CameraPose,
    pose_b: &CameraPose,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
) -> Result<FundamentalMatrix, GeometryError> {
    let rel = pose_a.relative_to(pose_b);
    if rel.translation.norm() < 1e-12 {
        return Err(GeometryError::ZeroBaseline);
    }
    let e = skew(&rel.translation) * rel.rotation;
    FundamentalMatrix::new(k_b.inverse().transpose() * e * k_a.inverse())
}

/// Aligns `f` to `reference` up to sign after canonical scaling and returns
/// the max-abs entry difference.
pub fn aligned_difference(f: &Matrix3<f64>, reference: &Matrix3<f64>) -> f64 {
    let fa = f / f.norm();
    let fr = reference / reference.norm();
    (fa - fr).amax().min((fa + fr).amax())
}
