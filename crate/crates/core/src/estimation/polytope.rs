//! Mixed-membership estimation: principal-component projection, minimum
//! volume enclosing simplex, barycentric memberships and the affine lift.
//!
//! The simplex in `R^m` with `K = m + 1` vertices is written as
//! `{ y : s = H y - g >= 0, 1^T s <= 1 }`, so its volume is
//! `1 / (m! |det H|)`. Each row `(h_j, g_j)` enters `det H` linearly, so
//! with the other rows fixed the best row solves a linear program in the
//! cofactor expansion subject to every point staying inside. Rows are updated cyclically until the volume
//! settles.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::fix_sign;

use super::restart_rng;

/// Barycentric coordinates below `-CONTAINMENT_TOL` count as outside.
pub const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Centred coordinates in the principal subspace, one row per point.
    pub points: DMatrix<f64>,
    /// Principal directions as columns (`d x m`).
    pub basis: DMatrix<f64>,
    pub centroid: DVector<f64>,
}

/// Projects rows of `points` onto their top `target_dim` principal directions.
pub fn pca_project(points: &DMatrix<f64>, target_dim: usize) -> Result<Projection> {
    let (n, d) = points.shape();
    if target_dim == 0 || target_dim > d {
        return Err(Error::InvalidInput(format!("target dimension {target_dim} must lie in 1..={d}")));
    }
    if n <= d {
        return Err(Error::InvalidInput(format!("need more than {d} points, got {n}")));
    }
    let centroid = points.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, c| points[(i, c)] - centroid[c]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values[order[0]];
    let last = svd.singular_values[order[target_dim - 1]];
    if !(last > 1e-12 * top) {
        return Err(Error::RankDeficient(format!(
            "point cloud spans fewer than {target_dim} dimensions"
        )));
    }
    let mut basis = DMatrix::zeros(d, target_dim);
    for (col, &k) in order.iter().take(target_dim).enumerate() {
        let mut dir: Vec<f64> = v_t.row(k).iter().copied().collect();
        fix_sign(&mut dir);
        basis.column_mut(col).copy_from_slice(&dir);
    }
    let projected = centered * &basis;
    Ok(Projection { points: projected, basis, centroid })
}

/// Rows `centroid + basis * v_k`.
pub fn lift_vertices(vertices: &DMatrix<f64>, basis: &DMatrix<f64>, centroid: &DVector<f64>) -> Result<DMatrix<f64>> {
    if vertices.ncols() != basis.ncols() || basis.nrows() != centroid.len() {
        return Err(Error::DimensionMismatch { expected: basis.ncols(), got: vertices.ncols() });
    }
    let mut lifted = vertices * basis.transpose();
    for mut row in lifted.row_iter_mut() {
        row += centroid.transpose();
    }
    Ok(lifted)
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|v| v as f64).product()
}

/// Volume of the simplex with the given `m + 1` vertices in `R^m`.
pub fn simplex_volume(vertices: &DMatrix<f64>) -> f64 {
    let m = vertices.ncols();
    let last = vertices.row(m);
    let edges = DMatrix::from_fn(m, m, |i, j| vertices[(j, i)] - last[i]);
    edges.determinant().abs() / factorial(m)
}

/// Convex weights of each point with respect to the simplex vertices.
/// Entries in `[-CONTAINMENT_TOL, 0)` are clamped to zero and the row
/// renormalised; anything more negative is a containment violation.
pub fn barycentric_coordinates(points: &DMatrix<f64>, vertices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let raw = raw_barycentric(points, vertices)?;
    let mut out = raw;
    for i in 0..out.nrows() {
        for k in 0..out.ncols() {
            let v = out[(i, k)];
            if v < -CONTAINMENT_TOL {
                return Err(Error::ContainmentViolation { point: i, value: v });
            }
            if v < 0.0 {
                out[(i, k)] = 0.0;
            }
        }
        let s = out.row(i).sum();
        out.row_mut(i).unscale_mut(s);
    }
    Ok(out)
}

fn raw_barycentric(points: &DMatrix<f64>, vertices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = points.ncols();
    let k = vertices.nrows();
    if vertices.ncols() != m || k != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: k });
    }
    let system = DMatrix::from_fn(k, k, |r, c| if r < m { vertices[(c, r)] } else { 1.0 });
    let scale = vertices.amax().max(1.0);
    let lu = system.lu();
    let det = lu.determinant();
    if !(det.abs() > 1e-12 * scale.powi(m as i32)) {
        return Err(Error::DegenerateInput("simplex vertices are affinely dependent".into()));
    }
    let mut out = DMatrix::zeros(points.nrows(), k);
    for i in 0..points.nrows() {
        let rhs = DVector::from_fn(k, |r, _| if r < m { points[(i, r)] } else { 1.0 });
        let beta = lu.solve(&rhs).ok_or_else(|| Error::DegenerateInput("singular vertex system".into()))?;
        out.set_row(i, &beta.transpose());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvesOptions {
    pub seed: u64,
    pub restarts: usize,
    pub max_rounds: usize,
    pub tol: f64,
}

impl Default for MvesOptions {
    fn default() -> Self {
        MvesOptions { seed: 0, restarts: super::DEFAULT_RESTARTS, max_rounds: 500, tol: 1e-10 }
    }
}

/// Points whose containment implies containment of the whole cloud.
fn constraint_points(points: &DMatrix<f64>) -> DMatrix<f64> {
    match points.ncols() {
        1 => {
            let col = points.column(0);
            DMatrix::from_row_slice(2, 1, &[col.min(), col.max()])
        }
        2 => {
            let hull = convex_hull_2d(points);
            DMatrix::from_fn(hull.len(), 2, |i, c| points[(hull[i], c)])
        }
        _ => points.clone(),
    }
}

/// Indices of the convex hull vertices (monotone chain, counter-clockwise).
pub fn convex_hull_2d(points: &DMatrix<f64>) -> Vec<usize> {
    let n = points.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        points[(a, 0)].total_cmp(&points[(b, 0)]).then(points[(a, 1)].total_cmp(&points[(b, 1)]))
    });
    idx.dedup_by(|a, b| points[(*a, 0)] == points[(*b, 0)] && points[(*a, 1)] == points[(*b, 1)]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        (points[(a, 0)] - points[(o, 0)]) * (points[(b, 1)] - points[(o, 1)])
            - (points[(a, 1)] - points[(o, 1)]) * (points[(b, 0)] - points[(o, 0)])
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &p in &idx {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in idx.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Greedy vertices: a far point from a random start, then repeatedly the
/// point farthest from the affine span of those already chosen.
fn furthest_point_vertices(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let (n, m) = points.shape();
    let scale = points.amax().max(f64::MIN_POSITIVE);
    let start = rng.random_range(0..n);
    let dist_to = |i: usize, j: usize| (points.row(i) - points.row(j)).norm();
    let first = (0..n).max_by(|&a, &b| dist_to(a, start).total_cmp(&dist_to(b, start)).then(b.cmp(&a))).unwrap();
    let mut chosen = vec![first];
    let mut directions: Vec<DVector<f64>> = Vec::new();
    while chosen.len() < k {
        let origin = points.row(first).transpose();
        let residual = |i: usize| {
            let mut r = points.row(i).transpose() - &origin;
            for u in &directions {
                let c = u.dot(&r);
                r -= u * c;
            }
            r
        };
        let best = (0..n)
            .max_by(|&a, &b| residual(a).norm().total_cmp(&residual(b).norm()).then(b.cmp(&a)))
            .unwrap();
        let r = residual(best);
        if !(r.norm() > 1e-9 * scale) || directions.len() == m {
            return Err(Error::DegenerateInput(format!(
                "fewer than {k} affinely independent points"
            )));
        }
        directions.push(&r / r.norm());
        chosen.push(best);
    }
    Ok(DMatrix::from_fn(k, m, |r, c| points[(chosen[r], c)]))
}

/// Scales the simplex about its centroid until every point is inside.
fn expand_to_contain(points: &DMatrix<f64>, vertices: DMatrix<f64>, margin: f64) -> Result<DMatrix<f64>> {
    let k = vertices.nrows() as f64;
    let beta = raw_barycentric(points, &vertices)?;
    let bmin = beta.min();
    if bmin >= 0.0 && margin == 0.0 {
        return Ok(vertices);
    }
    let t = (1.0 - k * bmin).max(1.0) * (1.0 + margin);
    if t == 1.0 {
        return Ok(vertices);
    }
    let centroid = vertices.row_mean();
    let mut out = vertices.clone();
    for mut row in out.row_iter_mut() {
        let shifted = (&row - &centroid) * t + &centroid;
        row.copy_from(&shifted);
    }
    Ok(out)
}

/// `(H, g)` with `s = H y - g` the first `m` barycentric coordinates.
fn facet_form(vertices: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let m = vertices.ncols();
    let last = vertices.row(m).transpose();
    let edges = DMatrix::from_fn(m, m, |i, j| vertices[(j, i)] - last[i]);
    let h = edges.try_inverse()?;
    let g = &h * last;
    Some((h, g))
}

fn vertices_from_facets(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DMatrix<f64>> {
    let m = h.nrows();
    let e = h.clone().try_inverse()?;
    let last = &e * g;
    let mut v = DMatrix::zeros(m + 1, m);
    for j in 0..m {
        v.set_row(j, &(&last + e.column(j)).transpose());
    }
    v.set_row(m, &last.transpose());
    Some(v)
}

/// Best replacement for row `j`, or `None` if no LP improves `|det H|`.
fn update_row(h: &DMatrix<f64>, g: &DVector<f64>, j: usize, cons: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    let m = h.nrows();
    let det = h.determinant();
    let inv = h.clone().try_inverse()?;
    // cofactors of row j: det(H) * (H^{-1})^T row j
    let cof: Vec<f64> = (0..m).map(|c| det * inv[(c, j)]).collect();
    let s_all = cons * h.transpose();
    let budget: Vec<f64> = (0..cons.nrows())
        .map(|i| 1.0 - (0..m).filter(|&l| l != j).map(|l| s_all[(i, l)] - g[l]).sum::<f64>())
        .collect();
    // the opposite direction yields the same simplex with two vertices swapped
    let dir = if det >= 0.0 { OptimizationDirection::Maximize } else { OptimizationDirection::Minimize };
    let solve = |objective: &[f64], floor: Option<f64>| -> Option<DVector<f64>> {
        let mut lp = Problem::new(dir);
        let vars: Vec<_> = objective.iter().map(|&c| lp.add_var(c, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        for i in 0..cons.nrows() {
            let mut terms: Vec<_> = (0..m).map(|c| (vars[c], cons[(i, c)])).collect();
            terms.push((vars[m], -1.0));
            lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, 0.0);
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, budget[i]);
        }
        if let Some(bound) = floor {
            let terms: Vec<_> = (0..m).map(|c| (vars[c], cof[c])).collect();
            let op = if det >= 0.0 { ComparisonOp::Ge } else { ComparisonOp::Le };
            lp.add_constraint(terms.as_slice(), op, bound);
        }
        let sol = lp.solve().ok()?;
        Some(DVector::from_iterator(m + 1, vars.iter().map(|&v| *sol.var_value(v))))
    };
    let mut primary = cof.clone();
    primary.push(0.0);
    let first = solve(&primary, None)?;
    let best = (0..m).map(|c| cof[c] * first[c]).sum::<f64>();
    if best.abs() <= det.abs() * (1.0 + 1e-9) {
        return None;
    }
    // the optimum is often a whole face; pick the point on it that pushes the
    // facet furthest from the data, which does not depend on the coordinates
    let mut spread: Vec<f64> = (0..m).map(|c| cons.column(c).sum()).collect();
    spread.push(-(cons.nrows() as f64));
    if det < 0.0 {
        spread.iter_mut().for_each(|v| *v = -*v);
    }
    let bound = best - best.signum() * 1e-12 * best.abs();
    let row = solve(&spread, Some(bound)).unwrap_or(first);
    let value = (0..m).map(|c| cof[c] * row[c]).sum::<f64>();
    Some((row, value))
}

/// Simplex on `k` distinct random points of the cloud.
fn random_vertices(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let n = points.nrows();
    let spread = points.amax().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let idx = rand::seq::index::sample(rng, n, k).into_vec();
        let v = points.select_rows(&idx);
        if simplex_volume(&v) > 1e-9 * spread.powi(points.ncols() as i32) {
            return Ok(v);
        }
    }
    furthest_point_vertices(points, k, rng)
}

/// Maps the cloud to zero mean and identity covariance; returns the
/// whitened points, the mean and the Cholesky factor of the covariance.
fn whiten(points: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = points.nrows() as f64;
    let mean = points.row_mean().transpose();
    let mut centred = points.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centred.transpose() * &centred / n;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::DegenerateInput("point cloud does not span its ambient space".into()))?;
    let l = chol.l();
    let white = l
        .solve_lower_triangular(&centred.transpose())
        .ok_or_else(|| Error::DegenerateInput("point cloud does not span its ambient space".into()))?
        .transpose();
    Ok((white, mean, l))
}

/// One pass of row updates with vertex `reference` as the base vertex.
fn refine_around(vertices: &DMatrix<f64>, reference: usize, cons: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = vertices.nrows();
    let order: Vec<usize> = (0..k).filter(|&r| r != reference).chain([reference]).collect();
    let (mut h, mut g) = facet_form(&vertices.select_rows(&order))?;
    for j in 0..h.nrows() {
        if let Some((row, _)) = update_row(&h, &g, j, cons) {
            for c in 0..h.ncols() {
                h[(j, c)] = row[c];
            }
            g[j] = row[h.ncols()];
        }
    }
    let updated = vertices_from_facets(&h, &g)?;
    let mut out = vertices.clone();
    for (pos, &r) in order.iter().enumerate() {
        out.set_row(r, &updated.row(pos));
    }
    Some(out)
}

fn mves_single(points: &DMatrix<f64>, cons: &DMatrix<f64>, k: usize, opts: &MvesOptions, restart: usize) -> Result<DMatrix<f64>> {
    let mut rng = restart_rng(opts.seed, restart);
    let init = if restart == 0 { furthest_point_vertices(points, k, &mut rng)? } else { random_vertices(points, k, &mut rng)? };
    let mut vertices = expand_to_contain(cons, init, 1e-9)?;
    if facet_form(&vertices).is_none() {
        return Err(Error::DegenerateInput("initial simplex is flat".into()));
    }
    let mut volume = simplex_volume(&vertices);
    for _ in 0..opts.max_rounds {
        for reference in 0..k {
            vertices = refine_around(&vertices, reference, cons)
                .ok_or_else(|| Error::Numerical("simplex collapsed".into()))?;
        }
        let next = simplex_volume(&vertices);
        let change = (volume - next).abs() / volume;
        volume = next;
        if change < opts.tol {
            break;
        }
    }
    expand_to_contain(points, vertices, 0.0)
}

/// Minimum-volume simplex with `k = m + 1` vertices enclosing the rows of
/// `points` (in `R^m`); best of `opts.restarts` seeded starts.
pub fn min_volume_enclosing_polytope(points: &DMatrix<f64>, k: usize, opts: &MvesOptions) -> Result<DMatrix<f64>> {
    let (n, m) = points.shape();
    if m == 0 {
        return Err(Error::InvalidInput("points must have at least one coordinate".into()));
    }
    if k > m + 1 {
        return Err(Error::Unsupported(format!(
            "enclosing polytopes with {k} vertices in dimension {m} (only simplices, K = {})",
            m + 1
        )));
    }
    if k < m + 1 {
        return Err(Error::InvalidInput(format!("{k} vertices cannot enclose a {m}-dimensional cloud")));
    }
    if n < k {
        return Err(Error::DegenerateInput(format!("{n} points cannot determine {k} vertices")));
    }
    let (white, mean, l) = whiten(points)?;
    let cons = constraint_points(&white);
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    for r in 0..opts.restarts.max(1) {
        let v = mves_single(&white, &cons, k, opts, r)?;
        let vol = simplex_volume(&v);
        if best.as_ref().is_none_or(|b| vol < b.1) {
            best = Some((v, vol));
        }
    }
    let mut vertices = best.expect("at least one restart").0 * l.transpose();
    for mut row in vertices.row_iter_mut() {
        row += mean.transpose();
    }
    expand_to_contain(points, vertices, 0.0)
}

#[derive(Debug, Clone)]
pub struct PolytopeFit {
    pub projection: Projection,
    /// Simplex vertices in the principal subspace, one per row.
    pub vertices: DMatrix<f64>,
    /// Vertices mapped back to the embedding space.
    pub lifted: DMatrix<f64>,
    pub memberships: DMatrix<f64>,
    pub volume: f64,
}

/// Projects a `d`-dimensional embedding to `d - 1` principal components,
/// encloses it in a minimum-volume simplex with `k = d` vertices, and
/// reads off memberships and lifted vertices.
pub fn fit_polytope(points: &DMatrix<f64>, k: usize, opts: &MvesOptions) -> Result<PolytopeFit> {
    let d = points.ncols();
    if d < 2 {
        return Err(Error::InvalidInput("mixed-membership fitting needs d >= 2".into()));
    }
    let projection = pca_project(points, d - 1)?;
    let vertices = min_volume_enclosing_polytope(&projection.points, k, opts)?;
    let memberships = barycentric_coordinates(&projection.points, &vertices)?;
    let lifted = lift_vertices(&vertices, &projection.basis, &projection.centroid)?;
    let volume = simplex_volume(&vertices);
    Ok(PolytopeFit { projection, vertices, lifted, memberships, volume })
}
