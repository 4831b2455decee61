//! Dense solver for small unit-diagonal complex semidefinite programs.
//!
//! Solves `max tr(R V)` over Hermitian `V >= 0` with `V_kk = 1`, the
//! relaxation that the SDR beamforming baseline produces, together with
//! Gaussian randomization to extract a unit-modulus vector from the solution
//! matrix. The problems here are tiny (dimension `K + 1` for `K` IRSs), so a
//! dependency-free primal barrier method with Newton steps is both simpler
//! and faster than a general conic solver.
//!
//! The dual of the problem is `min sum_k d_k` over real diagonals `D` with
//! `D - R >= 0`; the solver reports a certified `duality_gap`, so
//! `objective_value + duality_gap` is a true upper bound on the optimum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::RandomStream;

/// Default absolute duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default number of Gaussian randomization samples.
pub const DEFAULT_RANDOMIZATIONS: usize = 1000;

/// Maximum total Newton steps across the whole barrier schedule.
const MAX_NEWTON_STEPS: usize = 500;

/// A unit-diagonal SDP `max tr(R V)`, `diag(V) = 1`, `V >= 0`.
#[derive(Debug, Clone)]
pub struct UnitDiagSdp {
    objective: DMatrix<Complex64>,
}

impl UnitDiagSdp {
    /// Wraps an objective matrix, verifying it is Hermitian to 1e-12
    /// (relative to its largest entry) and symmetrizing the remainder.
    pub fn new(objective: DMatrix<Complex64>) -> Result<Self> {
        if objective.nrows() != objective.ncols() {
            return Err(Error::invalid("objective matrix must be square"));
        }
        if objective.nrows() < 2 {
            return Err(Error::invalid("SDP dimension must be at least 2"));
        }
        let scale = objective.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let adj = objective.adjoint();
        let asym = (&objective - &adj).norm() / objective.nrows() as f64;
        if asym > 1e-12 * scale.max(1.0) {
            return Err(Error::invalid(format!(
                "objective matrix is not Hermitian (asymmetry {asym:.3e})"
            )));
        }
        let symmetrized = (objective + adj).map(|z| z * 0.5);
        Ok(UnitDiagSdp {
            objective: symmetrized,
        })
    }

    pub fn size(&self) -> usize {
        self.objective.nrows()
    }

    pub fn objective(&self) -> &DMatrix<Complex64> {
        &self.objective
    }

    /// Real value of the Hermitian form `v^H R v`.
    pub fn quad_form(&self, v: &DVector<Complex64>) -> f64 {
        (v.adjoint() * &self.objective * v)[(0, 0)].re
    }
}

/// Solution of a [`UnitDiagSdp`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Primal matrix: Hermitian, PSD, unit diagonal.
    pub primal: DMatrix<Complex64>,
    /// Attained objective `tr(R V)`.
    pub objective_value: f64,
    /// Certified gap: `objective_value + duality_gap` bounds the optimum.
    pub duality_gap: f64,
    /// Newton steps spent.
    pub iterations: usize,
}

fn herm_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    // tr(A B) for Hermitian A, B is real.
    a.iter()
        .zip(b.transpose().iter())
        .map(|(x, y)| (x * y).re)
        .sum()
}

/// Cholesky factorization `A = L L^H` of a Hermitian matrix that insists on
/// strictly positive real pivots. nalgebra's complex Cholesky takes complex
/// square roots of negative pivots instead of failing, so it cannot be used
/// to certify positive definiteness.
struct HermitianCholesky {
    l: DMatrix<Complex64>,
}

impl HermitianCholesky {
    fn new(a: &DMatrix<Complex64>) -> Option<Self> {
        let n = a.nrows();
        let mut l = DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            let mut s = a[(j, j)].re;
            for k in 0..j {
                s -= l[(j, k)].norm_sqr();
            }
            if !(s > 0.0) {
                return None;
            }
            let pivot = s.sqrt();
            l[(j, j)] = Complex64::from(pivot);
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = v / pivot;
            }
        }
        Some(HermitianCholesky { l })
    }

    fn log_det(&self) -> f64 {
        self.l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>() * 2.0
    }

    /// Solves `A X = B` by forward/backward substitution.
    fn solve(&self, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            // L y = b
            for i in 0..n {
                let mut v = x[(i, c)];
                for k in 0..i {
                    v -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = v / self.l[(i, i)].re;
            }
            // L^H x = y
            for i in (0..n).rev() {
                let mut v = x[(i, c)];
                for k in (i + 1)..n {
                    v -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = v / self.l[(i, i)].re;
            }
        }
        x
    }
}

/// Re-pins the diagonal to exactly one and the matrix to exactly Hermitian;
/// Newton steps preserve both only up to rounding.
fn repair_feasibility(v: &mut DMatrix<Complex64>) {
    let n = v.nrows();
    for i in 0..n {
        v[(i, i)] = Complex64::ONE;
        for j in (i + 1)..n {
            let avg = (v[(i, j)] + v[(j, i)].conj()) * 0.5;
            v[(i, j)] = avg;
            v[(j, i)] = avg.conj();
        }
    }
}

/// Newton direction for `max tr(RV) + mu log det V` on the slice
/// `diag(Delta) = 0`, together with the diagonal multipliers `d`.
///
/// The stationarity condition is `mu V^-1 Delta V^-1 + D = R + mu V^-1`,
/// which gives `Delta = (V R V + mu V - V D V) / mu`; requiring a zero
/// diagonal turns into the real linear system `(V o conj(V)) d = diag(V R V
/// + mu V)`.
fn newton_direction(
    v: &DMatrix<Complex64>,
    r: &DMatrix<Complex64>,
    mu: f64,
) -> Result<(DMatrix<Complex64>, DVector<f64>)> {
    let n = v.nrows();
    let vrv = v * r * v;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for i in 0..n {
        for k in 0..n {
            a[(i, k)] = v[(i, k)].norm_sqr();
        }
        c[i] = vrv[(i, i)].re + mu * v[(i, i)].re;
    }
    // Near-boundary iterates make this system nearly singular; a tiny
    // Tikhonov term keeps the direction bounded without noticeably biasing
    // well-conditioned solves.
    let reg = 1e-13 * a.diagonal().sum().max(1e-300) / n as f64;
    for i in 0..n {
        a[(i, i)] += reg;
    }
    let d = a
        .lu()
        .solve(&c)
        .ok_or_else(|| Error::SolverFailure("singular Newton system".into()))?;
    let mut delta = vrv;
    for i in 0..n {
        for j in 0..n {
            let vdv: Complex64 = (0..n).map(|k| v[(i, k)] * d[k] * v[(k, j)]).sum();
            delta[(i, j)] = (delta[(i, j)] + mu * v[(i, j)] - vdv) / mu;
        }
    }
    // The constraint solve makes the diagonal zero only up to rounding.
    for i in 0..n {
        delta[(i, i)] = Complex64::ZERO;
    }
    Ok((delta, d))
}

/// Smallest eigenvalue of a Hermitian matrix.
fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Unit-modulus coordinate ascent on `v^H R v` from the phases of the
/// leading eigenvector of `V`. When the relaxation is tight the optimum is
/// the rank-one matrix `v v^H`, which the barrier method approaches only
/// slowly; this refinement lands on it directly.
fn rank_one_refinement(r: &DMatrix<Complex64>, v: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = r.nrows();
    let eig = SymmetricEigen::new(v.clone());
    let mut top = 0;
    for j in 1..n {
        if eig.eigenvalues[j] > eig.eigenvalues[top] {
            top = j;
        }
    }
    let lead = eig.eigenvectors.column(top);
    let mut vbar = DVector::from_iterator(
        n,
        lead.iter().map(|z| {
            if z.norm() == 0.0 {
                Complex64::ONE
            } else {
                z / Complex64::from(z.norm())
            }
        }),
    );
    for _ in 0..500 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let mut s = Complex64::ZERO;
            for j in 0..n {
                if j != i {
                    s += r[(i, j)] * vbar[j];
                }
            }
            if s.norm() > 0.0 {
                let next = s / Complex64::from(s.norm());
                change = change.max((next - vbar[i]).norm());
                vbar[i] = next;
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    vbar
}

/// Newton refinement of the optimality system for a rank-`rank` solution.
///
/// At a rank-deficient optimum, `V = Y Y^H` with the KKT conditions
/// `(diag(d) - R) Y = 0` and `diag(Y Y^H) = 1`. Newton on `(Y, d)` from the
/// barrier iterate converges quadratically where the interior-point
/// iteration grinds against the boundary. The `r x r` unitary gauge freedom
/// makes the Jacobian rank-deficient, handled by a least-squares solve.
fn kkt_refinement(
    r: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    mu: f64,
    rank: usize,
) -> Option<DMatrix<Complex64>> {
    let n = v.nrows();
    if rank == 0 || rank > n || rank > 4 {
        return None;
    }
    let eig = SymmetricEigen::new(v.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut y = DMatrix::<Complex64>::zeros(n, rank);
    for j in 0..rank {
        let lam = eig.eigenvalues[order[j]].max(0.0).sqrt();
        for i in 0..n {
            y[(i, j)] = eig.eigenvectors[(i, order[j])] * Complex64::from(lam);
        }
    }
    let rv = r * v;
    let mut d = DVector::<f64>::from_iterator(n, (0..n).map(|i| rv[(i, i)].re + mu));
    let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);

    let residual = |y: &DMatrix<Complex64>, d: &DVector<f64>| -> DVector<f64> {
        // F1 = (D - R) Y (complex n x rank), F2 = diag(Y Y^H) - 1.
        let mut f = DVector::<f64>::zeros(2 * n * rank + n);
        let mut idx = 0;
        for q in 0..rank {
            for i in 0..n {
                let mut acc = Complex64::from(d[i]) * y[(i, q)];
                for k in 0..n {
                    acc -= r[(i, k)] * y[(k, q)];
                }
                f[idx] = acc.re;
                f[idx + 1] = acc.im;
                idx += 2;
            }
        }
        for i in 0..n {
            let row_norm: f64 = (0..rank).map(|q| y[(i, q)].norm_sqr()).sum();
            f[idx] = row_norm - 1.0;
            idx += 1;
        }
        f
    };

    let unknowns = 2 * n * rank + n;
    let mut best_res = f64::INFINITY;
    for _ in 0..30 {
        let f = residual(&y, &d);
        let res = f.norm();
        if res >= best_res * 0.99 {
            break;
        }
        best_res = res;
        if res < 1e-14 * scale * (n as f64).sqrt() {
            break;
        }
        // Assemble the Jacobian column by column over the real unknowns
        // [Re Y, Im Y, d].
        let mut jac = DMatrix::<f64>::zeros(unknowns, unknowns);
        let mut col = 0;
        for q in 0..rank {
            for p in 0..n {
                for part in 0..2 {
                    let dy = if part == 0 {
                        Complex64::ONE
                    } else {
                        Complex64::I
                    };
                    // dF1[:, q] += (D - R)[:, p] * dy ; other columns zero.
                    for i in 0..n {
                        let mut coeff = -r[(i, p)];
                        if i == p {
                            coeff += Complex64::from(d[i]);
                        }
                        let val = coeff * dy;
                        let base = 2 * (q * n + i);
                        jac[(base, col)] = val.re;
                        jac[(base + 1, col)] = val.im;
                    }
                    // dF2_p = 2 Re(dy * conj(Y_pq)).
                    jac[(2 * n * rank + p, col)] = 2.0 * (dy * y[(p, q)].conj()).re;
                    col += 1;
                }
            }
        }
        for i in 0..n {
            // d d_i: dF1 row i picks up Y[i, :].
            for q in 0..rank {
                let base = 2 * (q * n + i);
                jac[(base, col)] = y[(i, q)].re;
                jac[(base + 1, col)] = y[(i, q)].im;
            }
            col += 1;
        }
        let delta = jac.svd(true, true).solve(&(-f), 1e-10 * scale).ok()?;
        let mut idx = 0;
        for q in 0..rank {
            for p in 0..n {
                y[(p, q)] += Complex64::new(delta[idx], delta[idx + 1]);
                idx += 2;
            }
        }
        for i in 0..n {
            d[i] += delta[2 * n * rank + i];
        }
    }

    let mut cand = &y * y.adjoint();
    let deviation = cand
        .diagonal()
        .iter()
        .map(|z| (z.re - 1.0).abs().max(z.im.abs()))
        .fold(0.0, f64::max);
    if deviation > 1e-9 {
        return None;
    }
    repair_feasibility(&mut cand);
    Some(cand)
}

/// Certified duality gap for a primal candidate: the dual diagonal is taken
/// from complementarity (`d_i = Re((R V)_ii) + mu`, exact on the central
/// path and at rank-one optima with `mu = 0`), then shifted until `D - R`
/// is PSD so the reported gap stays a true bound.
fn certified_gap(r: &DMatrix<Complex64>, v: &DMatrix<Complex64>, mu: f64) -> f64 {
    let n = r.nrows();
    let rv = r * v;
    let mut dr = -r.clone();
    let mut dual_value = 0.0;
    for i in 0..n {
        let d_i = rv[(i, i)].re + mu;
        dr[(i, i)] += Complex64::from(d_i);
        dual_value += d_i;
    }
    let lift = (-min_eigenvalue(&dr)).max(0.0);
    dual_value + lift * n as f64 - herm_inner(r, v)
}

/// Maximizes `tr(R V)` subject to `diag(V) = 1`, `V >= 0`.
///
/// Primal barrier method: Newton steps on `tr(RV) + mu log det V` restricted
/// to the unit-diagonal slice, `mu` divided by 10 from 1 until the certified
/// duality gap is at most `tol` (absolute).
pub fn solve_unit_diag_sdp(prob: &UnitDiagSdp, tol: f64) -> Result<SdpSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = prob.size();
    let r = prob.objective();
    let identity = DMatrix::<Complex64>::identity(n, n);

    let r_scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if r_scale == 0.0 {
        // Any feasible point attains the (constant) objective.
        return Ok(SdpSolution {
            primal: identity,
            objective_value: 0.0,
            duality_gap: 0.0,
            iterations: 0,
        });
    }

    let mut v = identity.clone();
    let mut mu = 1.0;
    let mut steps = 0usize;
    // Numerics can make the certificate degrade again at extreme barrier
    // parameters, so remember the best certified iterate.
    let mut best: Option<(f64, DMatrix<Complex64>)> = None;

    loop {
        // Inner Newton loop at fixed mu.
        for _ in 0..50 {
            if steps >= MAX_NEWTON_STEPS {
                break;
            }
            let (delta, _) = newton_direction(&v, r, mu)?;
            steps += 1;
            let chol_v = HermitianCholesky::new(&v)
                .ok_or_else(|| Error::SolverFailure("iterate left the PSD cone".into()))?;
            let vinv_delta = chol_v.solve(&delta);
            // Directional derivative along Delta: mu tr((V^-1 Delta)^2) >= 0.
            let decrement = mu * herm_inner(&vinv_delta, &vinv_delta);
            let f0 = herm_inner(r, &v) + mu * chol_v.log_det();
            if decrement.abs() <= (0.01 * tol).max(1e-8 * mu * n as f64) {
                break;
            }
            // Backtracking line search keeping V positive definite. The
            // feasibility repair runs before the PD check so the accepted
            // iterate is guaranteed factorizable on the next pass.
            let mut s = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut cand = &v + delta.scale(s);
                repair_feasibility(&mut cand);
                if let Some(chol) = HermitianCholesky::new(&cand) {
                    let f = herm_inner(r, &cand) + mu * chol.log_det();
                    if f > f0 + 0.25 * s * decrement {
                        v = cand;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !moved {
                break;
            }
        }

        let gap = certified_gap(r, &v, mu);
        if best.as_ref().map_or(true, |(g, _)| gap < *g) {
            best = Some((gap, v.clone()));
        }
        // Boundary candidates from the current iterate often certify far
        // tighter than the boundary-shy barrier iterate itself: a polished
        // rank-one point, and Newton-refined low-rank KKT points.
        let vbar = rank_one_refinement(r, &v);
        let mut candidates = vec![&vbar * vbar.adjoint()];
        if n <= 16 {
            for rank in 1..=3usize.min(n) {
                if let Some(cand) = kkt_refinement(r, &v, mu, rank) {
                    candidates.push(cand);
                }
            }
        }
        for candidate in candidates {
            let cand_gap = certified_gap(r, &candidate, 0.0);
            if best.as_ref().map_or(true, |(g, _)| cand_gap < *g) {
                best = Some((cand_gap, candidate));
            }
        }
        let (best_gap, _) = best.as_ref().expect("gap recorded");
        if *best_gap <= tol {
            let (gap, v) = best.expect("gap recorded");
            let objective_value = herm_inner(r, &v);
            return Ok(SdpSolution {
                primal: v,
                objective_value,
                duality_gap: gap.max(0.0),
                iterations: steps,
            });
        }
        if steps >= MAX_NEWTON_STEPS {
            return Err(Error::SolverFailure(format!(
                "no convergence after {steps} Newton steps (gap {gap:.3e}, mu {mu:.3e}, n {n})"
            )));
        }
        mu /= 10.0;
        if mu < 1e-18 * r_scale.max(1.0) {
            return Err(Error::SolverFailure(format!(
                "barrier parameter exhausted (best gap {best_gap:.3e}, tol {tol:.3e})"
            )));
        }
    }
}

/// Factor `V = F F^H` for sampling, tolerating rank deficiency: Cholesky
/// when positive definite, otherwise an eigenvalue factor with negative
/// eigenvalues clamped to zero.
fn sampling_factor(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    if let Some(chol) = HermitianCholesky::new(v) {
        return chol.l;
    }
    let eig = SymmetricEigen::new(v.clone());
    let n = v.nrows();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut f = eig.eigenvectors;
    for j in 0..n {
        // Clamp the numerically-zero tail so rank-deficient solutions do
        // not leak rounding noise into the samples.
        let lambda = eig.eigenvalues[j];
        let s = if lambda < 1e-12 * lambda_max.max(1e-300) {
            0.0
        } else {
            lambda.sqrt()
        };
        for i in 0..n {
            f[(i, j)] *= Complex64::from(s);
        }
    }
    f
}

/// Draws `num_samples` vectors `xi ~ CN(0, V)`, projects each entrywise to
/// unit modulus (`e^{j arg xi_i}`, with `arg 0` taken as 0), and returns the
/// sample maximizing `v^H R v`. Ties keep the earliest sample.
pub fn extract_rank_one(
    sol: &SdpSolution,
    prob: &UnitDiagSdp,
    num_samples: usize,
    rng: &mut RandomStream,
) -> Result<DVector<Complex64>> {
    if num_samples == 0 {
        return Err(Error::invalid("need at least one randomization sample"));
    }
    let n = prob.size();
    if sol.primal.nrows() != n {
        return Err(Error::invalid("solution size does not match the problem"));
    }
    let factor = sampling_factor(&sol.primal);
    let mut best: Option<(f64, DVector<Complex64>)> = None;
    for _ in 0..num_samples {
        let g = DVector::from_iterator(
            n,
            (0..n).map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }),
        );
        let xi = &factor * g;
        let v = xi.map(|z| {
            if z == Complex64::ZERO {
                Complex64::ONE
            } else {
                Complex64::from_polar(1.0, z.arg())
            }
        });
        let value = prob.quad_form(&v);
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, v));
        }
    }
    Ok(best.expect("at least one sample").1)
}
