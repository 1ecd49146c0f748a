"""Constraint-space correction of the multi-peak ansatz.

The ansatz is the sum of translated profile copies; the correction phi is
sought in the subspace E orthogonal (in the H1-type inner product) to the
2k translation derivatives of the peaks.  Writing M = -Lap + 1 for the
Riesz map of that inner product on the peak-scale grid and L for the
Hessian of the energy at the ansatz, the critical-point condition on E is

    P M^-1 [ I'(U*) + L w + R'(w) ] = 0,       R'(w) = I'(U* + w) - I'(U*) - L w,

solved by the fixed-point iteration w <- -(P M^-1 L P)^-1 P M^-1 [I'(U*) + R'(w)]
whose linear solves use a MINRES recurrence in the E-geometry (the operator
is symmetric there but indefinite: each peak contributes one negative
direction inside E, so a definite solver would be wrong).  The Lanczos
scalars are kept so the tridiagonal Ritz values are available as the
invertibility diagnostic; the relevant surrogate for the inversion bound is
the smallest Ritz value in magnitude.

Everything here works on peak-scale fields; reported eps-norms carry the
physical factor eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .energy import (
    ProblemSpec,
    SecondVariation,
    _first_variation_raw,
    inner_product_eps,
)
from .errors import InfeasibleError, SolverError
from .grid import Field2D, Grid2D, check_same_grid, inv_helmholtz, neg_laplacian
from .ground_state import RadialProfile

MIN_BOX_MARGIN = 5.0  # peak-to-boundary distance in profile units


@dataclass(frozen=True)
class PeakConfiguration:
    """Candidate peak locations y^1..y^k with the admissibility data."""

    epsilon: float
    k: int
    points: np.ndarray          # (k, 2) physical locations
    delta: float                # admissibility radius of the potential
    x0: np.ndarray              # concentration center

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape != (self.k, 2):
            raise ValueError(f"expected {self.k} peak points, got {pts.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if not self.epsilon > 0:
            raise InfeasibleError("epsilon must be positive")

    def offsets(self) -> np.ndarray:
        """Peak offsets in profile units, (y_i - x0) / eps."""
        return (self.points - self.x0[None, :]) / self.epsilon

    def min_separation_ratio(self) -> float:
        if self.k < 2:
            return np.inf
        d = self.points[:, None, :] - self.points[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        iu = np.triu_indices(self.k, 1)
        return float(dist[iu].min() / self.epsilon)

    def separation_floor(self) -> float:
        return float(np.sqrt(np.abs(np.log(self.epsilon))))

    def max_center_distance(self) -> float:
        return float(np.hypot(*(self.points - self.x0[None, :]).T).max())

    def is_admissible(self) -> bool:
        if self.max_center_distance() > 0.5 * self.delta + 1e-12:
            return False
        if self.k >= 2 and self.min_separation_ratio() < self.separation_floor():
            return False
        return True

    def require_admissible(self, potential=None) -> None:
        if not self.is_admissible():
            raise InfeasibleError("outside D_k")


def build_ansatz(profile: RadialProfile, peaks: PeakConfiguration,
                 grid: Grid2D) -> Field2D:
    """Sum of translated profile copies on the peak-scale grid."""
    peaks.require_admissible()
    zetas = peaks.offsets()
    margin = grid.half_width - np.max(np.abs(zetas), initial=0.0)
    if margin < MIN_BOX_MARGIN:
        raise InfeasibleError(
            f"insufficient margin: peak within {margin:.2f} profile widths "
            f"of the box boundary"
        )
    Z1, Z2 = grid.meshes()
    vals = np.zeros((grid.n, grid.n))
    for zeta in zetas:
        r = np.hypot(Z1 - zeta[0], Z2 - zeta[1])
        vals += profile.evaluate(r)
    return Field2D(grid, vals)


def tangent_basis(profile: RadialProfile, peaks: PeakConfiguration,
                  grid: Grid2D) -> list[Field2D]:
    """The 2k translation derivatives d U_{eps,y_i} / d y_l, l = 1, 2."""
    peaks.require_admissible()
    Z1, Z2 = grid.meshes()
    out = []
    for zeta in peaks.offsets():
        w1 = Z1 - zeta[0]
        w2 = Z2 - zeta[1]
        r = np.hypot(w1, w2)
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(r > 0, profile.evaluate_derivative(r) / r, 0.0)
        for w in (w1, w2):
            out.append(Field2D(grid, (-1.0 / peaks.epsilon) * slope * w))
    return out


def project_E(v: Field2D, basis: list[Field2D], epsilon: float) -> Field2D:
    """Remove the component of v in span(basis), orthogonally for <.,.>_eps."""
    grid = check_same_grid(v, *basis)
    m = len(basis)
    gram = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            gram[i, j] = gram[j, i] = inner_product_eps(basis[i], basis[j], epsilon)
    if np.linalg.cond(gram) > 1e6:
        raise InfeasibleError("peaks nearly coincident")
    rhs = np.array([inner_product_eps(b, v, epsilon) for b in basis])
    coef = np.linalg.solve(gram, rhs)
    vals = v.values.copy()
    for c, b in zip(coef, basis):
        vals -= c * b.values
    return Field2D(grid, vals)


class EGeometry:
    """Raw-array geometry of E: inner product, projection, Riesz map."""

    def __init__(self, grid: Grid2D, basis_values: list[np.ndarray]):
        self.grid = grid
        self.h = grid.spacing
        self.area = grid.cell_area()
        self.basis = basis_values
        self.m_basis = [self.m_apply(b) for b in basis_values]
        m = len(basis_values)
        gram = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                gram[i, j] = gram[j, i] = self.area * float(
                    np.sum(self.m_basis[i] * basis_values[j])
                )
        if np.linalg.cond(gram) > 1e6:
            raise InfeasibleError("peaks nearly coincident")
        self.gram = gram

    def m_apply(self, v: np.ndarray) -> np.ndarray:
        return neg_laplacian(v, self.h) + v

    def m_solve(self, v: np.ndarray) -> np.ndarray:
        return inv_helmholtz(v, self.h, eps2=1.0)

    def inner(self, v: np.ndarray, w: np.ndarray, mw: np.ndarray | None = None) -> float:
        if mw is None:
            mw = self.m_apply(w)
        return self.area * float(np.sum(v * mw))

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def project(self, v: np.ndarray) -> np.ndarray:
        rhs = np.array(
            [self.area * float(np.sum(mb * v)) for mb in self.m_basis]
        )
        coef = np.linalg.solve(self.gram, rhs)
        out = v.copy()
        for c, b in zip(coef, self.basis):
            out -= c * b
        return out

    def riesz(self, density: np.ndarray) -> np.ndarray:
        """Projected Riesz representative of phi -> area * sum(density * phi)."""
        return self.project(self.m_solve(density))


@dataclass
class MinresInfo:
    iterations: int
    relative_residual: float
    ritz_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def ritz_min_abs(self) -> float:
        return float(np.min(np.abs(self.ritz_values))) if self.ritz_values.size else np.nan

    @property
    def ritz_min(self) -> float:
        return float(np.min(self.ritz_values)) if self.ritz_values.size else np.nan


def minres_e(op, b: np.ndarray, geom: EGeometry, tol: float,
             maxiter: int = 2000) -> tuple[np.ndarray, MinresInfo]:
    """MINRES for a symmetric (possibly indefinite) operator in E-geometry.

    `op` must be self-adjoint with respect to geom.inner on the subspace E
    containing b.  Returns the solution estimate together with the Lanczos
    Ritz values accumulated along the run.
    """
    beta1 = geom.norm(b)
    info = MinresInfo(iterations=0, relative_residual=0.0)
    x = np.zeros_like(b)
    if beta1 == 0.0:
        return x, info
    v_prev = np.zeros_like(b)
    v = b / beta1
    beta = 0.0
    eta = beta1
    gamma, gamma_old = 1.0, 1.0
    sigma, sigma_old = 0.0, 0.0
    w = np.zeros_like(b)
    w_old = np.zeros_like(b)
    alphas: list[float] = []
    betas: list[float] = []
    res = beta1
    for it in range(1, maxiter + 1):
        z = op(v)
        alpha = geom.inner(z, v)
        z = z - alpha * v - beta * v_prev
        beta_next = geom.norm(z)
        alphas.append(alpha)

        delta = gamma * alpha - gamma_old * sigma * beta
        rho1 = np.hypot(delta, beta_next)
        rho2 = sigma * alpha + gamma_old * gamma * beta
        rho3 = sigma_old * beta
        gamma_old, gamma_new = gamma, delta / rho1
        sigma_old, sigma_new = sigma, beta_next / rho1
        w_new = (v - rho3 * w_old - rho2 * w) / rho1
        x = x + (gamma_new * eta) * w_new
        eta = -sigma_new * eta
        res = abs(eta)

        w_old, w = w, w_new
        gamma, sigma = gamma_new, sigma_new
        v_prev, v = v, z / beta_next if beta_next > 0 else z
        beta = beta_next
        if res <= tol * beta1 or beta_next == 0.0:
            break
        betas.append(beta_next)
    else:
        info.iterations = maxiter
        info.relative_residual = res / beta1
        info.ritz_values = _ritz(alphas, betas)
        raise SolverError("L_eps solve stagnated")
    info.iterations = it
    info.relative_residual = res / beta1
    info.ritz_values = _ritz(alphas, betas[: len(alphas) - 1])
    return x, info


def _ritz(alphas: list[float], betas: list[float]) -> np.ndarray:
    if not alphas:
        return np.empty(0)
    return eigh_tridiagonal(
        np.asarray(alphas), np.asarray(betas[: len(alphas) - 1]),
        eigvals_only=True,
    )


class ReductionOperator:
    """The E-restricted, Riesz-mapped Hessian P M^-1 L P at a fixed ansatz."""

    def __init__(self, spec: ProblemSpec, ustar: Field2D, geom: EGeometry):
        self.hessian = SecondVariation(spec, ustar)
        self.geom = geom

    def __call__(self, v: np.ndarray) -> np.ndarray:
        pv = self.geom.project(v)
        return self.geom.project(self.geom.m_solve(self.hessian.apply_raw(pv)))


def solve_L_on_E(spec: ProblemSpec, ansatz: Field2D, rhs: Field2D,
                 basis: list[Field2D], tol: float = 1e-8,
                 maxiter: int = 2000) -> tuple[Field2D, MinresInfo]:
    """Solve P M^-1 L w = rhs for w in E (rhs must already lie in E)."""
    grid = check_same_grid(ansatz, rhs, *basis)
    geom = EGeometry(grid, [b.values for b in basis])
    op = ReductionOperator(spec, ansatz, geom)
    x, info = minres_e(op, geom.project(rhs.values), geom, tol, maxiter)
    return Field2D(grid, x), info


@dataclass
class ReductionResult:
    """Correction phi in E with the contraction diagnostics of the solve."""

    phi: Field2D
    phi_norm_eps: float
    iterations: int
    contraction_ratios: list[float]
    update_norms: list[float]
    residual_norm: float            # ||P M^-1 I'(U* + phi)||_eps
    initial_residual_norm: float    # ||P M^-1 I'(U*)||_eps
    ritz_min_abs: float             # smallest-magnitude Ritz value observed
    ritz_min: float                 # smallest signed Ritz value observed
    e_orthogonality: float          # max normalized overlap with the basis
    inner_iterations: int


def solve_correction(spec: ProblemSpec, profile: RadialProfile,
                     peaks: PeakConfiguration, grid: Grid2D,
                     initial: Field2D | None = None,
                     max_outer: int = 50,
                     step_tol: float = 1e-9,
                     inner_tol: float = 1e-8) -> ReductionResult:
    """Contraction iteration for the constraint-space correction."""
    peaks.require_admissible()
    ustar = build_ansatz(profile, peaks, grid)
    basis = tangent_basis(profile, peaks, grid)
    geom = EGeometry(grid, [b.values for b in basis])
    op = ReductionOperator(spec, ustar, geom)
    hessian = op.hessian

    g0 = _first_variation_raw(spec, grid, ustar.values)
    ell_bar = geom.riesz(g0)
    initial_residual = geom.norm(ell_bar)

    omega = geom.project(initial.values) if initial is not None else np.zeros_like(g0)
    update_norms: list[float] = []
    ratios: list[float] = []
    ritz_abs: list[float] = []
    ritz_signed: list[float] = []
    inner_total = 0
    bad_streak = 0
    eps = spec.epsilon

    for outer in range(1, max_outer + 1):
        if outer == 1 and initial is None:
            resid_density = g0
        else:
            resid_density = _first_variation_raw(
                spec, grid, ustar.values + omega
            ) - hessian.apply_raw(omega)
        b = -geom.riesz(resid_density)
        # incremental solve: A (omega + d) = b
        rhs = b - op(omega)
        rhs_scale = max(geom.norm(b), 1e-300)
        tol_eff = inner_tol * rhs_scale / max(geom.norm(rhs), 1e-300)
        d, info = minres_e(op, rhs, geom, tol=min(tol_eff, 0.1), maxiter=2000)
        inner_total += info.iterations
        if info.ritz_values.size:
            ritz_abs.append(info.ritz_min_abs)
            ritz_signed.append(info.ritz_min)
        omega_new = geom.project(omega + d)
        step = geom.norm(omega_new - omega)
        update_norms.append(step)
        if len(update_norms) >= 2 and update_norms[-2] > 0:
            ratio = step / update_norms[-2]
            ratios.append(ratio)
            bad_streak = bad_streak + 1 if ratio >= 1.0 else 0
            if bad_streak >= 3:
                raise SolverError("contraction failed")
        omega = omega_new
        if step <= step_tol * max(geom.norm(omega), 1e-300):
            break

    final_density = _first_variation_raw(spec, grid, ustar.values + omega)
    residual_norm = geom.norm(geom.riesz(final_density))
    overlaps = [
        abs(geom.inner(omega, b, mb)) for b, mb in zip(geom.basis, geom.m_basis)
    ]
    omega_norm = geom.norm(omega)
    b_norms = [geom.norm(b) for b in geom.basis]
    e_orth = max(
        o / (omega_norm * bn) if omega_norm > 0 else 0.0
        for o, bn in zip(overlaps, b_norms)
    )
    phi = Field2D(grid, omega)
    return ReductionResult(
        phi=phi,
        phi_norm_eps=eps * omega_norm,
        iterations=len(update_norms),
        contraction_ratios=ratios,
        update_norms=update_norms,
        residual_norm=eps * residual_norm,
        initial_residual_norm=eps * initial_residual,
        ritz_min_abs=float(np.min(ritz_abs)) if ritz_abs else np.nan,
        ritz_min=float(np.min(ritz_signed)) if ritz_signed else np.nan,
        e_orthogonality=float(e_orth),
        inner_iterations=inner_total,
    )
