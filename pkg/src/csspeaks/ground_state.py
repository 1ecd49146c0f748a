"""Radial ground-state profile: shooting solve, decay diagnostics, spectrum.

The profile U solves

    -U'' - U'/r + v0 * U = U^(p-1),   U'(0) = 0,  U(r -> inf) = 0,  U > 0,

the radial form of -Delta U + v0 U = U^(p-1) in the plane.  The initial
height U(0) is bracketed by bisection between undershooting trajectories
(that turn back up) and overshooting ones (that cross zero), integrating
with an adaptive 4th/5th-order scheme.  The bisected trajectory is then
polished by a Newton iteration on a uniform radial mesh with 4th-order
finite differences and a Robin far-field condition taken from the modified
Bessel decay U ~ C*K0(sqrt(v0)*r), so the stored nodes satisfy the discrete
equation essentially to roundoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import eigsh, splu
from scipy.special import k0, k1

from .errors import SolverError
from .grid import Grid2D

NODES_PER_UNIT = 256  # uniform radial mesh density


@dataclass
class RadialProfile:
    """Ground-state profile sampled on a uniform radial mesh.

    Treated as immutable after construction; the interpolating splines are
    built lazily and cached.
    """

    r_max: float
    r_nodes: np.ndarray
    u_values: np.ndarray
    du_values: np.ndarray
    p: float
    v0: float
    u0: float
    _u_spline: CubicSpline | None = field(default=None, repr=False)
    _du_spline: CubicSpline | None = field(default=None, repr=False)

    def u_spline(self) -> CubicSpline:
        if self._u_spline is None:
            self._u_spline = CubicSpline(
                self.r_nodes,
                self.u_values,
                bc_type=((1, 0.0), (1, float(self.du_values[-1]))),
            )
        return self._u_spline

    def du_spline(self) -> CubicSpline:
        if self._du_spline is None:
            self._du_spline = CubicSpline(self.r_nodes, self.du_values)
        return self._du_spline

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        """U(r), zero beyond r_max."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < self.r_max
        out[inside] = self.u_spline()(r[inside])
        return out

    def evaluate_derivative(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < self.r_max
        out[inside] = self.du_spline()(r[inside])
        return out

    def radial_moment(self, q: float) -> float:
        """2 pi * integral of r * U(r)^q over [0, r_max]."""
        return float(2.0 * np.pi * simpson(self.r_nodes * self.u_values ** q,
                                           x=self.r_nodes))

    def validate(self) -> None:
        if not np.all(np.diff(self.r_nodes) > 0) or self.r_nodes[0] != 0.0:
            raise ValueError("r_nodes must increase strictly from 0")
        if np.any(self.u_values[:-1] <= 0):
            raise ValueError("profile not positive on [0, r_max)")
        if np.any(self.du_values > 1e-12 * self.u0):
            raise ValueError("profile not monotone decreasing")
        if self.u_values[0] != self.u0 or np.argmax(self.u_values) != 0:
            raise ValueError("profile maximum must sit at r = 0")
        if self.u_values[-1] >= 1e-6 * self.u0:
            raise ValueError("profile tail not decayed below 1e-6 * u0")


def _fd_weights(offsets: np.ndarray, deriv: int) -> np.ndarray:
    """Finite-difference weights on integer offsets for the given derivative."""
    m = len(offsets)
    A = np.vander(np.asarray(offsets, dtype=float), m, increasing=True).T
    b = np.zeros(m)
    b[deriv] = float(math.factorial(deriv))
    return np.linalg.solve(A, b)


def _shoot(a: float, p: float, v0: float, r_stop: float, dense: bool = False):
    """Integrate outward from r ~ 0; classify as 'over', 'under' or 'none'."""
    r0 = 1e-8
    c = v0 * a - a ** (p - 1.0)
    y0 = [a + 0.25 * c * r0 ** 2, 0.5 * c * r0]

    def rhs(r, y):
        u, v = y
        return [v, -v / r + v0 * u - np.abs(u) ** (p - 2.0) * u]

    def ev_cross(r, y):
        return y[0]

    ev_cross.terminal = True
    ev_cross.direction = -1.0

    def ev_turn(r, y):
        return y[1]

    ev_turn.terminal = True
    ev_turn.direction = 1.0

    sol = solve_ivp(
        rhs,
        (r0, r_stop),
        y0,
        method="RK45",
        rtol=1e-11,
        atol=1e-13,
        events=(ev_cross, ev_turn),
        dense_output=dense,
    )
    if sol.t_events[0].size:
        kind = "over"
    elif sol.t_events[1].size:
        kind = "under"
    else:
        kind = "none"
    return kind, sol


def _robin_slope(v0: float, r: float) -> float:
    s = np.sqrt(v0)
    return -s * k1(s * r) / k0(s * r)


def _newton_polish(r: np.ndarray, u: np.ndarray, p: float, v0: float) -> np.ndarray:
    """Newton iteration for the radial equation on the uniform mesh."""
    n = len(r) - 1
    h = r[1] - r[0]
    rows, cols, d2w, d1w = [], [], [], []

    def add(j, offs, w2, w1):
        for o, a2, a1 in zip(offs, w2, w1):
            rows.append(j)
            cols.append(j + o)
            d2w.append(a2)
            d1w.append(a1)

    c2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
    c1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
    # r = 0: even symmetry u(-h) = u(h), u(-2h) = u(2h)
    add(0, [0, 1, 2], [-30.0 / 12, 32.0 / 12, -2.0 / 12], [0.0, 0.0, 0.0])
    # j = 1: even reflection folds the -2 offset onto +... u(-h)=u(h)
    add(1, [-1, 0, 1, 2], [16.0 / 12, (-30.0 - 1.0) / 12, 16.0 / 12, -1.0 / 12],
        [-8.0 / 12, 1.0 / 12, 8.0 / 12, -1.0 / 12])
    for j in range(2, n - 1):
        add(j, [-2, -1, 0, 1, 2], c2, c1)
    offs = np.array([-4, -3, -2, -1, 0, 1])
    add(n - 1, offs, _fd_weights(offs, 2), _fd_weights(offs, 1))
    offs_b = np.array([-4, -3, -2, -1, 0])
    wb = _fd_weights(offs_b, 1)
    add(n, offs_b, np.zeros(5), wb)

    D2 = sparse.csr_matrix(
        (np.array(d2w) / h ** 2, (rows, cols)), shape=(n + 1, n + 1)
    )
    D1 = sparse.csr_matrix((np.array(d1w) / h, (rows, cols)), shape=(n + 1, n + 1))
    inv_r = np.zeros(n + 1)
    inv_r[1:] = 1.0 / r[1:]
    s_max = _robin_slope(v0, r[-1])

    def residual(uv):
        f = -(D2 @ uv) - inv_r * (D1 @ uv) + v0 * uv - np.abs(uv) ** (p - 2.0) * uv
        f[0] = -2.0 * (D2 @ uv)[0] + v0 * uv[0] - np.abs(uv[0]) ** (p - 2.0) * uv[0]
        f[n] = (D1 @ uv)[n] - s_max * uv[n]
        return f

    Iden = sparse.identity(n + 1, format="csr")
    e0 = sparse.csr_matrix(([1.0], ([0], [0])), shape=(n + 1, n + 1))
    en = sparse.csr_matrix(([1.0], ([n], [n])), shape=(n + 1, n + 1))
    mask_mid = sparse.diags(
        np.r_[0.0, np.ones(n - 1), 0.0], format="csr"
    )
    bc_row = en @ (D1 - s_max * Iden)

    # roundoff floor of the residual evaluation scales like eps * u / h^2
    for _ in range(30):
        f = residual(u)
        scale = np.max(np.abs(u))
        if np.max(np.abs(f)) <= 1e-9 * max(scale, 1.0):
            break
        dN = sparse.diags(v0 - (p - 1.0) * np.abs(u) ** (p - 2.0))
        J = mask_mid @ (-D2 - sparse.diags(inv_r) @ D1 + dN)
        J = J + e0 @ (-2.0 * D2 + dN) + bc_row
        du = splu(J.tocsc()).solve(-f)
        # damped step only if the full step would cross zero in the core
        step = 1.0
        while np.any(u[: n // 2] + step * du[: n // 2] <= 0) and step > 1e-3:
            step *= 0.5
        u = u + step * du
        if step * np.max(np.abs(du)) <= 1e-13 * scale:
            break
    else:
        raise SolverError("ground-state Newton polish did not converge")
    return u


def ode_residual(profile: RadialProfile) -> float:
    """Max-norm residual of the radial equation at the interior mesh nodes."""
    r, u = profile.r_nodes, profile.u_values
    h = r[1] - r[0]
    c2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    c1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    j = np.arange(2, len(r) - 2)
    u2 = sum(c * u[j + o] for o, c in zip((-2, -1, 0, 1, 2), c2))
    u1 = sum(c * u[j + o] for o, c in zip((-2, -1, 0, 1, 2), c1))
    res = -u2 - u1 / r[j] + profile.v0 * u[j] - u[j] ** (profile.p - 1.0)
    return float(np.max(np.abs(res)))


def solve_ground_state(p: float, v0: float, tol: float = 1e-8,
                       r_max: float = 16.0) -> RadialProfile:
    """Solve for the radial ground state by shooting plus bisection.

    tol bounds the relative bisection bracket width on U(0); the mesh
    polish afterwards is tol-independent.
    """
    if not p > 2:
        raise ValueError(f"exponent must satisfy p > 2, got {p}")
    if not v0 > 0:
        raise ValueError(f"potential constant must be positive, got {v0}")
    if not 0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")

    equil = v0 ** (1.0 / (p - 2.0))
    r_stop = r_max + 6.0

    a_lo = equil * (1.0 + 1e-6)
    kind, _ = _shoot(a_lo, p, v0, r_stop)
    if kind == "over":
        raise SolverError("no ground state bracket")
    a_hi = 2.0 * equil
    for _ in range(60):
        kind, _ = _shoot(a_hi, p, v0, r_stop)
        if kind == "over":
            break
        a_lo = a_hi
        a_hi *= 2.0
    else:
        raise SolverError("no ground state bracket")

    width_goal = min(tol, 1e-12)
    while (a_hi - a_lo) > width_goal * a_hi:
        a_mid = 0.5 * (a_lo + a_hi)
        kind, _ = _shoot(a_mid, p, v0, r_stop)
        if kind == "over":
            a_hi = a_mid
        else:
            a_lo = a_mid

    # initial mesh guess: undershoot trajectory out to where it is reliable,
    # then the K0 far field matched by value
    _, sol = _shoot(a_lo, p, v0, r_stop, dense=True)
    n_nodes = int(round(r_max * NODES_PER_UNIT))
    r = np.linspace(0.0, r_max, n_nodes + 1)
    r_reach = sol.t[-1]
    r_cut = min(r_reach, r_max)
    # back off to where u is still comfortably above the blow-up of shooting error
    vals = sol.sol(np.linspace(sol.t[0], r_cut, 2000))[0]
    floor = 1e-3 * a_lo
    idx = np.nonzero(vals < floor)[0]
    if idx.size:
        r_cut = np.linspace(sol.t[0], r_cut, 2000)[idx[0]]
    u = np.empty_like(r)
    inner = r <= r_cut
    u[inner] = sol.sol(np.clip(r[inner], sol.t[0], None))[0]
    s = np.sqrt(v0)
    c_tail = sol.sol(r_cut)[0] / k0(s * r_cut)
    u[~inner] = c_tail * k0(s * r[~inner])

    u = _newton_polish(r, u, p, v0)

    h = r[1] - r[0]
    du = np.empty_like(u)
    c1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    j = np.arange(2, len(r) - 2)
    du[j] = sum(c * u[j + o] for o, c in zip((-2, -1, 0, 1, 2), c1))
    du[0] = 0.0
    du[1] = (u[1] - 8.0 * u[0] + 8.0 * u[2] - u[3]) / (12.0 * h)
    offs = np.array([-4, -3, -2, -1, 0])
    w = _fd_weights(offs, 1) / h
    du[-1] = float(w @ u[-5:])
    offs2 = np.array([-3, -2, -1, 0, 1])
    w2 = _fd_weights(offs2, 1) / h
    du[-2] = float(w2 @ u[-5:])
    np.minimum(du, 0.0, out=du)

    prof = RadialProfile(
        r_max=r_max,
        r_nodes=r,
        u_values=u,
        du_values=du,
        p=p,
        v0=v0,
        u0=float(u[0]),
    )
    prof.validate()
    return prof


@dataclass
class AsymptoticsReport:
    """Tail diagnostics over the window [r_max - 4, r_max - 1]."""

    c_hat: float
    c_spread: float
    slope: float
    slope_normalized: float
    window: tuple[float, float]
    passed: bool


def check_decay_asymptotics(profile: RadialProfile) -> AsymptoticsReport:
    """Check the far-field law U ~ C r^(-1/2) e^(-sqrt(v0) r), U'/U -> -sqrt(v0)."""
    if profile.r_max < 12.0:
        raise ValueError("tail window unavailable: r_max < 12")
    lo, hi = profile.r_max - 4.0, profile.r_max - 1.0
    s = np.sqrt(profile.v0)
    mask = (profile.r_nodes >= lo) & (profile.r_nodes <= hi)
    r = profile.r_nodes[mask]
    u = profile.u_values[mask]
    du = profile.du_values[mask]
    weighted = np.sqrt(s * r) * np.exp(s * r) * u
    c_hat = float(np.median(weighted))
    c_spread = float((weighted.max() - weighted.min()) / c_hat)
    slope = float(np.median(du / u))
    slope_norm = slope / s
    passed = c_spread <= 0.05 and abs(slope_norm + 1.0) <= 2e-2
    return AsymptoticsReport(
        c_hat=c_hat,
        c_spread=c_spread,
        slope=slope,
        slope_normalized=slope_norm,
        window=(lo, hi),
        passed=passed,
    )


@dataclass
class SpectrumReport:
    """Low-lying spectrum of -Delta + v0 - (p-1) U^(p-2) on a 2D grid."""

    eigenvalues: np.ndarray          # 4 smallest-magnitude
    min_eigenvalue: float            # smallest algebraic eigenvalue
    near_kernel_dim: int
    near_kernel_threshold: float
    alignment: float                 # min principal-angle cosine vs span{d1 U, d2 U}
    eigenvectors: np.ndarray         # columns matching `eigenvalues`


def linearized_operator(profile: RadialProfile, grid: Grid2D) -> sparse.csr_matrix:
    """Sparse -Delta + v0 - (p-1)U^(p-2) with Dirichlet boundary."""
    n = grid.n
    h = grid.spacing
    X1, X2 = grid.meshes()
    r = np.hypot(X1, X2)
    U = profile.evaluate(r)
    lap = sparse.diags([-1.0, -1.0, 4.0, -1.0, -1.0],
                       [-n, -1, 0, 1, n], shape=(n * n, n * n), format="lil")
    # remove couplings that wrap across rows
    for i in range(1, n):
        lap[i * n, i * n - 1] = 0.0
        lap[i * n - 1, i * n] = 0.0
    lap = lap.tocsr() / h ** 2
    pot = profile.v0 - (profile.p - 1.0) * U ** (profile.p - 2.0)
    return lap + sparse.diags(pot.ravel())


def nondegeneracy_spectrum(profile: RadialProfile, grid: Grid2D) -> SpectrumReport:
    """Near-kernel structure of the linearized operator around the profile."""
    if grid.spacing > 0.1:
        raise ValueError("grid too coarse to resolve the profile (spacing > 0.1)")
    A = linearized_operator(profile, grid)
    try:
        vals, vecs = eigsh(A, k=4, sigma=0.0, which="LM")
        val_min = eigsh(A, k=1, which="SA", return_eigenvectors=False)
    except Exception as exc:  # pragma: no cover - solver-side failure
        raise SolverError("spectrum failed") from exc
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]

    thresh = 10.0 * grid.spacing ** 2
    near = np.abs(vals) <= thresh
    dim = int(np.count_nonzero(near))

    X1, X2 = grid.meshes()
    r = np.hypot(X1, X2)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(r > 0, profile.evaluate_derivative(r) / r, 0.0)
    t1 = (slope * X1).ravel()
    t2 = (slope * X2).ravel()
    T = np.column_stack([t1, t2])
    QT, _ = np.linalg.qr(T)
    alignment = 0.0
    if dim:
        QK, _ = np.linalg.qr(vecs[:, near])
        sing = np.linalg.svd(QT.T @ QK, compute_uv=False)
        alignment = float(sing.min())
    return SpectrumReport(
        eigenvalues=vals,
        min_eigenvalue=float(val_min[0]),
        near_kernel_dim=dim,
        near_kernel_threshold=thresh,
        alignment=alignment,
        eigenvectors=vecs,
    )


# ---------------------------------------------------------------------------
# profile cache

def save_profile(path: str | Path, profile: RadialProfile,
                 meta: dict | None = None) -> None:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# p={profile.p!r} v0={profile.v0!r} u0={profile.u0!r}\n")
        fh.write("r,u,du\n")
        for r, u, du in zip(profile.r_nodes, profile.u_values, profile.du_values):
            fh.write(f"{r:.17g},{u:.17g},{du:.17g}\n")
    sidecar = dict(meta or {})
    sidecar.update({"p": profile.p, "v0": profile.v0, "u0": profile.u0,
                    "r_max": profile.r_max})
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_profile(path: str | Path) -> tuple[RadialProfile, dict]:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline()
        parts = dict(tok.split("=") for tok in header.lstrip("# ").split())
        fh.readline()  # column names
        data = np.loadtxt(fh, delimiter=",")
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta = {}
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
    prof = RadialProfile(
        r_max=float(data[-1, 0]),
        r_nodes=data[:, 0],
        u_values=data[:, 1],
        du_values=data[:, 2],
        p=float(parts["p"]),
        v0=float(parts["v0"]),
        u0=float(parts["u0"]),
    )
    return prof, meta
