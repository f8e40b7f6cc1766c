"""Model problems, reference solutions, error norms and convergence studies."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .element import MaterialParams, P2Basis
from .mesh import BcLayout, Mesh, Tag, build_structured_mesh, tag_boundary, unit_square_mesh
from .quadrature import edge_rule, map_triangle_points
from .system import DgConfig, Family, MethodSpec, Solution, SolverError, solve_problem

# ---------------------------------------------------------------------------
# exact fields
#
# Every field exposes ``derivatives(x, y)`` returning a dict with
#   "u"    value                       shape (...)
#   "grad" (u_x, u_y)                  shape (2, ...)
#   "hess" (u_xx, u_xy, u_yy)          shape (3, ...)
#   "third" (u_xxx, u_xxy, u_xyy, u_yyy) shape (4, ...)


class SineField:
    """u = sin(a pi x) sin(b pi y)."""

    def __init__(self, a: int = 1, b: int = 2):
        self.a, self.b = a * math.pi, b * math.pi

    def __call__(self, x, y):
        return np.sin(self.a * x) * np.sin(self.b * y)

    def derivatives(self, x, y, which=None) -> dict:
        a, b = self.a, self.b
        sx, cx = np.sin(a * x), np.cos(a * x)
        sy, cy = np.sin(b * y), np.cos(b * y)
        return {
            "u": sx * sy,
            "grad": np.stack([a * cx * sy, b * sx * cy]),
            "hess": np.stack([-a * a * sx * sy, a * b * cx * cy, -b * b * sx * sy]),
            "third": np.stack([-(a**3) * cx * sy, -a * a * b * sx * cy, -a * b * b * cx * sy, -(b**3) * sx * cy]),
        }

    def bilaplacian(self, x, y):
        return (self.a**2 + self.b**2) ** 2 * self(x, y)


def exact_p1(x, y, order: int = 0):
    """Problem 1 field or its derivative tensor of the given order (0..3).

    Order 1 returns ``(u_x, u_y)``, order 2 the symmetric 2x2 hessian and
    order 3 the 2x2x2 tensor of third derivatives.
    """
    d = SineField().derivatives(np.asarray(x, float), np.asarray(y, float))
    if order == 0:
        return d["u"]
    if order == 1:
        return d["grad"]
    if order == 2:
        xx, xy, yy = d["hess"]
        return np.array([[xx, xy], [xy, yy]])
    if order == 3:
        a, b, c, e = d["third"]
        return np.array([[[a, b], [b, c]], [[b, c], [c, e]]])
    raise ValueError("order must be 0, 1, 2 or 3")


class LevyPlateField:
    """Series solution for a unit square plate under unit load.

    Simply supported on x = 0 and x = 1, clamped on y = 0, free on y = 1.
    The deflection is the beam solution in x plus a sine series whose
    y-profiles are written with decaying exponentials only, so every term
    stays bounded for large wave numbers.
    """

    def __init__(self, material: MaterialParams, q: float = 1.0, n_modes: int = 400):
        self.D, self.nu, self.q = material.D, material.nu, q
        m = 2 * np.arange(n_modes) + 1
        self.alpha = m * math.pi
        self.coef = np.array([self._solve_mode(a) for a in self.alpha])  # (modes, 4)

    @staticmethod
    def _profiles(alpha: float, y, k: int):
        """k-th y-derivatives of e^{-ay}, ay e^{-ay}, e^{-a(1-y)}, a(1-y) e^{-a(1-y)}."""
        s = 1.0 - y
        e0, e1 = np.exp(-alpha * y), np.exp(-alpha * s)
        ma = (-alpha) ** k
        f1 = ma * e0
        f2 = alpha * ma * y * e0 + (k * alpha * (-alpha) ** (k - 1) * e0 if k else 0.0)
        f3 = alpha**k * e1
        g = alpha * ma * s * e1 + (k * alpha * (-alpha) ** (k - 1) * e1 if k else 0.0)
        f4 = (-1) ** k * g
        return np.stack(np.broadcast_arrays(f1, f2, f3, f4))

    def _solve_mode(self, alpha: float) -> np.ndarray:
        nu = self.nu
        P = [self._profiles(alpha, np.array(0.0), k) for k in range(4)]
        Q = [self._profiles(alpha, np.array(1.0), k) for k in range(4)]
        yp = 4.0 * self.q / (self.D * alpha**5)
        A = np.array([P[0], P[1], Q[2] - nu * alpha**2 * Q[0], Q[3] - (2 - nu) * alpha**2 * Q[1]])
        rhs = np.array([-yp, 0.0, nu * alpha**2 * yp, 0.0])
        return np.linalg.solve(A, rhs)

    def _beam(self, x, k: int):
        c = self.q / (24.0 * self.D)
        return c * [x**4 - 2 * x**3 + x, 4 * x**3 - 6 * x**2 + 1, 12 * x**2 - 12 * x, 24 * x - 12][k]

    def _series(self, x, y, orders, chunk: int = 4000) -> dict:
        """Mixed derivatives d^i/dx^i d^j/dy^j of the homogeneous series for (i, j) in ``orders``."""
        xs, ys = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        # far from y = 0 and y = 1 the high modes are below round-off, so
        # points are processed in order of that distance with a truncated sum
        dist = np.minimum(ys.ravel(), 1.0 - ys.ravel())
        perm = np.argsort(-dist, kind="stable")
        xf, yf, dist = xs.ravel()[perm], ys.ravel()[perm], dist[perm]
        out = {o: np.empty(xf.shape) for o in orders}
        js = sorted({j for _, j in orders})
        is_ = sorted({i for i, _ in orders})
        for s in range(0, len(xf), chunk):
            d_min = max(float(dist[s : s + chunk].min()), 0.0)
            nm = len(self.alpha) if d_min == 0.0 else int(np.searchsorted(self.alpha, 45.0 / d_min)) + 1
            a = self.alpha[:nm, None]
            xc, yc = xf[None, s : s + chunk], yf[None, s : s + chunk]
            prof = {}
            for j in js:
                f = self._profiles(a, yc, j)  # (4, modes, P)
                prof[j] = np.einsum("mk,kmp->mp", self.coef[:nm], f)
            sx, cx = np.sin(a * xc), np.cos(a * xc)
            trig = {0: sx, 1: cx, 2: -sx, 3: -cx}
            for i in is_:
                ti = a**i * trig[i]
                for (ii, j) in orders:
                    if ii == i:
                        out[(i, j)][s : s + chunk] = np.sum(ti * prof[j], axis=0)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return {o: v[inv].reshape(xs.shape) for o, v in out.items()}

    def __call__(self, x, y):
        return self._beam(np.asarray(x, float), 0) + self._series(x, y, [(0, 0)])[(0, 0)]

    _GROUPS = {
        "u": [(0, 0)],
        "grad": [(1, 0), (0, 1)],
        "hess": [(2, 0), (1, 1), (0, 2)],
        "third": [(3, 0), (2, 1), (1, 2), (0, 3)],
    }

    def derivatives(self, x, y, which=("u", "grad", "hess", "third")) -> dict:
        x = np.asarray(x, float)
        y = np.broadcast_to(np.asarray(y, float), x.shape)
        S = self._series(x, y, [o for g in which for o in self._GROUPS[g]])
        for k in range(4):
            if (k, 0) in S:
                S[(k, 0)] = S[(k, 0)] + self._beam(x, k)
        return {g: (S[self._GROUPS[g][0]] if g == "u" else np.stack([S[o] for o in self._GROUPS[g]])) for g in which}


# ---------------------------------------------------------------------------
# model problems


class ProblemId(enum.Enum):
    P1 = "p1"
    P2 = "p2"


@dataclass(frozen=True)
class ModelProblem:
    id: ProblemId
    material: MaterialParams
    bc_layout: BcLayout
    load: object
    exact: object | None = None

    @property
    def name(self) -> str:
        return self.id.value

    def mesh(self, mesh_type: str, n: int, seed: int = 0, jitter: float = 0.2) -> Mesh:
        return unit_square_mesh(mesh_type, n, layout=self.bc_layout, seed=seed, jitter=jitter)


def problem_p1() -> ModelProblem:
    u = SineField(1, 2)
    return ModelProblem(
        ProblemId.P1,
        MaterialParams(D=1.0, nu=0.0),
        BcLayout.uniform(Tag.SIMPLY_SUPPORTED),
        lambda x, y: 25.0 * math.pi**4 * u(x, y),
        u,
    )


P2_LAYOUT = dict(bottom="C", right="S", top="F", left="S")


def problem_p2(n_modes: int = 400) -> ModelProblem:
    mat = MaterialParams.from_plate(E=1e6, p=0.01, nu=0.3)
    return ModelProblem(
        ProblemId.P2,
        mat,
        BcLayout.unit_square(**P2_LAYOUT),
        lambda x, y: np.ones_like(np.asarray(x, float)),
        LevyPlateField(mat, 1.0, n_modes),
    )


def get_problem(name) -> ModelProblem:
    pid = ProblemId(str(getattr(name, "value", name)).lower())
    return problem_p1() if pid is ProblemId.P1 else problem_p2()


# ---------------------------------------------------------------------------
# piecewise quadratic fields and the numerical Problem 2 reference


class ReferenceCheckError(RuntimeError):
    pass


@dataclass(frozen=True)
class StructuredP2Field:
    """Piecewise quadratic field on the structured n x n unit-square mesh.

    Point evaluation uses direct cell lookup, so the field can be sampled
    at quadrature points of any other mesh.
    """

    n: int
    coeffs: np.ndarray  # (2 n^2, 6)

    def __post_init__(self):
        object.__setattr__(self, "_basis", P2Basis(build_structured_mesh(self.n).tri_coords))

    def locate(self, x, y) -> np.ndarray:
        n = self.n
        i = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)
        j = np.clip(np.floor(y * n).astype(np.int64), 0, n - 1)
        upper = (y * n - j) > (x * n - i)
        return 2 * (j * n + i) + upper

    def __call__(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        k = self.locate(x.ravel(), y.ravel())
        pts = np.stack([x.ravel(), y.ravel()], axis=-1)[:, None, :]
        rows = self._basis.value_rows(pts, k)[:, 0]
        return np.einsum("pj,pj->p", rows, self.coeffs[k]).reshape(x.shape)


def _cache_dir() -> Path:
    return Path(os.environ.get("PLATEKIT_CACHE", Path.home() / ".cache" / "platekit"))


RICHARDSON_TOL = 1e-2


@dataclass(frozen=True)
class ReferenceP2:
    field: StructuredP2Field
    coarse: StructuredP2Field
    richardson: float  # relative L2 difference between the two resolutions

    def __call__(self, x, y):
        return self.field(x, y)


def _solve_reference(n: int) -> StructuredP2Field:
    prob = problem_p2(n_modes=1)
    mesh = prob.mesh("structured", n)
    sol = solve_problem(mesh, MethodSpec(Family.DPV_C0), prob.material, prob.load)
    return StructuredP2Field(n, sol.reconstructed)


def field_l2_difference(a, b, mesh: Mesh, degree: int = 6) -> tuple[float, float]:
    """(||a - b||, ||b||) by quadrature on ``mesh``."""
    pts, wts = map_triangle_points(mesh.tri_coords, degree)
    va, vb = a(pts[..., 0], pts[..., 1]), b(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(wts * (va - vb) ** 2))), float(np.sqrt(np.sum(wts * vb**2)))


def reference_p2(resolution: int = 256, use_cache: bool = True) -> ReferenceP2:
    """Over-resolved DPV-C0 solution of Problem 2, checked against half resolution.

    The result is cached in ``$PLATEKIT_CACHE`` (default ``~/.cache/platekit``).
    """
    if resolution < 4 or resolution % 2:
        raise ValueError("resolution must be an even integer >= 4")
    path = _cache_dir() / f"p2_reference_n{resolution}.npz"
    if use_cache and path.exists():
        with np.load(path) as z:
            fine = StructuredP2Field(resolution, z["fine"])
            coarse = StructuredP2Field(resolution // 2, z["coarse"])
            rich = float(z["richardson"])
    else:
        coarse = _solve_reference(resolution // 2)
        fine = _solve_reference(resolution)
        diff, ref = field_l2_difference(coarse, fine, build_structured_mesh(resolution // 2))
        rich = diff / ref
        if use_cache:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, fine=fine.coeffs, coarse=coarse.coeffs, richardson=rich)
            os.replace(tmp, path)
    if not rich < RICHARDSON_TOL:
        raise ReferenceCheckError(
            f"reference resolutions {resolution // 2} and {resolution} differ by {rich:.3e} in relative L2 "
            f"(limit {RICHARDSON_TOL})"
        )
    return ReferenceP2(fine, coarse, rich)


def series_reference_gap(ref: ReferenceP2, n_check: int = 64, n_modes: int = 400) -> float:
    """Relative L2 difference between the Levy series and the numerical reference."""
    series = LevyPlateField(problem_p2(n_modes=1).material, n_modes=n_modes)
    diff, norm = field_l2_difference(ref.field, series, build_structured_mesh(n_check))
    return diff / norm


# ---------------------------------------------------------------------------
# error norms


def _field_coeffs(solution: Solution, field: str) -> np.ndarray:
    if field == "linear":
        if not solution.method.is_reconstruction:
            return solution.reconstructed
        return solution.linear_coeffs()
    if field in ("auto", "reconstructed"):
        return solution.reconstructed
    raise ValueError("field must be 'auto', 'reconstructed' or 'linear'")


def l2_error(solution: Solution, exact, field: str = "auto", degree: int = 6) -> float:
    """||u - u_h|| with degree-6 quadrature.

    ``field='auto'`` uses the reconstructed quadratic for CP1 methods and the
    discrete quadratic otherwise; ``'linear'`` uses the piecewise linear
    interpolant of the vertex values for CP1 methods.
    """
    exact = getattr(exact, "exact", exact)
    mesh = solution.mesh
    c = _field_coeffs(solution, field)
    pts, wts = map_triangle_points(mesh.tri_coords, degree)
    uh = np.einsum("mqj,mj->mq", P2Basis(mesh.tri_coords).value_rows(pts), c)
    u = exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(wts * (u - uh) ** 2)))


@dataclass(frozen=True)
class EnergyComponents:
    volume: float
    moment: float
    shear: float
    jump: float

    @property
    def total(self) -> float:
        return math.sqrt(self.volume + self.moment + self.shear + self.jump)


def _derivs(exact, x, y, which):
    try:
        return exact.derivatives(x, y, which=which)
    except TypeError:
        return exact.derivatives(x, y)


def energy_components(
    solution: Solution, exact, material: MaterialParams, degree: int = 6, coeffs: np.ndarray | None = None
) -> EnergyComponents:
    """Squared contributions of the mesh-dependent energy norm of u - u_h.

    Edge terms are summed element by element over each boundary of K, so an
    interior edge contributes twice. The shear trace of a quadratic is zero,
    so that term only sees the exact field.
    """
    exact = getattr(exact, "exact", exact)
    mesh = solution.mesh
    c = solution.reconstructed if coeffs is None else coeffs
    basis = P2Basis(mesh.tri_coords)
    C = material.constitutive()
    lam, mu, D = material.lam, material.mu, material.D

    pts, wts = map_triangle_points(mesh.tri_coords, degree)
    H = _derivs(exact, pts[..., 0], pts[..., 1], ("hess",))["hess"]  # (3, M, Q)
    kh = np.einsum("maj,mj->ma", basis.hess_rows(), c)  # (M, 3)
    ke = H - kh.T[:, :, None]
    vol = float(np.einsum("mq,amq,ab,bmq->", wts, ke, C, ke))

    s, w = edge_rule(degree)
    tags = mesh.edge_tags
    ev = mesh.edge_vertices
    xa, xb = mesh.vertices[ev[:, 0]], mesh.vertices[ev[:, 1]]
    L = np.linalg.norm(xb - xa, axis=1)
    ep = xa[:, None] + s[None, :, None] * (xb - xa)[:, None]
    n = mesh.edge_normals
    t = np.stack([n[:, 1], -n[:, 0]], axis=1)
    d = _derivs(exact, ep[..., 0], ep[..., 1], ("grad", "hess", "third"))
    plus, minus = mesh.edge_owners[:, 0], mesh.edge_owners[:, 1]
    interior = minus >= 0
    mi = np.where(interior, minus, plus)
    mult = np.where(interior, 2.0, 1.0)
    h = mesh.h

    def mnn(hxx, hxy, hyy):
        n1, n2 = n[:, 0:1], n[:, 1:2]
        return lam * (hxx + hyy) + mu * (n1 * n1 * hxx + 2 * n1 * n2 * hxy + n2 * n2 * hyy)

    hp = kh[plus].T[:, :, None]
    hm = kh[mi].T[:, :, None]
    m_u = mnn(*d["hess"])
    m_avg_h = np.where(interior[:, None], 0.5 * (mnn(*hp) + mnn(*hm)), mnn(*hp))
    m_err = m_u - m_avg_h
    grad_p = np.einsum("eqdj,ej->deq", basis.grad_rows(ep, plus), c[plus])
    grad_m = np.einsum("eqdj,ej->deq", basis.grad_rows(ep, mi), c[mi])
    dn = lambda g: g[0] * n[:, 0:1] + g[1] * n[:, 1:2]  # noqa: E731
    jump_err = np.where(interior[:, None], -(dn(grad_p) - dn(grad_m)), dn(d["grad"]) - dn(grad_p))
    jbar = jump_err @ w

    uxxx, uxxy, uxyy, uyyy = d["third"]
    n1, n2, t1, t2 = n[:, 0:1], n[:, 1:2], t[:, 0:1], t[:, 1:2]
    dlap = np.stack([uxxx + uxyy, uxxy + uyyy])
    u_ntt = (
        uxxx * n1 * t1 * t1
        + uxxy * (n1 * 2 * t1 * t2 + n2 * t1 * t1)
        + uxyy * (n1 * t2 * t2 + n2 * 2 * t1 * t2)
        + uyyy * n2 * t2 * t2
    )
    T = D * dn(dlap) + mu * u_ntt

    not_fs = (tags != Tag.FREE) & (tags != Tag.SIMPLY_SUPPORTED)
    not_f = tags != Tag.FREE
    moment = float(np.sum((mult * L * not_fs) * ((m_err**2) @ w)) * h)
    shear = float(np.sum((mult * L * not_f) * ((T**2) @ w)) * h**3)
    jump = float(np.sum(mult * L * not_fs * jbar**2) / h)
    return EnergyComponents(vol, moment, shear, jump)


def energy_error(solution: Solution, exact, material: MaterialParams, degree: int = 6) -> float:
    return energy_components(solution, exact, material, degree).total


# ---------------------------------------------------------------------------
# convergence studies


class SlopeFitError(ValueError):
    pass


def fit_slope(h, err, last: int = 3) -> float:
    """Least-squares slope of log(err) against log(h) over the finest ``last`` points."""
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    if len(h) < last:
        raise SlopeFitError(f"need at least {last} levels to fit a slope, got {len(h)}")
    order = np.argsort(h)[:last]
    if np.any(err[order] <= 0) or np.any(h[order] <= 0):
        raise SlopeFitError("errors and mesh sizes must be positive")
    return float(np.polyfit(np.log(h[order]), np.log(err[order]), 1)[0])


@dataclass(frozen=True)
class ErrorRow:
    method: str
    problem: str
    mesh_type: str
    beta: float
    n: int
    h: float
    ndof: int
    err_l2: float
    err_energy: float
    err_l2_linear: float = float("nan")
    min_pivot: float = float("nan")
    symmetry: float = float("nan")


CSV_FIELDS = ("method", "problem", "mesh_type", "beta", "n", "h", "ndof", "err_l2", "err_energy")


@dataclass
class ErrorReport:
    rows: list[ErrorRow] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], float)

    def slope(self, column: str = "err_l2", last: int = 3) -> float:
        return fit_slope(self.column("h"), self.column(column), last)

    def slopes(self) -> dict[str, float] | None:
        try:
            return {"l2": self.slope("err_l2"), "energy": self.slope("err_energy")}
        except SlopeFitError:
            return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_FIELDS + ("err_l2_linear",))
        for r in self.rows:
            wr.writerow([r.method, r.problem, r.mesh_type, repr(float(r.beta)), r.n, repr(r.h), r.ndof,
                         repr(r.err_l2), repr(r.err_energy), repr(r.err_l2_linear)])
        sl = self.slopes()
        if sl is not None:
            buf.write(f"# slope_l2={sl['l2']:.6f}  slope_energy={sl['energy']:.6f}\n")
        for n, msg in self.failures:
            buf.write(f"# failed n={n}: {msg}\n")
        return buf.getvalue()


def run_level(problem: ModelProblem, method: MethodSpec, mesh_type: str, n: int, config: DgConfig,
              seed: int = 0, exact=None, mesh: Mesh | None = None) -> ErrorRow:
    """Solve one level and evaluate both error norms."""
    from .system import assemble, solve

    exact = exact if exact is not None else problem.exact
    mesh = mesh if mesh is not None else problem.mesh(mesh_type, n, seed)
    system = assemble(mesh, method, problem.material, config, load=problem.load)
    sol = solve(system)
    return ErrorRow(
        method.name, problem.name, mesh_type, config.beta, n, mesh.h, sol.ndof,
        l2_error(sol, exact), energy_error(sol, exact, problem.material),
        l2_error(sol, exact, field="linear"), sol.min_pivot, system.symmetry_error(),
    )


def convergence_study(problem: ModelProblem, method: MethodSpec, mesh_type: str = "unstructured",
                      levels=(8, 16, 32, 64), config: DgConfig | None = None, seed: int = 0,
                      exact=None) -> ErrorReport:
    """Error rows for each level, ordered from coarse to fine.

    A level that fails to solve is recorded in ``failures`` and the report is
    flagged partial; slopes are only fitted when three levels succeeded.
    """
    config = config or DgConfig()
    report = ErrorReport()
    for n in sorted(set(levels)):
        try:
            report.rows.append(run_level(problem, method, mesh_type, n, config, seed, exact))
        except (SolverError, RuntimeError, ValueError) as exc:
            report.failures.append((n, f"{type(exc).__name__}: {exc}"))
    return report
