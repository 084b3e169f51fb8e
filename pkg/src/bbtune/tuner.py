"""Weight tuning by a log-barrier interior-point method.

Ordinary tuning minimises ``c_root - nu . theta`` so that the expected atom
and marker counts equal ``nu``; singular tuning maximises ``xi + alpha . eta``
which moves the size weight to the dominant singularity while the markers
settle at the requested frequencies. Both share one primal barrier solver.
After the barrier loop the class variables are replaced by the least fixed
point of the system at the tuned weights, which makes every constraint tight,
and ordinary results are refined by Newton steps on ``E(theta) = nu``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .compile import ConvexProgram, lower
from .grammar.analysis import dependency_graph, strongly_connected_components
from .grammar.spec import SIZE, SpecAst
from .numeric import constraint_rhs, logsumexp_kernel

OPTIMAL = "Optimal"
MAX_ITERS = "MaxIters"
INFEASIBLE = "Infeasible"

DENSE_LIMIT = 500
MAX_DEPTH = 64
TAIL_TOLERANCE = 1e-12
_LOG_HUGE = 700.0
_START = -8.0
_MAX_CENTERING = 100

__all__ = [
    "SolverConfig", "TuningResult", "Moments", "SingularJacobian", "TuningError",
    "NormBoundActive", "solve_ordinary", "solve_singular", "expectations",
    "least_fixed_point", "logsumexp_kernel", "tune",
]


class SingularJacobian(ArithmeticError):
    """``I - dR/dc`` cannot be inverted at the requested point."""


class NormBoundActive(UserWarning):
    """A class variable sits on the box bound ``c <= M``."""


class TuningError(RuntimeError):
    def __init__(self, result: "TuningResult"):
        self.result = result
        super().__init__(f"tuning failed with status {result.status}")


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9
    max_newton_iters: int = 5000
    barrier_mu: float = 10.0
    line_search: tuple = (0.5, 0.01)
    feasibility_margin: float = 1e-3
    start_margin: float = 1.0
    bound: Optional[float] = None
    polish: bool = True

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.barrier_mu <= 1:
            raise ValueError("barrier_mu must exceed 1")
        beta, alpha = self.line_search
        if not (0 < beta < 1 and 0 < alpha < 0.5):
            raise ValueError("line search needs backtrack in (0,1) and decrease in (0,1/2)")


@dataclass
class TuningResult:
    status: str
    gap: float
    iterations: int
    x: np.ndarray
    program: ConvexProgram = field(repr=False)
    mode: str = "ordinary"
    targets: dict = field(default_factory=dict)
    residual: float = math.nan
    history: list = field(default_factory=list, repr=False)
    warnings: list = field(default_factory=list)

    @property
    def z(self) -> dict:
        return {name: math.exp(self.x[i]) for name, i in self.program.vars.xi.items()}

    @property
    def u(self) -> dict:
        return {name: math.exp(self.x[i]) for name, i in self.program.vars.eta.items()}

    @property
    def class_values(self) -> dict:
        return {key: math.exp(self.x[i]) for key, i in self.program.vars.c.items()}

    def value(self, name: str, depth: int = 1) -> float:
        return math.exp(self.x[self.program.vars.c[name, depth]])

    def to_json(self) -> dict:
        classes: dict = {}
        for (name, j), v in self.class_values.items():
            classes.setdefault(name, {})[str(j)] = _digits(v)
        return {
            "status": self.status,
            "gap": _digits(self.gap),
            "iterations": self.iterations,
            "mode": self.mode,
            "J": self.program.truncation,
            "z": {k: _digits(v) for k, v in self.z.items()},
            "u": {k: _digits(v) for k, v in self.u.items()},
            "classes": classes,
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _digits(v: float) -> float:
    # repr of the rounded value keeps all 17 significant digits
    return float(f"{v:.17g}")


@dataclass
class Moments:
    names: list
    mean: np.ndarray
    cov: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.mean))


# -- evaluation helpers -------------------------------------------------------


def _rhs(prog: ConvexProgram, x: np.ndarray):
    mat = prog.matrices()
    s = mat.B @ x + mat.term_const
    with np.errstate(over="ignore", invalid="ignore"):
        R, w = constraint_rhs(s, mat.starts, mat.is_lse)
    R = R + mat.A0 @ x + mat.a0
    return R, w


def _dense(prog: ConvexProgram):
    """Dense copies of the program matrices for small programs, else ``None``."""
    mat = prog.matrices()
    if not hasattr(mat, "_dense"):
        small = prog.n <= DENSE_LIMIT and mat.B.shape[0] <= 40 * DENSE_LIMIT
        mat._dense = (mat.B.toarray(), mat.L.toarray(), mat.A0.toarray()) if small else None
    return mat._dense


def _jacobian(prog: ConvexProgram, w: np.ndarray):
    """``dR/dx`` as a (constraints x variables) matrix, dense for small programs."""
    dense = _dense(prog)
    if dense is not None:
        B, L, A0 = dense
        return (L * w) @ B + A0
    mat = prog.matrices()
    return (mat.L @ sp.diags(w) @ mat.B + mat.A0).tocsr()


def _to_dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)


def _solve(K, rhs, transpose: bool = False):
    if K.shape[0] <= DENSE_LIMIT:
        dense = _to_dense(K)
        if transpose:
            dense = dense.T
        out = sla.solve(dense, rhs, check_finite=False)
    else:
        lu = spla.splu(sp.csc_matrix(K))
        out = lu.solve(np.asarray(rhs, dtype=float), trans="T" if transpose else "N")
    if not np.all(np.isfinite(out)):
        raise np.linalg.LinAlgError("non-finite solution")
    return out


def least_fixed_point(prog: ConvexProgram, x: np.ndarray, max_kleene: int = 30,
                      max_newton: int = 200) -> Optional[np.ndarray]:
    """Least solution ``c`` of ``c = R(c, theta)`` at the weights stored in ``x``.

    Kleene iteration from far below yields a subsolution; Newton steps from a
    subsolution of a convex monotone system stay below the least fixed point
    and converge to it. Returns ``None`` when no finite fixed point exists.
    """
    lhs = prog.matrices().lhs
    x = np.array(x, dtype=float)
    x[lhs] = -_LOG_HUGE
    for _ in range(max_kleene):
        R, _ = _rhs(prog, x)
        if not np.all(np.isfinite(R)) or R.max() > _LOG_HUGE:
            return None
        change = np.max(np.abs(R - x[lhs]))
        x[lhs] = R
        if change < 1e-3:
            break
    eye = np.identity(len(lhs)) if _dense(prog) is not None else sp.identity(len(lhs), format="csr")
    for _ in range(max_newton):
        R, w = _rhs(prog, x)
        if not np.all(np.isfinite(R)):
            return None
        res = R - x[lhs]
        if np.max(np.abs(res)) <= 1e-14 * max(1.0, np.max(np.abs(x[lhs]))):
            return x[lhs].copy()
        K = eye - _jacobian(prog, w)[:, lhs]
        try:
            step = _solve(K, res)
        except (np.linalg.LinAlgError, RuntimeError, ValueError):
            return None
        if step.min() < -1e-9 * (1.0 + np.abs(x[lhs]).max()):
            return None  # monotonicity broken: outside the convergence domain
        x[lhs] = x[lhs] + np.maximum(step, 0.0)
        if x[lhs].max() > _LOG_HUGE:
            return None
        if np.max(step) <= 1e-15 * max(1.0, np.max(np.abs(x[lhs]))):
            return x[lhs].copy()
    R, _ = _rhs(prog, x)
    if np.max(np.abs(R - x[lhs])) <= 1e-10 * max(1.0, np.max(np.abs(x[lhs]))):
        return x[lhs].copy()
    return None


def expectations(prog: ConvexProgram, x: np.ndarray) -> Moments:
    """Mean and covariance of the atom/marker counts at the point ``x``.

    ``E = d c_root / d theta`` and ``Cov = d^2 c_root / d theta^2``, obtained
    by implicit differentiation of the tight system ``c = R(c, theta)``.
    """
    mat = prog.matrices()
    x = np.asarray(x, dtype=float)
    theta = np.asarray(prog.vars.theta, dtype=np.int64)
    names = list(prog.vars.xi) + list(prog.vars.eta)
    R, w = _rhs(prog, x)
    JR = _jacobian(prog, w)
    lhs = mat.lhs
    eye = np.identity(len(lhs)) if _dense(prog) is not None else sp.identity(len(lhs), format="csr")
    K = eye - JR[:, lhs]
    Rt = _to_dense(JR[:, theta])
    root = int(np.searchsorted(lhs, prog.root))
    e_root = np.zeros(len(lhs))
    e_root[root] = 1.0
    try:
        Dc = _solve(K, Rt)
        y = _solve(K, e_root, transpose=True)
    except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        raise SingularJacobian(str(exc)) from exc
    D = np.zeros((prog.n, len(theta)))
    D[lhs] = Dc
    D[theta, np.arange(len(theta))] = 1.0
    BD = mat.B @ D
    yw = y[mat.term_con] * w
    cov = BD.T @ (yw[:, None] * BD)
    lse = mat.is_lse
    VD = np.asarray(JR @ D)[lse]
    cov -= VD.T @ (y[lse][:, None] * VD)
    mean = Dc[root]
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise SingularJacobian("non-finite derivatives")
    return Moments(names, mean, 0.5 * (cov + cov.T))


# -- barrier method -------------------------------------------------------------


class _Barrier:
    def __init__(self, prog: ConvexProgram, q: np.ndarray, free: np.ndarray, bound: float,
                 bound_classes: bool):
        self.prog = prog
        self.mat = prog.matrices()
        self.q = q
        self.free = free
        theta = set(prog.vars.theta)
        self.two = np.array([i for i in free if i in theta], dtype=np.int64)
        self.upper = np.array([i for i in free if bound_classes and i not in theta],
                              dtype=np.int64)
        self.M = bound
        m = len(self.mat.lhs)
        self.E_lhs = sp.csr_matrix((np.ones(m), (np.arange(m), self.mat.lhs)), shape=(m, prog.n))
        self.m_total = m + 2 * len(self.two) + len(self.upper)

    def state(self, x):
        R, w = _rhs(self.prog, x)
        g = R - x[self.mat.lhs]
        if not np.all(np.isfinite(g)) or np.any(g >= 0):
            return None
        M = self.M
        if np.any(np.abs(x[self.two]) >= M) or np.any(x[self.upper] >= M):
            return None
        return g, w

    def value(self, x, g) -> float:
        M = self.M
        xt, xu = x[self.two], x[self.upper]
        return -(np.log(-g).sum() + np.log(M - xt).sum() + np.log(M + xt).sum()
                 + np.log(M - xu).sum())

    def derivatives(self, x, g, w):
        mat = self.mat
        inv = 1.0 / (-g)
        JR = _jacobian(self.prog, w)
        dense = _dense(self.prog)
        if dense is not None:
            B = dense[0]
            G = JR.copy()
            G[np.arange(len(g)), mat.lhs] -= 1.0
            V = JR * np.where(mat.is_lse, np.sqrt(inv), 0.0)[:, None]
            Gs = G * inv[:, None]
            Bs = B * np.sqrt(w * inv[mat.term_con])[:, None]
            H = Gs.T @ Gs + Bs.T @ Bs - V.T @ V
            grad = G.T @ inv
        else:
            G = JR - self.E_lhs
            grad = G.T @ inv
            V = sp.diags(np.where(mat.is_lse, 1.0, 0.0)) @ JR
            H = (G.T @ sp.diags(inv * inv) @ G
                 + mat.B.T @ sp.diags(w * inv[mat.term_con]) @ mat.B
                 - V.T @ sp.diags(inv) @ V)
        M = self.M
        xt, xu = x[self.two], x[self.upper]
        diag = np.zeros(len(x))
        grad = np.asarray(grad).ravel()
        grad[self.two] += 1.0 / (M - xt) - 1.0 / (M + xt)
        diag[self.two] += 1.0 / (M - xt) ** 2 + 1.0 / (M + xt) ** 2
        grad[self.upper] += 1.0 / (M - xu)
        diag[self.upper] += 1.0 / (M - xu) ** 2
        f = self.free
        if dense is not None:
            H[np.diag_indices_from(H)] += diag
            return grad[f], H[np.ix_(f, f)]
        H = (H + sp.diags(diag)).tocsr()
        return grad[f], H[f][:, f]


def _newton_direction(H, grad):
    n = H.shape[0]
    if n <= DENSE_LIMIT:
        Hd = _to_dense(H)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                return sla.solve(Hd, -grad, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return np.linalg.lstsq(Hd, -grad, rcond=None)[0]
    try:
        d = spla.spsolve(sp.csc_matrix(H), -grad)
        if np.all(np.isfinite(d)):
            return d
    except RuntimeError:
        pass
    reg = 1e-12 * max(1.0, abs(H.diagonal()).max())
    return spla.spsolve(sp.csc_matrix(H + reg * sp.identity(n)), -grad)


def _initial_t(bar: _Barrier, x, st) -> float:
    """Barrier weight for which ``x`` is closest to the central path."""
    grad_b, H = bar.derivatives(x, *st)
    qf = bar.q[bar.free]
    hq = _newton_direction(H, -qf)
    denom = qf @ hq
    if not denom > 0:
        return 1.0
    t = -(grad_b @ hq) / denom
    return float(np.clip(t, 1e-8, 1.0)) if math.isfinite(t) else 1.0


def _barrier_method(bar: _Barrier, x, config: SolverConfig):
    beta, alpha = config.line_search
    st = bar.state(x)
    if st is None:
        raise ValueError("initial point is not strictly feasible")
    free = bar.free
    qf = bar.q[free]
    t = _initial_t(bar, x, st)
    iters = 0
    history = []
    status = OPTIMAL
    while True:
        for _ in range(_MAX_CENTERING):
            g, w = st
            grad_b, H = bar.derivatives(x, g, w)
            grad = t * qf + grad_b
            dx = _newton_direction(H, grad)
            lam2 = -grad @ dx
            iters += 1
            if not math.isfinite(lam2) or lam2 / 2.0 <= 1e-9:
                break
            full = np.zeros_like(x)
            full[free] = dx
            base = bar.value(x, g)
            slope = grad @ dx
            step = 1.0
            accepted = None
            while step > 1e-14:
                xn = x + step * full
                stn = bar.state(xn)
                if stn is not None:
                    diff = t * step * (qf @ dx) + bar.value(xn, stn[0]) - base
                    if diff <= alpha * step * slope:
                        accepted = (xn, stn)
                        break
                step *= beta
            if accepted is None:
                break
            x, st = accepted
            if step < 1e-8 or (step < 1.0 and lam2 < 1e-4):
                break  # rounding noise dominates the Newton model
            if iters >= config.max_newton_iters:
                status = MAX_ITERS
                break
        history.append(float(bar.q @ x))
        gap = bar.m_total / t
        if status != OPTIMAL or gap < config.tolerance:
            return x, gap, iters, history, status
        t *= config.barrier_mu


def _initial_point(prog: ConvexProgram, free_theta, config: SolverConfig, bar: _Barrier):
    lhs = prog.matrices().lhs
    for start in (_START, 2 * _START, 3 * _START, 4 * _START):
        x = np.zeros(prog.n)
        x[free_theta] = start
        c = least_fixed_point(prog, x)
        if c is None:
            continue
        x[lhs] = c
        for _ in range(1000):
            R, _ = _rhs(prog, x)
            if not np.all(np.isfinite(R)):
                break
            x[lhs] = R + config.start_margin
            if bar.state(x) is not None:
                return x
    raise ValueError("no strictly feasible starting point found")


def _run(prog: ConvexProgram, q: np.ndarray, free_theta: list, config: SolverConfig,
         mode: str, targets: dict) -> TuningResult:
    bound = config.bound if config.bound is not None else prog.bound
    lhs = prog.matrices().lhs
    free = np.array(sorted(list(free_theta) + list(lhs)), dtype=np.int64)
    bar = _Barrier(prog, q, free, bound, bound_classes=mode == "singular")
    x0 = _initial_point(prog, free_theta, config, bar)
    x, gap, iters, history, status = _barrier_method(bar, x0, config)
    notes = []
    near = 1e-3 * bound
    theta_hit = [prog.vars.names[i] for i in free_theta if bound - abs(x[i]) < near]
    c_hit = [prog.vars.names[i] for i in bar.upper if bound - x[i] < near]
    if theta_hit:
        status = INFEASIBLE
        notes.append(f"weights pinned at the box bound: {theta_hit}")
    if c_hit:
        notes.append(f"NormBoundActive: {c_hit[:5]}")
        warnings.warn(f"norm bound active on {c_hit[:5]}", NormBoundActive, stacklevel=3)
    result = TuningResult(status, gap, iters, x, prog, mode, dict(targets), history=history,
                          warnings=notes)
    if config.polish and status == OPTIMAL:
        _polish(result, free_theta)
    R, _ = _rhs(prog, result.x)
    result.residual = float(np.max(np.abs(R - result.x[lhs])))
    return result


def _polish(result: TuningResult, free_theta: list) -> None:
    prog = result.program
    lhs = prog.matrices().lhs
    x = result.x.copy()
    c = least_fixed_point(prog, x)
    if c is None:
        return
    x[lhs] = c
    result.x = x
    if result.mode != "ordinary" or not free_theta:
        return
    theta = list(prog.vars.theta)
    pos = [theta.index(i) for i in free_theta]
    names = [prog.vars.names[i] for i in free_theta]
    nu = np.array([result.targets[n] for n in names])
    scale = max(1.0, np.abs(nu).max())

    def residual(point):
        try:
            mom = expectations(prog, point)
        except SingularJacobian:
            return None, None
        return nu - mom.mean[pos], mom.cov[np.ix_(pos, pos)]

    r, cov = residual(x)
    if r is None:
        return
    for _ in range(30):
        if np.abs(r).max() <= 1e-13 * scale:
            break
        try:
            d = sla.solve(cov, r, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            break
        step, improved = 1.0, False
        while step > 1e-6:
            xn = x.copy()
            xn[free_theta] += step * d
            cn = least_fixed_point(prog, xn)
            if cn is not None:
                xn[lhs] = cn
                rn, covn = residual(xn)
                if rn is not None and np.abs(rn).max() < np.abs(r).max():
                    x, r, cov, improved = xn, rn, covn, True
                    break
            step /= 2
        if not improved:
            break
    result.x = x


# -- public entry points -------------------------------------------------------


def _weight_index(prog: ConvexProgram, name: str) -> int:
    return prog._weight_index(name)


def solve_ordinary(prog: ConvexProgram, nu: dict, config: Optional[SolverConfig] = None) -> TuningResult:
    """Tune so that expected counts equal ``nu`` (keyed by ``"size"`` or marker name).

    Markers missing from ``nu`` keep weight 1.
    """
    config = config or SolverConfig()
    if any(v < 0 for v in nu.values()):
        raise ValueError("target counts must be non-negative")
    free_theta = [_weight_index(prog, k) for k in nu]
    q = prog.ordinary_objective(nu)
    return _run(prog, q, free_theta, config, "ordinary", nu)


def solve_singular(prog: ConvexProgram, alpha: Optional[dict] = None,
                   config: Optional[SolverConfig] = None) -> TuningResult:
    """Tune the size weight to the singularity with marker frequencies ``alpha``."""
    config = config or SolverConfig()
    alpha = dict(alpha if alpha is not None else prog.targets)
    if any(not 0 <= v < 1 for v in alpha.values()):
        raise ValueError("frequencies must lie in [0, 1)")
    if sum(alpha.values()) >= 1:
        raise ValueError("frequencies must sum to less than 1")
    free_theta = [prog.size_var] + [_weight_index(prog, k) for k in alpha]
    q = prog.singular_objective(alpha)
    return _run(prog, q, free_theta, config, "singular", alpha)


def _uses_polya(ast: SpecAst) -> bool:
    return any(op.kind in ("MSet", "Cycle") for _, _, alt in ast.alternatives() for op in alt.operators)


def required_depth(prog: ConvexProgram, x: np.ndarray, tol: float = TAIL_TOLERANCE) -> int:
    """Smallest depth whose diagonal values drop below ``tol``, extrapolated geometrically."""
    J = prog.truncation
    need = 1
    for (kind, arg, j) in prog.ops:
        if kind not in ("MSet", "Cycle") or j != 1:
            continue
        last = math.exp(x[prog.vars.c[arg, J]])
        if last < tol:
            need = max(need, next(k for k in range(1, J + 1)
                                  if math.exp(x[prog.vars.c[arg, k]]) < tol))
            continue
        if J < 2:
            return MAX_DEPTH
        ratio = last / math.exp(x[prog.vars.c[arg, J - 1]])
        if ratio >= 1.0:
            return MAX_DEPTH
        need = max(need, J + math.ceil(math.log(tol / last) / math.log(ratio)))
    return min(need, MAX_DEPTH)


def tune(ast: SpecAst, size: Optional[float] = None, freqs: Optional[dict] = None,
         singular: bool = False, J: Optional[int] = None,
         config: Optional[SolverConfig] = None) -> TuningResult:
    """Lower, pick a truncation depth and tune in one call.

    ``freqs`` overrides the frequency annotations of the specification.
    Ordinary tuning turns a frequency ``f`` into the target count ``f * size``.
    """
    config = config or SolverConfig()
    targets = ast.targets()
    targets.update(freqs or {})
    unknown = set(targets) - set(ast.markers)
    if unknown:
        raise KeyError(f"unknown markers {sorted(unknown)}")
    if not singular and size is None:
        raise ValueError("ordinary tuning needs a target size")
    scc = strongly_connected_components(dependency_graph(ast))
    if not scc.strongly_connected:
        warnings.warn("specification is not strongly connected; checking tightness a posteriori",
                      stacklevel=2)
    auto = J is None and _uses_polya(ast)
    depth = J if J is not None else (8 if auto else 1)
    bound = config.bound if config.bound is not None else None
    while True:
        prog = lower(ast, depth) if bound is None else lower(ast, depth, bound=bound)
        if singular:
            result = solve_singular(prog, targets, config)
        else:
            nu = {SIZE: float(size)}
            nu.update({m: f * float(size) for m, f in targets.items()})
            result = solve_ordinary(prog, nu, config)
        if not auto or result.status != OPTIMAL or depth >= MAX_DEPTH:
            return result
        need = required_depth(prog, result.x)
        if need <= depth:
            return result
        depth = min(MAX_DEPTH, max(need, 2 * depth))
