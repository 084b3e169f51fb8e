"""Static checks on a parsed specification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .series import evaluate
from .spec import ClassRef, MarkerRef, NotWellFounded, Op, SpecAst

PROBE_Z = 1e-3
PROBE_MAX_ITER = 10_000


@dataclass
class WellFoundedReport:
    probe: float
    depth: int
    values: dict = field(repr=False, default_factory=dict)


@dataclass
class SccReport:
    components: list
    strongly_connected: bool

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def dependency_graph(ast: SpecAst) -> dict:
    """Edges ``A -> B`` whenever ``B`` occurs in an alternative of ``A``."""
    graph = {}
    for name, cdef in ast.classes.items():
        succ = []
        for alt in cdef.alternatives:
            for f in alt.factors:
                target = f.name if isinstance(f, ClassRef) else f.arg if isinstance(f, Op) else None
                if target is not None and target not in succ:
                    succ.append(target)
        graph[name] = succ
    return graph


def _has_finite_member(ast: SpecAst) -> dict:
    finite = {name: False for name in ast.classes}

    def factor_ok(f):
        if isinstance(f, ClassRef):
            return finite[f.name]
        if isinstance(f, MarkerRef):
            return True
        if f.kind in ("Seq", "MSet"):
            return True
        return finite[f.arg]

    changed = True
    while changed:
        changed = False
        for name, cdef in ast.classes.items():
            if not finite[name] and any(all(factor_ok(f) for f in alt.factors)
                                        for alt in cdef.alternatives):
                finite[name] = True
                changed = True
    return finite


def _uses_polya(ast: SpecAst) -> bool:
    return any(op.kind != "Seq" for _, _, alt in ast.alternatives() for op in alt.operators)


def well_founded(ast: SpecAst, probe: float = PROBE_Z) -> WellFoundedReport:
    """Accept well-founded systems, raise :class:`NotWellFounded` otherwise."""
    finite = _has_finite_member(ast)
    for name, ok in finite.items():
        if not ok:
            raise NotWellFounded(name, "no finite member")
    depth = 4 if _uses_polya(ast) else 1
    values, converged = evaluate(ast, probe, depth=depth, max_iter=PROBE_MAX_ITER)
    if not converged:
        bad = next((k[0] for k, v in values.items() if not math.isfinite(v)), ast.root)
        raise NotWellFounded(bad, "divergent at probe")
    for name in ast.classes:
        if values[name, 1] <= 0.0:
            raise NotWellFounded(name, "no finite member")
    return WellFoundedReport(probe, depth, values)


def strongly_connected_components(graph: dict) -> SccReport:
    """Tarjan's algorithm, iterative; components come out sinks first."""
    index, low, on_stack = {}, {}, set()
    stack, components = [], []
    counter = 0
    for start in graph:
        if start in index:
            continue
        work = [(start, iter(graph[start]))]
        index[start] = low[start] = counter
        counter += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(graph.get(succ, ()))))
                    advanced = True
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                components.append(comp[::-1])
    return SccReport(components, len(components) == 1)


def _is_atomic_class(ast: SpecAst, name: str) -> bool:
    return all(alt.is_atomic() for alt in ast.classes[name].alternatives)


def classify(ast: SpecAst) -> str:
    """``"rational"``, ``"algebraic"`` or ``"polya"``."""
    if _uses_polya(ast):
        return "polya"
    for _, _, alt in ast.alternatives():
        if len(alt.class_refs) > 1:
            return "algebraic"
        for op in alt.operators:
            if not _is_atomic_class(ast, op.arg):
                return "algebraic"
    return "rational"
