"""Finite-difference validation of backward rules"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence

import numpy as np

from fcmf.exceptions import NonFiniteError
from fcmf.numerics.tensor import ComputeGraph, Tensor, no_grad
from fcmf.schemas.report import GradCheckFailure, GradCheckReport

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor] | Mapping[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    n_samples: int = 100,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences

    Args:
        f: builds a scalar loss from the current parameter values (dropout must be off)
        params: tensors to check, optionally keyed by name
        eps: finite-difference step
        tol: pass threshold on |analytic - numeric| / max(1, |numeric|)
        n_samples: coordinates sampled across all params (all when fewer exist)
        rng: sampling generator (seed 0 when omitted)

    Returns:
        GradCheckReport with per-coordinate failures

    Raises:
        NonFiniteError: the loss is not finite; the message names the first offending kernel
    """
    named = dict(params) if isinstance(params, Mapping) else {p.name or f"param_{i}": p for i, p in enumerate(params)}
    rng = rng or np.random.default_rng(0)

    for p in named.values():
        p.zero_grad()
    loss = f()
    graph = ComputeGraph.from_output(loss)
    if not np.all(np.isfinite(loss.data)):
        graph.check_finite()
        raise NonFiniteError("loss is not finite")
    graph.backward()

    coords: list[tuple[str, int]] = [(name, i) for name, p in named.items() for i in range(p.size)]
    if len(coords) > n_samples:
        chosen = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[i] for i in sorted(chosen)]

    failures: list[GradCheckFailure] = []
    max_rel = 0.0
    with no_grad():
        for name, flat in coords:
            p = named[name]
            view = p.data.reshape(-1)
            original = view[flat]
            view[flat] = original + eps
            plus = float(f().data)
            view[flat] = original - eps
            minus = float(f().data)
            view[flat] = original
            numeric = (plus - minus) / (2.0 * eps)
            analytic = float(p.grad.reshape(-1)[flat]) if p.grad is not None else 0.0
            rel = abs(analytic - numeric) / max(1.0, abs(numeric))
            max_rel = max(max_rel, rel)
            if not rel <= tol:
                failures.append(
                    GradCheckFailure(param=name, index=flat, analytic=analytic, numeric=numeric, rel_error=rel)
                )

    report = GradCheckReport(
        passed=not failures,
        checked=len(coords),
        max_rel_error=max_rel,
        tol=tol,
        eps=eps,
        failures=failures,
    )
    logger.info(f"Gradient check: {report.checked} coordinates, max rel error {max_rel:.3e}, passed={report.passed}")
    return report
