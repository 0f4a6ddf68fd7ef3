"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward, no_grad


class NonFiniteError(FloatingPointError):
    pass


def _as_named(params) -> dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    return {f"param{i}": p for i, p in enumerate(params)}


def analytic_grads(f: Callable[[], Tensor], params) -> dict[str, np.ndarray]:
    named = _as_named(params)
    for p in named.values():
        p.zero_grad()
    backward(f())
    return {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in named.items()}


def central_difference(f: Callable[[], Tensor], param: Tensor, flat_index: int, h: float) -> float:
    flat = param.data.reshape(-1)
    orig = flat[flat_index]
    with no_grad():
        flat[flat_index] = orig + h
        up = f().item()
        flat[flat_index] = orig - h
        down = f().item()
    flat[flat_index] = orig
    return (up - down) / (2.0 * h)


def finite_difference_report(
    f: Callable[[], Tensor],
    params,
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1.0,
) -> dict[str, float]:
    """Per-parameter max of ``|analytic - fd| / max(floor, |fd|)``.

    With ``max_entries`` set, each parameter is checked on a seeded random
    subset of at most that many entries; otherwise every entry is checked.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    named = _as_named(params)
    grads = analytic_grads(f, named)
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in named.items():
        n = p.size
        if max_entries is not None and n > max_entries:
            indices = rng.choice(n, size=max_entries, replace=False)
        else:
            indices = range(n)
        g = grads[name].reshape(-1)
        worst = 0.0
        for i in indices:
            fd = central_difference(f, p, int(i), h)
            if not np.isfinite(fd) or not np.isfinite(g[i]):
                raise NonFiniteError(f"non-finite gradient for {name}[{int(i)}]")
            worst = max(worst, abs(g[i] - fd) / max(floor, abs(fd)))
        report[name] = worst
    return report


def finite_difference_check(f: Callable[[], Tensor], params, h: float = 1e-5, **kwargs) -> float:
    """Max relative error between analytic and central-difference gradients."""
    report = finite_difference_report(f, params, h=h, **kwargs)
    return max(report.values(), default=0.0)
