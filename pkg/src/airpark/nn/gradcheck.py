"""Central finite-difference verification of reverse-mode gradients.

Relu and max-pool are not differentiable everywhere. A coordinate whose
+-step changes any relu mask or pooling argmax straddles a kink, where
central differences are meaningless; such coordinates are skipped and
replaced by another draw from the same parameter, and the skip count is
reported.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .functional import softmax_cross_entropy
from .tensor import Parameter, Tensor, trace_patterns

STEP = 1e-5


@dataclass
class GradCheckReport:
    max_error: float = 0.0
    checked: int = 0
    skipped: int = 0
    per_param: dict[str, tuple[float, int]] = field(default_factory=dict)  # name -> (max error, count)

    def passed(self, tol: float) -> bool:
        return self.checked > 0 and self.max_error < tol

    def lines(self) -> list[str]:
        out = [f"{name:<24s} max_rel_err={err:.3e} coords={n}" for name, (err, n) in self.per_param.items()]
        out.append(f"{'overall':<24s} max_rel_err={self.max_error:.3e} coords={self.checked} "
                   f"kink_skips={self.skipped}")
        return out


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def _pick(rng, params, n_coords):
    sizes = np.array([p.size for p in params])
    picks = []
    for i, p in enumerate(params):
        for flat in rng.choice(p.size, size=min(2, p.size), replace=False):
            picks.append((i, int(flat)))
    rest = n_coords - len(picks)
    if rest > 0:
        total = int(sizes.sum())
        chosen = set(picks)
        flat_all = rng.choice(total, size=min(total, rest + len(picks)), replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for g in flat_all:
            i = int(np.searchsorted(offsets, g, side="right") - 1)
            key = (i, int(g - offsets[i]))
            if key not in chosen:
                chosen.add(key)
                picks.append(key)
            if len(picks) >= n_coords:
                break
    return picks


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Parameter], names: Sequence[str] | None = None,
                    n_coords: int = 200, seed: int = 0, step: float = STEP,
                    max_redraws: int = 20) -> GradCheckReport:
    """Compare ``loss_fn``'s reverse-mode gradient with central differences.

    When the parameters hold fewer than ``n_coords`` entries every entry is
    checked.
    """
    params = list(params)
    names = list(names) if names is not None else [p.name or f"param{i}" for i, p in enumerate(params)]
    for p in params:
        p.zero_grad()
    with trace_patterns() as tr:
        loss = loss_fn()
    base = tr.patterns
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    total = sum(p.size for p in params)
    rng = np.random.default_rng(seed)
    if total <= n_coords:
        picks = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    else:
        picks = _pick(rng, params, n_coords)

    report = GradCheckReport()
    used = set(picks)
    for i, flat in picks:
        p = params[i]
        for _ in range(max_redraws + 1):
            numeric, smooth = _central(loss_fn, p, flat, step, base)
            if smooth:
                break
            report.skipped += 1
            free = [j for j in rng.permutation(p.size)[:64] if (i, int(j)) not in used]
            if not free:
                numeric = None
                break
            flat = int(free[0])
            used.add((i, flat))
        if numeric is None or not smooth:
            continue
        err = relative_error(float(analytic[i].flat[flat]), numeric)
        prev, n = report.per_param.get(names[i], (0.0, 0))
        report.per_param[names[i]] = (max(prev, err), n + 1)
        report.max_error = max(report.max_error, err)
        report.checked += 1
    return report


def _central(loss_fn, p: Parameter, flat: int, step: float, base) -> tuple[float, bool]:
    view = p.data.reshape(-1)
    orig = view[flat]
    try:
        view[flat] = orig + step
        with trace_patterns() as tp:
            up = float(loss_fn().data)
        view[flat] = orig - step
        with trace_patterns() as tm:
            down = float(loss_fn().data)
    finally:
        view[flat] = orig
    return (up - down) / (2.0 * step), tp.patterns == base and tm.patterns == base


def finite_diff_check(model, x: np.ndarray, y: np.ndarray, n_coords: int = 200, seed: int = 0,
                      step: float = STEP) -> GradCheckReport:
    """Check a model's cross-entropy gradient on one batch (inference mode)."""
    named = list(model.named_parameters())

    def loss_fn():
        return softmax_cross_entropy(model.forward(x, training=False), y)

    return check_gradients(loss_fn, [p for _, p in named], [n for n, _ in named], n_coords, seed, step)
