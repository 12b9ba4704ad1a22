"""AdamW with decoupled weight decay, a one-cycle schedule, and param groups.

Per step: m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2, both bias-corrected,
then theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta). The
decay term rides the same lr, so a parameter with an all-zero gradient still
shrinks by lr * wd * theta. Parameters whose grad is None are skipped; a
non-finite gradient aborts the step naming the parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import OptimizerAbortError, ScheduleExhaustedError


@dataclass
class ParamGroup:
    label: str
    params: dict[str, Tensor]
    max_lr: float
    weight_decay: float = 0.0
    lr: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.lr is None:
            self.lr = self.max_lr


def no_decay_param(name: str) -> bool:
    """Norm affines, biases, and the logit scale are excluded from decay."""
    return (name.endswith(".bias") or name.endswith("log_scale")
            or ".gamma." in name or ".beta." in name)


def build_param_groups(params: dict[str, Tensor], backbone_lr: float,
                       head_lr: float, weight_decay: float) -> list[ParamGroup]:
    """Split by backbone prefix and decay eligibility; empty groups dropped."""
    buckets: dict[tuple[bool, bool], dict[str, Tensor]] = {}
    for name, tensor in params.items():
        key = (name.startswith("backbone."), no_decay_param(name))
        buckets.setdefault(key, {})[name] = tensor
    groups = []
    for (is_backbone, skip_decay), bucket in sorted(
            buckets.items(), key=lambda kv: kv[0], reverse=True):
        label = ("backbone" if is_backbone else "head") + (
            "_no_decay" if skip_decay else "_decay")
        groups.append(ParamGroup(
            label=label,
            params=bucket,
            max_lr=backbone_lr if is_backbone else head_lr,
            weight_decay=0.0 if skip_decay else weight_decay,
        ))
    return groups


class AdamW:
    def __init__(self, groups: list[ParamGroup],
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.groups = groups
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        for group in groups:
            for name, tensor in group.params.items():
                if name in self._m:
                    raise ValueError(f"parameter {name} appears in two groups")
                self._m[name] = np.zeros_like(tensor.data, dtype=np.float64)
                self._v[name] = np.zeros_like(tensor.data, dtype=np.float64)

    def zero_grad(self) -> None:
        for group in self.groups:
            for tensor in group.params.values():
                tensor.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for group in self.groups:
            for name, tensor in group.params.items():
                if tensor.grad is None:
                    continue
                g = tensor.grad.astype(np.float64)
                if not np.isfinite(g).all():
                    raise OptimizerAbortError(
                        f"non-finite gradient in parameter {name}")
                m = self._m[name]
                v = self._v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                m_hat = m / bc1
                v_hat = v / bc2
                update = m_hat / (np.sqrt(v_hat) + self.eps)
                update += group.weight_decay * tensor.data.astype(np.float64)
                tensor.data = (tensor.data.astype(np.float64)
                               - group.lr * update).astype(tensor.data.dtype)

    def state_dict(self) -> dict[str, np.ndarray]:
        state: dict[str, np.ndarray] = {
            "step_count": np.asarray(self.step_count, dtype=np.int64)}
        for name, m in self._m.items():
            state[f"m.{name}"] = m.copy()
            state[f"v.{name}"] = self._v[name].copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = {f"m.{n}" for n in self._m} | {f"v.{n}" for n in self._v}
        got = set(state) - {"step_count"}
        if expected != got:
            raise ValueError(
                f"optimizer state mismatch: missing {sorted(expected - got)}, "
                f"extra {sorted(got - expected)}")
        self.step_count = int(state["step_count"])
        for name in self._m:
            self._m[name] = np.asarray(state[f"m.{name}"], dtype=np.float64).copy()
            self._v[name] = np.asarray(state[f"v.{name}"], dtype=np.float64).copy()


def onecycle_lr(step: int, total_steps: int, max_lr: float,
                pct_start: float = 0.1, div_factor: float = 25.0,
                final_div_factor: float = 1e4) -> float:
    """Cosine warmup from max_lr/div_factor to max_lr over pct_start of the
    run, then cosine anneal to max_lr/final_div_factor at total_steps."""
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    if step < 0 or step > total_steps:
        raise ScheduleExhaustedError(
            f"step {step} outside schedule of {total_steps} steps")
    initial = max_lr / div_factor
    final = max_lr / final_div_factor
    warm = pct_start * total_steps
    if warm > 0 and step <= warm:
        frac = step / warm
        return initial + (max_lr - initial) * 0.5 * (1.0 - np.cos(np.pi * frac))
    frac = (step - warm) / (total_steps - warm)
    return final + (max_lr - final) * 0.5 * (1.0 + np.cos(np.pi * frac))
