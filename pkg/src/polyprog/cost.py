"""Cost estimates and the global multiply-add cap."""

from __future__ import annotations

import os

DEFAULT_COST_CAP = 1e9
ENV_VAR = "ULAB_COST_CAP"

_override: float | None = None


class CostCapExceeded(RuntimeError):
    pass


def cost_cap() -> float:
    if _override is not None:
        return _override
    raw = os.environ.get(ENV_VAR)
    if raw:
        try:
            return float(raw)
        except ValueError as exc:
            raise ValueError(f"{ENV_VAR}={raw!r} is not a number") from exc
    return DEFAULT_COST_CAP


def set_cost_cap(value: float | None) -> None:
    """Process-wide override (used by the CLI flag); None restores env/default."""
    global _override
    _override = None if value is None else float(value)


def check_cost(estimate: float, what: str) -> None:
    cap = cost_cap()
    if estimate > cap:
        raise CostCapExceeded(f"{what}: estimated {estimate:.3g} multiply-adds exceeds cap {cap:.3g}")
