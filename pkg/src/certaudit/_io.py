"""Number formatting helpers for the text record formats."""

import math


def fmt(x):
    """Render a float with 17 significant digits so that it round-trips exactly."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return format(x, ".17g")


def fmt_all(values):
    return [fmt(v) for v in values]
