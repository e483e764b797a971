"""Kernel backend selection.

The dense-layer kernels exist twice: a compiled Cython extension
(uqnav._kernels) and a pure-numpy fallback (uqnav._kernels_py).  The
compiled one is picked at import when present; set UQNAV_BACKEND to
"python" or "compiled" to force a choice.  Both backends are
deterministic; their outputs agree to float64 rounding but are not
bit-identical, so the backend is part of a run's reproducibility recipe.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:
    _kernels = None

AVAILABLE = ("python",) if _kernels is None else ("python", "compiled")

_active = _kernels_py


def use(name: str) -> None:
    """Switch the active backend ("python" or "compiled")."""
    global _active
    if name == "python":
        _active = _kernels_py
    elif name == "compiled":
        if _kernels is None:
            raise RuntimeError("compiled kernel extension is not built")
        _active = _kernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def active() -> str:
    return _active.NAME


def affine(x, w, b):
    return _active.affine(x, w, b)


def activate(s, code):
    return _active.activate(s, code)


def activation_grad(a, da, code):
    return _active.activation_grad(a, da, code)


def affine_grad_params(ds, x):
    return _active.affine_grad_params(ds, x)


def affine_grad_input(ds, w):
    return _active.affine_grad_input(ds, w)


_env = os.environ.get("UQNAV_BACKEND", "auto")
if _env == "auto":
    use("compiled" if _kernels is not None else "python")
else:
    use(_env)
