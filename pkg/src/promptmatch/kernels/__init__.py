"""Policy-network kernels.

The compiled extension is used when it was built and ``PROMPTMATCH_PURE_PYTHON``
is unset; otherwise the numpy implementation is loaded. Both expose
``forward``, ``forward_batch``, ``loss_and_grad`` and ``adamw_step``.
"""
import os

from . import _pykernels as python

compiled = None
if not os.environ.get("PROMPTMATCH_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

active = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

forward = active.forward
forward_batch = active.forward_batch
loss_and_grad = active.loss_and_grad
adamw_step = active.adamw_step


def backends():
    """Available backends by name, for tests and benchmarks."""
    out = {"python": python}
    if compiled is not None:
        out["cython"] = compiled
    return out
