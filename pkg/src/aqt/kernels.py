"""Backend selection for the ensemble kernels.

The compiled extension is used when it was built; setting the environment
variable ``AQT_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("AQT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def backends():
    """Mapping of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


def ensemble_probs(*args):
    return _impl.ensemble_probs(*args)


def ensemble_sample(c_re, c_im, t_re, t_im, x_re, x_im, uniforms):
    impl = _impl if t_re.shape[0] <= 64 else _pykernels
    return impl.ensemble_sample(c_re, c_im, t_re, t_im, x_re, x_im, uniforms)
