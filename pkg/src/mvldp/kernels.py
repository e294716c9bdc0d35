"""Backend dispatch for the batch kernels."""

from ._accel import USE_NUMBA, backend_name
from . import _loops, _vec

_impl = _loops if USE_NUMBA else _vec


def resolvent_rows(opp, eta, X):
    return _impl.resolvent_rows(opp, float(eta), X)


def euler_paths(*args):
    return _impl.euler_paths(*args)


__all__ = ["resolvent_rows", "euler_paths", "backend_name", "USE_NUMBA"]
