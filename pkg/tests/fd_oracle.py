"""Central finite differences, independent of the reverse-mode engine."""
import numpy as np


def numeric_grad(f, arr, h=1e-5):
    """d f / d arr by central differences; ``f`` reads ``arr`` in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric):
    """Largest deviation relative to the gradient's scale."""
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)
