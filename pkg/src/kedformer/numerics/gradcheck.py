import numpy as np

from ..errors import NumericError
from .tensor import Tensor


def check_gradient(f, x, eps=1e-5, indices=None):
    """Max relative error between the tape gradient and central differences.

    ``f`` maps a :class:`Tensor` to a scalar :class:`Tensor`. ``x`` is either
    a single array-like (differentiated directly) or a list of ``Tensor``
    leaves that ``f`` closes over (``f`` is then called with no meaningful
    argument and the leaves are perturbed in place). ``indices`` optionally
    restricts the comparison to ``(leaf_number, flat_index)`` pairs.
    """
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], Tensor):
        leaves = list(x)

        def evaluate():
            return f(None)
    else:
        leaves = [Tensor(np.array(x, dtype=np.float64), requires_grad=True)]

        def evaluate():
            return f(leaves[0])

    for leaf in leaves:
        leaf.zero_grad()
    out = evaluate()
    if not np.isfinite(out.data).all():
        raise NumericError("f(x) is not finite")
    out.backward()
    analytic = [leaf.grad.ravel().copy() for leaf in leaves]

    if indices is None:
        indices = [(i, j) for i, leaf in enumerate(leaves) for j in range(leaf.data.size)]
    worst = 0.0
    for i, j in indices:
        flat = leaves[i].data.reshape(-1)
        saved = flat[j]
        flat[j] = saved + eps
        up = float(evaluate().data)
        flat[j] = saved - eps
        down = float(evaluate().data)
        flat[j] = saved
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError("f is not finite near x")
        numeric = (up - down) / (2 * eps)
        err = abs(analytic[i][j] - numeric) / max(1e-8, abs(numeric))
        worst = max(worst, err)
    return worst
