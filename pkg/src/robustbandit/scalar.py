"""Derivative-free maximisation of unimodal scalar functions."""
import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, a, b, tol=1e-10, max_iter=200):
    """Maximise a unimodal ``f`` on ``[a, b]``.

    Returns ``(x, f(x), iterations, converged)`` where ``converged`` means
    the bracket shrank below ``tol`` (relative to ``1 + |x|``).
    """
    a, b = min(a, b), max(a, b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while it < max_iter and (b - a) > tol * (1.0 + abs(c)):
        it += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    converged = (b - a) <= tol * (1.0 + abs(c))
    # endpoints matter when the maximiser sits on the bracket edge
    cands = [(fc, c), (fd, d)]
    for x in (a, b):
        cands.append((f(x), x))
    fx, x = max(cands, key=lambda t: t[0])
    return x, fx, it, converged


def grid_then_golden(f, lo, hi, num=60, tol=1e-10, max_iter=200, log=True):
    """Coarse grid scan followed by golden-section refinement.

    Guards against mild multimodality; with ``log=True`` the grid and the
    search run on ``log(x)`` so that brackets spanning many decades resolve
    small maximisers.
    """
    if log:
        g = lambda t: f(math.exp(t))
        lo_t, hi_t = math.log(lo), math.log(hi)
    else:
        g = f
        lo_t, hi_t = lo, hi
    step = (hi_t - lo_t) / (num - 1)
    grid = [lo_t + i * step for i in range(num)]
    vals = [g(t) for t in grid]
    j = max(range(num), key=vals.__getitem__)
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, num - 1)]
    t, ft, it, conv = golden_section_max(g, a, b, tol=tol, max_iter=max_iter)
    return (math.exp(t) if log else t), ft, it, conv
