"""
Computational cost model in scalar products (SPs) of length n.

Per node and outer iteration, with ``l`` inner steps:

* derivative work: ``|J_i| (2 + n/2)`` for logistic losses (gradient and
  Hessian), ``n`` for quadratics (gradient only, constant Hessian);
* consensus in the gradient: ``N``; inner matrix-vector products: ``n l``;
  inner consensus: ``N l / n``;
* INDO: ``n l`` for the diagonal scalings;
* ESOM: ``n^2 / 6`` for the block inversion, every iteration for logistic
  losses and once (first iteration) for quadratics.
"""


def sp_cost(variant, kind, samples, n, N, ell, first=False):
    """
    SPs spent by one node in one outer iteration.

    Parameters
    ----------
    variant : {"indo", "esom"}
    kind : {"quadratic", "logistic"}
    samples : float
        Local sample count ``|J_i|`` (ignored for quadratics).
    n, N : int
        Variable dimension and node count.
    ell : int
        Inner iterations performed in this outer iteration.
    first : bool
        Whether this is the first outer iteration (ESOM's one-off
        inversion on quadratics).
    """
    if kind == "logistic":
        derivatives = samples * (2.0 + n / 2.0)
    elif kind == "quadratic":
        derivatives = float(n)
    else:
        raise ValueError("unknown problem kind %r" % kind)
    common = derivatives + N + n * ell + N * ell / n
    if variant == "indo":
        return common + n * ell
    if variant == "esom":
        if kind == "logistic" or first:
            return common + n * n / 6.0
        return common
    raise ValueError("unknown variant %r" % variant)
