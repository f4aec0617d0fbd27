"""Shared test utilities: finite-difference checks and toy shape corpora."""

import numpy as np

import pointgen.autodiff as ad
from pointgen.data import normalize_unit_cube, quantize


def finite_difference_check(loss_fn, params, eps=1e-5, tol=1e-4, floor=1e-6):
    """Compare analytic gradients of loss_fn() against central differences.

    loss_fn must rebuild the computation from `params` (dict name->Tensor)
    on every call. Relative error uses a denominator floor so gradients at
    the finite-difference noise level are judged on absolute error.
    Returns the worst relative error seen.
    """
    ad.zero_gradients(params)
    ad.backward(loss_fn())
    grads = ad.collect_gradients(params)
    ad.zero_gradients(params)
    worst = 0.0
    for name, p in params.items():
        g = grads[name]
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = p.data[ix]
            p.data[ix] = orig + eps
            lp = loss_fn().item()
            p.data[ix] = orig - eps
            lm = loss_fn().item()
            p.data[ix] = orig
            fd = (lp - lm) / (2.0 * eps)
            rel = abs(fd - g[ix]) / max(abs(fd), abs(g[ix]), floor)
            if rel > worst:
                worst = rel
            assert rel < tol, f"{name}{ix}: analytic {g[ix]}, fd {fd}, rel {rel}"
    return worst


def fd_input_check(fn, x0, eps=1e-5, tol=1e-4, floor=1e-6):
    """Finite-difference check of d fn(x) / d x for a tensor-valued input.

    fn maps a Tensor to a 1x1 loss Tensor.
    """
    x = ad.Tensor(x0, requires_grad=True)
    params = {"x": x}
    return finite_difference_check(lambda: fn(params["x"]), params,
                                   eps=eps, tol=tol, floor=floor)


def randomize_params(model, rng, scale=0.4):
    """Overwrite all parameters (incl. the zero-init head) with noise."""
    for p in model.params.values():
        p.data = rng.normal(0.0, scale, p.data.shape)


def sphere_cloud(rng, n=64):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return normalize_unit_cube(v)


def box_cloud(rng, n=64):
    face = rng.integers(0, 6, n)
    u = rng.random((n, 2))
    pts = np.empty((n, 3))
    for i, f in enumerate(face):
        axis = f // 2
        rest = [a for a in range(3) if a != axis]
        pts[i, axis] = float(f % 2)
        pts[i, rest[0]] = u[i, 0]
        pts[i, rest[1]] = u[i, 1]
    return normalize_unit_cube(pts)


def toy_dataset(seed=42, bins=32, n_points=64, per_family=10):
    rng = np.random.default_rng(seed)
    clouds = [quantize(sphere_cloud(rng, n_points), bins) for _ in range(per_family)]
    clouds += [quantize(box_cloud(rng, n_points), bins) for _ in range(per_family)]
    return clouds


def random_cloud(rng, n, bins):
    return quantize(rng.random((n, 3)), bins)
