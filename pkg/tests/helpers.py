"""Independent straight-line reference implementations used as test oracles.

Everything here is plain numpy written directly from the definitions, kept
separate from the package code so the two routes can disagree.
"""

import numpy as np


def ref_kernel(r):
    r = np.abs(np.asarray(r, dtype=np.float64))
    return np.select([r < 0.5, r < 1.5], [0.75 - r**2, 0.5 * (1.5 - r) ** 2], 0.0)


def ref_kernel_grad(r):
    r = np.asarray(r, dtype=np.float64)
    a = np.abs(r)
    mag = np.select([a < 0.5, a < 1.5], [-2.0 * a, -(1.5 - a)], 0.0)
    return mag * np.sign(r)


def ref_weights(x, n):
    """Clamped, renormalized 3-point stencil with quotient-rule derivatives."""
    c = int(np.floor(x + 0.5))
    idx = np.array([c - 1, c, c + 1])
    r = x - idx
    w = ref_kernel(r)
    dw = ref_kernel_grad(r)
    valid = (idx >= 0) & (idx <= n - 1)
    w = np.where(valid, w, 0.0)
    dw = np.where(valid, dw, 0.0)
    s = w.sum()
    ds = dw.sum()
    wn = w / s
    dn = dw / s - w * ds / s**2
    return np.clip(idx, 0, n - 1), wn, dn


def _lattice(p, dims, axis_of_comp):
    """Lattice coordinates of p for one MAC component (or cells if axis None)."""
    out = []
    for a in range(dims.dim):
        x = min(max(p[a], 0.0), dims.extent[a])
        if axis_of_comp is not None and a == axis_of_comp:
            out.append(x / dims.dx)
        else:
            out.append(x / dims.dx - 0.5)
    return out


def ref_interp_mac(f, p):
    """Quadratic interpolation of every MAC component at p."""
    d = f.dims
    vals = []
    for comp_axis in range(d.dim):
        arr = f.comps[comp_axis].astype(np.float64)
        lat = _lattice(p, d, comp_axis)
        idx, wts = [], []
        for a in range(d.dim):
            i, w, _ = ref_weights(lat[a], arr.shape[a])
            idx.append(i)
            wts.append(w)
        acc = 0.0
        if d.dim == 2:
            for i in range(3):
                for j in range(3):
                    acc += wts[0][i] * wts[1][j] * arr[idx[0][i], idx[1][j]]
        else:
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        acc += wts[0][i] * wts[1][j] * wts[2][k] * arr[idx[0][i], idx[1][j], idx[2][k]]
        vals.append(acc)
    return np.array(vals)


def ref_interp_cell(s, p):
    d = s.dims
    arr = s.data.astype(np.float64)
    lat = _lattice(p, d, None)
    idx, wts = [], []
    for a in range(d.dim):
        i, w, _ = ref_weights(lat[a], arr.shape[a])
        idx.append(i)
        wts.append(w)
    acc = 0.0
    if d.dim == 2:
        for i in range(3):
            for j in range(3):
                acc += wts[0][i] * wts[1][j] * arr[idx[0][i], idx[1][j]]
    else:
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    acc += wts[0][i] * wts[1][j] * wts[2][k] * arr[idx[0][i], idx[1][j], idx[2][k]]
    return acc


def mac_from_function(dims, fns):
    """Sample per-component functions of position onto a MAC layout."""
    from nfmlab.field_core import MacField, face_centers

    comps = []
    for a in range(dims.dim):
        pts = face_centers(dims, a)
        comps.append(fns[a](pts).reshape(dims.comp_shape(a)).astype(np.float32))
    return MacField(dims, comps)


def cell_from_function(dims, fn):
    """Sample a scalar function of position onto cell centers."""
    from nfmlab.field_core import CellField, cell_centers

    vals = fn(cell_centers(dims)).reshape(dims.cells)
    return CellField.from_array(dims, vals)


def rigid_rotation_field(dims):
    cx = np.array(dims.extent) / 2.0
    if dims.dim == 2:
        return mac_from_function(dims, [
            lambda p: -(p[:, 1] - cx[1]),
            lambda p: p[:, 0] - cx[0],
        ])
    return mac_from_function(dims, [
        lambda p: -(p[:, 1] - cx[1]),
        lambda p: p[:, 0] - cx[0],
        lambda p: np.zeros(len(p)),
    ])


def mollified_rotation_2d(dims, omega=1.0, plateau=0.25, cutoff=0.42):
    """Rigid rotation about the domain center inside `plateau` radius,
    smoothstepped to zero by `cutoff` so the walls see no flow."""
    cx = np.array(dims.extent) / 2.0

    def shape(r):
        t = np.clip((r - plateau) / (cutoff - plateau), 0.0, 1.0)
        return 1.0 - t * t * (3.0 - 2.0 * t)

    def fu(p):
        r = np.hypot(p[:, 0] - cx[0], p[:, 1] - cx[1])
        return -omega * (p[:, 1] - cx[1]) * shape(r)

    def fv(p):
        r = np.hypot(p[:, 0] - cx[0], p[:, 1] - cx[1])
        return omega * (p[:, 0] - cx[0]) * shape(r)

    return mac_from_function(dims, [fu, fv])


def algebraic_vortex_fns(core=0.03, lo=0.35, hi=0.46, strength=1.0, center=(0.5, 0.5)):
    """Closed-form swirl with speed peaking at `core` and a 1/r tail,
    smoothstepped to rest between radii `lo` and `hi`."""
    cx, cy = center

    def cut(r):
        t = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
        return 1.0 - t * t * (3.0 - 2.0 * t)

    def swirl(r):
        return strength * 2.0 * core * r / (r * r + core * core) * cut(r)

    def fu(p):
        ddx, ddy = p[:, 0] - cx, p[:, 1] - cy
        r = np.hypot(ddx, ddy) + 1e-300
        return -swirl(r) * ddy / r

    def fv(p):
        ddx, ddy = p[:, 0] - cx, p[:, 1] - cy
        r = np.hypot(ddx, ddy) + 1e-300
        return swirl(r) * ddx / r

    return [fu, fv]


def random_mac(dims, rng, amp=1.0):
    from nfmlab.field_core import MacField

    return MacField(dims, [
        np.asarray(rng.uniform(-amp, amp, dims.comp_shape(a)), dtype=np.float32)
        for a in range(dims.dim)
    ])


def solenoidal_mac_2d(dims, rng, amp=1.0, modes=3):
    """Exactly divergence-free wall-compatible field from a node streamfunction.

    The streamfunction vanishes on the boundary ring, so u = d(psi)/dy,
    v = -d(psi)/dx telescope to zero divergence and zero wall-normal flow.
    """
    from nfmlab.field_core import MacField

    nx, ny = dims.cells
    x = np.linspace(0, 1, nx + 1)
    y = np.linspace(0, 1, ny + 1)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    psi = np.zeros((nx + 1, ny + 1))
    for _ in range(modes):
        kx, ky = rng.integers(1, 4, size=2)
        psi += rng.normal() * np.sin(np.pi * kx * xx) * np.sin(np.pi * ky * yy)
    psi *= amp / max(np.abs(psi).max(), 1e-12)
    u = (psi[:, 1:] - psi[:, :-1]) / dims.dx
    v = -(psi[1:, :] - psi[:-1, :]) / dims.dx
    return MacField(dims, [u.astype(np.float32), v.astype(np.float32)])
