"""Sparse multi-resolution feature grids with temporal anchor interpolation.

The buffer keeps one node lattice per resolution level.  Nodes are grouped
into 4^d blocks and a block is either fully allocated or empty, which keeps
the sparsity bookkeeping coarse enough to stay cheap.  Each node carries a
feature vector whose four equal segments are anchor values at normalized
times 0, 1/3, 2/3 and 1; a query interpolates multilinearly in space over
the 2^d enclosing nodes (nodes in empty blocks contribute zeros, so there is
no case switching at sparsity boundaries) and with the cubic Lagrange basis
in time.

Frames are recorded against absolute elapsed time and normalized on the fly
by the time multiplier lam = 1 / elapsed, so a stream of frames with varying
durations always occupies [0, 1] without knowing the total ahead of time.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from itertools import product

import numpy as np
from numba import njit

from .field_core import CellField, GridDims

BLOCK = 4          # nodes per axis in an allocation block
INIT_SCALE = 1e-4  # uniform init range for fresh feature entries


def temporal_weights(t):
    """Cubic Lagrange basis at anchor times 0, 1/3, 2/3, 1.

    Accepts a scalar or an array; returns shape t.shape + (4,).
    """
    t = np.asarray(t, dtype=np.float64)
    a = t - 1.0 / 3.0
    b = t - 2.0 / 3.0
    c = t - 1.0
    w = np.empty(t.shape + (4,), dtype=np.float64)
    w[..., 0] = -4.5 * a * b * c
    w[..., 1] = 13.5 * t * b * c
    w[..., 2] = -13.5 * t * a * c
    w[..., 3] = 4.5 * t * a * b
    return w


def level_resolutions(min_res: int, max_res: int, count: int) -> list[int]:
    """Geometric ladder of per-unit-length resolutions, rounded to ints."""
    if min_res < 2 or max_res < min_res or count < 1:
        raise ValueError(f"bad level ladder ({min_res}, {max_res}, {count})")
    if count == 1:
        return [max_res]
    ratio = (max_res / min_res) ** (1.0 / (count - 1))
    out = [int(round(min_res * ratio**i)) for i in range(count)]
    out[-1] = max_res
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError(f"level resolutions must strictly increase, got {out}")
    return out


@dataclass
class SparseLevel:
    """One resolution level: node lattice, block slots, packed features.

    block_slot[b] >= 0 iff block b is allocated; its 4^d nodes then occupy
    rows [slot * 4^d, (slot + 1) * 4^d) of the feature table in lexicographic
    node order.
    """

    res: int                   # cells per unit length (1 / dx)
    dx: float
    nodes: tuple[int, ...]     # node counts per axis
    blocks: tuple[int, ...]    # block counts per axis
    block_slot: np.ndarray     # int32, shape blocks, -1 for empty
    features: np.ndarray       # float64, (active blocks * 4^d, feat_len)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def n_active_blocks(self) -> int:
        return int(np.count_nonzero(self.block_slot >= 0))

    def node_mask(self) -> np.ndarray:
        """Boolean node lattice: True where the covering block is allocated."""
        m = self.block_slot >= 0
        for a in range(self.dim):
            m = np.repeat(m, BLOCK, axis=a)
        return m[tuple(slice(0, n) for n in self.nodes)]

    def node_row(self, idx: tuple[int, ...]) -> int:
        """Feature-table row of a node, or -1 if its block is empty."""
        sl = int(self.block_slot[tuple(i // BLOCK for i in idx)])
        if sl < 0:
            return -1
        row = sl
        for i in idx:
            row = row * BLOCK + (i % BLOCK)
        return row


def node_features(level: SparseLevel, idx) -> np.ndarray:
    """Feature vector stored at a node; zeros if the node is unallocated."""
    row = level.node_row(tuple(int(i) for i in idx))
    if row < 0:
        return np.zeros(level.features.shape[1], dtype=np.float64)
    return level.features[row]


# ==========================================================================
# gather / scatter kernels
# ==========================================================================
# Node (i, j) sits at (i * dx, j * dx).  The enclosing cell is clamped to the
# lattice and the fractional offset to [0, 1], so boundary queries degrade to
# the edge value instead of extrapolating.


@njit(cache=True)
def _lookup2(pts, dx, n0, n1, b1, slot, feats, out, off):
    nf = feats.shape[1]
    for s in range(pts.shape[0]):
        gx = pts[s, 0] / dx
        gy = pts[s, 1] / dx
        i0 = int(np.floor(gx))
        j0 = int(np.floor(gy))
        i0 = min(max(i0, 0), n0 - 2)
        j0 = min(max(j0, 0), n1 - 2)
        fx = min(max(gx - i0, 0.0), 1.0)
        fy = min(max(gy - j0, 0.0), 1.0)
        for di in range(2):
            ii = i0 + di
            wi = fx if di == 1 else 1.0 - fx
            bi = ii >> 2
            li = (ii & 3) << 2
            for dj in range(2):
                jj = j0 + dj
                w = wi * (fy if dj == 1 else 1.0 - fy)
                if w == 0.0:
                    continue
                sl = slot[bi * b1 + (jj >> 2)]
                if sl < 0:
                    continue
                row = (sl << 4) + li + (jj & 3)
                for c in range(nf):
                    out[s, off + c] += w * feats[row, c]


@njit(cache=True)
def _lookup3(pts, dx, n0, n1, n2, b1, b2, slot, feats, out, off):
    nf = feats.shape[1]
    for s in range(pts.shape[0]):
        gx = pts[s, 0] / dx
        gy = pts[s, 1] / dx
        gz = pts[s, 2] / dx
        i0 = min(max(int(np.floor(gx)), 0), n0 - 2)
        j0 = min(max(int(np.floor(gy)), 0), n1 - 2)
        k0 = min(max(int(np.floor(gz)), 0), n2 - 2)
        fx = min(max(gx - i0, 0.0), 1.0)
        fy = min(max(gy - j0, 0.0), 1.0)
        fz = min(max(gz - k0, 0.0), 1.0)
        for di in range(2):
            ii = i0 + di
            wi = fx if di == 1 else 1.0 - fx
            for dj in range(2):
                jj = j0 + dj
                wij = wi * (fy if dj == 1 else 1.0 - fy)
                for dk in range(2):
                    kk = k0 + dk
                    w = wij * (fz if dk == 1 else 1.0 - fz)
                    if w == 0.0:
                        continue
                    sl = slot[((ii >> 2) * b1 + (jj >> 2)) * b2 + (kk >> 2)]
                    if sl < 0:
                        continue
                    row = (sl << 6) + ((ii & 3) << 4) + ((jj & 3) << 2) + (kk & 3)
                    for c in range(nf):
                        out[s, off + c] += w * feats[row, c]


@njit(cache=True)
def _query2(pts, tws, dx, n0, n1, b1, slot, feats, l4, out, off):
    for s in range(pts.shape[0]):
        gx = pts[s, 0] / dx
        gy = pts[s, 1] / dx
        i0 = min(max(int(np.floor(gx)), 0), n0 - 2)
        j0 = min(max(int(np.floor(gy)), 0), n1 - 2)
        fx = min(max(gx - i0, 0.0), 1.0)
        fy = min(max(gy - j0, 0.0), 1.0)
        t0 = tws[s, 0]
        t1 = tws[s, 1]
        t2 = tws[s, 2]
        t3 = tws[s, 3]
        for di in range(2):
            ii = i0 + di
            wi = fx if di == 1 else 1.0 - fx
            bi = ii >> 2
            li = (ii & 3) << 2
            for dj in range(2):
                jj = j0 + dj
                w = wi * (fy if dj == 1 else 1.0 - fy)
                if w == 0.0:
                    continue
                sl = slot[bi * b1 + (jj >> 2)]
                if sl < 0:
                    continue
                row = (sl << 4) + li + (jj & 3)
                for k in range(l4):
                    acc = (t0 * feats[row, k]
                           + t1 * feats[row, l4 + k]
                           + t2 * feats[row, 2 * l4 + k]
                           + t3 * feats[row, 3 * l4 + k])
                    out[s, off + k] += w * acc


@njit(cache=True)
def _query3(pts, tws, dx, n0, n1, n2, b1, b2, slot, feats, l4, out, off):
    for s in range(pts.shape[0]):
        gx = pts[s, 0] / dx
        gy = pts[s, 1] / dx
        gz = pts[s, 2] / dx
        i0 = min(max(int(np.floor(gx)), 0), n0 - 2)
        j0 = min(max(int(np.floor(gy)), 0), n1 - 2)
        k0 = min(max(int(np.floor(gz)), 0), n2 - 2)
        fx = min(max(gx - i0, 0.0), 1.0)
        fy = min(max(gy - j0, 0.0), 1.0)
        fz = min(max(gz - k0, 0.0), 1.0)
        t0 = tws[s, 0]
        t1 = tws[s, 1]
        t2 = tws[s, 2]
        t3 = tws[s, 3]
        for di in range(2):
            ii = i0 + di
            wi = fx if di == 1 else 1.0 - fx
            for dj in range(2):
                jj = j0 + dj
                wij = wi * (fy if dj == 1 else 1.0 - fy)
                for dk in range(2):
                    kk = k0 + dk
                    w = wij * (fz if dk == 1 else 1.0 - fz)
                    if w == 0.0:
                        continue
                    sl = slot[((ii >> 2) * b1 + (jj >> 2)) * b2 + (kk >> 2)]
                    if sl < 0:
                        continue
                    row = (sl << 6) + ((ii & 3) << 4) + ((jj & 3) << 2) + (kk & 3)
                    for k in range(l4):
                        acc = (t0 * feats[row, k]
                               + t1 * feats[row, l4 + k]
                               + t2 * feats[row, 2 * l4 + k]
                               + t3 * feats[row, 3 * l4 + k])
                        out[s, off + k] += w * acc


@njit(cache=True)
def _scatter2(pts, tws, dx, n0, n1, b1, slot, grad, l4, up, off):
    # serial over samples: scatter order is fixed, so accumulation is
    # bit-deterministic
    for s in range(pts.shape[0]):
        gx = pts[s, 0] / dx
        gy = pts[s, 1] / dx
        i0 = min(max(int(np.floor(gx)), 0), n0 - 2)
        j0 = min(max(int(np.floor(gy)), 0), n1 - 2)
        fx = min(max(gx - i0, 0.0), 1.0)
        fy = min(max(gy - j0, 0.0), 1.0)
        for di in range(2):
            ii = i0 + di
            wi = fx if di == 1 else 1.0 - fx
            bi = ii >> 2
            li = (ii & 3) << 2
            for dj in range(2):
                jj = j0 + dj
                w = wi * (fy if dj == 1 else 1.0 - fy)
                if w == 0.0:
                    continue
                sl = slot[bi * b1 + (jj >> 2)]
                if sl < 0:
                    continue
                row = (sl << 4) + li + (jj & 3)
                for seg in range(4):
                    ws = w * tws[s, seg]
                    if ws == 0.0:
                        continue
                    for k in range(l4):
                        grad[row, seg * l4 + k] += ws * up[s, off + k]


@njit(cache=True)
def _scatter3(pts, tws, dx, n0, n1, n2, b1, b2, slot, grad, l4, up, off):
    for s in range(pts.shape[0]):
        gx = pts[s, 0] / dx
        gy = pts[s, 1] / dx
        gz = pts[s, 2] / dx
        i0 = min(max(int(np.floor(gx)), 0), n0 - 2)
        j0 = min(max(int(np.floor(gy)), 0), n1 - 2)
        k0 = min(max(int(np.floor(gz)), 0), n2 - 2)
        fx = min(max(gx - i0, 0.0), 1.0)
        fy = min(max(gy - j0, 0.0), 1.0)
        fz = min(max(gz - k0, 0.0), 1.0)
        for di in range(2):
            ii = i0 + di
            wi = fx if di == 1 else 1.0 - fx
            for dj in range(2):
                jj = j0 + dj
                wij = wi * (fy if dj == 1 else 1.0 - fy)
                for dk in range(2):
                    kk = k0 + dk
                    w = wij * (fz if dk == 1 else 1.0 - fz)
                    if w == 0.0:
                        continue
                    sl = slot[((ii >> 2) * b1 + (jj >> 2)) * b2 + (kk >> 2)]
                    if sl < 0:
                        continue
                    row = (sl << 6) + ((ii & 3) << 4) + ((jj & 3) << 2) + (kk & 3)
                    for seg in range(4):
                        ws = w * tws[s, seg]
                        if ws == 0.0:
                            continue
                        for k in range(l4):
                            grad[row, seg * l4 + k] += ws * up[s, off + k]


@njit(cache=True)
def _cell_max2(S, dxs, dxl, c0, c1):
    out = np.zeros((c0, c1), dtype=np.float64)
    for i in range(S.shape[0]):
        a0 = min(int(i * dxs / dxl), c0 - 1)
        a1 = min(int(np.ceil((i + 1) * dxs / dxl)) - 1, c0 - 1)
        for j in range(S.shape[1]):
            b0 = min(int(j * dxs / dxl), c1 - 1)
            b1 = min(int(np.ceil((j + 1) * dxs / dxl)) - 1, c1 - 1)
            v = S[i, j]
            for a in range(a0, a1 + 1):
                for b in range(b0, b1 + 1):
                    if v > out[a, b]:
                        out[a, b] = v
    return out


@njit(cache=True)
def _cell_max3(S, dxs, dxl, c0, c1, c2):
    out = np.zeros((c0, c1, c2), dtype=np.float64)
    for i in range(S.shape[0]):
        a0 = min(int(i * dxs / dxl), c0 - 1)
        a1 = min(int(np.ceil((i + 1) * dxs / dxl)) - 1, c0 - 1)
        for j in range(S.shape[1]):
            b0 = min(int(j * dxs / dxl), c1 - 1)
            b1 = min(int(np.ceil((j + 1) * dxs / dxl)) - 1, c1 - 1)
            for k in range(S.shape[2]):
                g0 = min(int(k * dxs / dxl), c2 - 1)
                g1 = min(int(np.ceil((k + 1) * dxs / dxl)) - 1, c2 - 1)
                v = S[i, j, k]
                for a in range(a0, a1 + 1):
                    for b in range(b0, b1 + 1):
                        for g in range(g0, g1 + 1):
                            if v > out[a, b, g]:
                                out[a, b, g] = v
    return out


# ==========================================================================
# buffer
# ==========================================================================


class SsnfBuffer:
    """Multi-resolution sparse feature pyramid plus its time bookkeeping."""

    def __init__(self, dims: GridDims, *, min_res: int = 16, max_res: int | None = None,
                 levels: int = 4, feat_len: int | None = None, sigma: float = 0.01,
                 seed: int = 0):
        if max_res is None:
            max_res = min(dims.cells)
        if sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if feat_len is None:
            feat_len = 8 if dims.dim == 2 else 16
        if feat_len < 4 or feat_len % 4:
            raise ValueError("feat_len must be a positive multiple of 4")
        self.dims = dims
        self.sigma = float(sigma)
        self.feat_len = int(feat_len)
        self.levels: list[SparseLevel] = []
        for res in level_resolutions(min_res, max_res, levels):
            dxl = 1.0 / res
            cells = tuple(max(1, int(np.ceil(e * res - 1e-9))) for e in dims.extent)
            nodes = tuple(c + 1 for c in cells)
            blocks = tuple((n + BLOCK - 1) // BLOCK for n in nodes)
            self.levels.append(SparseLevel(
                res, dxl, nodes, blocks,
                np.full(blocks, -1, dtype=np.int32),
                np.zeros((0, feat_len), dtype=np.float64)))
        self.lam = 1.0
        self.frame_times: list[float] = []
        self.decoders = None   # per-axis MLP ensemble, attached by the owner
        self.rng = np.random.default_rng(seed)
        # the coarsest level is always dense
        self._allocate(self.levels[0], np.ones(self.levels[0].blocks, dtype=bool))

    # -- geometry ----------------------------------------------------------

    @property
    def dx_coarse(self) -> float:
        return self.levels[0].dx

    @property
    def dx_fine(self) -> float:
        return self.levels[-1].dx

    @property
    def query_width(self) -> int:
        """Length of a temporally interpolated feature vector."""
        return len(self.levels) * (self.feat_len // 4)

    def n_parameters(self) -> int:
        return sum(lvl.features.size for lvl in self.levels)

    def normalized_frame_times(self) -> np.ndarray:
        return np.asarray(self.frame_times, dtype=np.float64) * self.lam

    # -- storage -----------------------------------------------------------

    def _allocate(self, lvl: SparseLevel, want: np.ndarray) -> None:
        new = want & (lvl.block_slot < 0)
        k = int(np.count_nonzero(new))
        if k == 0:
            return
        base = lvl.n_active_blocks
        lvl.block_slot.ravel()[np.flatnonzero(new.ravel())] = \
            np.arange(base, base + k, dtype=np.int32)
        rows = self.rng.uniform(-INIT_SCALE, INIT_SCALE,
                                size=(k * BLOCK**self.dims.dim, self.feat_len))
        lvl.features = np.concatenate([lvl.features, rows], axis=0)


def _corner_nodes(cells_marked: np.ndarray, nodes: tuple[int, ...]) -> np.ndarray:
    """Node mask touching any marked cell (each cell marks its 2^d corners)."""
    out = np.zeros(nodes, dtype=bool)
    shape = cells_marked.shape
    for offs in product(range(2), repeat=len(nodes)):
        out[tuple(slice(o, o + c) for o, c in zip(offs, shape))] |= cells_marked
    return out


def _blocks_of(node_mask: np.ndarray, lvl: SparseLevel) -> np.ndarray:
    pad = [(0, b * BLOCK - n) for b, n in zip(lvl.blocks, lvl.nodes)]
    p = np.pad(node_mask, pad)
    shape = []
    for b in lvl.blocks:
        shape.extend((b, BLOCK))
    return p.reshape(shape).any(axis=tuple(range(1, 2 * lvl.dim, 2)))


def activate_cells(buf: SsnfBuffer, S: CellField) -> SsnfBuffer:
    """Activate every level cell whose covered max sizing exceeds sigma / dx_l.

    Activation is monotone (never deactivates) and keeps finer-level nodes
    nested inside coarser active regions.  Fresh nodes get uniform random
    features in +-1e-4.
    """
    if S.dims != buf.dims:
        raise ValueError("sizing field lives on a different grid")
    sdata = np.ascontiguousarray(S.data, dtype=np.float64)
    want = []
    for lvl in buf.levels:
        cells = tuple(n - 1 for n in lvl.nodes)
        if buf.dims.dim == 2:
            smax = _cell_max2(sdata, buf.dims.dx, lvl.dx, *cells)
        else:
            smax = _cell_max3(sdata, buf.dims.dx, lvl.dx, *cells)
        marked = smax > buf.sigma / lvl.dx
        nodes = _corner_nodes(marked, lvl.nodes)
        want.append(_blocks_of(nodes, lvl) | (lvl.block_slot >= 0))
    # nesting pass: every active node must have its 2^d enclosing nodes
    # active on the next coarser level
    for l in range(len(buf.levels) - 1, 0, -1):
        fine, coarse = buf.levels[l], buf.levels[l - 1]
        mask = want[l]
        for a in range(fine.dim):
            mask = np.repeat(mask, BLOCK, axis=a)
        idx = np.argwhere(mask[tuple(slice(0, n) for n in fine.nodes)])
        if idx.size == 0:
            continue
        g = idx * (coarse.res / fine.res)
        lo = np.floor(g).astype(np.int64)
        hi = lo + 1
        for a in range(fine.dim):
            np.clip(lo[:, a], 0, coarse.nodes[a] - 1, out=lo[:, a])
            np.clip(hi[:, a], 0, coarse.nodes[a] - 1, out=hi[:, a])
        cmask = np.zeros(coarse.nodes, dtype=bool)
        for combo in product(range(2), repeat=fine.dim):
            cmask[tuple((hi if c else lo)[:, a] for a, c in enumerate(combo))] = True
        want[l - 1] |= _blocks_of(cmask, coarse)
    for lvl, w in zip(buf.levels, want):
        buf._allocate(lvl, w)
    return buf


def grow(buf: SsnfBuffer, S_new: CellField) -> SsnfBuffer:
    """Extend activation for a new frame; existing features are untouched."""
    return activate_cells(buf, S_new)


# ==========================================================================
# queries
# ==========================================================================


def _as_points(pts, dim: int):
    p = np.ascontiguousarray(pts, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    if p.ndim != 2 or p.shape[1] != dim:
        raise ValueError(f"positions must have shape (n, {dim})")
    return p, single


def _as_tweights(t, n: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < -1e-6) or np.any(t > 1.0 + 1e-6):
        raise ValueError("normalized time outside [0, 1]")
    w = temporal_weights(t)
    if w.ndim == 1:
        w = np.broadcast_to(w, (n, 4))
    elif w.shape != (n, 4):
        raise ValueError("time array must be scalar or one entry per position")
    return np.ascontiguousarray(w)


def lookup_spatial(buf: SsnfBuffer, pts) -> np.ndarray:
    """Spatial interpolation only: per-level features concatenated."""
    p, single = _as_points(pts, buf.dims.dim)
    out = np.zeros((p.shape[0], len(buf.levels) * buf.feat_len))
    off = 0
    for lvl in buf.levels:
        slot = lvl.block_slot.ravel()
        if buf.dims.dim == 2:
            _lookup2(p, lvl.dx, lvl.nodes[0], lvl.nodes[1], lvl.blocks[1],
                     slot, lvl.features, out, off)
        else:
            _lookup3(p, lvl.dx, lvl.nodes[0], lvl.nodes[1], lvl.nodes[2],
                     lvl.blocks[1], lvl.blocks[2], slot, lvl.features, out, off)
        off += buf.feat_len
    return out[0] if single else out


def query_feature(buf: SsnfBuffer, pts, t) -> np.ndarray:
    """Spatiotemporal feature: anchor segments blended at normalized time t."""
    p, single = _as_points(pts, buf.dims.dim)
    tws = _as_tweights(t, p.shape[0])
    l4 = buf.feat_len // 4
    out = np.zeros((p.shape[0], len(buf.levels) * l4))
    off = 0
    for lvl in buf.levels:
        slot = lvl.block_slot.ravel()
        if buf.dims.dim == 2:
            _query2(p, tws, lvl.dx, lvl.nodes[0], lvl.nodes[1], lvl.blocks[1],
                    slot, lvl.features, l4, out, off)
        else:
            _query3(p, tws, lvl.dx, lvl.nodes[0], lvl.nodes[1], lvl.nodes[2],
                    lvl.blocks[1], lvl.blocks[2], slot, lvl.features, l4, out, off)
        off += l4
    return out[0] if single else out


def query_feature_backward(buf: SsnfBuffer, pts, t, upstream,
                           grads: list[np.ndarray] | None = None) -> list[np.ndarray]:
    """Accumulate d(query)/d(features) * upstream into per-level tables.

    The chain is linear: each active node/segment receives its interpolation
    weight times the matching upstream slice.
    """
    p, single = _as_points(pts, buf.dims.dim)
    tws = _as_tweights(t, p.shape[0])
    l4 = buf.feat_len // 4
    up = np.ascontiguousarray(upstream, dtype=np.float64)
    if single and up.ndim == 1:
        up = up[None, :]
    if up.shape != (p.shape[0], len(buf.levels) * l4):
        raise ValueError(f"upstream must have shape ({p.shape[0]}, "
                         f"{len(buf.levels) * l4})")
    if grads is None:
        grads = [np.zeros_like(lvl.features) for lvl in buf.levels]
    off = 0
    for lvl, g in zip(buf.levels, grads):
        if g.shape != lvl.features.shape:
            raise ValueError("gradient table shape mismatch")
        slot = lvl.block_slot.ravel()
        if buf.dims.dim == 2:
            _scatter2(p, tws, lvl.dx, lvl.nodes[0], lvl.nodes[1], lvl.blocks[1],
                      slot, g, l4, up, off)
        else:
            _scatter3(p, tws, lvl.dx, lvl.nodes[0], lvl.nodes[1], lvl.nodes[2],
                      lvl.blocks[1], lvl.blocks[2], slot, g, l4, up, off)
        off += l4
    return grads


# ==========================================================================
# time bookkeeping, reinit, copies, serialization
# ==========================================================================


def update_time_multiplier(buf: SsnfBuffer, dt: float) -> tuple[float, bool]:
    """Append a frame of duration dt; rescale so the stream ends at t = 1.

    Returns the new multiplier and whether it shrank enough (ratio > 1.33)
    that previously learned anchors are stale and the features should be
    reinitialized.
    """
    if not dt > 0.0:
        raise ValueError("frame duration must be positive")
    elapsed = (buf.frame_times[-1] if buf.frame_times else 0.0) + dt
    lam_prev = buf.lam
    buf.lam = 1.0 / elapsed
    buf.frame_times.append(elapsed)
    return buf.lam, bool(lam_prev / buf.lam > 1.33)


def reinit_features(buf: SsnfBuffer, seed: int) -> SsnfBuffer:
    """Redraw every allocated feature; masks and decoders stay as they are."""
    rng = np.random.default_rng(seed)
    for lvl in buf.levels:
        lvl.features[...] = rng.uniform(-INIT_SCALE, INIT_SCALE,
                                        size=lvl.features.shape)
    return buf


def reset_frames(buf: SsnfBuffer) -> SsnfBuffer:
    """Drop the stored frame history (new marching epoch starts at t = 0)."""
    buf.frame_times.clear()
    buf.lam = 1.0
    return buf


def copy_buffer(src: SsnfBuffer) -> SsnfBuffer:
    """Independent deep copy; training one buffer never touches the other."""
    dst = object.__new__(SsnfBuffer)
    dst.dims = src.dims
    dst.sigma = src.sigma
    dst.feat_len = src.feat_len
    dst.levels = [SparseLevel(l.res, l.dx, l.nodes, l.blocks,
                              l.block_slot.copy(), l.features.copy())
                  for l in src.levels]
    dst.lam = src.lam
    dst.frame_times = list(src.frame_times)
    dst.decoders = src.decoders.copy() if src.decoders is not None else None
    dst.rng = copy.deepcopy(src.rng)
    return dst


def buffer_to_arrays(buf: SsnfBuffer) -> dict[str, np.ndarray]:
    """Flatten the buffer into named arrays for the checkpoint writer."""
    out = {
        "enc_meta": np.array([len(buf.levels), buf.feat_len], dtype=np.int64),
        "enc_res": np.array([lvl.res for lvl in buf.levels], dtype=np.int64),
        "enc_sigma_lam": np.array([buf.sigma, buf.lam], dtype=np.float64),
        "enc_frame_times": np.array(buf.frame_times, dtype=np.float64),
    }
    for i, lvl in enumerate(buf.levels):
        out[f"enc{i}_slot"] = lvl.block_slot
        out[f"enc{i}_feat"] = lvl.features
    return out


def buffer_from_arrays(dims: GridDims, arrays: dict[str, np.ndarray],
                       seed: int = 0) -> SsnfBuffer:
    n_levels, feat_len = (int(v) for v in arrays["enc_meta"])
    res = [int(v) for v in arrays["enc_res"]]
    sigma, lam = (float(v) for v in arrays["enc_sigma_lam"])
    buf = SsnfBuffer(dims, min_res=res[0], max_res=res[-1], levels=n_levels,
                     feat_len=feat_len, sigma=sigma, seed=seed)
    if [lvl.res for lvl in buf.levels] != res:
        raise ValueError(f"checkpoint level ladder {res} does not match "
                         f"the reconstructed one")
    buf.lam = lam
    buf.frame_times = [float(v) for v in arrays["enc_frame_times"]]
    for i, lvl in enumerate(buf.levels):
        slot = np.ascontiguousarray(arrays[f"enc{i}_slot"], dtype=np.int32)
        feat = np.ascontiguousarray(arrays[f"enc{i}_feat"], dtype=np.float64)
        if slot.shape != lvl.blocks:
            raise ValueError(f"level {i} slot array has shape {slot.shape}, "
                             f"expected {lvl.blocks}")
        n_active = int(np.count_nonzero(slot >= 0))
        if feat.shape != (n_active * BLOCK**dims.dim, feat_len):
            raise ValueError(f"level {i} feature table has shape {feat.shape}")
        lvl.block_slot = slot
        lvl.features = feat
    return buf
