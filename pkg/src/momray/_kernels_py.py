"""Pure numpy versions of the compiled kernels (same signatures and results)."""
import numpy as np

from .fields import cubic_weights

# rays per vectorized chunk; bounds temporary memory to a few tens of MB
_CHUNK = 256


def _nodes(t0, t1, gx, gw, panels):
    h = (t1 - t0) / panels
    local = (np.arange(panels)[:, None] + 0.5 * (gx[None, :] + 1.0)).ravel()
    t = t0[:, None] + h[:, None] * local[None, :]
    w = 0.5 * h[:, None] * np.tile(gw, panels)[None, :]
    w = np.where((t1 > t0)[:, None], w, 0.0)
    return t, w


def _accumulate(vals, t, w, K):
    out = np.empty((K + 1, t.shape[0]))
    tp = w * vals
    for j in range(K + 1):
        out[j] = tp.sum(axis=1)
        tp = tp * t
    return out


def moments_blob(X, XI, t0, t1, gx, gw, panels, centers, widths, profile, A, Bv, K):
    N = X.shape[0]
    out = np.zeros((K + 1, N))
    inv2 = 1.0 / widths**2
    for lo in range(0, N, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, N))
        t, w = _nodes(t0[sl], t1[sl], gx, gw, panels)
        pts = X[sl, None, :] + t[..., None] * XI[sl, None, :]
        vals = np.zeros(t.shape)
        for b in range(centers.shape[0]):
            d = pts - centers[b]
            r2 = np.sum(d * d, axis=-1) * inv2[b]
            lin = A[sl, b, None] + np.einsum("nqa,na->nq", d, Bv[sl, b])
            if profile == 0:
                prof = np.where(r2 <= 64.0, np.exp(-0.5 * r2), 0.0)
            else:
                prof = np.clip(1.0 - r2, 0.0, None) ** 4
            vals += prof * lin
        out[:, sl] = _accumulate(vals, t, w, K)
    return out


def moments_grid(X, XI, t0, t1, gx, gw, panels, values, origin, spacing, counts, radius, CW, K):
    N, n = X.shape
    out = np.zeros((K + 1, N))
    counts = np.asarray(counts)
    grid_vals = values.reshape(tuple(counts) + (values.shape[1],))
    for lo in range(0, N, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, N))
        t, w = _nodes(t0[sl], t1[sl], gx, gw, panels)
        pts = X[sl, None, :] + t[..., None] * XI[sl, None, :]
        flat = pts.reshape(-1, n)
        inside = np.sum(flat * flat, axis=1) <= radius * radius
        base, wts = [], []
        for a in range(n):
            u = (flat[:, a] - origin[a]) / spacing[a]
            i0 = np.clip(np.floor(u).astype(int) - 1, 0, counts[a] - 4)
            base.append(i0)
            wts.append(cubic_weights(u - i0))
        interp = 0.0
        for offs in np.ndindex(*(4,) * n):
            wt = np.ones(flat.shape[0])
            idx = []
            for a, o in enumerate(offs):
                wt = wt * wts[a][:, o]
                idx.append(base[a] + o)
            interp = interp + wt[:, None] * grid_vals[tuple(idx)]
        interp = np.where(inside[:, None], interp, 0.0).reshape(t.shape + (-1,))
        vals = np.einsum("nqc,nc->nq", interp, CW[sl])
        out[:, sl] = _accumulate(vals, t, w, K)
    return out


def backproject(q, cos_phi, sin_phi, s0, ds, pts):
    S = q.shape[1]
    out = np.zeros(pts.shape[0])
    for a in range(q.shape[0]):
        s = -pts[:, 0] * sin_phi[a] + pts[:, 1] * cos_phi[a]
        u = (s - s0) / ds
        k = np.floor(u).astype(int)
        ok = (k >= 0) & (k < S - 1)
        kc = np.clip(k, 0, S - 2)
        frac = u - kc
        out += np.where(ok, (1.0 - frac) * q[a, kc] + frac * q[a, kc + 1], 0.0)
    return out
