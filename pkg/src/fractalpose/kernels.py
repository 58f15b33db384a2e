"""Hot inner loops of the codec: exhaustive transform search and decode passes.

Two interchangeable backends:

  - ``numba``: ``@njit(parallel=True)`` kernels, the default when numba is
    importable.
  - ``numpy``: a vectorized fallback, forced with ``FRACTALPOSE_BACKEND=numpy``
    (or chosen automatically when numba is missing).

Both backends are bit-identical: every floating-point expression is written
with the same operation order in both paths, and all block sums are small
integers that float64 represents exactly, so the search comparisons do not
depend on summation order, chunking, or thread count.

Search contract (shared by both paths): candidates are scanned in
(domain-major, isometry-minor) order, contrast levels in ascending order, and
for each level the offset is the quantization cell of the least-squares
optimum with an exact tie to the lower neighboring level resolved toward the
lower level. Strictly-smaller error updates the winner, which makes the
result the lexicographically smallest minimizer and therefore independent of
parallel schedule.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "PerformanceWarning",
    "available_backends",
    "set_threads",
    "encode_search",
    "decode_pass",
]


class PerformanceWarning(UserWarning):
    pass


_ENV = os.environ.get("FRACTALPOSE_BACKEND", "auto").strip().lower()
if _ENV not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"FRACTALPOSE_BACKEND must be 'auto', 'numba' or 'numpy', got {_ENV!r}"
    )

HAVE_NUMBA = False
if _ENV != "numpy":
    try:
        import numba
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:
        if _ENV == "numba":
            raise
        warnings.warn(
            "numba is not available; falling back to the slower numpy backend",
            PerformanceWarning,
            stacklevel=2,
        )

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if HAVE_NUMBA else ("numpy",)


def set_threads(count: int | None) -> int:
    """Set the worker thread count for the numba backend; returns the
    effective count (always 1 for the numpy backend)."""
    if not HAVE_NUMBA:
        return 1
    if count is None:
        count = numba.config.NUMBA_DEFAULT_NUM_THREADS
    count = max(1, min(int(count), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(count)
    return numba.get_num_threads()


def _check_backend(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not available")
    return backend


# ---------------------------------------------------------------------------
# encode search


def _encode_search_numpy(
    ranges: np.ndarray,
    pool: np.ndarray,
    pool_sd: np.ndarray,
    pool_sdd: np.ndarray,
    s_levels: np.ndarray,
    o_lo: float,
    o_step: float,
    n_o: int,
    out_cand: np.ndarray,
    out_sq: np.ndarray,
    out_oq: np.ndarray,
    out_err: np.ndarray,
    chunk: int = 128,
) -> None:
    n_ranges, n = ranges.shape
    nf = float(n)
    sr_all = ranges.sum(axis=1)
    srr_all = (ranges * ranges).sum(axis=1)
    for start in range(0, n_ranges, chunk):
        stop = min(start + chunk, n_ranges)
        rc = ranges[start:stop]
        sr = sr_all[start:stop][:, None]
        srr = srr_all[start:stop][:, None]
        sdr = rc @ pool.T  # exact: integer-valued float64 products
        best_e = best_q = best_k = None
        for k in range(s_levels.shape[0]):
            s = float(s_levels[k])
            t1 = srr - 2.0 * s * sdr + (s * s) * pool_sdd[None, :]
            obar = (sr - s * pool_sd[None, :]) / nf
            q = np.floor((obar - o_lo) / o_step).astype(np.int64)
            np.clip(q, 0, n_o - 1, out=q)
            o = o_lo + (q + 0.5) * o_step
            e = t1 + o * ((2.0 * s) * pool_sd[None, :] - 2.0 * sr + nf * o)
            o2 = o_lo + (q - 0.5) * o_step
            e2 = t1 + o2 * ((2.0 * s) * pool_sd[None, :] - 2.0 * sr + nf * o2)
            lower = (q > 0) & (e2 <= e)
            e = np.where(lower, e2, e)
            qs = np.where(lower, q - 1, q)
            if best_e is None:
                best_e, best_q = e, qs
                best_k = np.zeros_like(qs)
            else:
                better = e < best_e
                best_e = np.where(better, e, best_e)
                best_q = np.where(better, qs, best_q)
                best_k = np.where(better, k, best_k)
        ci = np.argmin(best_e, axis=1)  # first occurrence: lowest candidate wins ties
        rows = np.arange(stop - start)
        out_cand[start:stop] = ci
        out_sq[start:stop] = best_k[rows, ci]
        out_oq[start:stop] = best_q[rows, ci]
        out_err[start:stop] = best_e[rows, ci]


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _encode_search_numba(
        ranges, pool, pool_sd, pool_sdd, s_levels, o_lo, o_step, n_o,
        out_cand, out_sq, out_oq, out_err,
    ):  # pragma: no cover - measured through the dispatcher
        n_ranges, n = ranges.shape
        n_cand = pool.shape[0]
        n_s = s_levels.shape[0]
        nf = float(n)
        for ri in prange(n_ranges):
            r = ranges[ri]
            sr = 0.0
            srr = 0.0
            for i in range(n):
                v = r[i]
                sr += v
                srr += v * v
            best_e = np.inf
            best_c = -1
            best_k = -1
            best_q = -1
            for c in range(n_cand):
                d = pool[c]
                sd = pool_sd[c]
                sdd = pool_sdd[c]
                sdr = 0.0
                for i in range(n):
                    sdr += d[i] * r[i]
                for k in range(n_s):
                    s = s_levels[k]
                    t1 = srr - 2.0 * s * sdr + (s * s) * sdd
                    obar = (sr - s * sd) / nf
                    q = int(math.floor((obar - o_lo) / o_step))
                    if q < 0:
                        q = 0
                    elif q >= n_o:
                        q = n_o - 1
                    o = o_lo + (q + 0.5) * o_step
                    e = t1 + o * ((2.0 * s) * sd - 2.0 * sr + nf * o)
                    if q > 0:
                        o2 = o_lo + (q - 0.5) * o_step
                        e2 = t1 + o2 * ((2.0 * s) * sd - 2.0 * sr + nf * o2)
                        if e2 <= e:
                            e = e2
                            q = q - 1
                    if e < best_e:
                        best_e = e
                        best_c = c
                        best_k = k
                        best_q = q
            out_cand[ri] = best_c
            out_sq[ri] = best_k
            out_oq[ri] = best_q
            out_err[ri] = best_e


def encode_search(
    ranges: np.ndarray,
    pool: np.ndarray,
    s_levels: np.ndarray,
    o_lo: float,
    o_step: float,
    n_o_levels: int,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Find, for every range row, the lexicographically smallest candidate
    (pool row, contrast level, offset level) minimizing the squared error.

    `ranges` is (R, n) and `pool` is (C, n); both must hold integer-valued
    float64 intensities. Returns (candidate, s_level, o_level, error) arrays.
    """
    backend = _check_backend(backend)
    ranges = np.ascontiguousarray(ranges, dtype=np.float64)
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    pool_sd = pool.sum(axis=1)
    pool_sdd = (pool * pool).sum(axis=1)
    n_ranges = ranges.shape[0]
    out_cand = np.empty(n_ranges, dtype=np.int64)
    out_sq = np.empty(n_ranges, dtype=np.int64)
    out_oq = np.empty(n_ranges, dtype=np.int64)
    out_err = np.empty(n_ranges, dtype=np.float64)
    args = (
        ranges, pool, pool_sd, pool_sdd,
        np.ascontiguousarray(s_levels, dtype=np.float64),
        float(o_lo), float(o_step), int(n_o_levels),
        out_cand, out_sq, out_oq, out_err,
    )
    if backend == "numba":
        _encode_search_numba(*args)
    else:
        _encode_search_numpy(*args)
    return out_cand, out_sq, out_oq, out_err


# ---------------------------------------------------------------------------
# decode pass


def _decode_pass_numpy(
    prev: np.ndarray,
    out: np.ndarray,
    dom_r: np.ndarray,
    dom_c: np.ndarray,
    iso: np.ndarray,
    s_hat: np.ndarray,
    o_hat: np.ndarray,
    iso_lut: np.ndarray,
    n: int,
    grid_w: int,
) -> None:
    side = 2 * n
    pf = prev.astype(np.float64)
    for idx in range(dom_r.shape[0]):
        dy = int(dom_r[idx])
        dx = int(dom_c[idx])
        w = pf[dy : dy + side, dx : dx + side]
        quad = w.reshape(n, 2, n, 2).sum(axis=(1, 3)) * 0.25
        contracted = np.sign(quad) * np.floor(np.abs(quad) + 0.5)
        tile = contracted.ravel()[iso_lut[int(iso[idx])]].reshape(n, n)
        v = s_hat[idx] * tile + o_hat[idx]
        v = np.sign(v) * np.floor(np.abs(v) + 0.5)
        np.clip(v, 0.0, 255.0, out=v)
        gy, gx = divmod(idx, grid_w)
        out[gy * n : (gy + 1) * n, gx * n : (gx + 1) * n] = v.astype(np.int64)


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _decode_pass_numba(
        prev, out, dom_r, dom_c, iso, s_hat, o_hat, iso_lut, n, grid_w,
    ):  # pragma: no cover - measured through the dispatcher
        n_entries = dom_r.shape[0]
        for idx in prange(n_entries):
            gy = idx // grid_w
            gx = idx % grid_w
            dy = dom_r[idx]
            dx = dom_c[idx]
            t = iso[idx]
            s = s_hat[idx]
            o = o_hat[idx]
            for i in range(n):
                for j in range(n):
                    sidx = iso_lut[t, i * n + j]
                    si = sidx // n
                    sj = sidx % n
                    ssum = float(
                        prev[dy + 2 * si, dx + 2 * sj]
                        + prev[dy + 2 * si, dx + 2 * sj + 1]
                        + prev[dy + 2 * si + 1, dx + 2 * sj]
                        + prev[dy + 2 * si + 1, dx + 2 * sj + 1]
                    )
                    q = ssum * 0.25
                    d = math.floor(abs(q) + 0.5)
                    if q < 0.0:
                        d = -d
                    v = s * d + o
                    r = math.floor(abs(v) + 0.5)
                    if v < 0.0:
                        r = -r
                    if r < 0.0:
                        r = 0.0
                    elif r > 255.0:
                        r = 255.0
                    out[gy * n + i, gx * n + j] = int(r)


def decode_pass(
    prev: np.ndarray,
    dom_r: np.ndarray,
    dom_c: np.ndarray,
    iso: np.ndarray,
    s_hat: np.ndarray,
    o_hat: np.ndarray,
    iso_lut: np.ndarray,
    n: int,
    grid_w: int,
    backend: str | None = None,
) -> np.ndarray:
    """One decoding sweep: rebuild every range tile from the previous iterate
    (double-buffered). `prev` is an int64 (H, W) raster; returns a new one."""
    backend = _check_backend(backend)
    out = np.empty_like(prev)
    if backend == "numba":
        _decode_pass_numba(
            prev, out, dom_r, dom_c, iso, s_hat, o_hat, iso_lut, n, grid_w
        )
    else:
        _decode_pass_numpy(
            prev, out, dom_r, dom_c, iso, s_hat, o_hat, iso_lut, n, grid_w
        )
    return out
