"""Independent reference implementations used to freeze expected values.

Everything here is deliberately brute force: per-pixel full evaluation
instead of tiles, Monte Carlo instead of closed forms, union-find instead of
incremental merging. Tests compare the shipped implementations against these.
"""

from __future__ import annotations

import numpy as np

# Compositing contract constants, restated independently of the library so a
# regression in the library constants cannot silently rewrite the oracle.
ORACLE_ALPHA_CLAMP = 0.99
ORACLE_ALPHA_SKIP = 1.0 / 255.0
ORACLE_T_STOP = 1e-4


def _oracle_order(projected, subset):
    order = np.arange(len(projected))
    if subset is not None:
        members = set(int(i) for i in subset)
        order = np.array([i for i in order if int(projected.index[i]) in members], dtype=np.int64)
    return order


def composite_reference(projected, width, height, background, subset=None):
    """Full evaluation of depth-sorted splats at every pixel, in float64.

    Walks the splats in depth order and evaluates each one over the entire
    image (no tiles, no footprint culling). Numpy arrays stand in for the
    per-pixel scalar state; ``composite_reference_scalar`` is the loop form
    of the same contract and the suite asserts the two agree. Returns a dict
    with color, alpha, max_contributor, max_weight, weight_sum,
    transmittance, and the margin between the best and second-best weights.
    """
    order = _oracle_order(projected, subset)

    a = projected.cov2d[:, 0, 0]
    b = projected.cov2d[:, 0, 1]
    c = projected.cov2d[:, 1, 1]
    det = a * c - b * b
    inv_a = c / det
    inv_b = -b / det
    inv_c = a / det

    bg = np.asarray(background, dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width]
    px = xs + 0.5
    py = ys + 0.5

    color = np.zeros((height, width, 3))
    contributor = np.full((height, width), -1, dtype=np.int64)
    best_w = np.zeros((height, width))
    second_w = np.zeros((height, width))
    weight_sum = np.zeros((height, width))
    t = np.ones((height, width))

    for s in order:
        dx = px - projected.mean2d[s, 0]
        dy = py - projected.mean2d[s, 1]
        power = -0.5 * (inv_a[s] * dx * dx + inv_c[s] * dy * dy) - inv_b[s] * dx * dy
        al = np.minimum(projected.opacity[s] * np.exp(power), ORACLE_ALPHA_CLAMP)
        live = (power <= 0.0) & (al >= ORACLE_ALPHA_SKIP) & (t >= ORACLE_T_STOP)
        w = np.where(live, al * t, 0.0)
        color += w[:, :, None] * projected.color[s]
        weight_sum += w
        better = w > best_w
        second_w = np.where(better, best_w, np.maximum(second_w, w))
        best_w = np.where(better, w, best_w)
        contributor = np.where(better, int(projected.index[s]), contributor)
        t = np.where(live, t * (1.0 - al), t)

    return {
        "color": color + t[:, :, None] * bg,
        "alpha": 1.0 - t,
        "max_contributor": contributor,
        "max_weight": best_w,
        "weight_sum": weight_sum,
        "transmittance": t,
        "margin": best_w - second_w,
    }


def composite_reference_scalar(projected, width, height, background, subset=None):
    """Scalar-loop twin of composite_reference; slow, maximally literal."""
    order = _oracle_order(projected, subset)

    a = projected.cov2d[:, 0, 0]
    b = projected.cov2d[:, 0, 1]
    c = projected.cov2d[:, 1, 1]
    det = a * c - b * b
    inv_a = c / det
    inv_b = -b / det
    inv_c = a / det

    bg = np.asarray(background, dtype=np.float64)
    color = np.zeros((height, width, 3))
    alpha = np.zeros((height, width))
    contributor = np.full((height, width), -1, dtype=np.int64)
    weight = np.zeros((height, width))
    weight_sum = np.zeros((height, width))
    transmittance = np.ones((height, width))
    margin = np.zeros((height, width))

    for py in range(height):
        cy = py + 0.5
        for px in range(width):
            cx = px + 0.5
            t = 1.0
            acc = np.zeros(3)
            best_w = 0.0
            second_w = 0.0
            best_i = -1
            w_total = 0.0
            for s in order:
                dx = cx - projected.mean2d[s, 0]
                dy = cy - projected.mean2d[s, 1]
                power = -0.5 * (inv_a[s] * dx * dx + inv_c[s] * dy * dy) - inv_b[s] * dx * dy
                if power > 0.0:
                    continue
                al = projected.opacity[s] * np.exp(power)
                if al > ORACLE_ALPHA_CLAMP:
                    al = ORACLE_ALPHA_CLAMP
                if al < ORACLE_ALPHA_SKIP:
                    continue
                w = al * t
                acc += w * projected.color[s]
                w_total += w
                if w > best_w:
                    second_w = best_w
                    best_w = w
                    best_i = int(projected.index[s])
                elif w > second_w:
                    second_w = w
                t *= 1.0 - al
                if t < ORACLE_T_STOP:
                    break
            color[py, px] = acc + t * bg
            alpha[py, px] = 1.0 - t
            contributor[py, px] = best_i
            weight[py, px] = best_w
            weight_sum[py, px] = w_total
            transmittance[py, px] = t
            margin[py, px] = best_w - second_w
    return {
        "color": color,
        "alpha": alpha,
        "max_contributor": contributor,
        "max_weight": weight,
        "weight_sum": weight_sum,
        "transmittance": transmittance,
        "margin": margin,
    }


def monte_carlo_projected_cov(position, cov3d, rotation, translation, fx, fy,
                              samples=200_000, seed=0):
    """Sample-based screen-space covariance of a projected 3D Gaussian.

    Draws world-space samples from N(position, cov3d), pushes each through
    the exact pinhole projection, and returns the sample covariance of the
    resulting pixel coordinates. Independent of the linearized Jacobian math.
    """
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(cov3d)
    pts = position + rng.standard_normal((samples, 3)) @ chol.T
    cam = pts @ np.asarray(rotation).T + np.asarray(translation)
    u = fx * cam[:, 0] / cam[:, 2]
    v = fy * cam[:, 1] / cam[:, 2]
    uv = np.stack([u, v], axis=1)
    centered = uv - uv.mean(axis=0)
    return centered.T @ centered / (samples - 1)


class UnionFind:
    """Classic disjoint-set forest with path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def fragment_stream_components(fragment_sets: list, n_gaussians: int) -> list:
    """Partition of touched Gaussians into groups connected by any fragment.

    Two Gaussians are connected when some fragment contains both. Returns a
    list of frozensets covering every Gaussian any fragment mentioned. This
    is what threshold-free incremental merging must reproduce.
    """
    uf = UnionFind(n_gaussians)
    touched = set()
    for fragments in fragment_sets:
        for members in fragments:
            members = list(int(i) for i in members)
            touched.update(members)
            for other in members[1:]:
                uf.union(members[0], other)
    groups: dict[int, set] = {}
    for g in touched:
        groups.setdefault(uf.find(g), set()).add(g)
    return [frozenset(v) for v in groups.values()]


def knn_mean_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Brute-force mean distance from each point to its k nearest others."""
    n = points.shape[0]
    diffs = points[:, None, :] - points[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=2))
    np.fill_diagonal(dists, np.inf)
    sorted_d = np.sort(dists, axis=1)
    return sorted_d[:, :k].mean(axis=1)


def radius_components(points: np.ndarray, radius: float) -> list:
    """Brute-force connected components of the radius graph."""
    n = points.shape[0]
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(points[i] - points[j]) <= radius:
                uf.union(i, j)
    groups: dict[int, list] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return [sorted(v) for v in groups.values()]


def mse_double_loop(a: np.ndarray, b: np.ndarray) -> float:
    """Textbook two-loop mean squared error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    count = 0
    flat_a = a.reshape(-1)
    flat_b = b.reshape(-1)
    for i in range(flat_a.shape[0]):
        diff = flat_a[i] - flat_b[i]
        total += diff * diff
        count += 1
    return total / count


def replay_feature_chain(fragment_features: list) -> np.ndarray:
    """Step-by-step replay of the running feature average, renormalizing
    after every step exactly as the update rule states. Because the stored
    feature is re-normalized between steps, this is NOT the arithmetic mean
    of the inputs; it is the sequence the merge path must reproduce.
    """
    feats = [np.asarray(f, dtype=np.float64) for f in fragment_features]
    current = feats[0].copy()
    for n, new in enumerate(feats[1:], start=1):
        mixed = (n * current + new) / (n + 1)
        current = mixed / np.linalg.norm(mixed)
    return current
