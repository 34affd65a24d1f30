"""Independent reference implementations used as test oracles.

Each one is written for clarity, not speed, and shares no code with the
library beyond plain data types.
"""

import math
from fractions import Fraction

import numpy as np

O, F, OF = frozenset("O"), frozenset("F"), frozenset("OF")


def dempster_enum(a, b):
    """Dempster's rule by enumerating all nine focal-set pairs."""
    ma = {O: a[0], F: a[1], OF: a[2]}
    mb = {O: b[0], F: b[1], OF: b[2]}
    out = {O: 0.0, F: 0.0, OF: 0.0}
    conflict = 0.0
    for sa, va in ma.items():
        for sb, vb in mb.items():
            inter = sa & sb
            if inter:
                out[inter] += va * vb
            else:
                conflict += va * vb
    return tuple(out[s] / (1.0 - conflict) for s in (O, F, OF))


def remap_oracle(cells, res, from_pose, to_pose, fill):
    """Per-cell nearest-neighbour remap with explicit trigonometry."""
    h, w = cells.shape[:2]
    out = np.empty_like(cells)
    fx, fy, fh = from_pose
    tx, ty, th = to_pose
    for r in range(h):
        for c in range(w):
            # destination cell center in the to-frame
            x = (c + 0.5) * res - w * res / 2
            y = (r + 0.5) * res - h * res / 2
            # to-frame -> world
            wx = tx + math.cos(th) * x - math.sin(th) * y
            wy = ty + math.sin(th) * x + math.cos(th) * y
            # world -> from-frame
            dx, dy = wx - fx, wy - fy
            sx = math.cos(fh) * dx + math.sin(fh) * dy
            sy = -math.sin(fh) * dx + math.cos(fh) * dy
            sc = math.floor((sx + w * res / 2) / res)
            sr = math.floor((sy + h * res / 2) / res)
            out[r, c] = cells[sr, sc] if 0 <= sr < h and 0 <= sc < w else fill
    return out


def flood_fill_components(mask, connectivity):
    """Components by recursive flood fill, ordered by smallest (row, col)."""
    import sys

    h, w = mask.shape
    seen = np.zeros_like(mask, bool)
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10 * h * w + 100))

    def fill(r, c, acc):
        seen[r, c] = True
        acc.add((r, c))
        for dr, dc in nbrs:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                fill(rr, cc, acc)

    comps = []
    try:
        for r in range(h):
            for c in range(w):
                if mask[r, c] and not seen[r, c]:
                    acc = set()
                    fill(r, c, acc)
                    comps.append(acc)
    finally:
        sys.setrecursionlimit(old)
    return comps


def image_similarity_brute(a, b, n_classes=3):
    """O(N^2) all-pairs image similarity with the W + H absent-class penalty."""
    h, w = a.shape

    def directed(x, y, c):
        px = np.argwhere(x == c)
        py = np.argwhere(y == c)
        if len(px) == 0:
            return 0.0
        if len(py) == 0:
            return float(w + h)
        total = 0.0
        for p in px:
            total += min(abs(int(p[0]) - int(q[0])) + abs(int(p[1]) - int(q[1])) for q in py)
        return total / len(px)

    return sum(directed(a, b, c) + directed(b, a, c) for c in range(n_classes))


def crossed_cells_exact(origin, target):
    """Cells whose interior the open segment between two cell centers passes through.

    Exact rational arithmetic: every crossing of a grid line is a parameter
    value in (0, 1); the midpoint of each gap between consecutive crossings
    identifies one traversed cell. A crossing through a corner is a single
    parameter value, so side cells it only touches are not included.
    """
    (r0, c0), (r1, c1) = origin, target
    x0, y0 = Fraction(2 * c0 + 1, 2), Fraction(2 * r0 + 1, 2)
    x1, y1 = Fraction(2 * c1 + 1, 2), Fraction(2 * r1 + 1, 2)
    ts = {Fraction(0), Fraction(1)}
    for a0, a1 in ((x0, x1), (y0, y1)):
        if a0 != a1:
            lo, hi = sorted((a0, a1))
            for k in range(math.ceil(lo), math.floor(hi) + 1):
                t = (k - a0) / (a1 - a0)
                if 0 < t < 1:
                    ts.add(t)
    ts = sorted(ts)
    cells = []
    for ta, tb in zip(ts, ts[1:]):
        tm = (ta + tb) / 2
        cell = (math.floor(y0 + tm * (y1 - y0)), math.floor(x0 + tm * (x1 - x0)))
        cells.append(cell)
    return [c for c in cells if c != tuple(origin) and c != tuple(target)]


def supersampled_cells(origin, target, res, step_fraction=0.01):
    """Cells containing points sampled every ``step_fraction * res`` along the segment."""
    (r0, c0), (r1, c1) = origin, target
    x0, y0 = (c0 + 0.5) * res, (r0 + 0.5) * res
    x1, y1 = (c1 + 0.5) * res, (r1 + 0.5) * res
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(1, math.ceil(length / (step_fraction * res)))
    f = np.arange(n + 1) / n
    xs = x0 + f * (x1 - x0)
    ys = y0 + f * (y1 - y0)
    cells = set(zip(np.floor(ys / res).astype(int).tolist(), np.floor(xs / res).astype(int).tolist()))
    cells.discard(tuple(origin))
    cells.discard(tuple(target))
    return cells


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def patch_features(classes, rgm, cell, k):
    """Direct patch walk: 3 one-hot class channels + RGM per position, bounds-checked."""
    h, w = classes.shape
    r0, c0 = cell
    out = []
    for dr in range(-k, k + 1):
        for dc in range(-k, k + 1):
            r, c = r0 + dr, c0 + dc
            if 0 <= r < h and 0 <= c < w:
                one_hot = [0.0, 0.0, 0.0]
                one_hot[int(classes[r, c])] = 1.0
                out.extend(one_hot + [float(rgm[r, c])])
            else:
                out.extend([0.0, 0.0, 1.0, 0.0])
    return out


def mse_loop(a, b, mask=None):
    total, n = 0.0, 0
    for r in range(a.shape[0]):
        for c in range(a.shape[1]):
            if mask is None or mask[r, c]:
                total += (a[r, c] - b[r, c]) ** 2
                n += 1
    return total / n if n else 0.0


def iou_sets(pred, truth):
    """(static, dynamic, mean) IoU by explicit set construction."""
    h, w = pred.shape
    cells = [(r, c) for r in range(h) for c in range(w)]
    pd = {x for x in cells if pred[x]}
    td = {x for x in cells if truth[x]}
    ps = set(cells) - pd
    ts = set(cells) - td

    def ratio(a, b):
        u = a | b
        return 1.0 if not u else len(a & b) / len(u)

    s, d = ratio(ps, ts), ratio(pd, td)
    return s, d, (s + d) / 2


def ray_segment_range(ox, oy, angle, p, q):
    """Distance along a ray to a segment, or None (closed-form 2x2 solve)."""
    dx, dy = math.cos(angle), math.sin(angle)
    ex, ey = q[0] - p[0], q[1] - p[1]
    den = dx * (-ey) - dy * (-ex)
    if abs(den) < 1e-15:
        return None
    rx, ry = p[0] - ox, p[1] - oy
    t = (rx * (-ey) - ry * (-ex)) / den
    u = (dx * ry - dy * rx) / den
    if t >= 0 and 0 <= u <= 1:
        return t
    return None


def grow_distance(present):
    """L1 distance to the nearest True cell by repeated 4-neighbour growth."""
    dist = np.where(present, 0, -1)
    front = present.copy()
    d = 0
    while (dist < 0).any():
        d += 1
        grown = front.copy()
        grown[1:] |= front[:-1]
        grown[:-1] |= front[1:]
        grown[:, 1:] |= front[:, :-1]
        grown[:, :-1] |= front[:, 1:]
        dist[grown & (dist < 0)] = d
        front = grown
    return dist


def image_similarity_growth(a, b, n_classes=3):
    """Image similarity with distance fields from :func:`grow_distance`."""
    h, w = a.shape

    def directed(x, y, c):
        if not (x == c).any():
            return 0.0
        if not (y == c).any():
            return float(w + h)
        return float(grow_distance(y == c)[x == c].mean())

    return sum(directed(a, b, c) + directed(b, a, c) for c in range(n_classes))
