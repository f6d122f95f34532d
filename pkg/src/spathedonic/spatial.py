"""Distances, geographic clustering, spatial weights and cluster-validity tests."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import distance

from .errors import CoincidentPointsError, DataError, InfeasibleError

EARTH_RADIUS_KM = 6371.0088


def point_distance(p, ref, metric="degree_euclidean"):
    """Distance from point(s) ``p`` to ``ref``; both given as (latitude, longitude).

    ``degree_euclidean`` returns sqrt(dlat**2 + dlon**2) in degrees,
    ``haversine_km`` the great-circle distance in kilometres.  ``p`` may be a
    single coordinate pair or an (n, 2) array.
    """
    p = np.asarray(p, dtype=float)
    ref = np.asarray(ref, dtype=float)
    lat, lon = p[..., 0], p[..., 1]
    if metric == "degree_euclidean":
        out = np.hypot(lat - ref[0], lon - ref[1])
    elif metric == "haversine_km":
        out = _haversine(lat, lon, ref[0], ref[1])
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return float(out) if out.ndim == 0 else out


def _haversine(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def pairwise_distances(coords, metric="euclidean"):
    """Dense (n, n) distance matrix.

    ``euclidean`` (alias ``degree_euclidean``) works on any coordinate
    columns; ``haversine_km`` expects (latitude, longitude).
    """
    x = np.asarray(coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if metric in ("euclidean", "degree_euclidean"):
        return distance.cdist(x, x)
    if metric == "haversine_km":
        return _haversine(x[:, None, 0], x[:, None, 1], x[None, :, 0], x[None, :, 1])
    raise ValueError(f"unknown metric {metric!r}")


# --------------------------------------------------------------------------
# clustering

@dataclass(frozen=True)
class ClusterAssignment:
    """Flat grouping of observations.

    ``labels`` run 1..k in order of first appearance.  ``history`` holds the
    total within-cluster sum of squares after each Lloyd iteration (k-means
    only).
    """

    labels: np.ndarray
    k: int
    centroids: np.ndarray | None = None
    within_ss: float | None = None
    history: tuple = ()
    iterations: int = 0
    converged: bool = True

    def sizes(self):
        return np.bincount(self.labels, minlength=self.k + 1)[1:]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["leaf_id", "label"])
            w.writerows((i, int(lab)) for i, lab in enumerate(self.labels))


def _relabel(raw):
    """Map arbitrary labels to 1..k in order of first appearance."""
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    codes = np.empty(len(first), dtype=np.int64)
    codes[order] = np.arange(1, len(first) + 1)
    _, inverse = np.unique(raw, return_inverse=True)
    return codes[inverse]


def _summarize(x, labels, k):
    centroids = np.vstack([x[labels == c].mean(axis=0) for c in range(1, k + 1)])
    within = float(((x - centroids[labels - 1]) ** 2).sum())
    return centroids, within


def _sq_dist(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)


def kmeans(coords, k, seed=0, max_iter=100) -> ClusterAssignment:
    """Lloyd's k-means with seeded farthest-point initialization.

    The first centre is drawn uniformly with ``np.random.default_rng(seed)``;
    each further centre is the point farthest from its nearest chosen
    centre.  Ties go to the lowest index, both when seeding and when
    assigning points.  A cluster that empties is reseeded with the point
    farthest from its own centroid.
    """
    x = np.asarray(coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if k < 1:
        raise InfeasibleError("k must be at least 1")
    n_distinct = len(np.unique(x, axis=0))
    if k > n_distinct:
        raise InfeasibleError(f"k={k} exceeds the {n_distinct} distinct points")

    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    nearest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, ((x - x[nxt]) ** 2).sum(axis=1))
    centers = x[chosen].copy()

    labels = np.argmin(_sq_dist(x, centers), axis=1)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        labels = _fill_empty(x, labels, k)
        centers = np.vstack([x[labels == c].mean(axis=0) for c in range(k)])
        history.append(float(((x - centers[labels]) ** 2).sum()))
        new = np.argmin(_sq_dist(x, centers), axis=1)
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new

    final = _relabel(labels)
    centroids, within = _summarize(x, final, k)
    return ClusterAssignment(final, k, centroids, within, tuple(history), it, converged)


def _fill_empty(x, labels, k):
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        counts = np.bincount(labels, minlength=k)
        centers = np.vstack([x[labels == j].mean(axis=0) if counts[j] else x[0]
                             for j in range(k)])
        spread = ((x - centers[labels]) ** 2).sum(axis=1)
        spread[counts[labels] < 2] = -1.0
        labels[int(np.argmax(spread))] = c
    return labels


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge history.

    Row ``s`` of ``merges`` is (left node, right node, height, merged size).
    Leaves are nodes 0..n-1; the cluster formed at step ``s`` is node n+s.
    For Ward linkage heights are on the squared-Euclidean scale.
    """

    merges: np.ndarray
    n: int
    linkage: str
    points: np.ndarray | None = field(default=None, repr=False)

    @property
    def heights(self):
        return self.merges[:, 2]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "left", "right", "height", "size"])
            for s, (a, b, h, size) in enumerate(self.merges, start=1):
                w.writerow([s, int(a), int(b), repr(float(h)), int(size)])


def hclust(coords, linkage="ward") -> Dendrogram:
    """Agglomerative clustering with Lance-Williams updates.

    ``complete`` uses Euclidean distances and d(k, i+j) = max(d(k,i), d(k,j)).
    ``ward`` works on squared Euclidean distances with
    d(k, i+j) = [(n_i+n_k) d(k,i) + (n_j+n_k) d(k,j) - n_k d(i,j)] / (n_i+n_j+n_k).
    At each step the closest pair is merged; ties go to the pair that comes
    first in row-major order.
    """
    if linkage not in ("ward", "complete"):
        raise ValueError(f"unknown linkage {linkage!r}")
    x = np.asarray(coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise DataError("hierarchical clustering needs at least two observations")

    d = pairwise_distances(x)
    if linkage == "ward":
        d = d ** 2
    np.fill_diagonal(d, np.inf)
    size = np.ones(n)
    node = np.arange(n)
    merges = np.empty((n - 1, 4))
    for step in range(n - 1):
        flat = int(np.argmin(d))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        h = d[i, j]
        ni, nj = size[i], size[j]
        merges[step] = (min(node[i], node[j]), max(node[i], node[j]), h, ni + nj)
        if linkage == "complete":
            row = np.maximum(d[i], d[j])
        else:
            nk = size
            row = ((ni + nk) * d[i] + (nj + nk) * d[j] - nk * h) / (ni + nj + nk)
        row[np.isinf(d[i]) | np.isinf(d[j])] = np.inf
        d[i, :] = row
        d[:, i] = row
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        size[i] = ni + nj
        node[i] = n + step
    return Dendrogram(merges, n, linkage, x)


def cut_dendrogram(dend: Dendrogram, groups: int) -> ClusterAssignment:
    """Flat clusters obtained by undoing the last ``groups - 1`` merges."""
    n = dend.n
    if not 1 <= groups <= n:
        raise ValueError(f"groups must be in 1..{n}, got {groups}")
    parent = np.arange(2 * n - 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step in range(n - groups):
        a, b = int(dend.merges[step, 0]), int(dend.merges[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    labels = _relabel(np.array([find(i) for i in range(n)]))
    centroids = within = None
    if dend.points is not None:
        centroids, within = _summarize(dend.points, labels, groups)
    return ClusterAssignment(labels, groups, centroids, within)


# --------------------------------------------------------------------------
# spatial weights

@dataclass(frozen=True)
class SpatialWeightMatrix:
    matrix: np.ndarray
    standardized: bool
    cutoff: float
    isolated: tuple = ()

    @property
    def n(self):
        return self.matrix.shape[0]

    def lag(self, values):
        return self.matrix @ np.asarray(values, dtype=float)

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()[:16]

    @property
    def warnings(self):
        if not self.isolated:
            return ()
        return (f"{len(self.isolated)} observation(s) have no neighbour within the cutoff",)


def build_weights(coords, cutoff=None, standardize=True, metric="euclidean") -> SpatialWeightMatrix:
    """Inverse-distance weights with a distance band.

    w_ij = 1/d_ij for 0 < d_ij <= cutoff and 0 otherwise.  ``cutoff``
    defaults to the median off-diagonal pairwise distance.  Rows are
    divided by their sums when ``standardize`` is set; rows with no
    neighbour stay zero and are listed in ``isolated``.
    """
    d = pairwise_distances(coords, metric)
    n = d.shape[0]
    iu = np.triu_indices(n, 1)
    coincident = np.flatnonzero(d[iu] == 0)
    if coincident.size:
        raise CoincidentPointsError(list(zip(iu[0][coincident], iu[1][coincident])))
    if cutoff is None:
        cutoff = float(np.median(d[iu])) if n > 1 else 1.0
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    w = np.zeros_like(d)
    band = (d <= cutoff)
    np.fill_diagonal(band, False)
    w[band] = 1.0 / d[band]
    rowsum = w.sum(axis=1)
    isolated = tuple(int(i) for i in np.flatnonzero(rowsum == 0))
    if standardize:
        nz = rowsum > 0
        w[nz] /= rowsum[nz, None]
    return SpatialWeightMatrix(w, bool(standardize), float(cutoff), isolated)


# --------------------------------------------------------------------------
# cluster validity

@dataclass(frozen=True)
class AnovaResult:
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    F: float
    p_F: float
    bartlett_chi2: float | None
    df_b: int
    p_b: float | None
    note: str = ""

    @property
    def ms_between(self):
        return self.ss_between / self.df_between

    @property
    def ms_within(self):
        return self.ss_within / self.df_within

    def to_dict(self):
        d = dict(vars(self))
        d["ms_between"], d["ms_within"] = self.ms_between, self.ms_within
        return d


def anova_f(ss_between, df_between, ss_within, df_within):
    """F statistic and upper-tail p-value from the ANOVA sums of squares."""
    msw = ss_within / df_within
    F = (ss_between / df_between) / msw if msw > 0 else np.inf
    return float(F), float(stats.f.sf(F, df_between, df_within))


def _groups(values, labels):
    values = np.asarray(values, dtype=float)
    labels = np.asarray(getattr(labels, "labels", labels))
    if values.shape != labels.shape:
        raise DataError("values and labels differ in length")
    keep = ~np.isnan(values)
    values, labels = values[keep], labels[keep]
    return [values[labels == g] for g in np.unique(labels)]


def bartlett(values, labels):
    """Bartlett's equal-variance statistic; returns (chi2, df, p)."""
    groups = _groups(values, labels)
    k = len(groups)
    if k < 2:
        raise DataError("Bartlett's test needs at least two groups")
    sizes = np.array([len(g) for g in groups], dtype=float)
    if (sizes < 2).any():
        raise DataError("Bartlett's test is undefined for a group with fewer than 2 observations")
    var = np.array([g.var(ddof=1) for g in groups])
    if (var == 0).any():
        raise DataError("Bartlett's test is undefined when a group has zero variance")
    N = sizes.sum()
    pooled = ((sizes - 1) * var).sum() / (N - k)
    num = (N - k) * np.log(pooled) - ((sizes - 1) * np.log(var)).sum()
    c = 1 + ((1 / (sizes - 1)).sum() - 1 / (N - k)) / (3 * (k - 1))
    chi2 = float(num / c)
    return chi2, k - 1, float(stats.chi2.sf(chi2, k - 1))


def oneway_anova_bartlett(values, groups) -> AnovaResult:
    """One-way ANOVA of ``values`` across cluster groups, with Bartlett's test.

    ``groups`` is a :class:`ClusterAssignment` or a label vector.  When
    Bartlett's statistic is undefined the F test is still returned and the
    reason is stored in ``note``.
    """
    parts = _groups(values, groups)
    k = len(parts)
    if k < 2:
        raise DataError("ANOVA needs at least two groups")
    allv = np.concatenate(parts)
    N = allv.size
    grand = allv.mean()
    ssb = float(sum(len(g) * (g.mean() - grand) ** 2 for g in parts))
    ssw = float(sum(((g - g.mean()) ** 2).sum() for g in parts))
    F, pF = anova_f(ssb, k - 1, ssw, N - k)
    try:
        chi2, dfb, pb = bartlett(allv, np.concatenate([np.full(len(g), i) for i, g in enumerate(parts)]))
        note = ""
    except DataError as exc:
        chi2, dfb, pb, note = None, k - 1, None, str(exc)
    return AnovaResult(ssb, ssw, k - 1, N - k, F, pF, chi2, dfb, pb, note)
