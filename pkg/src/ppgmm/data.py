"""
Datasets: CSV ingestion, PCA, node assignment and synthetic generators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import rng_for
from .errors import NonNumeric, ParseError, RankDeficient


@dataclass
class Dataset:
    X: np.ndarray
    feature_names: list = field(default_factory=list)
    labels: np.ndarray | None = None


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=None, drop=(), header=None):
    """Read a numeric table.

    Parameters
    ----------
    path : str or Path
    label_column : str or int, optional
        Column split off into ``Dataset.labels`` (name needs a header).
    drop : iterable of str or int
        Further columns to discard, e.g. an identifier column.
    header : bool, optional
        Whether the first row holds column names. ``None`` detects it: the
        first row is a header iff any of its cells is non-numeric.

    Raises
    ------
    ParseError
        Empty file or ragged rows (with the offending row number).
    NonNumeric
        A kept cell that is not a number (with row and column).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    if header is None:
        header = not all(_is_number(cell) for cell in rows[0])
    names = [c.strip() for c in rows[0]] if header else [str(k) for k in range(len(rows[0]))]
    body = rows[1:] if header else rows
    if not body:
        raise ParseError(f"{path}: no data rows")

    def resolve(col):
        if isinstance(col, int):
            return col
        if col in names:
            return names.index(col)
        raise ParseError(f"{path}: no column named {col!r}")

    label_idx = resolve(label_column) if label_column is not None else None
    dropped = {resolve(c) for c in drop}
    if label_idx is not None:
        dropped.add(label_idx)
    keep = [k for k in range(len(names)) if k not in dropped]

    X = np.empty((len(body), len(keep)))
    labels = [] if label_idx is not None else None
    first = 2 if header else 1
    for r, row in enumerate(body):
        if len(row) != len(names):
            raise ParseError(f"{path}: expected {len(names)} fields, got {len(row)}", row=r + first)
        for out_k, k in enumerate(keep):
            cell = row[k].strip()
            try:
                X[r, out_k] = float(cell)
            except ValueError:
                raise NonNumeric(f"{path}: non-numeric value {cell!r}", row=r + first,
                                 column=names[k]) from None
        if labels is not None:
            cell = row[label_idx].strip()
            labels.append(float(cell) if _is_number(cell) else cell)
    if not np.all(np.isfinite(X)):
        r, k = np.argwhere(~np.isfinite(X))[0]
        raise NonNumeric(f"{path}: non-finite value", row=int(r) + first, column=names[keep[k]])
    return Dataset(X, [names[k] for k in keep], None if labels is None else np.asarray(labels))


def write_csv(path, X, names=None, fmt="%.17g"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if names is not None:
            fh.write(",".join(names) + "\n")
        for row in X:
            fh.write(",".join(fmt % v for v in row) + "\n")


@dataclass
class PcaResult:
    projected: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def reconstruct(self, projected=None):
        Z = self.projected if projected is None else projected
        return (Z @ self.components) * self.scale + self.mean


def pca(X, k, standardize=False):
    """Project onto the top-``k`` eigenvectors of the sample covariance.

    Each component is sign-fixed so that its largest-magnitude entry is
    positive, which makes the projection reproducible.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two instances")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}]")
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1) if standardize else np.ones(d)
    if standardize:
        scale = np.where(scale > 0, scale, 1.0)
    Xc = (X - mean) / scale
    cov = Xc.T @ Xc / (n - 1)
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    total = w.sum()
    if np.sum(w > 1e-12 * max(total, np.finfo(float).tiny)) < k:
        raise RankDeficient(f"fewer than {k} nonzero eigenvalues")
    comps = V[:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaResult(Xc @ comps.T, comps, w[:k], w[:k] / total, mean, scale)


def partition(n_points, n_nodes):
    """Contiguous blocks whose sizes differ by at most one, in node order."""
    if n_points < n_nodes:
        raise ValueError("every node needs at least one point")
    return np.array_split(np.arange(n_points), n_nodes)


def synthetic_private_data(n, c, seed=None, trials=None, normalize="components"):
    """Scalar private inputs and uniform-then-normalised responsibilities.

    Returns ``x`` of shape (n,) and ``resp`` of shape (n, c); with
    ``trials`` given, a leading trial axis is added to both. Responsibilities
    are normalised across components per node (``"components"``) or across
    nodes per component (``"nodes"``).
    """
    if n < 1 or c < 1:
        raise ValueError("need n >= 1 and c >= 1")
    rng = rng_for(seed, "private-data")
    lead = () if trials is None else (trials,)
    x = rng.standard_normal(lead + (n,))
    u = rng.uniform(size=lead + (n, c))
    if normalize == "components":
        resp = u / u.sum(axis=-1, keepdims=True)
    elif normalize == "nodes":
        resp = u / u.sum(axis=-2, keepdims=True)
    else:
        raise ValueError(f"unknown normalisation {normalize!r}")
    return x, resp


def synthetic_gmm_data(params, count, seed=None):
    """Ancestral sampling: component ~ Categorical(beta), point ~ N(mu_j, sigma_j).

    Returns the (count, d) sample and the 0-based component labels.
    """
    rng = rng_for(seed, "gmm-data")
    labels = rng.choice(params.c, size=count, p=params.beta)
    z = rng.standard_normal((count, params.d))
    X = np.empty((count, params.d))
    for j in range(params.c):
        sel = labels == j
        L = np.linalg.cholesky(params.sigma[j])
        X[sel] = params.mu[j] + z[sel] @ L.T
    return X, labels


# Column layout of the UCI Parkinsons voice table (identifier, 22 voice
# measures, and the 0/1 status column in 18th position).
PARKINSONS_COLUMNS = [
    "name", "MDVP:Fo(Hz)", "MDVP:Fhi(Hz)", "MDVP:Flo(Hz)", "MDVP:Jitter(%)",
    "MDVP:Jitter(Abs)", "MDVP:RAP", "MDVP:PPQ", "Jitter:DDP", "MDVP:Shimmer",
    "MDVP:Shimmer(dB)", "Shimmer:APQ3", "Shimmer:APQ5", "MDVP:APQ", "Shimmer:DDA",
    "NHR", "HNR", "status", "RPDE", "DFA", "spread1", "spread2", "D2", "PPE",
]

# rough per-class (healthy, PD) means and a shared spread per feature
_STANDIN_PROFILE = [
    (181.9, 145.2, 30.0), (223.6, 188.4, 80.0), (145.2, 106.9, 40.0),
    (0.0039, 0.0070, 0.004), (2.3e-5, 5.1e-5, 3.0e-5), (0.0019, 0.0038, 0.002),
    (0.0021, 0.0039, 0.002), (0.0058, 0.0113, 0.006), (0.0176, 0.0337, 0.015),
    (0.163, 0.321, 0.15), (0.0095, 0.0177, 0.008), (0.0108, 0.0205, 0.009),
    (0.0133, 0.0278, 0.013), (0.0285, 0.0532, 0.025), (0.0115, 0.0292, 0.03),
    (24.7, 20.97, 4.0), (0.443, 0.517, 0.10), (0.696, 0.725, 0.05),
    (-6.76, -5.33, 0.9), (0.160, 0.248, 0.07), (2.15, 2.46, 0.35), (0.123, 0.234, 0.08),
]


def parkinsons_standin(seed=None, n_healthy=48, n_pd=147):
    """Synthetic table shaped like the Parkinsons voice data (195 x 22 + name + status).

    Two classes with per-feature means and spreads loosely following the
    published table, plus a shared latent factor so the features correlate.
    Values are clipped positive where the real measurement is positive.
    """
    rng = rng_for(seed, "parkinsons-standin")
    status = np.r_[np.zeros(n_healthy, int), np.ones(n_pd, int)]
    rng.shuffle(status)
    n = status.size
    prof = np.asarray(_STANDIN_PROFILE)
    latent = rng.standard_normal(n)
    noise = rng.standard_normal((n, prof.shape[0]))
    mix = 0.6 * latent[:, None] + 0.8 * noise
    X = np.where(status[:, None] == 1, prof[:, 1], prof[:, 0]) + prof[:, 2] * mix
    positive = prof[:, 0] > 0
    X[:, positive] = np.maximum(X[:, positive], 0.05 * prof[positive, 0])
    names = [f"phon_S{k // 6 + 1:02d}_{k % 6 + 1}" for k in range(n)]
    return names, X, status


def write_parkinsons_standin(path, seed=None):
    names, X, status = parkinsons_standin(seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PARKINSONS_COLUMNS)
        for nm, row, st in zip(names, X, status):
            cells = [f"{v:.6g}" for v in row]
            w.writerow([nm] + cells[:16] + [str(st)] + cells[16:])
    return Path(path)


def load_parkinsons(path):
    """Parkinsons-layout CSV: drop ``name``, split off ``status``."""
    return load_csv(path, label_column="status", drop=("name",))


def parkinsons_pca(path, k=2, standardize=False):
    """The GMM input used for the output-correctness comparison: PCA(k) of the voice features."""
    ds = load_parkinsons(path)
    return pca(ds.X, k, standardize=standardize)
