"""Union-of-affine-subspaces model: k-means clustering plus per-cluster PCA."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, InsufficientDataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineSubspaceModel:
    """Affine subspace ``{offset + basis @ beta}`` with prior variances.

    ``basis`` has orthonormal columns; ``eigenvalues`` are the matching
    covariance eigenvalues in descending order.
    """

    offset: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    cluster_size: int

    @property
    def R(self) -> int:
        return self.offset.shape[0]

    @property
    def D(self) -> int:
        return self.basis.shape[1]

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.R,):
            raise DimensionError(f"vector has shape {v.shape}, model dimension is {self.R}")
        return v

    def project(self, h: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a point onto the affine subspace."""
        h = self._check(h)
        centered = h - self.offset
        return self.offset + self.basis @ (self.basis.T @ centered)

    def project_update(self, dh: np.ndarray) -> np.ndarray:
        """Projection of a direction onto the linear part (no offset)."""
        dh = self._check(dh)
        return self.basis @ (self.basis.T @ dh)

    def residual(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(h, dtype=float) - self.project(h)


def project(model: AffineSubspaceModel, h: np.ndarray) -> np.ndarray:
    return model.project(h)


def project_update(model: AffineSubspaceModel, dh: np.ndarray) -> np.ndarray:
    return model.project_update(dh)


def _sq_distances(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("gr,gr->g", data, data)[:, None]
        - 2.0 * data @ centers.T
        + np.einsum("ir,ir->i", centers, centers)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_plusplus(data: np.ndarray, I: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding (D^2 sampling)."""
    G = data.shape[0]
    centers = np.empty((I, data.shape[1]))
    centers[0] = data[rng.integers(G)]
    closest = _sq_distances(data, centers[:1])[:, 0]
    for i in range(1, I):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(G, p=closest / total)
        else:
            idx = rng.integers(G)
        centers[i] = data[idx]
        closest = np.minimum(closest, _sq_distances(data, centers[i:i + 1])[:, 0])
    return centers


def kmeans_cluster(data: np.ndarray, I: int, seed=None, max_iters: int = 100):
    """Cluster rows of ``data`` into ``I`` groups.

    Returns ``(labels, n_iter)``. Lloyd iterations stop at an assignment
    fixpoint. An empty cluster takes over the sample farthest from its
    current centre. Ties go to the lowest cluster index.
    """
    data = np.asarray(data, dtype=float)
    G = data.shape[0]
    if I < 1 or G < I:
        raise ConfigurationError(f"need G >= I >= 1, got G = {G}, I = {I}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if I == 1:
        return np.zeros(G, dtype=int), 0

    centers = kmeans_plusplus(data, I, rng)
    labels = np.full(G, -1)
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        d2 = _sq_distances(data, centers)
        new_labels = np.argmin(d2, axis=1)
        counts = np.bincount(new_labels, minlength=I)
        for i in np.flatnonzero(counts == 0):
            own = d2[np.arange(G), new_labels]
            # never strip a cluster down to nothing while reseeding
            own[counts[new_labels] <= 1] = -1.0
            g = int(np.argmax(own))
            counts[new_labels[g]] -= 1
            new_labels[g] = i
            counts[i] = 1
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for i in range(I):
            centers[i] = data[labels == i].mean(axis=0)
    return labels, n_iter


def indicator(labels: np.ndarray, I: int) -> np.ndarray:
    """One-hot assignment matrix ``z`` of shape ``(G, I)``."""
    z = np.zeros((labels.size, I), dtype=int)
    z[np.arange(labels.size), labels] = 1
    return z


def _normalize_signs(basis: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def fit_local_model(samples: np.ndarray, D: int) -> AffineSubspaceModel:
    """Mean and top-``D`` covariance eigenpairs of one cluster via thin SVD."""
    samples = np.asarray(samples, dtype=float)
    G_i, R = samples.shape
    if G_i < 2:
        raise InsufficientDataError(f"cluster has {G_i} sample(s); at least 2 are needed")
    if D < 0 or D > min(G_i - 1, R):
        raise ConfigurationError(f"D = {D} exceeds min(G_i - 1, R) = {min(G_i - 1, R)}")
    mean = samples.mean(axis=0)
    _, s, vt = np.linalg.svd(samples - mean, full_matrices=False)
    basis = _normalize_signs(vt[:D].T.copy())
    eigenvalues = s[:D] ** 2 / (G_i - 1)
    return AffineSubspaceModel(mean, basis, eigenvalues, G_i)


@dataclass
class SubspaceUnion:
    """``I`` affine subspace models over a common ``R = P*L*Q`` space."""

    models: list[AffineSubspaceModel]
    P: int
    L: int
    Q: int
    labels: np.ndarray | None = None
    seed: int | None = None
    kmeans_iterations: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for m in self.models:
            if m.R != self.R:
                raise DimensionError(f"model dimension {m.R} differs from union R = {self.R}")

    @property
    def R(self) -> int:
        return self.P * self.L * self.Q

    @property
    def I(self) -> int:
        return len(self.models)

    def assignments(self) -> np.ndarray:
        return indicator(self.labels, self.I)

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, m in enumerate(self.models):
            stem = f"model_{i:03d}"
            m.offset.astype("<f8").tofile(directory / f"{stem}_offset.f64")
            m.basis.astype("<f8").tofile(directory / f"{stem}_basis.f64")
            m.eigenvalues.astype("<f8").tofile(directory / f"{stem}_eigenvalues.f64")
            entries.append({"D": m.D, "G": m.cluster_size, "stem": stem})
        manifest = {
            "format": "lpud-subspace-union/1",
            "I": self.I, "R": self.R, "P": self.P, "L": self.L, "Q": self.Q,
            "seed": self.seed, "kmeans_iterations": self.kmeans_iterations,
            "models": entries, "meta": self.meta,
        }
        if self.labels is not None:
            manifest["labels_file"] = "labels.i64"
            self.labels.astype("<i8").tofile(directory / "labels.i64")
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return directory

    @classmethod
    def load(cls, directory) -> "SubspaceUnion":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        R = manifest["R"]
        models = []
        for e in manifest["models"]:
            stem, D = e["stem"], e["D"]
            offset = np.fromfile(directory / f"{stem}_offset.f64", dtype="<f8")
            basis = np.fromfile(directory / f"{stem}_basis.f64", dtype="<f8").reshape(R, D)
            eig = np.fromfile(directory / f"{stem}_eigenvalues.f64", dtype="<f8")
            models.append(AffineSubspaceModel(offset, basis, eig, e["G"]))
        labels = None
        if "labels_file" in manifest:
            labels = np.fromfile(directory / manifest["labels_file"], dtype="<i8")
        return cls(models, manifest["P"], manifest["L"], manifest["Q"], labels,
                   manifest["seed"], manifest["kmeans_iterations"], manifest.get("meta", {}))


def learn_union(samples: np.ndarray, I: int, D, seed=None, *, P: int = 1, L: int | None = None,
                Q: int = 1, max_iters: int = 100) -> SubspaceUnion:
    """Cluster the training stacks and fit one affine subspace per cluster.

    ``samples`` is a ``(G, R)`` array or a :class:`~lpud.rir.RirDataset`.
    ``D`` is one dimension for all clusters or a sequence of ``I`` values;
    a cluster too small for its ``D`` gets ``D_i = G_i - 1`` and a warning.
    """
    if hasattr(samples, "samples"):
        P, L, Q = samples.P, samples.L, samples.Q
        samples = samples.samples
    samples = np.asarray(samples, dtype=float)
    if L is None:
        L = samples.shape[1] // (P * Q)
    if P * L * Q != samples.shape[1]:
        raise DimensionError(f"samples have {samples.shape[1]} columns, P*L*Q = {P * L * Q}")
    dims = [int(D)] * I if np.isscalar(D) else [int(d) for d in D]
    if len(dims) != I:
        raise ConfigurationError(f"got {len(dims)} subspace dimensions for I = {I} clusters")
    labels, n_iter = kmeans_cluster(samples, I, seed, max_iters)
    models = []
    for i in range(I):
        members = samples[labels == i]
        D_i = dims[i]
        cap = min(members.shape[0] - 1, samples.shape[1])
        if D_i > cap:
            log.warning("cluster %d has %d samples; reducing D from %d to %d",
                        i, members.shape[0], D_i, cap)
            D_i = cap
        models.append(fit_local_model(members, D_i))
    return SubspaceUnion(models, P, L, Q, labels, seed if isinstance(seed, int) else None, n_iter)
