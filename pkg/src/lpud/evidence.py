"""Block log-evidence of affine subspace models and its recursive average.

For model ``i`` and output sample ``n`` the evidence is Gaussian with mean
``X(n)^T h_i`` and covariance ``N + sum_r y_ir(n) y_ir(n)^T``, where
``y_ir(n)`` is the input filtered by the ``r``-th scaled eigenfilter
``u_ir * sqrt(d_ir)``. All filtering happens block-wise with overlap-save,
so the ``R x R`` prior covariance is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericalError
from .signal import fir_transform, mimo_block_output
from .subspace import SubspaceUnion


def _stack_spectra(vectors: np.ndarray, P: int, L: int, Q: int) -> np.ndarray:
    """``(..., R)`` vectorized stacks -> ``(..., P, Q, L+1)`` filter spectra."""
    taps = vectors.reshape(vectors.shape[:-1] + (P, L, Q))
    return fir_transform(np.swapaxes(taps, -1, -2), L)


@dataclass(frozen=True)
class EigenfilterBank:
    """Precomputed spectra of the offset filter and the first ``K_i`` eigenfilters.

    ``spectra[i]`` has shape ``(1 + K_i, P, Q, L+1)``; entry 0 is the offset.
    """

    P: int
    L: int
    Q: int
    spectra: tuple
    K: tuple

    @property
    def I(self) -> int:
        return len(self.spectra)


def build_eigenfilter_bank(union: SubspaceUnion, K) -> EigenfilterBank:
    """Transform offsets and scaled eigenvectors ``u * sqrt(d)`` once per model."""
    Ks = [int(K)] * union.I if np.isscalar(K) else [int(k) for k in K]
    if len(Ks) != union.I:
        raise ConfigurationError(f"got {len(Ks)} eigenfilter counts for I = {union.I}")
    spectra = []
    for model, k in zip(union.models, Ks):
        if k < 0 or k > model.D:
            raise ConfigurationError(f"K = {k} outside [0, D = {model.D}]")
        scaled = model.basis[:, :k] * np.sqrt(model.eigenvalues[:k])
        vectors = np.vstack([model.offset[None, :], scaled.T])
        spectra.append(_stack_spectra(vectors, union.P, union.L, union.Q))
    return EigenfilterBank(union.P, union.L, union.Q, tuple(spectra), tuple(Ks))


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise covariance (``Q x Q``, symmetric positive definite)."""

    covariance: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
            raise ConfigurationError("noise covariance must be square and symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("noise covariance must be positive definite") from exc
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def isotropic(cls, variance: float, Q: int) -> "NoiseModel":
        return cls(variance * np.eye(Q))

    @property
    def Q(self) -> int:
        return self.covariance.shape[0]


def _model_outputs(bank: EigenfilterBank, i: int, x_freq: np.ndarray):
    """Mean prediction ``(L, Q)`` and eigenfilter outputs ``(K, L, Q)``."""
    out = mimo_block_output(x_freq, bank.spectra[i], bank.L)  # (1+K, Q, L)
    out = np.swapaxes(out, -1, -2)
    return out[0], out[1:]


def _gaussian_terms(cov: np.ndarray, err: np.ndarray):
    """Per-sample ``log det`` and ``e^T cov^-1 e`` for stacked ``(n, Q, Q)`` covariances."""
    Q = cov.shape[-1]
    if Q == 1:
        r = cov[:, 0, 0]
        if np.any(r <= 0):
            raise NumericalError("evidence covariance is not positive definite")
        return np.log(r), err[:, 0] ** 2 / r
    if Q == 2:
        a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
        det = a * c - b * b
        if np.any(det <= 0) or np.any(a <= 0):
            raise NumericalError("evidence covariance is not positive definite")
        e0, e1 = err[:, 0], err[:, 1]
        quad = (c * e0 * e0 - 2 * b * e0 * e1 + a * e1 * e1) / det
        return np.log(det), quad
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("evidence covariance is not positive definite") from exc
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    z = np.linalg.solve(chol, err[..., None])[..., 0]
    return logdet, np.einsum("nq,nq->n", z, z)


def _check_block(bank: EigenfilterBank, history, y_block, noise: NoiseModel):
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape != (bank.P, 2 * bank.L):
        raise DimensionError(f"history has shape {history.shape}, expected {(bank.P, 2 * bank.L)}")
    y_block = np.asarray(y_block, dtype=float)
    if y_block.size != bank.L * bank.Q:
        raise DimensionError(f"y_block must hold L*Q = {bank.L * bank.Q} samples")
    if noise.Q != bank.Q:
        raise DimensionError(f"noise covariance is {noise.Q}x{noise.Q}, Q = {bank.Q}")
    return history, y_block.reshape(bank.L, bank.Q)


def _evidence(bank, i, x_freq, y_block, noise, diagonal: bool) -> float:
    mean, ycheck = _model_outputs(bank, i, x_freq)
    err = y_block - mean
    if diagonal:
        r = np.diag(noise.covariance)[None, :] + np.einsum("knq,knq->nq", ycheck, ycheck)
        return float(-0.5 * np.sum(np.log(r) + err * err / r))
    cov = noise.covariance[None, :, :] + np.einsum("kna,knb->nab", ycheck, ycheck)
    logdet, quad = _gaussian_terms(cov, err)
    return float(-0.5 * np.sum(logdet + quad))


def block_log_evidence(bank: EigenfilterBank, i: int, history, y_block, noise: NoiseModel,
                       x_freq: np.ndarray | None = None) -> float:
    """Log-evidence of one block under model ``i``, up to a model-independent constant."""
    history, y_block = _check_block(bank, history, y_block, noise)
    if x_freq is None:
        x_freq = np.fft.rfft(history, axis=-1)
    return _evidence(bank, i, x_freq, y_block, noise, diagonal=False)


def block_log_evidence_diag(bank: EigenfilterBank, i: int, history, y_block, noise: NoiseModel,
                            x_freq: np.ndarray | None = None) -> float:
    """Channel-decoupled variant using only the diagonal of the evidence covariance."""
    history, y_block = _check_block(bank, history, y_block, noise)
    if x_freq is None:
        x_freq = np.fft.rfft(history, axis=-1)
    return _evidence(bank, i, x_freq, y_block, noise, diagonal=True)


def block_log_evidences(bank: EigenfilterBank, history, y_block, noise: NoiseModel,
                        diagonal: bool = False, x_freq: np.ndarray | None = None) -> np.ndarray:
    """Evidence of every model, sharing one input transform."""
    history, y_block = _check_block(bank, history, y_block, noise)
    if x_freq is None:
        x_freq = np.fft.rfft(history, axis=-1)
    return np.array([_evidence(bank, i, x_freq, y_block, noise, diagonal) for i in range(bank.I)])


@dataclass
class EvidenceTracker:
    """Recursive average of block log-evidences and the current best model.

    The first update copies the block values instead of blending them with
    an undefined start value. ``best`` is ``None`` until then.
    """

    n_models: int
    forgetting: float = 0.99
    estimates: np.ndarray = field(default=None)
    best: int | None = None

    def __post_init__(self):
        if not 0 <= self.forgetting <= 1:
            raise ConfigurationError(f"forgetting factor {self.forgetting} outside [0, 1]")
        if self.estimates is None:
            self.estimates = np.zeros(self.n_models)

    @property
    def initialized(self) -> bool:
        return self.best is not None

    def update(self, block_values) -> "EvidenceTracker":
        values = np.asarray(block_values, dtype=float)
        if values.shape != (self.n_models,):
            raise DimensionError(f"expected {self.n_models} evidence values, got {values.shape}")
        if self.best is None:
            self.estimates = values.copy()
        else:
            lam = self.forgetting
            self.estimates = lam * self.estimates + (1.0 - lam) * values
        self.best = int(np.argmax(self.estimates))  # first maximum wins ties
        return self


def update_tracker(tracker: EvidenceTracker, block_values) -> EvidenceTracker:
    return tracker.update(block_values)
