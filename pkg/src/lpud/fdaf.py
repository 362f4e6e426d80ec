"""Constrained frequency-domain adaptive filter with recursive PSD normalization.

The filter coefficients are not stored here. The caller owns ``h`` and
applies the returned update, so any projection it performs between blocks
is seen by the next step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .signal import FirStack, mimo_block_output, stack_transform

PSD_FLOOR = 1e-8


@dataclass(frozen=True)
class FdafParams:
    mu: float = 1.0
    nu: float = 0.9
    delta_max: float = 1.0
    delta_0: float = 1.0

    def __post_init__(self):
        if not 0 <= self.mu <= 1:
            raise ConfigurationError(f"step size mu = {self.mu} outside [0, 1]")
        if not 0 <= self.nu < 1:
            raise ConfigurationError(f"PSD averaging factor nu = {self.nu} outside [0, 1)")
        if self.delta_max < 0 or self.delta_0 <= 0:
            raise ConfigurationError("need delta_max >= 0 and delta_0 > 0")


@dataclass
class FdafState:
    """Per-input PSD estimates ``psd[p, f]`` over the ``L+1`` real-FFT bins."""

    P: int
    L: int
    Q: int
    params: FdafParams
    psd: np.ndarray
    block_index: int = 0

    def zero_filter(self) -> FirStack:
        return FirStack.zeros(self.P, self.L, self.Q)


def fdaf_init(P: int, L: int, Q: int, params: FdafParams | None = None) -> FdafState:
    if min(P, L, Q) < 1:
        raise DimensionError("P, L and Q must be positive")
    params = params or FdafParams()
    return FdafState(P, L, Q, params, np.full((P, L + 1), PSD_FLOOR))


def regularization(psd: np.ndarray, delta_max: float, delta_0: float) -> np.ndarray:
    """``delta_max * exp(-S / (delta_0 * mean_f S))`` per input and bin."""
    mean = psd.mean(axis=-1, keepdims=True)
    # an all-zero spectrum (long silence) gets full regularization
    ratio = np.divide(psd, delta_0 * mean, out=np.zeros_like(psd), where=mean > 0)
    return delta_max * np.exp(-ratio)


def fdaf_step(state: FdafState, history: np.ndarray, y_block: np.ndarray, h: FirStack,
              x_freq: np.ndarray | None = None):
    """One block of adaptation.

    Parameters
    ----------
    state : FdafState
        Updated in place (PSD recursion and block counter).
    history : ndarray, shape (P, 2L)
        Input window whose last ``L`` samples are the current block.
    y_block : ndarray, shape (L, Q)
        Observed output samples of the block.
    h : FirStack
        Current coefficients, used for the a-priori output.
    x_freq : ndarray, optional
        Precomputed ``rfft(history)`` to avoid a second transform.

    Returns
    -------
    dh : FirStack
        Gradient-constrained update, already scaled by ``mu``.
    y_hat : ndarray, shape (L, Q)
        Output of ``h`` for this block.
    """
    P, L, Q = state.P, state.L, state.Q
    if (h.P, h.L, h.Q) != (P, L, Q):
        raise DimensionError(f"filter dims {(h.P, h.L, h.Q)} differ from state dims {(P, L, Q)}")
    history = np.atleast_2d(history)
    if history.shape != (P, 2 * L):
        raise DimensionError(f"history has shape {history.shape}, expected {(P, 2 * L)}")
    y_block = np.asarray(y_block, dtype=float)
    if y_block.size != L * Q:
        raise DimensionError(f"y_block must hold L*Q = {L * Q} samples")
    y_block = y_block.reshape(L, Q)

    if x_freq is None:
        x_freq = np.fft.rfft(history, axis=-1)
    y_hat = mimo_block_output(x_freq, stack_transform(h), L).T
    err = y_block - y_hat

    prm = state.params
    state.psd = prm.nu * state.psd + (1.0 - prm.nu) * np.abs(x_freq) ** 2
    state.block_index += 1
    divisor = state.psd + regularization(state.psd, prm.delta_max, prm.delta_0)

    # error placed in the second half of the 2L window, as in overlap-save
    e_freq = np.fft.rfft(np.concatenate([np.zeros((L, Q)), err]), axis=0).T  # (Q, L+1)
    grad_freq = (np.conj(x_freq) / divisor)[:, None, :] * e_freq[None, :, :]  # (P, Q, L+1)
    grad = np.fft.irfft(grad_freq, n=2 * L, axis=-1)[..., :L]  # gradient constraint
    dh = prm.mu * np.transpose(grad, (0, 2, 1))
    return FirStack(dh.reshape(-1), P, L, Q), y_hat
