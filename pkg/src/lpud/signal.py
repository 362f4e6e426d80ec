"""Signal plumbing: buffers, MIMO FIR layout, overlap-save convolution, excitation.

Layout convention
-----------------
A MIMO transmission matrix ``H`` has shape ``(P*L, Q)``: row ``p*L + l`` holds
tap ``l`` of every filter fed by input ``p``, column ``q`` is output ``q``. The
parameter vector is ``vec(H^T)``, which places the coefficient of
``(p, l, q)`` at index ``q + Q*(l + L*p)``. In numpy terms this is simply
``H.ravel()`` (C order) or, equivalently, an array of shape ``(P, L, Q)``
flattened.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from .errors import ConfigurationError, DimensionError, IngestionError


@dataclass(frozen=True)
class MultichannelSignal:
    """Equal-length channels sampled at ``sample_rate`` Hz.

    ``data`` has shape ``(n_channels, n_samples)``.
    """

    data: np.ndarray
    sample_rate: float

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if data.ndim != 2:
            raise DimensionError(f"expected (channels, samples), got shape {data.shape}")
        if not self.sample_rate > 0:
            raise ConfigurationError("sample_rate must be positive")
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> list[np.ndarray]:
        return list(self.data)


@dataclass(frozen=True)
class FirStack:
    """Vectorized MIMO FIR filter bank of ``P`` inputs, ``L`` taps, ``Q`` outputs."""

    coeffs: np.ndarray
    P: int
    L: int
    Q: int

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if min(self.P, self.L, self.Q) < 1:
            raise DimensionError("P, L and Q must be positive")
        if coeffs.size != self.P * self.L * self.Q:
            raise DimensionError(
                f"coeffs has {coeffs.size} entries, expected P*L*Q = {self.P * self.L * self.Q}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def R(self) -> int:
        return self.P * self.L * self.Q

    @classmethod
    def zeros(cls, P: int, L: int, Q: int) -> "FirStack":
        return cls(np.zeros(P * L * Q), P, L, Q)

    @classmethod
    def from_taps(cls, taps: np.ndarray) -> "FirStack":
        """Build from an array of shape ``(P, L, Q)``."""
        taps = np.asarray(taps, dtype=float)
        if taps.ndim != 3:
            raise DimensionError(f"taps must have shape (P, L, Q), got {taps.shape}")
        P, L, Q = taps.shape
        return cls(taps.reshape(-1), P, L, Q)

    def taps(self) -> np.ndarray:
        """View of the coefficients with shape ``(P, L, Q)``."""
        return self.coeffs.reshape(self.P, self.L, self.Q)

    def index(self, p: int, l: int, q: int) -> int:
        return q + self.Q * (l + self.L * p)

    def with_coeffs(self, coeffs: np.ndarray) -> "FirStack":
        return FirStack(coeffs, self.P, self.L, self.Q)


def vec_fir(H: np.ndarray, P: int, L: int, Q: int) -> FirStack:
    """Vectorize a ``(P*L, Q)`` transmission matrix as ``vec(H^T)``."""
    H = np.asarray(H, dtype=float)
    if H.shape != (P * L, Q):
        raise DimensionError(f"H has shape {H.shape}, expected {(P * L, Q)}")
    return FirStack(H.reshape(-1).copy(), P, L, Q)


def unvec_fir(fir: FirStack) -> np.ndarray:
    """Inverse of :func:`vec_fir`; returns the ``(P*L, Q)`` matrix."""
    return fir.coeffs.reshape(fir.P * fir.L, fir.Q).copy()


def input_vector(x: np.ndarray, n: int, L: int) -> np.ndarray:
    """Stacked regressor ``x(n)`` of length ``P*L``, zeros before time 0.

    ``x`` has shape ``(P, N)``; the result is
    ``[x_1(n), ..., x_1(n-L+1), x_2(n), ...]``.
    """
    x = np.atleast_2d(x)
    P = x.shape[0]
    out = np.zeros((P, L))
    lo = max(0, n - L + 1)
    seg = x[:, lo:n + 1][:, ::-1]
    out[:, :seg.shape[1]] = seg
    return out.reshape(-1)


def fir_transform(taps: np.ndarray, L: int | None = None) -> np.ndarray:
    """Zero-pad ``L``-tap filters (last axis) to ``2L`` and take the real FFT."""
    taps = np.asarray(taps, dtype=float)
    if L is None:
        L = taps.shape[-1]
    if taps.shape[-1] != L:
        raise DimensionError(f"filter has {taps.shape[-1]} taps, expected {L}")
    return np.fft.rfft(taps, n=2 * L, axis=-1)


def overlap_save_convolve(history: np.ndarray, fir_freq: np.ndarray) -> np.ndarray:
    """Filter one block with overlap-save.

    Parameters
    ----------
    history : ndarray, shape (..., 2L)
        The most recent ``2L`` input samples, oldest first.
    fir_freq : ndarray, shape (..., L+1)
        ``2L``-point real FFT of the zero-padded ``L``-tap filter
        (see :func:`fir_transform`). Broadcasts against ``history``.

    Returns
    -------
    ndarray, shape (..., L)
        The last ``L`` samples of the linear convolution.
    """
    history = np.asarray(history, dtype=float)
    fir_freq = np.asarray(fir_freq)
    n_fft = history.shape[-1]
    if n_fft % 2:
        raise DimensionError("history window must have even length 2L")
    L = n_fft // 2
    if fir_freq.shape[-1] != L + 1:
        raise DimensionError(
            f"filter transform has {fir_freq.shape[-1]} bins, expected {L + 1} for 2L = {n_fft}"
        )
    out = np.fft.irfft(np.fft.rfft(history, axis=-1) * fir_freq, n=n_fft, axis=-1)
    return out[..., L:]


def mimo_block_output(x_freq: np.ndarray, fir_freq: np.ndarray, L: int) -> np.ndarray:
    """Block output of a MIMO filter given pre-transformed inputs.

    ``x_freq`` is ``(P, L+1)``, ``fir_freq`` is ``(..., P, Q, L+1)``; returns
    ``(..., Q, L)``. The single forward input transform can be shared by many
    filters.
    """
    y_freq = np.einsum("...pqf,pf->...qf", fir_freq, x_freq)
    return np.fft.irfft(y_freq, n=2 * L, axis=-1)[..., L:]


def stack_transform(fir: FirStack) -> np.ndarray:
    """``(P, Q, L+1)`` frequency responses of every filter in a stack."""
    return fir_transform(np.transpose(fir.taps(), (0, 2, 1)), fir.L)


class BlockStream:
    """Sliding ``2L``-sample input history for ``P`` channels.

    The window starts zero-filled; each :meth:`push` shifts in ``L`` new
    samples per channel and returns the updated ``(P, 2L)`` window.
    """

    def __init__(self, P: int, L: int):
        self.P = P
        self.L = L
        self.block_index = 0
        self._history = np.zeros((P, 2 * L))

    @property
    def history(self) -> np.ndarray:
        return self._history

    def push(self, block: np.ndarray) -> np.ndarray:
        block = np.atleast_2d(np.asarray(block, dtype=float))
        if block.shape != (self.P, self.L):
            raise DimensionError(f"block has shape {block.shape}, expected {(self.P, self.L)}")
        self._history = np.concatenate([self._history[:, self.L:], block], axis=1)
        self.block_index += 1
        return self._history


def iter_blocks(x: np.ndarray, L: int, n_blocks: int | None = None):
    """Yield ``(m, history)`` with ``m`` starting at 1 for a ``(P, N)`` signal."""
    x = np.atleast_2d(x)
    if n_blocks is None:
        n_blocks = x.shape[1] // L
    stream = BlockStream(x.shape[0], L)
    for m in range(n_blocks):
        yield m + 1, stream.push(x[:, m * L:(m + 1) * L])


def apply_fir_stack(fir: FirStack, x: MultichannelSignal) -> MultichannelSignal:
    """Filter a ``P``-channel signal with a MIMO stack (zero initial state)."""
    if x.n_channels != fir.P:
        raise DimensionError(f"signal has {x.n_channels} channels, filter expects P = {fir.P}")
    L = fir.L
    N = x.n_samples
    n_blocks = -(-N // L)
    padded = np.zeros((fir.P, n_blocks * L))
    padded[:, :N] = x.data
    H = stack_transform(fir)
    out = np.empty((fir.Q, n_blocks * L))
    for m, hist in iter_blocks(padded, L, n_blocks):
        x_freq = np.fft.rfft(hist, axis=-1)
        out[:, (m - 1) * L:m * L] = mimo_block_output(x_freq, H, L)
    return MultichannelSignal(out[:, :N], x.sample_rate)


# --- excitation -------------------------------------------------------------

def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Excitation:
    """Excitation recipe: ``kind`` is ``"wgn"``, ``"ar1"`` or ``"wav"``."""

    kind: str = "wgn"
    pole: float = 0.9
    modulation_period_s: float = 0.5
    off_gain: float = 0.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("wgn", "ar1", "wav"):
            raise ConfigurationError(f"unknown excitation kind {self.kind!r}")
        if self.kind == "ar1" and not -1 < self.pole < 1:
            raise ConfigurationError("AR(1) pole must lie in (-1, 1)")
        if self.kind == "wav" and not self.path:
            raise ConfigurationError("wav excitation needs a path")


def on_off_envelope(n_samples: int, sample_rate: float, period_s: float,
                    off_gain: float = 0.0) -> np.ndarray:
    """Rectangular gate: ``period_s`` on, then ``period_s`` at ``off_gain``."""
    seg = max(1, int(round(period_s * sample_rate)))
    on = (np.arange(n_samples) // seg) % 2 == 0
    return np.where(on, 1.0, off_gain)


def generate_excitation(excitation: Excitation | str, duration_s: float, seed,
                        sample_rate: float = 8000.0, channels: int = 1) -> MultichannelSignal:
    """Draw a source signal.

    ``wgn`` is zero-mean unit-variance white noise. ``ar1`` filters the same
    white noise through ``1 / (1 - a z^-1)`` scaled to unit stationary
    variance and then gates it on and off. ``wav`` reads a mono file.
    """
    if isinstance(excitation, str):
        excitation = Excitation(kind=excitation)
    if not duration_s > 0:
        raise ConfigurationError("duration_s must be positive")
    n = int(round(duration_s * sample_rate))
    if excitation.kind == "wav":
        sig = read_wav(excitation.path, sample_rate)
        if sig.n_samples < n:
            raise IngestionError(
                f"{excitation.path} holds {sig.n_samples} samples, {n} requested"
            )
        return MultichannelSignal(np.repeat(sig.data[:, :n], channels, axis=0), sample_rate)

    rng = _as_rng(seed)
    white = rng.standard_normal((channels, n))
    if excitation.kind == "wgn":
        return MultichannelSignal(white, sample_rate)
    a = excitation.pole
    colored = lfilter([np.sqrt(1.0 - a * a)], [1.0, -a], white, axis=-1)
    env = on_off_envelope(n, sample_rate, excitation.modulation_period_s, excitation.off_gain)
    return MultichannelSignal(colored * env, sample_rate)


def read_wav(path, sample_rate: float) -> MultichannelSignal:
    """Read a mono PCM16 or float32 WAV file without resampling."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if rate != sample_rate:
        raise IngestionError(f"{path} is sampled at {rate} Hz, scenario uses {sample_rate} Hz")
    if data.ndim != 1:
        raise IngestionError(f"{path} has {data.shape[1]} channels; only mono is supported")
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise IngestionError(f"{path}: unsupported sample format {data.dtype}")
    return MultichannelSignal(samples[None, :], float(rate))
