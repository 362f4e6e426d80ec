"""Projection-based update denoising around a base adaptive filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evidence import (
    EigenfilterBank,
    EvidenceTracker,
    NoiseModel,
    block_log_evidences,
)
from .fdaf import FdafState, fdaf_step
from .signal import FirStack
from .subspace import SubspaceUnion


@dataclass(frozen=True)
class StepDiagnostics:
    block: int
    selected: int
    estimates: np.ndarray
    switched: bool
    y_hat: np.ndarray


def lpud_step(h: FirStack, tracker: EvidenceTracker, bank: EigenfilterBank, union: SubspaceUnion,
              fdaf_state: FdafState, history: np.ndarray, y_block: np.ndarray, noise: NoiseModel,
              diagonal: bool = False):
    """Advance the filter by one block.

    1. score every model on the block and update the running evidence;
    2. if the best model changed (always true on the first block), move
       ``h`` onto that model's affine subspace;
    3. compute the base filter update and keep only its component inside
       the selected subspace;
    4. apply it.

    ``tracker`` and ``fdaf_state`` are updated in place.
    """
    x_freq = np.fft.rfft(np.atleast_2d(history), axis=-1)
    previous = tracker.best
    tracker.update(block_log_evidences(bank, history, y_block, noise, diagonal, x_freq))
    best = tracker.best
    model = union.models[best]

    switched = best != previous
    coeffs = model.project(h.coeffs) if switched else h.coeffs
    current = h.with_coeffs(coeffs)

    dh, y_hat = fdaf_step(fdaf_state, history, y_block, current, x_freq)
    coeffs = coeffs + model.project_update(dh.coeffs)
    diag = StepDiagnostics(fdaf_state.block_index, best, tracker.estimates.copy(), switched, y_hat)
    return h.with_coeffs(coeffs), diag


def fdaf_only_step(h: FirStack, fdaf_state: FdafState, history: np.ndarray, y_block: np.ndarray):
    """Raw base-filter block update: ``h + dh``."""
    dh, y_hat = fdaf_step(fdaf_state, history, y_block, h)
    return h.with_coeffs(h.coeffs + dh.coeffs), y_hat
