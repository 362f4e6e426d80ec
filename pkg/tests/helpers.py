"""Independent oracles and small fixtures shared by the test modules."""

import numpy as np

from lpud.evidence import EvidenceTracker, NoiseModel, block_log_evidences, build_eigenfilter_bank
from lpud.signal import input_vector, iter_blocks
from lpud.subspace import AffineSubspaceModel, SubspaceUnion


def regressor(history, k, L, Q):
    """Dense ``Q x R`` matrix with ``X @ h`` the output at sample ``k`` of the block."""
    x = input_vector(history, L + k, L)
    return np.kron(x[None, :], np.eye(Q))


def dense_log_evidence(model, K, history, y_block, noise_cov, L, Q, diagonal=False):
    """Gaussian block log-likelihood with the prior covariance formed explicitly."""
    V = model.basis[:, :K]
    C = V @ np.diag(model.eigenvalues[:K]) @ V.T
    total = 0.0
    for k in range(L):
        X = regressor(history, k, L, Q)
        e = y_block[k] - X @ model.offset
        Rn = noise_cov + X @ C @ X.T
        if diagonal:
            r = np.diag(Rn)
            total += -0.5 * np.sum(np.log(r) + e * e / r)
        else:
            _, logdet = np.linalg.slogdet(Rn)
            total += -0.5 * (logdet + e @ np.linalg.solve(Rn, e))
    return total


def random_union(rng, I, P, L, Q, D, spread=1.0):
    """Union of random affine models with orthonormal bases and decaying variances."""
    R = P * L * Q
    models = []
    for _ in range(I):
        basis, _ = np.linalg.qr(rng.standard_normal((R, D)))
        eig = np.sort(rng.uniform(0.05, 1.0, D))[::-1]
        models.append(AffineSubspaceModel(spread * rng.standard_normal(R), basis, eig, 10))
    return SubspaceUnion(models, P, L, Q)


def selection_accuracy(union, K, j, seed, n_blocks=30, snr_db=20.0, warm_up=5, forgetting=0.99):
    """Fraction of post-warm-up blocks on which model ``j`` is selected.

    The true system is ``offset_j + V_j beta`` with ``beta ~ N(0, diag(d_j))``,
    driven by white noise and observed at the given SNR.
    """
    rng = np.random.default_rng(seed)
    P, L, Q = union.P, union.L, union.Q
    m = union.models[j]
    h = m.offset + m.basis @ (np.sqrt(m.eigenvalues) * rng.standard_normal(m.D))
    taps = h.reshape(P, L, Q)
    x = rng.standard_normal((P, n_blocks * L))
    d = sum(np.stack([np.convolve(x[p], taps[p, :, q])[:x.shape[1]] for q in range(Q)], axis=1)
            for p in range(P))
    var = np.mean(d ** 2) / 10 ** (snr_db / 10)
    y = d + np.sqrt(var) * rng.standard_normal(d.shape)
    bank = build_eigenfilter_bank(union, K)
    noise = NoiseModel.isotropic(var, Q)
    tracker = EvidenceTracker(union.I, forgetting)
    picks = []
    for blk, hist in iter_blocks(x, L, n_blocks):
        tracker.update(block_log_evidences(bank, hist, y[(blk - 1) * L:blk * L], noise))
        picks.append(tracker.best)
    picks = np.array(picks[warm_up:])
    return float(np.mean(picks == j))
