"""Monte Carlo comparison of the raw filter, global and local update denoising.

Seed scheme
-----------
Every random draw comes from ``SeedSequence(master, spawn_key=(purpose, trial, ...))``
with the fixed purpose codes in :data:`PURPOSE`. A draw depends only on its
own key, so enabling or disabling an algorithm never shifts any other
stream. Training data and test positions use different purposes and are
therefore disjoint streams.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import oaconvolve

from .config import ExperimentConfig
from .engine import fdaf_only_step, lpud_step
from .errors import ConfigurationError
from .evidence import EvidenceTracker, NoiseModel, build_eigenfilter_bank
from .fdaf import fdaf_init
from .metrics import erle, phase_split, system_mismatch_block, to_db
from .rir import RirDataset, generate_dataset, sample_source_position, simulate_mimo
from .signal import FirStack, MultichannelSignal, generate_excitation, iter_blocks, mimo_block_output, stack_transform
from .subspace import learn_union

log = logging.getLogger(__name__)

CSV_SCHEMA = "lpud-csv/1"
PURPOSE = {"dataset": 1, "kmeans": 2, "position": 3, "excitation": 4, "noise": 5}


def sub_seed(master: int, purpose: str, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(PURPOSE[purpose],) + tuple(int(k) for k in key))


def rng_for(master: int, purpose: str, *key: int) -> np.random.Generator:
    return np.random.default_rng(sub_seed(master, purpose, *key))


def seed_int(master: int, purpose: str, *key: int) -> int:
    return int(sub_seed(master, purpose, *key).generate_state(1, np.uint64)[0] >> np.uint64(1))


# --- observation model --------------------------------------------------------

def simulate_observation(rirs: np.ndarray, x: MultichannelSignal, snr_db: float, seed):
    """Microphone signals of a ``(P, W, Q)`` system driven by ``x``.

    Returns ``(y, d, noise_variance)``. ``snr_db = inf`` gives ``y = d``.
    """
    rirs = np.asarray(rirs, dtype=float)
    P, W, Q = rirs.shape
    if x.n_channels != P:
        raise ConfigurationError(f"excitation has {x.n_channels} channels, system has P = {P}")
    if x.n_samples < W:
        raise ConfigurationError("excitation shorter than the RIR length")
    N = x.n_samples
    d = np.zeros((Q, N))
    for p in range(P):
        for q in range(Q):
            d[q] += oaconvolve(x.data[p], rirs[p, :, q])[:N]
    power = float(np.mean(d * d))
    if power == 0:
        raise ConfigurationError("noise-free signal is all zeros; SNR undefined")
    if np.isinf(snr_db) and snr_db > 0:
        return MultichannelSignal(d.copy(), x.sample_rate), MultichannelSignal(d, x.sample_rate), 0.0
    variance = power / 10.0 ** (snr_db / 10.0)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y = d + np.sqrt(variance) * rng.standard_normal(d.shape)
    return MultichannelSignal(y, x.sample_rate), MultichannelSignal(d, x.sample_rate), variance


# --- models ---------------------------------------------------------------------

@dataclass
class PreparedModels:
    """Learned unions (and their eigenfilter banks) keyed by algorithm name."""

    unions: dict = field(default_factory=dict)
    banks: dict = field(default_factory=dict)
    dataset: RirDataset | None = None


def build_training_set(config: ExperimentConfig) -> RirDataset:
    return generate_dataset(config.scenario, config.dataset.G, config.dataset.L,
                            seed_int(config.seed, "dataset"))


def learn_models(config: ExperimentConfig, dataset: RirDataset) -> dict:
    """Global (one cluster) and local unions as required by ``config.algorithms``."""
    mc = config.model
    unions = {}
    if "gpud" in config.algorithms:
        unions["gpud"] = learn_union(dataset, 1, mc.global_dim, seed_int(config.seed, "kmeans", 0))
    if "lpud" in config.algorithms:
        unions["lpud"] = learn_union(dataset, mc.n_clusters, mc.local_dim,
                                     seed_int(config.seed, "kmeans", 1), max_iters=mc.kmeans_max_iters)
    return unions


def prepare_models(config: ExperimentConfig, unions: dict | None = None,
                   dataset: RirDataset | None = None) -> PreparedModels:
    if unions is None:
        needs = {"gpud", "lpud"} & set(config.algorithms)
        if needs and dataset is None:
            dataset = build_training_set(config)
        unions = learn_models(config, dataset) if needs else {}
    banks = {}
    for name, union in unions.items():
        K = [min(config.model.n_eigenfilters, m.D) for m in union.models]
        banks[name] = build_eigenfilter_bank(union, K)
    return PreparedModels(unions, banks, dataset)


# --- trials ---------------------------------------------------------------------

@dataclass
class TrialResult:
    """Per-block traces and phase metrics of one trial.

    ``mismatch[alg]`` is the linear per-block mismatch; ``erle[alg]`` and
    ``mismatch_avg[alg]`` map ``"cp"``/``"ss"`` to linear values.
    ``erle["oracle"]`` is the truncated-truth filter.
    """

    trial: int
    snr_db: float
    source_position: np.ndarray
    mismatch: dict
    erle: dict
    mismatch_avg: dict
    selected: dict
    estimates: dict
    switched: dict
    seeds: dict
    noise_variance: float

    @property
    def n_blocks(self) -> int:
        return len(next(iter(self.mismatch.values())))


def _run_algorithm(name, L, truth, models: PreparedModels, config, x, y, noise):
    P, Q = truth.P, truth.Q
    h = FirStack.zeros(P, L, Q)
    state = fdaf_init(P, L, Q, config.filter)
    M = config.n_blocks
    mismatch = np.empty(M)
    y_hat = np.empty((Q, M * L))
    selected = estimates = switched = None
    if name != "baseline":
        union, bank = models.unions[name], models.banks[name]
        tracker = EvidenceTracker(union.I, config.model.forgetting)
        selected = np.empty(M, dtype=int)
        estimates = np.empty((M, union.I))
        switched = np.empty(M, dtype=bool)
    for m, hist in iter_blocks(x.data, L, M):
        y_block = y.data[:, (m - 1) * L:m * L].T
        if name == "baseline":
            h, yb = fdaf_only_step(h, state, hist, y_block)
        else:
            h, diag = lpud_step(h, tracker, bank, union, state, hist, y_block, noise,
                                config.model.diagonal_evidence)
            yb = diag.y_hat
            selected[m - 1] = diag.selected
            estimates[m - 1] = diag.estimates
            switched[m - 1] = diag.switched
        y_hat[:, (m - 1) * L:m * L] = yb.T
        mismatch[m - 1] = system_mismatch_block(truth, h)
    return mismatch, y_hat, selected, estimates, switched


def _oracle_output(truth: FirStack, x: MultichannelSignal, M: int) -> np.ndarray:
    L = truth.L
    H = stack_transform(truth)
    out = np.empty((truth.Q, M * L))
    for m, hist in iter_blocks(x.data, L, M):
        out[:, (m - 1) * L:m * L] = mimo_block_output(np.fft.rfft(hist, axis=-1), H, L)
    return out


def run_trial(config: ExperimentConfig, trial: int, models: PreparedModels | None = None,
              snr_db: float | None = None, snr_index: int = 0) -> TrialResult:
    """Draw an unseen source position and signals, then run every configured algorithm."""
    if snr_db is None:
        snr_db = config.snr_db[snr_index]
    if models is None:
        models = prepare_models(config)
    sc = config.scenario
    L = config.dataset.L
    M = config.n_blocks

    seeds = {
        "position": seed_int(config.seed, "position", trial),
        "excitation": seed_int(config.seed, "excitation", trial),
        "noise": seed_int(config.seed, "noise", trial, snr_index),
    }
    source = sample_source_position(sc.source_sector, seeds["position"])
    rirs = simulate_mimo(sc, source)  # (P, W, Q)
    x = generate_excitation(config.excitation.recipe(), config.excitation.duration_s,
                            seeds["excitation"], sc.fs, channels=rirs.shape[0])
    y, d, variance = simulate_observation(rirs, x, snr_db, seeds["noise"])
    truth = FirStack.from_taps(rirs[:, :L, :])
    noise = NoiseModel.isotropic(max(variance, 1e-12), truth.Q)

    n_used = M * L
    (c0, c1), (s0, s1) = phase_split(n_used)
    (b0, b1), (t0, t1) = phase_split(M)
    d_used = d.data[:, :n_used]

    result = TrialResult(trial, snr_db, source, {}, {}, {}, {}, {}, {}, seeds, variance)
    oracle = _oracle_output(truth, x, M)
    result.erle["oracle"] = {"cp": erle(d_used, oracle, c0, c1), "ss": erle(d_used, oracle, s0, s1)}
    for name in config.algorithms:
        mis, y_hat, sel, est, sw = _run_algorithm(name, L, truth, models, config, x, y, noise)
        result.mismatch[name] = mis
        result.mismatch_avg[name] = {"cp": float(np.mean(mis[b0:b1 + 1])), "ss": float(np.mean(mis[t0:t1 + 1]))}
        result.erle[name] = {"cp": erle(d_used, y_hat, c0, c1), "ss": erle(d_used, y_hat, s0, s1)}
        if sel is not None:
            result.selected[name] = sel
            result.estimates[name] = est
            result.switched[name] = sw
    return result


# --- output ---------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO(newline="")
    buf.write(f"# {CSV_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> list[dict]:
    """Read one of the emitted CSV files (skipping the schema comment)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    return list(csv.DictReader(lines))


def write_trial_csv(result: TrialResult, config: ExperimentConfig, path: Path) -> None:
    L, fs = config.dataset.L, config.scenario.fs
    n_est = max((e.shape[1] for e in result.estimates.values()), default=0)
    header = ["block", "time_s", "algorithm", "mismatch", "mismatch_db", "selected", "switched"]
    header += [f"E_{i + 1}" for i in range(n_est)]
    rows = []
    for name in config.algorithms:
        mis = result.mismatch[name]
        for m in range(len(mis)):
            row = [m + 1, (m + 1) * L / fs, name, mis[m], to_db(mis[m])]
            if name in result.selected:
                est = list(result.estimates[name][m])
                row += [result.selected[name][m] + 1, bool(result.switched[name][m])]
                row += est + [None] * (n_est - len(est))
            else:
                row += [None, None] + [None] * n_est
            rows.append(row)
    _write_csv(path, header, rows)


def aggregate(results: list[TrialResult], config: ExperimentConfig):
    """Mean mismatch trace rows and per-phase summary rows.

    Means are taken over linear values and then converted to dB; standard
    deviations are over the per-trial dB values.
    """
    L, fs = config.dataset.L, config.scenario.fs
    trace_rows, summary_rows = [], []
    excitation = config.excitation.kind
    for snr in config.snr_db:
        group = [r for r in results if r.snr_db == snr]
        n = len(group)
        for name in config.algorithms:
            traces = np.array([r.mismatch[name] for r in group])
            mean_db = to_db(traces.mean(axis=0))
            std_db = to_db(traces).std(axis=0, ddof=1) if n > 1 else np.zeros(traces.shape[1])
            for m in range(traces.shape[1]):
                trace_rows.append([snr, excitation, name, m + 1, (m + 1) * L / fs, mean_db[m], std_db[m], n])
        for name in tuple(config.algorithms) + ("oracle",):
            for phase in ("cp", "ss"):
                erles = np.array([r.erle[name][phase] for r in group])
                row = [snr, excitation, name, phase, to_db(erles.mean()),
                       np.std(to_db(erles), ddof=1) if n > 1 else 0.0]
                if name == "oracle":
                    row += [None, None]
                else:
                    mis = np.array([r.mismatch_avg[name][phase] for r in group])
                    row += [to_db(mis.mean()), np.std(to_db(mis), ddof=1) if n > 1 else 0.0]
                summary_rows.append(row + [n])
    return trace_rows, summary_rows


TRACE_HEADER = ["snr_db", "excitation", "algorithm", "block", "time_s",
                "mismatch_db_mean", "mismatch_db_std", "n_trials"]
SUMMARY_HEADER = ["snr_db", "excitation", "algorithm", "phase", "erle_db_mean", "erle_db_std",
                  "mismatch_db_mean", "mismatch_db_std", "n_trials"]

PLOT_SCRIPT = '''\
"""Plot the aggregate results in this directory (regenerated on every run)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def rows(name):
    lines = (HERE / name).read_text().splitlines()
    return list(csv.DictReader(line for line in lines if not line.startswith("#")))


trace = rows("mismatch_trace.csv")
summary = rows("summary.csv")
snrs = sorted({float(r["snr_db"]) for r in trace})
algs = list(dict.fromkeys(r["algorithm"] for r in trace))

fig, axes = plt.subplots(len(snrs), 1, figsize=(6, 3 * len(snrs)), squeeze=False)
for ax, snr in zip(axes[:, 0], snrs):
    for alg in algs:
        sel = [r for r in trace if r["algorithm"] == alg and float(r["snr_db"]) == snr]
        ax.plot([float(r["time_s"]) for r in sel], [float(r["mismatch_db_mean"]) for r in sel], label=alg)
    ax.set_title(f"SNR {snr:g} dB")
    ax.set_xlabel("time / s")
    ax.set_ylabel("system mismatch / dB")
    ax.grid(True)
    ax.legend()
fig.tight_layout()
fig.savefig(HERE / "mismatch_trace.png", dpi=150)

fig, (ax_e, ax_m) = plt.subplots(1, 2, figsize=(10, 4))
for alg in list(dict.fromkeys(r["algorithm"] for r in summary)):
    for phase, style in (("cp", "--"), ("ss", "-")):
        sel = sorted((r for r in summary if r["algorithm"] == alg and r["phase"] == phase),
                     key=lambda r: float(r["snr_db"]))
        x = [float(r["snr_db"]) for r in sel]
        ax_e.plot(x, [float(r["erle_db_mean"]) for r in sel], style, marker="o", label=f"{alg} {phase}")
        if sel and sel[0]["mismatch_db_mean"]:
            ax_m.plot(x, [float(r["mismatch_db_mean"]) for r in sel], style, marker="o", label=f"{alg} {phase}")
for ax, label in ((ax_e, "ERLE / dB"), (ax_m, "system mismatch / dB")):
    ax.set_xlabel("SNR / dB")
    ax.set_ylabel(label)
    ax.grid(True)
    ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(HERE / "summary.png", dpi=150)
'''


def _trial_task(args):
    config, models, trial, snr_index = args
    return run_trial(config, trial, models, config.snr_db[snr_index], snr_index)


def run_experiment(config: ExperimentConfig, models: PreparedModels | None = None,
                   out_dir=None) -> list[TrialResult]:
    """Run ``n_trials`` per SNR point and write CSVs plus ``plot_results.py``."""
    out = Path(out_dir or config.out_dir)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    if models is None:
        models = prepare_models(config)
    tasks = [(config, models, t, s) for s in range(len(config.snr_db)) for t in range(config.n_trials)]

    def done(res: TrialResult):
        write_trial_csv(res, config, out / "trials" / f"trial_snr{res.snr_db:+g}_{res.trial:03d}.csv")
        log.info("trial %d at %g dB done", res.trial, res.snr_db)

    results = []
    if config.n_jobs > 1:
        with ProcessPoolExecutor(config.n_jobs) as pool:
            for res in pool.map(_trial_task, tasks):
                done(res)
                results.append(res)
    else:
        for task in tasks:
            res = _trial_task(task)
            done(res)
            results.append(res)

    trace_rows, summary_rows = aggregate(results, config)
    _write_csv(out / "mismatch_trace.csv", TRACE_HEADER, trace_rows)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows)
    (out / "plot_results.py").write_text(PLOT_SCRIPT, encoding="utf-8")
    return results
