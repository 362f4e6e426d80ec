"""Image-source room simulation and RIR training sets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GeometryError
from .signal import FirStack

SPEED_OF_SOUND = 343.0
KERNEL_TAPS = 81
DISTANCE_FLOOR = 1e-2  # m; caps the 1/r gain for near-coincident source and mic


@dataclass(frozen=True)
class SourceSector:
    """Spherical sector of candidate source positions (angles in degrees)."""

    center: tuple[float, float, float] = (3.0, 2.0, 1.5)
    radius: float = 1.3
    azimuth: tuple[float, float] = (30.0, 150.0)
    elevation: tuple[float, float] = (-5.0, 50.0)

    def __post_init__(self):
        if self.azimuth[0] > self.azimuth[1] or self.elevation[0] > self.elevation[1]:
            raise ConfigurationError("sector angle ranges must be ordered (lo, hi)")
        if self.radius < 0:
            raise ConfigurationError("sector radius must be non-negative")

    def point(self, azimuth_deg, elevation_deg) -> np.ndarray:
        az = np.deg2rad(azimuth_deg)
        el = np.deg2rad(elevation_deg)
        offset = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
        return np.asarray(self.center) + self.radius * offset


def _default_mics():
    return ((2.95, 2.0, 1.5), (3.05, 2.0, 1.5))


@dataclass(frozen=True)
class RoomScenario:
    """Shoebox room, microphone array and source sector.

    ``max_reflection_order="auto"`` keeps every image whose arrival falls
    inside the ``rir_length``-tap horizon. ``reflection`` overrides the
    Sabine-derived wall reflection coefficient (0 gives an anechoic room).
    """

    room_dims: tuple[float, float, float] = (6.0, 5.0, 3.5)
    t60: float = 0.3
    fs: float = 8000.0
    mic_positions: tuple = field(default_factory=_default_mics)
    source_sector: SourceSector = field(default_factory=SourceSector)
    rir_length: int = 4096
    max_reflection_order: int | str = "auto"
    c: float = SPEED_OF_SOUND
    reflection: float | None = None

    def __post_init__(self):
        if not self.t60 > 0:
            raise ConfigurationError("t60 must be positive")
        if not self.rir_length > 0:
            raise ConfigurationError("rir_length must be positive")
        if not self.fs > 0:
            raise ConfigurationError("fs must be positive")
        order = self.max_reflection_order
        if order != "auto" and (not isinstance(order, int) or order < 0):
            raise ConfigurationError("max_reflection_order must be 'auto' or a non-negative int")
        object.__setattr__(self, "mic_positions", tuple(tuple(float(v) for v in m) for m in self.mic_positions))
        for mic in self.mic_positions:
            check_inside(self.room_dims, mic)

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def volume(self) -> float:
        return float(np.prod(self.room_dims))

    @property
    def surface(self) -> float:
        x, y, z = self.room_dims
        return 2.0 * (x * y + x * z + y * z)

    def absorption(self) -> float:
        """Sabine absorption coefficient shared by all six walls."""
        alpha = 24.0 * np.log(10.0) * self.volume / (self.c * self.surface * self.t60)
        if alpha > 1.0:
            raise ConfigurationError(f"t60 = {self.t60} s is too short for this room (alpha = {alpha:.3f})")
        return float(alpha)

    def reflection_coefficient(self) -> float:
        if self.reflection is not None:
            return float(self.reflection)
        return float(np.sqrt(1.0 - self.absorption()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_sector"] = asdict(self.source_sector)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RoomScenario":
        d = dict(d)
        if "source_sector" in d:
            sector = dict(d["source_sector"])
            for key in ("center", "azimuth", "elevation"):
                if key in sector:
                    sector[key] = tuple(sector[key])
            d["source_sector"] = SourceSector(**sector)
        if "room_dims" in d:
            d["room_dims"] = tuple(d["room_dims"])
        if "mic_positions" in d:
            d["mic_positions"] = tuple(tuple(m) for m in d["mic_positions"])
        return cls(**d)


def check_inside(room_dims, point) -> None:
    point = np.asarray(point, dtype=float)
    dims = np.asarray(room_dims, dtype=float)
    if point.shape != (3,) or np.any(point <= 0) or np.any(point >= dims):
        raise GeometryError(f"position {point.tolist()} is not strictly inside room {dims.tolist()}")


def _image_axis(coord: float, length: float, n_max: int, beta: float):
    """Image coordinates and reflection counts along one axis."""
    n = np.arange(-n_max, n_max + 1)
    pos = np.concatenate([coord + 2 * n * length, -coord + 2 * n * length])
    # parity 1 reflects once more off the wall at the origin
    refl = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
    return pos, refl


def simulate_rir(scenario: RoomScenario, source, mic) -> np.ndarray:
    """Image-source impulse response of ``scenario.rir_length`` taps.

    Each image contributes ``beta**k / (4 pi r)`` through an 81-tap
    Hann-windowed sinc centred at its fractional delay ``fs * r / c``; taps
    that fall before 0 or after the horizon are dropped.
    """
    check_inside(scenario.room_dims, source)
    check_inside(scenario.room_dims, mic)
    source = np.asarray(source, dtype=float)
    mic = np.asarray(mic, dtype=float)
    W = scenario.rir_length
    fs, c = scenario.fs, scenario.c
    beta = scenario.reflection_coefficient()
    half = KERNEL_TAPS // 2
    horizon = (W + half) * c / fs

    axes = []
    for k in range(3):
        n_max = int(np.ceil(horizon / (2 * scenario.room_dims[k]))) + 1
        pos, refl = _image_axis(source[k], scenario.room_dims[k], n_max, beta)
        axes.append((pos - mic[k], refl))
    (dx, rx), (dy, ry), (dz, rz) = axes

    # prune per axis pair before forming the full lattice
    dxy2 = dx[:, None] ** 2 + dy[None, :] ** 2
    ix, iy = np.nonzero(dxy2 <= horizon ** 2)
    rxy = rx[ix] + ry[iy]
    dxy2 = dxy2[ix, iy]
    dist2 = dxy2[:, None] + dz[None, :] ** 2
    ia, iz = np.nonzero(dist2 <= horizon ** 2)
    dist = np.sqrt(dist2[ia, iz])
    order = rxy[ia] + rz[iz]
    if scenario.max_reflection_order != "auto":
        keep = order <= scenario.max_reflection_order
        dist, order = dist[keep], order[keep]

    with np.errstate(divide="ignore"):
        gain = np.where(order == 0, 1.0, beta ** order.astype(float))
    gain = gain / (4 * np.pi * np.maximum(dist, DISTANCE_FLOOR))
    keep = gain != 0
    dist, gain = dist[keep], gain[keep]

    h = np.zeros(W)
    offsets = np.arange(-half, half + 1)
    chunk = 20000
    for lo in range(0, dist.size, chunk):
        tau = dist[lo:lo + chunk] * fs / c
        taps = np.round(tau).astype(int)[:, None] + offsets[None, :]
        u = taps - tau[:, None]
        window = 0.5 * (1.0 + np.cos(np.pi * u / (half + 1)))
        vals = gain[lo:lo + chunk, None] * np.sinc(u) * window
        valid = (taps >= 0) & (taps < W)
        h += np.bincount(taps[valid], weights=vals[valid], minlength=W)
    return h


def sample_source_position(sector: SourceSector, seed) -> np.ndarray:
    """Draw one position uniformly in azimuth and elevation at fixed radius."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    az = rng.uniform(*sector.azimuth)
    el = rng.uniform(*sector.elevation)
    return sector.point(az, el)


def sample_source_angles(sector: SourceSector, rng: np.random.Generator, n: int):
    az = rng.uniform(sector.azimuth[0], sector.azimuth[1], size=n)
    el = rng.uniform(sector.elevation[0], sector.elevation[1], size=n)
    return az, el


def simulate_mimo(scenario: RoomScenario, sources) -> np.ndarray:
    """Full-length responses with shape ``(P, W, Q)`` for ``P`` sources."""
    sources = np.atleast_2d(sources)
    out = np.empty((len(sources), scenario.rir_length, scenario.n_mics))
    for p, src in enumerate(sources):
        for q, mic in enumerate(scenario.mic_positions):
            out[p, :, q] = simulate_rir(scenario, src, mic)
    return out


@dataclass
class RirDataset:
    """``G`` vectorized RIR stacks truncated to ``L`` taps.

    ``samples`` is ``(G, R)``; ``tails`` keeps the discarded taps
    ``L..W-1`` with shape ``(G, P, W-L, Q)``.
    """

    samples: np.ndarray
    source_positions: np.ndarray
    scenario: RoomScenario
    L: int
    seed: int | None
    tails: np.ndarray | None = None
    P: int = 1

    @property
    def G(self) -> int:
        return self.samples.shape[0]

    @property
    def Q(self) -> int:
        return self.scenario.n_mics

    @property
    def R(self) -> int:
        return self.P * self.L * self.Q

    def fir(self, g: int) -> FirStack:
        return FirStack(self.samples[g], self.P, self.L, self.Q)

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format": "lpud-rir-dataset/1",
            "scenario": self.scenario.to_dict(),
            "P": self.P, "L": self.L, "Q": self.Q, "R": self.R, "G": self.G,
            "seed": self.seed,
            "files": {"samples": "samples.f64", "source_positions": "positions.f64"},
        }
        self.samples.astype("<f8").tofile(directory / "samples.f64")
        self.source_positions.astype("<f8").tofile(directory / "positions.f64")
        if self.tails is not None:
            manifest["files"]["tails"] = "tails.f64"
            manifest["W"] = self.scenario.rir_length
            self.tails.astype("<f8").tofile(directory / "tails.f64")
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return directory

    @classmethod
    def load(cls, directory) -> "RirDataset":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        G, R, P, L, Q = (manifest[k] for k in ("G", "R", "P", "L", "Q"))
        files = manifest["files"]
        samples = np.fromfile(directory / files["samples"], dtype="<f8").reshape(G, R)
        positions = np.fromfile(directory / files["source_positions"], dtype="<f8").reshape(G, 3)
        tails = None
        if "tails" in files:
            W = manifest["W"]
            tails = np.fromfile(directory / files["tails"], dtype="<f8").reshape(G, P, W - L, Q)
        return cls(samples, positions, RoomScenario.from_dict(manifest["scenario"]),
                   L, manifest["seed"], tails, P)


def generate_dataset(scenario: RoomScenario, G: int, L: int, seed) -> RirDataset:
    """Simulate ``G`` random single-source positions and keep the first ``L`` taps."""
    if L > scenario.rir_length:
        raise ConfigurationError(f"L = {L} exceeds the simulated length W = {scenario.rir_length}")
    if G < 1:
        raise ConfigurationError("G must be at least 1")
    rng = np.random.default_rng(seed)
    positions = np.array([sample_source_position(scenario.source_sector, rng) for _ in range(G)])
    Q = scenario.n_mics
    samples = np.empty((G, L * Q))
    tails = np.empty((G, 1, scenario.rir_length - L, Q))
    for g, src in enumerate(positions):
        full = simulate_mimo(scenario, src)
        samples[g] = full[:, :L, :].reshape(-1)
        tails[g] = full[:, L:, :]
    return RirDataset(samples, positions, scenario, L, seed if isinstance(seed, int) else None, tails)
