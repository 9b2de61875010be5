"""Ground-truth trajectory generation and the on-disk bundle format.

Bundle file layout (all little-endian):

    8 bytes   magic b"MNBUNDL1"
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header (metadata, shapes, byte offsets, crc32 of body)
    body      float64 arrays q (N x M, row-major), p (N x M), w (N), excitation (N)

A dataset directory holds manifest.json plus traj_0000.bin, traj_0001.bin, ...
"""
from __future__ import annotations

import dataclasses
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .excitation import ParameterRanges, PluckParams, draw_trajectory_params, sample_pluck_sequence, trajectory_rng
from .integrator import SimulationGrid, StabilityError, check_stability, rollout
from .modal import ModalSystem, ScaledStringParams, State, build_modal_system, mode_shape_vector, readout
from .nonlinearity import LumpedNonlinearity, build_tensor

log = logging.getLogger(__name__)

BUNDLE_MAGIC = b"MNBUNDL1"
FORMAT_VERSION = 1


class BundleFormatError(ValueError):
    pass


@dataclass
class TrajectoryBundle:
    params: ScaledStringParams
    pluck: PluckParams
    x_o: float
    fs: float
    q: np.ndarray  # (N, M)
    p: np.ndarray
    w: np.ndarray  # (N,)
    excitation: np.ndarray  # (N,)
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.q.shape[0]

    @property
    def modes(self) -> int:
        return self.q.shape[1]

    @property
    def system_kind(self) -> str:
        return self.meta.get("system", "string")

    @property
    def grid(self) -> SimulationGrid:
        return SimulationGrid(self.fs, self.n_steps)


# --- system context shared by dataset generation, training and evaluation -----


def oscillator_system(omega0: float, gamma: float) -> ModalSystem:
    return ModalSystem(omega=np.array([float(omega0)]), damping=np.zeros(1), gamma=gamma)


def system_for(bundle: TrajectoryBundle) -> ModalSystem:
    if bundle.system_kind == "oscillator":
        return oscillator_system(bundle.meta["omega0"], bundle.params.gamma)
    return build_modal_system(bundle.params, bundle.modes)


def excitation_shape(bundle: TrajectoryBundle) -> np.ndarray:
    if bundle.system_kind == "oscillator":
        return np.ones(1)
    return mode_shape_vector(bundle.pluck.position, bundle.modes)


def output_shape(bundle: TrajectoryBundle) -> np.ndarray:
    if bundle.system_kind == "oscillator":
        return np.ones(1)
    return mode_shape_vector(bundle.x_o, bundle.modes)


@lru_cache(maxsize=8)
def _cached_tensor(modes: int):
    return build_tensor(modes)


def ground_truth_nonlinearity(bundle: TrajectoryBundle):
    if bundle.system_kind == "oscillator":
        return LumpedNonlinearity(bundle.meta["nonlinearity"])
    return _cached_tensor(bundle.modes)


# --- profiles ----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    ranges: ParameterRanges
    modes: int
    system: str = "string"
    omega0: float | None = None
    nonlinearity: str = "tensor"

    def replace(self, **kw) -> "DatasetProfile":
        range_keys = {f.name for f in dataclasses.fields(ParameterRanges)}
        rkw = {k: kw.pop(k) for k in list(kw) if k in range_keys}
        prof = dataclasses.replace(self, **kw)
        return dataclasses.replace(prof, ranges=dataclasses.replace(prof.ranges, **rkw)) if rkw else prof


_TRAIN = ParameterRanges()
_TEST = ParameterRanges(gamma=(130.0, 246.0), kappa=(1.01, 1.1), sigma0=2.0, fs=96000.0, duration=3.0)
# oscillator amplitude chosen so |q| reaches ~1.5 where -q^3 and -sinh(q) clearly differ
_OSC = ParameterRanges(
    gamma=(110.0, 110.0), kappa=(0.0, 0.0), sigma0=0.0, sigma1=0.0, x_e=(0.5, 0.5), x_o=(0.5, 0.5),
    f_amp=(2e5, 1.2e6), T_e=(0.5e-3, 1.5e-3), fs=44100.0, duration=1.0,
)

PROFILES = {
    "paper-train": DatasetProfile("paper-train", _TRAIN, 100),
    "paper-test": DatasetProfile("paper-test", _TEST, 100),
    "desk-string": DatasetProfile("desk-string", dataclasses.replace(_TRAIN, duration=0.25, n_traj=8), 16),
    "desk-string-test": DatasetProfile(
        "desk-string-test", dataclasses.replace(_TRAIN, duration=0.25, n_traj=4, seed=1), 16
    ),
    "oscillator-cubic": DatasetProfile("oscillator-cubic", _OSC, 1, "oscillator", 400.0, "cubic"),
    "oscillator-sinh": DatasetProfile("oscillator-sinh", _OSC, 1, "oscillator", 400.0, "sinh"),
    "oscillator-cubic-desk": DatasetProfile(
        "oscillator-cubic-desk", dataclasses.replace(_OSC, duration=0.25, n_traj=12), 1, "oscillator", 400.0, "cubic"
    ),
    "oscillator-sinh-desk": DatasetProfile(
        "oscillator-sinh-desk", dataclasses.replace(_OSC, duration=0.25, n_traj=12), 1, "oscillator", 400.0, "sinh"
    ),
}


def max_system(profile: DatasetProfile) -> ModalSystem:
    r = profile.ranges
    if profile.system == "oscillator":
        return oscillator_system(profile.omega0, r.gamma[1])
    return build_modal_system(ScaledStringParams(r.gamma[1], r.kappa[1], r.sigma0, r.sigma1), profile.modes)


# --- generation ----------------------------------------------------------------


def simulate_bundle(params, pluck, x_o, fs, n_steps, modes, meta, nl=None) -> TrajectoryBundle:
    """Roll out from rest with the ground-truth nonlinearity (or ``nl``)."""
    bundle = TrajectoryBundle(params, pluck, x_o, fs, np.empty((0, modes)), None, None, None, dict(meta))
    system = system_for(bundle)
    nl = ground_truth_nonlinearity(bundle) if nl is None else nl
    exc = sample_pluck_sequence(pluck, fs, n_steps)
    traj = rollout(State.zeros(modes), system, nl, exc, excitation_shape(bundle), SimulationGrid(fs, n_steps))
    bundle.q, bundle.p, bundle.excitation = traj.q, traj.p, exc
    bundle.w = readout(traj.q, output_shape(bundle))
    return bundle


def generate_trajectory(profile: DatasetProfile, index: int) -> TrajectoryBundle:
    r = profile.ranges
    params, pluck, x_o = draw_trajectory_params(r, trajectory_rng(r.seed, index))
    meta = {
        "seed": r.seed,
        "index": index,
        "version": FORMAT_VERSION,
        "system": profile.system,
        "profile": profile.name,
    }
    if profile.system == "oscillator":
        meta.update(omega0=profile.omega0, nonlinearity=profile.nonlinearity)
    return simulate_bundle(params, pluck, x_o, r.fs, r.n_steps, profile.modes, meta)


def generate_dataset(profile: DatasetProfile, out_dir=None, indices=None):
    """Generate every trajectory of a profile; write files when ``out_dir`` given.

    Returns (manifest dict, list of bundles). The stability bound is checked
    for the stiffest system in the ranges before any rollout.
    """
    r = profile.ranges
    report = check_stability(max_system(profile), 1.0 / r.fs)
    if not report.passed:
        raise StabilityError(f"profile {profile.name!r} unstable at fs={r.fs:g} (margin {report.margin:.3f})")
    indices = range(r.n_traj) if indices is None else indices
    bundles, entries = [], []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for i in indices:
        b = generate_trajectory(profile, i)
        bundles.append(b)
        entry = {
            "file": f"traj_{i:04d}.bin",
            "index": i,
            "gamma": b.params.gamma,
            "kappa": b.params.kappa,
            "x_e": b.pluck.position,
            "x_o": b.x_o,
            "f_amp": b.pluck.amplitude,
            "T_e": b.pluck.duration,
        }
        entries.append(entry)
        if out is not None:
            save_bundle(b, out / entry["file"])
        log.info("trajectory %d done (%d steps)", i, b.n_steps)
    manifest = {
        "name": profile.name,
        "format_version": FORMAT_VERSION,
        "modes": profile.modes,
        "system": profile.system,
        "omega0": profile.omega0,
        "nonlinearity": profile.nonlinearity,
        "ranges": r.to_dict(),
        "trajectory_count": len(entries),
        "trajectories": entries,
    }
    if out is not None:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest, bundles


def regenerate_at_rate(bundle: TrajectoryBundle, fs: float, duration: float | None = None) -> TrajectoryBundle:
    """Same string and excitation, re-simulated on a different time grid."""
    duration = bundle.n_steps / bundle.fs if duration is None else duration
    n = int(round(duration * fs))
    return simulate_bundle(bundle.params, bundle.pluck, bundle.x_o, fs, n, bundle.modes, bundle.meta)


# --- bundle I/O ----------------------------------------------------------------


def save_bundle(bundle: TrajectoryBundle, path) -> None:
    N, M = bundle.q.shape
    arrays = [bundle.q, bundle.p, bundle.w, bundle.excitation]
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    offsets, off = {}, 0
    for name, a in zip(("q", "p", "w", "excitation"), arrays):
        offsets[name] = [off, a.size * 8]
        off += a.size * 8
    header = {
        "version": FORMAT_VERSION,
        "n_steps": N,
        "modes": M,
        "fs": bundle.fs,
        "params": dataclasses.asdict(bundle.params),
        "pluck": dataclasses.asdict(bundle.pluck),
        "x_o": bundle.x_o,
        "meta": bundle.meta,
        "offsets": offsets,
        "body_bytes": len(body),
        "crc32": zlib.crc32(body),
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC + struct.pack("<I", len(blob)) + blob + body)


def read_bundle_header(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:8] != BUNDLE_MAGIC:
            raise BundleFormatError(f"{path}: not a trajectory bundle")
        (hlen,) = struct.unpack("<I", head[8:])
        blob = fh.read(hlen)
    if len(blob) != hlen:
        raise BundleFormatError(f"{path}: truncated header")
    header = json.loads(blob)
    if header.get("version") != FORMAT_VERSION:
        raise BundleFormatError(f"{path}: unsupported bundle version {header.get('version')}")
    return header


def load_bundle(path) -> TrajectoryBundle:
    raw = Path(path).read_bytes()
    header = read_bundle_header(path)
    body = raw[12 + struct.unpack("<I", raw[8:12])[0] :]
    if len(body) != header["body_bytes"]:
        raise BundleFormatError(f"{path}: body is {len(body)} bytes, header says {header['body_bytes']}")
    if zlib.crc32(body) != header["crc32"]:
        raise BundleFormatError(f"{path}: checksum mismatch")
    N, M = header["n_steps"], header["modes"]

    def arr(name, shape):
        off, size = header["offsets"][name]
        return np.frombuffer(body[off : off + size], dtype="<f8").astype(np.float64).reshape(shape)

    return TrajectoryBundle(
        params=ScaledStringParams(**header["params"]),
        pluck=PluckParams(**header["pluck"]),
        x_o=header["x_o"],
        fs=header["fs"],
        q=arr("q", (N, M)),
        p=arr("p", (N, M)),
        w=arr("w", (N,)),
        excitation=arr("excitation", (N,)),
        meta=header["meta"],
    )


class Dataset:
    """A dataset directory; references are validated on open, bundles load lazily."""

    def __init__(self, root):
        self.root = Path(root)
        mpath = self.root / "manifest.json"
        if not mpath.exists():
            raise FileNotFoundError(f"{mpath} not found")
        self.manifest = json.loads(mpath.read_text())
        if self.manifest.get("format_version") != FORMAT_VERSION:
            raise BundleFormatError(f"unsupported dataset version {self.manifest.get('format_version')}")
        self.ranges = ParameterRanges.from_dict(self.manifest["ranges"])
        for entry in self.manifest["trajectories"]:
            f = self.root / entry["file"]
            if not f.exists():
                raise FileNotFoundError(f"manifest references missing file {f}")
            read_bundle_header(f)
            for key in ("gamma", "kappa", "x_e", "x_o", "f_amp", "T_e"):
                lo, hi = getattr(self.ranges, key)
                if not lo <= entry[key] <= hi:
                    raise ValueError(f"{entry['file']}: {key}={entry[key]} outside [{lo}, {hi}]")

    def __len__(self):
        return len(self.manifest["trajectories"])

    def __getitem__(self, i) -> TrajectoryBundle:
        return load_bundle(self.root / self.manifest["trajectories"][i]["file"])

    def __iter__(self):
        return (self[i] for i in range(len(self)))
