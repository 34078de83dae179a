"""Spectral-frame ingestion, normalization and synthetic corpora.

Frames live in a FrameMatrix (N x D, float32) tagged with a speaker id
and optional per-frame log energy. One shared NormStats maps every
dimension to [-1, 1] and back; the encoder must stay speaker-blind, so
the normalizer is fit over all speakers jointly.

Synthetic corpora render K shared "phone" cluster prototypes through a
per-speaker affine map, which makes the ideal conversion of any frame
computable in closed form and keeps the learning task honest to check.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    DataError,
    DimMismatchError,
    TruncatedFileError,
)
from .numerics import RngState

FRAME_MAGIC = b"VAWF"
NORM_MAGIC = b"VAWN"
FORMAT_VERSION = 1

DEFAULT_SILENCE_THRESHOLD_DB = 30.0


@dataclass
class FrameMatrix:
    """Speaker-tagged matrix of spectral feature frames."""

    speaker_id: int
    frames: np.ndarray  # (N, D) float32
    energy: np.ndarray | None = None  # (N,) float32 log energy

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise DataError(f"frames must be a non-empty N x D matrix, got shape {self.frames.shape}")
        if self.speaker_id < 0:
            raise DataError(f"speaker_id must be non-negative, got {self.speaker_id}")
        if self.energy is not None:
            self.energy = np.asarray(self.energy, dtype=np.float32)
            if self.energy.shape != (self.frames.shape[0],):
                raise DataError(
                    f"energy must have one entry per frame, got {self.energy.shape} for {self.num_frames} frames"
                )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class NormStats:
    """Per-dimension min/max of a corpus; affine map to [-1, 1] and back."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float32)
        self.maxs = np.asarray(self.maxs, dtype=np.float32)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise DataError("mins and maxs must be equal-length vectors")
        if np.any(self.maxs < self.mins):
            raise DataError("per-dimension max must be >= min")

    @property
    def dim(self) -> int:
        return self.mins.shape[0]

    @property
    def degenerate(self) -> np.ndarray:
        """Dimensions with max == min; they carry no information and map to 0."""
        return self.maxs == self.mins


def fit_normalizer(corpus: list[FrameMatrix]) -> NormStats:
    """Per-dimension min/max over all frames of all speakers (one shared normalizer)."""
    if not corpus:
        raise DataError("cannot fit a normalizer on an empty corpus")
    dim = corpus[0].dim
    for fm in corpus:
        if fm.dim != dim:
            raise DimMismatchError(f"corpus dims disagree: {dim} vs {fm.dim}")
    stacked = np.concatenate([fm.frames for fm in corpus], axis=0)
    return NormStats(mins=stacked.min(axis=0), maxs=stacked.max(axis=0))


def normalize(x: FrameMatrix, s: NormStats) -> FrameMatrix:
    """Rescale each dimension to [-1, 1]; degenerate dimensions map to 0."""
    if x.dim != s.dim:
        raise DimMismatchError(f"frames have dim {x.dim}, stats have dim {s.dim}")
    span = s.maxs - s.mins
    safe_span = np.where(span == 0, 1.0, span).astype(np.float32)
    scaled = 2.0 * ((x.frames - s.mins) / safe_span) - 1.0
    scaled = np.where(s.degenerate, np.float32(0.0), scaled).astype(np.float32)
    return FrameMatrix(speaker_id=x.speaker_id, frames=scaled, energy=x.energy)


def denormalize(x: FrameMatrix, s: NormStats) -> FrameMatrix:
    """Exact inverse of normalize on non-degenerate dims; degenerate dims restore min."""
    if x.dim != s.dim:
        raise DimMismatchError(f"frames have dim {x.dim}, stats have dim {s.dim}")
    span = s.maxs - s.mins
    raw = (x.frames + 1.0) / 2.0 * span + s.mins
    raw = np.where(s.degenerate, s.mins, raw).astype(np.float32)
    return FrameMatrix(speaker_id=x.speaker_id, frames=raw, energy=x.energy)


def filter_nonsilent(
    x: FrameMatrix, threshold_db: float = DEFAULT_SILENCE_THRESHOLD_DB
) -> FrameMatrix:
    """Keep frames whose energy is within threshold_db of the loudest frame.

    Order is preserved. Without an energy vector there is nothing to
    filter on: the input is returned unchanged with a warning.
    """
    if x.energy is None:
        warnings.warn("filter_nonsilent: no energy vector present, keeping all frames")
        return x
    cutoff = x.energy.max() - np.float32(threshold_db)
    keep = x.energy >= cutoff
    if not keep.any():
        raise DataError("filter_nonsilent: threshold removed every frame")
    return FrameMatrix(speaker_id=x.speaker_id, frames=x.frames[keep], energy=x.energy[keep])


# ---------------------------------------------------------------------------
# synthetic two-speaker corpora


@dataclass
class SyntheticSpec:
    """Recipe for a corpus with known ground truth.

    Each speaker m renders shared cluster prototypes c_k through an
    affine map: x = A_m c_k + b_m + noise. The maps are kept
    well-conditioned so the ideal conversion A_t A_s^-1 (x - b_s) + b_t
    is numerically trustworthy.
    """

    num_speakers: int = 2
    dim: int = 24
    num_clusters: int = 8
    frames_per_speaker: int = 4000
    cluster_spread: float = 1.0
    map_scale: float = 0.15
    bias_scale: float = 1.0
    noise_scale: float = 0.05
    silence_fraction: float = 0.0
    max_condition: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.num_speakers < 2:
            raise DataError("need at least two speakers")
        if self.dim < 1 or self.num_clusters < 1 or self.frames_per_speaker < 1:
            raise DataError("dim, num_clusters and frames_per_speaker must be positive")
        if not 0.0 <= self.silence_fraction < 1.0:
            raise DataError("silence_fraction must lie in [0, 1)")


@dataclass
class GroundTruth:
    """Generation record: cluster assignments plus the per-speaker maps."""

    prototypes: np.ndarray  # (K, D)
    maps: list[np.ndarray]  # per speaker (D, D)
    biases: list[np.ndarray]  # per speaker (D,)
    assignments: list[np.ndarray]  # per speaker (N,) cluster index
    silent: list[np.ndarray] = field(default_factory=list)  # per speaker (N,) bool

    def ideal_conversion(self, frames: np.ndarray, source_id: int, target_id: int) -> np.ndarray:
        """Closed-form map composition taking source-space frames to target space."""
        a_s_inv = np.linalg.inv(self.maps[source_id])
        a_t = self.maps[target_id]
        centered = np.asarray(frames, dtype=np.float64) - self.biases[source_id]
        return (a_t @ (a_s_inv @ centered.T)).T + self.biases[target_id]

    def clean_frame(self, speaker_id: int, cluster: int) -> np.ndarray:
        return self.maps[speaker_id] @ self.prototypes[cluster] + self.biases[speaker_id]


def generate_synthetic(spec: SyntheticSpec, rng: RngState | None = None):
    """Render a corpus from the spec; returns (list of FrameMatrix, GroundTruth)."""
    if rng is None:
        rng = RngState(seed=spec.seed)
    d, k = spec.dim, spec.num_clusters

    prototypes = spec.cluster_spread * rng.standard_normal((k, d))
    maps, biases = [], []
    for _ in range(spec.num_speakers):
        a = np.eye(d) + spec.map_scale * rng.standard_normal((d, d)) / np.sqrt(d)
        cond = np.linalg.cond(a)
        if cond > spec.max_condition:
            raise DataError(
                f"rendering map is ill-conditioned (condition {cond:.3g} > {spec.max_condition})"
            )
        maps.append(a)
        biases.append(spec.bias_scale * rng.standard_normal((d,)))

    corpus, assignments, silent_flags = [], [], []
    n = spec.frames_per_speaker
    for m in range(spec.num_speakers):
        clusters = rng.integers(k, size=n)
        clean = prototypes[clusters] @ maps[m].T + biases[m]
        noise = spec.noise_scale * rng.standard_normal((n, d))
        frames = clean + noise

        energy = rng.standard_normal((n,)) * 2.0
        silent = np.zeros(n, dtype=bool)
        if spec.silence_fraction > 0:
            n_silent = int(round(spec.silence_fraction * n))
            order = np.argsort(rng.standard_normal((n,)), kind="stable")
            silent[order[:n_silent]] = True
            energy = energy - 60.0 * silent

        corpus.append(FrameMatrix(speaker_id=m, frames=frames, energy=energy))
        assignments.append(clusters)
        silent_flags.append(silent)

    means = [fm.frames.mean(axis=0) for fm in corpus]
    for m in range(1, spec.num_speakers):
        biases_differ = not np.allclose(biases[0], biases[m])
        if biases_differ and np.allclose(means[0], means[m], atol=1e-6):
            raise DataError("speaker biases differ but empirical means coincide; corpus is degenerate")

    truth = GroundTruth(
        prototypes=prototypes,
        maps=maps,
        biases=biases,
        assignments=assignments,
        silent=silent_flags,
    )
    return corpus, truth


# ---------------------------------------------------------------------------
# binary formats (bit-exact)


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedFileError(f"file ended while reading {what}")
    return buf


def _check_header(fh, magic: bytes, label: str):
    got = _read_exact(fh, 4, f"{label} magic")
    if got != magic:
        raise BadMagicError(f"bad magic for {label}: expected {magic!r}, got {got!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, f"{label} version"))
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported {label} version {version}, expected {FORMAT_VERSION}")


def write_frames(fm: FrameMatrix, path):
    """Write a frame file: magic VAWF, version, speaker, dim, count, flags, payload."""
    flags = 1 if fm.energy is not None else 0
    payload = [
        FRAME_MAGIC,
        struct.pack("<IIIII", FORMAT_VERSION, fm.speaker_id, fm.dim, fm.num_frames, flags),
        np.ascontiguousarray(fm.frames, dtype="<f4").tobytes(),
    ]
    if fm.energy is not None:
        payload.append(np.ascontiguousarray(fm.energy, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(payload))


def read_frames(path) -> FrameMatrix:
    with open(path, "rb") as fh:
        _check_header(fh, FRAME_MAGIC, "frame file")
        speaker_id, dim, num_frames, flags = struct.unpack(
            "<IIII", _read_exact(fh, 16, "frame header")
        )
        frames = np.frombuffer(
            _read_exact(fh, 4 * dim * num_frames, "frame payload"), dtype="<f4"
        ).reshape(num_frames, dim)
        energy = None
        if flags & 1:
            energy = np.frombuffer(_read_exact(fh, 4 * num_frames, "energy payload"), dtype="<f4")
        if fh.read(1):
            raise TruncatedFileError("trailing bytes after frame payload")
    return FrameMatrix(speaker_id=speaker_id, frames=frames.copy(), energy=energy)


def write_norm_stats(s: NormStats, path):
    with open(path, "wb") as fh:
        fh.write(NORM_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, s.dim))
        fh.write(np.ascontiguousarray(s.mins, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(s.maxs, dtype="<f4").tobytes())


def read_norm_stats(path) -> NormStats:
    with open(path, "rb") as fh:
        _check_header(fh, NORM_MAGIC, "normalizer file")
        (dim,) = struct.unpack("<I", _read_exact(fh, 4, "normalizer dim"))
        mins = np.frombuffer(_read_exact(fh, 4 * dim, "normalizer mins"), dtype="<f4")
        maxs = np.frombuffer(_read_exact(fh, 4 * dim, "normalizer maxs"), dtype="<f4")
        if fh.read(1):
            raise TruncatedFileError("trailing bytes after normalizer payload")
    return NormStats(mins=mins.copy(), maxs=maxs.copy())


def norm_stats_to_bytes(s: NormStats) -> bytes:
    return (
        NORM_MAGIC
        + struct.pack("<II", FORMAT_VERSION, s.dim)
        + np.ascontiguousarray(s.mins, dtype="<f4").tobytes()
        + np.ascontiguousarray(s.maxs, dtype="<f4").tobytes()
    )


def norm_stats_from_bytes(blob: bytes) -> NormStats:
    import io

    fh = io.BytesIO(blob)
    _check_header(fh, NORM_MAGIC, "normalizer blob")
    (dim,) = struct.unpack("<I", _read_exact(fh, 4, "normalizer dim"))
    mins = np.frombuffer(_read_exact(fh, 4 * dim, "normalizer mins"), dtype="<f4")
    maxs = np.frombuffer(_read_exact(fh, 4 * dim, "normalizer maxs"), dtype="<f4")
    return NormStats(mins=mins.copy(), maxs=maxs.copy())
