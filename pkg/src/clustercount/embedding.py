"""Observation embeddings and the embedding trace file format.

The random feature encoder is a frozen map from pixel observations to a
low-dimensional float32 vector: average pooling, centering, then a dense
random projection whose weights come from a portable RNG stream.  The same
(input shape, dim, seed) triple therefore yields the same weights on any
platform, which is what makes recorded traces replayable bit-for-bit.

Trace files are little-endian binary:

    magic   4 bytes  b"CCET"
    version u32      currently 1
    dim     u32      embedding width
    then per episode, until end of file:
        length        u32
        has_positions u8   0 or 1
        embeddings    length * dim float32
        positions     length * 2 float32, only if has_positions

Episode boundaries are explicit via the length prefixes; a file that ends
mid-record is reported as truncated with the byte offset where parsing stopped.
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_seed, splitmix64_array, uniform01

TRACE_MAGIC = b"CCET"
TRACE_VERSION = 1


class EncoderShapeError(ValueError):
    """Observation shape does not match what the encoder was built for."""


class TraceFormatError(ValueError):
    """Malformed trace file.  ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# encoders
# ---------------------------------------------------------------------------


class RandomFeatureEncoder:
    """Pool, center, and randomly project pixel observations.

    Pooling is non-overlapping ``pool x pool`` averaging over the leading two
    axes.  The pooled values (in [0, 1]) are shifted by -0.5 before projection
    so that embeddings of dissimilar views spread over directions instead of
    crowding into the all-positive orthant, and cosine similarity between them
    stays informative.  Projection weights are drawn uniformly from
    [-sqrt(3/n_in), +sqrt(3/n_in)], giving unit-variance outputs for
    unit-variance inputs.  Arithmetic runs in float64 and the result is cast
    to float32, so encoding is exactly reproducible.
    """

    def __init__(self, input_shape: tuple[int, int, int], dim: int = 384,
                 seed: int = 0, pool: int = 3):
        h, w, c = input_shape
        if pool < 1 or h < pool or w < pool:
            raise ValueError(f"pool size {pool} does not fit input {input_shape}")
        if dim < 1:
            raise ValueError("dim must be positive")
        self.input_shape = (h, w, c)
        self.dim = dim
        self.pool = pool
        self.seed = seed
        self._ph = h // pool
        self._pw = w // pool
        self.n_in = self._ph * self._pw * c
        bits = splitmix64_array(derive_seed(seed, "encoder-weights"), dim * self.n_in)
        scale = np.sqrt(3.0 / self.n_in)
        self.weights = (uniform01(bits) * 2.0 - 1.0).reshape(dim, self.n_in) * scale

    def _preprocess(self, obs: np.ndarray) -> np.ndarray:
        if obs.shape != self.input_shape:
            raise EncoderShapeError(
                f"expected observation of shape {self.input_shape}, got {obs.shape}")
        h, w, c = self.input_shape
        p = self.pool
        x = np.asarray(obs, dtype=np.float64)[: self._ph * p, : self._pw * p]
        pooled = x.reshape(self._ph, p, self._pw, p, c).mean(axis=(1, 3))
        return pooled.reshape(-1) - 0.5

    def encode(self, obs: np.ndarray) -> np.ndarray:
        return (self.weights @ self._preprocess(obs)).astype(np.float32)

    def encode_batch(self, observations) -> np.ndarray:
        """Encode a non-empty sequence; row i equals ``encode(observations[i])``."""
        if len(observations) == 0:
            raise ValueError("encode_batch requires at least one observation")
        return np.stack([self.encode(o) for o in observations])


class IdentityEncoder:
    """Flatten the observation to float32, unchanged otherwise.

    Used with tabular environments whose observations are already feature
    vectors, e.g. one-hot state indicators in oracle mode.
    """

    def __init__(self, input_shape: tuple[int, ...]):
        self.input_shape = tuple(input_shape)
        self.dim = int(np.prod(self.input_shape))

    def encode(self, obs: np.ndarray) -> np.ndarray:
        if obs.shape != self.input_shape:
            raise EncoderShapeError(
                f"expected observation of shape {self.input_shape}, got {obs.shape}")
        return np.asarray(obs, dtype=np.float32).reshape(-1)

    def encode_batch(self, observations) -> np.ndarray:
        if len(observations) == 0:
            raise ValueError("encode_batch requires at least one observation")
        return np.stack([self.encode(o) for o in observations])


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------


@dataclass
class TraceEpisode:
    embeddings: np.ndarray                 # (length, dim) float32
    positions: np.ndarray | None = None    # (length, 2) float32


@dataclass
class EmbeddingTrace:
    dim: int
    episodes: list[TraceEpisode] = field(default_factory=list)


def _check_episode(embeddings: np.ndarray, positions, dim: int):
    if embeddings.dtype != np.float32:
        raise TypeError(f"trace embeddings must be float32, got {embeddings.dtype}")
    if embeddings.ndim != 2 or embeddings.shape[1] != dim:
        raise ValueError(f"expected embeddings of shape (n, {dim}), got {embeddings.shape}")
    if embeddings.shape[0] == 0:
        raise ValueError("empty episodes cannot be written to a trace")
    if positions is not None:
        if positions.dtype != np.float32:
            raise TypeError(f"trace positions must be float32, got {positions.dtype}")
        if positions.shape != (embeddings.shape[0], 2):
            raise ValueError(
                f"positions shape {positions.shape} does not match "
                f"({embeddings.shape[0]}, 2)")


class TraceWriter:
    """Incremental trace writer; episodes are appended as they finish."""

    def __init__(self, path, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._fh = open(path, "wb")
        self._fh.write(TRACE_MAGIC)
        self._fh.write(struct.pack("<II", TRACE_VERSION, dim))

    def append(self, embeddings: np.ndarray, positions: np.ndarray | None = None):
        _check_episode(embeddings, positions, self.dim)
        self._fh.write(struct.pack("<IB", embeddings.shape[0], 1 if positions is not None else 0))
        self._fh.write(np.ascontiguousarray(embeddings).astype("<f4", copy=False).tobytes())
        if positions is not None:
            self._fh.write(np.ascontiguousarray(positions).astype("<f4", copy=False).tobytes())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_trace(path, trace: EmbeddingTrace):
    with TraceWriter(path, trace.dim) as w:
        for ep in trace.episodes:
            w.append(ep.embeddings, ep.positions)


def _read_exact(fh, n: int, offset: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TraceFormatError(f"truncated trace: unexpected end of file in {what}", offset)
    return buf


def read_trace(path) -> EmbeddingTrace:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TRACE_MAGIC:
            raise TraceFormatError(f"bad magic {magic!r}, expected {TRACE_MAGIC!r}", 0)
        version, dim = struct.unpack("<II", _read_exact(fh, 8, 4, "header"))
        if version != TRACE_VERSION:
            raise TraceFormatError(f"unsupported trace version {version}", 4)
        if dim == 0:
            raise TraceFormatError("dim must be positive", 8)
        offset = 12
        episodes = []
        while True:
            head = fh.read(5)
            if len(head) == 0:
                break
            if len(head) < 5:
                raise TraceFormatError("truncated trace: partial episode header", offset)
            length, flag = struct.unpack("<IB", head)
            if length == 0:
                raise TraceFormatError("episode with zero steps", offset)
            if flag not in (0, 1):
                raise TraceFormatError(f"invalid position flag {flag}", offset + 4)
            offset += 5
            nbytes = length * dim * 4
            emb = np.frombuffer(
                _read_exact(fh, nbytes, offset, "embedding data"), dtype="<f4"
            ).reshape(length, dim).copy()
            offset += nbytes
            pos = None
            if flag:
                nbytes = length * 2 * 4
                pos = np.frombuffer(
                    _read_exact(fh, nbytes, offset, "position data"), dtype="<f4"
                ).reshape(length, 2).copy()
                offset += nbytes
            episodes.append(TraceEpisode(emb, pos))
        return EmbeddingTrace(dim=dim, episodes=episodes)
