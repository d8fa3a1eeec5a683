"""Pseudo-counts from clustered embeddings, and the intrinsic reward they induce.

The flow per episode: some clustering of the episode's embeddings produces a
set of cluster centers, an assignment of every step to one cluster, and
per-cluster occupancy.  Each occupied cluster is then matched against a table
that persists across episodes.  A cosine similarity at or above the threshold
``kappa`` means "this region of embedding space has been seen before": the
cluster's steps continue the matched entry's count.  Below the threshold the
cluster is new and its steps count up from zero.  Step t of a cluster with
prior count c receives pseudo-count rho = c + j (j = 1-based occurrence index
within the episode) and intrinsic reward 1 / sqrt(rho), so novelty pays most
on first contact and decays with familiarity.

Ordering rules, all of which affect results and are deliberately fixed:

* clusters are processed in first-occurrence order within the episode;
* steps of one cluster are rewarded in time order;
* the table is updated after a cluster's rewards are computed, so a later
  cluster in the same episode sees entries appended or incremented by an
  earlier one.

Table centers are quantised to float32 on insertion (matching what snapshot
files store), while match queries stay in float64.  A snapshot therefore
restores to a table that behaves identically to the live one.
"""

import struct
from dataclasses import dataclass

import numpy as np

SNAPSHOT_MAGIC = b"CCGT"
SNAPSHOT_VERSION = 1


class ClusteringError(ValueError):
    """Inconsistent episodic clustering passed to the table."""


class TableFormatError(ValueError):
    """Malformed snapshot file.  ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0.0 if either has zero norm."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


# ---------------------------------------------------------------------------
# episodic clustering result
# ---------------------------------------------------------------------------


@dataclass
class EpisodicClustering:
    """One episode's clustering: centers plus the step-to-cluster assignment.

    ``counts[m]`` is the number of steps assigned to cluster m and
    ``first_occurrence[m]`` the earliest step index with label m (-1 when the
    cluster is unoccupied, which can happen when a mixture component wins no
    points).
    """

    centers: np.ndarray           # (M, d) float64
    labels: np.ndarray            # (T,) int
    counts: np.ndarray            # (M,) int64
    first_occurrence: np.ndarray  # (M,) int64, -1 if unoccupied

    @classmethod
    def from_labels(cls, centers, labels) -> "EpisodicClustering":
        centers = np.asarray(centers, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        m = centers.shape[0]
        if labels.shape[0] == 0:
            raise ClusteringError("clustering covers zero steps")
        if labels.min() < 0 or labels.max() >= m:
            raise ClusteringError("labels reference clusters outside [0, M)")
        counts = np.bincount(labels, minlength=m).astype(np.int64)
        first = np.full(m, -1, dtype=np.int64)
        for t in range(labels.shape[0] - 1, -1, -1):
            first[labels[t]] = t
        return cls(centers=centers, labels=labels, counts=counts, first_occurrence=first)

    def validate(self):
        if self.centers.ndim != 2:
            raise ClusteringError(f"centers must be 2-d, got shape {self.centers.shape}")
        m = self.centers.shape[0]
        t = self.labels.shape[0]
        if t == 0:
            raise ClusteringError("clustering covers zero steps")
        if self.labels.min() < 0 or self.labels.max() >= m:
            raise ClusteringError("labels reference clusters outside [0, M)")
        if self.counts.shape != (m,) or self.first_occurrence.shape != (m,):
            raise ClusteringError("counts/first_occurrence length must equal M")
        if int(self.counts.sum()) != t:
            raise ClusteringError(
                f"per-cluster counts sum to {int(self.counts.sum())}, expected {t}")
        expected = np.bincount(self.labels, minlength=m)
        if not np.array_equal(expected, self.counts):
            raise ClusteringError("counts disagree with labels")

    @property
    def n_steps(self) -> int:
        return int(self.labels.shape[0])


def passthrough_clustering(embeddings: np.ndarray) -> EpisodicClustering:
    """Group exactly identical vectors; each distinct vector is its own cluster.

    Centers are the distinct vectors in first-occurrence order.  Equality is
    bitwise, which is the right notion for one-hot or otherwise discrete
    observations.
    """
    emb = np.asarray(embeddings)
    if emb.ndim != 2 or emb.shape[0] == 0:
        raise ClusteringError(f"embeddings must be non-empty 2-d, got shape {emb.shape}")
    emb = np.ascontiguousarray(emb)
    index: dict[bytes, int] = {}
    labels = np.empty(emb.shape[0], dtype=np.int64)
    centers = []
    for t in range(emb.shape[0]):
        key = emb[t].tobytes()
        m = index.get(key)
        if m is None:
            m = len(centers)
            index[key] = m
            centers.append(emb[t].astype(np.float64))
        labels[t] = m
    return EpisodicClustering.from_labels(np.stack(centers), labels)


# ---------------------------------------------------------------------------
# reward trace
# ---------------------------------------------------------------------------


@dataclass
class RewardTrace:
    rewards: np.ndarray        # (T,) float64 intrinsic rewards
    pseudo_counts: np.ndarray  # (T,) int64
    table_indices: np.ndarray  # (T,) int64 table entry each step contributed to


def combine_rewards(extrinsic, trace: RewardTrace, scale: float = 0.1) -> np.ndarray:
    """Total reward per step: extrinsic plus ``scale`` times intrinsic."""
    ext = np.asarray(extrinsic, dtype=np.float64)
    if ext.shape != trace.rewards.shape:
        raise ValueError(
            f"extrinsic length {ext.shape} does not match trace {trace.rewards.shape}")
    return ext + scale * trace.rewards


# ---------------------------------------------------------------------------
# the global table
# ---------------------------------------------------------------------------


class ClusterTable:
    """Append-only table of (center, count) pairs shared across episodes."""

    def __init__(self, dim: int, kappa: float = 0.8):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        if not 0.0 <= kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
        self.dim = dim
        self.kappa = float(kappa)
        self._size = 0
        self._centers = np.empty((16, dim), dtype=np.float64)
        self._norms = np.empty(16, dtype=np.float64)
        self._counts: list[int] = []

    # -- views ------------------------------------------------------------

    @property
    def size(self) -> int:
        return self._size

    @property
    def centers(self) -> np.ndarray:
        return self._centers[: self._size].copy()

    @property
    def counts(self) -> np.ndarray:
        return np.asarray(self._counts, dtype=np.int64)

    def total_count(self) -> int:
        return sum(self._counts)

    # -- core operations ----------------------------------------------------

    def match(self, center: np.ndarray) -> tuple[int | None, float]:
        """Best entry for a query center: ``(index, similarity)``.

        An empty table yields ``(None, -inf)``.  Entries or queries with zero
        norm compare at similarity 0.  Ties resolve to the lowest index.
        """
        q = np.asarray(center, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ValueError(f"center has dimension {q.shape[0]}, table holds {self.dim}")
        if self._size == 0:
            return None, float("-inf")
        qnorm = np.linalg.norm(q)
        dots = self._centers[: self._size] @ q
        denom = self._norms[: self._size] * qnorm
        with np.errstate(divide="ignore", invalid="ignore"):
            sims = np.where(denom > 0.0, dots / denom, 0.0)
        best = int(np.argmax(sims))
        return best, float(sims[best])

    def _append(self, center: np.ndarray, count: int) -> int:
        if self._size == self._centers.shape[0]:
            grown = np.empty((2 * self._size, self.dim), dtype=np.float64)
            grown[: self._size] = self._centers[: self._size]
            self._centers = grown
            norms = np.empty(2 * self._size, dtype=np.float64)
            norms[: self._size] = self._norms[: self._size]
            self._norms = norms
        quantised = np.asarray(center, dtype=np.float32).astype(np.float64)
        self._centers[self._size] = quantised
        self._norms[self._size] = np.linalg.norm(quantised)
        self._counts.append(int(count))
        self._size += 1
        return self._size - 1

    def process_episode(self, clustering: EpisodicClustering) -> RewardTrace:
        """Reward one episode and fold its cluster occupancies into the table."""
        clustering.validate()
        if clustering.centers.shape[1] != self.dim:
            raise ClusteringError(
                f"cluster centers have dimension {clustering.centers.shape[1]}, "
                f"table holds {self.dim}")

        t_total = clustering.n_steps
        rewards = np.zeros(t_total, dtype=np.float64)
        pseudo = np.zeros(t_total, dtype=np.int64)
        table_idx = np.zeros(t_total, dtype=np.int64)

        occupied = np.flatnonzero(clustering.counts > 0)
        order = occupied[np.argsort(clustering.first_occurrence[occupied], kind="stable")]
        for m in order:
            steps = np.flatnonzero(clustering.labels == m)
            center = clustering.centers[m]
            matched, sim = self.match(center)
            is_new = matched is None or sim < self.kappa
            base = 0 if is_new else self._counts[matched]
            occurrence = np.arange(1, steps.shape[0] + 1, dtype=np.int64)
            rho = base + occurrence
            rewards[steps] = 1.0 / np.sqrt(rho.astype(np.float64))
            pseudo[steps] = rho
            # table update happens after this cluster's rewards so the counts
            # used above are the pre-episode-cluster values
            if is_new:
                entry = self._append(center, int(steps.shape[0]))
            else:
                self._counts[matched] += int(steps.shape[0])
                entry = matched
            table_idx[steps] = entry
        return RewardTrace(rewards=rewards, pseudo_counts=pseudo, table_indices=table_idx)

    # -- persistence --------------------------------------------------------

    def snapshot(self, path):
        """Write entries to a little-endian binary snapshot.

        Layout: magic b"CCGT", version u32, dim u32, entry count u32, then per
        entry dim float32 center values followed by a u64 count.  The match
        threshold is runtime configuration and is not stored.
        """
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<III", SNAPSHOT_VERSION, self.dim, self._size))
            for i in range(self._size):
                fh.write(self._centers[i].astype("<f4").tobytes())
                fh.write(struct.pack("<Q", self._counts[i]))


def table_restore(path, kappa: float = 0.8) -> ClusterTable:
    """Rebuild a table from a snapshot; ``kappa`` is supplied by the caller."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise TableFormatError(f"bad magic {magic!r}, expected {SNAPSHOT_MAGIC!r}", 0)
        header = fh.read(12)
        if len(header) < 12:
            raise TableFormatError("truncated snapshot: incomplete header", 4)
        version, dim, size = struct.unpack("<III", header)
        if version != SNAPSHOT_VERSION:
            raise TableFormatError(f"unsupported snapshot version {version}", 4)
        if dim == 0:
            raise TableFormatError("dim must be positive", 8)
        table = ClusterTable(dim=dim, kappa=kappa)
        offset = 16
        entry_bytes = dim * 4 + 8
        for i in range(size):
            buf = fh.read(entry_bytes)
            if len(buf) < entry_bytes:
                raise TableFormatError(
                    f"truncated snapshot: entry {i} incomplete", offset)
            center = np.frombuffer(buf, dtype="<f4", count=dim)
            (count,) = struct.unpack_from("<Q", buf, dim * 4)
            table._append(center.astype(np.float64), count)
            offset += entry_bytes
        trailing = fh.read(1)
        if trailing:
            raise TableFormatError("trailing bytes after final entry", offset)
        return table
