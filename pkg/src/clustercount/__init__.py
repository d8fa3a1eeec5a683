"""Exploration by counting visits to clusters of observation embeddings.

Episodes are summarised by a Gaussian mixture over their embedded
observations; cluster centers are matched by cosine similarity against a
table that persists across episodes, whose per-entry counts define
pseudo-counts and an inverse-square-root intrinsic reward.  The package also
ships a deterministic first-person maze, tabular baselines, and a harness for
the threshold and episodic-clustering ablations.
"""

from .kernels import backend_name
from .pseudocount import ClusterTable, combine_rewards, table_restore

__version__ = "0.1.0"

__all__ = ["ClusterTable", "combine_rewards", "table_restore", "backend_name",
           "__version__"]
