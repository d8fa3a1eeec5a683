"""Backend selection for the rendering kernel.

The compiled extension is preferred when importable; the pure-Python twin is
the fallback and can be forced with ``CLUSTERCOUNT_PURE=1`` (useful for
benchmarking and for environments without a C toolchain).  Both produce
bit-identical frames, so the choice never affects results, only speed.
"""

import os

import numpy as np

if os.environ.get("CLUSTERCOUNT_PURE") == "1":
    from . import _raycast_py as _impl
    BACKEND = "pure"
else:
    try:
        from . import _raycast as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _raycast_py as _impl
        BACKEND = "pure"


def render_scene(occupancy: np.ndarray, texgrid: np.ndarray, palettes: np.ndarray,
                 x: float, y: float, heading_deg: float, fov_deg: float,
                 agent_tex: int, height: int, width: int) -> np.ndarray:
    """Raycast one first-person frame; returns (height, width, 3) float32 in [0, 1]."""
    occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
    tex = np.ascontiguousarray(texgrid, dtype=np.int32)
    pal = np.ascontiguousarray(palettes, dtype=np.float64)
    if tex.shape != occ.shape:
        raise ValueError(f"texgrid shape {tex.shape} does not match grid {occ.shape}")
    if pal.ndim != 2 or pal.shape[1] != 7:
        raise ValueError(f"palettes must be (n, 7), got {pal.shape}")
    if not 0 <= agent_tex < pal.shape[0]:
        raise ValueError(f"agent_tex {agent_tex} outside palette table of {pal.shape[0]}")
    if int(tex.max(initial=0)) >= pal.shape[0] or int(tex.min(initial=0)) < 0:
        raise ValueError("texgrid references palettes that do not exist")
    out = np.empty((height, width, 3), dtype=np.float32)
    _impl.render_columns(occ, tex, pal, float(x), float(y), float(heading_deg),
                         float(fov_deg), int(agent_tex), out)
    return out


def backend_name() -> str:
    return BACKEND
