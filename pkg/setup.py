"""Build script for the optional compiled raycaster.

The package works without the extension (a pure-Python twin of the kernel is
selected at import time), so any failure here degrades to a warning instead of
aborting the install.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "clustercount._raycast",
        sources=["src/clustercount/_raycast.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off: no fused multiply-add, so the compiled kernel and
        # the pure-Python fallback produce bit-identical doubles.
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    warnings.warn(f"building without compiled raycaster: {exc}")

setup(ext_modules=ext_modules)
