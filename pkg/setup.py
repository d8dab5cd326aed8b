"""Build shim: compiles the optional tree-recursion extension.

The package works without the extension (a vectorized numpy fallback is
selected at import time); the build therefore tolerates a missing or
failing Cython toolchain instead of aborting the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "rslab._tree_core",
                ["src/rslab/_tree_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"warning: building without compiled tree core ({exc})")

setup(ext_modules=ext_modules)
