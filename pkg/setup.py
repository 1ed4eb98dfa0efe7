"""Build script: compiles the optional kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any failure here downgrades to a pure-Python
install instead of aborting.
"""

import sys

from setuptools import setup


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("allab: Cython not available, building without compiled kernels",
              file=sys.stderr)
        return []
    try:
        return cythonize(
            ["src/allab/_kernels/_core.pyx"],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"allab: skipping compiled kernels ({exc})", file=sys.stderr)
        return []


setup(ext_modules=_extensions())
