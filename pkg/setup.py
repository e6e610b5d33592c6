"""Build script for the optional compiled training kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time); compilation failures therefore only cost speed.
Set FRAMEVEC_PURE_PYTHON=1 to skip the extension build entirely.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(
            f"WARNING: building the compiled training kernel failed ({exc}); "
            "falling back to the pure-Python implementation",
            file=sys.stderr,
        )


def extensions():
    if os.environ.get("FRAMEVEC_PURE_PYTHON"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "WARNING: Cython not available; skipping the compiled training kernel",
            file=sys.stderr,
        )
        return []
    ext = Extension(
        "framevec.factorizer._sgd_fast",
        sources=["src/framevec/factorizer/_sgd_fast.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
