"""Build the optional compiled kernels (GMP big-integer arithmetic, canonical codec).

The extensions are optional: if Cython, a C compiler or libgmp is missing the
package installs without them and ``cbdc.kernels`` falls back to pure Python.
"""
import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping compiled kernels ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def extensions():
    if os.environ.get("CBDC_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    exts = [
        Extension("cbdc.kernels._gmp", ["src/cbdc/kernels/_gmp.pyx"], libraries=["gmp"],
                  extra_compile_args=["-O2"]),
        Extension("cbdc.kernels._codec", ["src/cbdc/kernels/_codec.pyx"], extra_compile_args=["-O2"]),
    ]
    return cythonize(exts, compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
