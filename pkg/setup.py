"""Build script. The Cython extension is optional: if it cannot be built,
the package falls back to the pure-numpy kernels at import time."""

import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, cython missing, ...
            print(f"WARNING: compiled kernels not built ({exc}); "
                  "falling back to pure-numpy backend", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: failed to compile {ext.name} ({exc}); "
                  "falling back to pure-numpy backend", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "freqpatch._kernels._core",
        ["src/freqpatch/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        language_level="3",
        compiler_directives={"boundscheck": False, "wraparound": False,
                             "cdivision": True, "initializedcheck": False},
    )


setup(
    ext_modules=extensions(),
    include_dirs=[np.get_include()],
    cmdclass={"build_ext": optional_build_ext},
)
