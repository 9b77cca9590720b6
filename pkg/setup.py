"""Build the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); set TREECOST_REQUIRE_C=1 to turn a failed extension
build into a hard error.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that degrades to the pure-Python fallback on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, cython missing, ...
            if os.environ.get("TREECOST_REQUIRE_C"):
                raise
            print(f"warning: building treecost._ckernels failed ({exc}); "
                  "falling back to pure-Python kernels", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            if os.environ.get("TREECOST_REQUIRE_C"):
                raise
            print(f"warning: compiling {ext.name} failed ({exc}); "
                  "falling back to pure-Python kernels", file=sys.stderr)


def extensions():
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "treecost.kernels._ckernels",
        sources=["src/treecost/kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
