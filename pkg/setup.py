"""Build script: compiles the Cython kernel extension when possible.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile degrades to a source-only install
rather than aborting.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "delaydense._kernels",
                ["src/delaydense/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the compiled arithmetic bit-identical
                # to the numpy fallback (no FMA contraction of x + h*f).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(
        f"delaydense: skipping compiled kernels ({exc!r}); "
        "pure-python fallback will be used\n"
    )

setup(ext_modules=ext_modules)
