"""Build script: compiles the optional Cython sweep kernel.

The package works without the extension (a pure-NumPy fallback is selected
at import time), so a failed compile only costs speed.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("envcore._sweep_cy", ["src/envcore/_sweep_cy.pyx"])],
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"envcore: skipping Cython extension ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
