"""Build script: compiles the optional stencil extension.

The package works without the extension (pure numpy fallbacks are selected at
import time), so a failed compile should not block installation.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "pilotwave._stencil",
                ["src/pilotwave/_stencil.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"pilotwave: skipping compiled stencil extension ({exc})")
    extensions = []

setup(ext_modules=extensions)
