"""Build script for the optional compiled edit-distance kernel.

The extension accelerates the inner search loop; the package works without
it (a vectorized numpy fallback is selected at import time).
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "gesturematch._levenshtein",
                ["src/gesturematch/_levenshtein.pyx"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
        },
    )
else:
    extensions = []

setup(ext_modules=extensions)
