import os

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.path.exists("src/ethgossip/_kernel.pyx"):
    extensions = cythonize(
        [
            Extension(
                "ethgossip._kernel",
                ["src/ethgossip/_kernel.pyx"],
                language="c++",
                extra_compile_args=["-O3", "-std=c++17"],
            )
        ],
        language_level=3,
    )

# The package works without the extension (pure-Python event loop); the
# compiled kernel is only needed for large scenarios.
setup(ext_modules=extensions)
