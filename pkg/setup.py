"""Build script for the compiled schedule kernel.

The Cython extension is optional: if it cannot be built the package falls
back to the pure-Python kernel in ``plan3d._schedule_py``.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("PLAN3D_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("plan3d._schedule", ["src/plan3d/_schedule.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
