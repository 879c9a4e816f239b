import os

import numpy as np
from setuptools import Extension, setup

PYX = os.path.join("src", "wbmpc", "_core.pyx")

ext_modules = []
if os.path.exists(PYX):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "wbmpc._core",
                sources=[PYX],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
