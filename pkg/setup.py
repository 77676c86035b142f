import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy fallback in pbsurf._pykernels takes over
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "pbsurf._ckernels",
                ["src/pbsurf/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
