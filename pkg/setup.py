import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("BUNCHLAB_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        pyx = os.path.join("src", "bunchlab", "nn", "kernels", "_speedups.pyx")
        if os.path.exists(pyx):
            ext_modules = cythonize(
                [
                    Extension(
                        "bunchlab.nn.kernels._speedups",
                        [pyx],
                        include_dirs=[numpy.get_include()],
                        extra_compile_args=["-O3"],
                        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    )
                ],
                language_level=3,
            )
    except ImportError:
        # No Cython toolchain: install pure-python kernels only.
        ext_modules = []

setup(ext_modules=ext_modules)
