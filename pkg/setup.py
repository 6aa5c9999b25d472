from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure numpy fallback is used at import time
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "airpark._kernels._ext",
                ["src/airpark/_kernels/_ext.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
