import os

from setuptools import Extension, setup



def _simd_flags():
    # the extension is built on the machine that runs it; use AVX2 when present
    if "HARNESSLAB_CFLAGS" in os.environ:
        return os.environ["HARNESSLAB_CFLAGS"].split()
    try:
        with open("/proc/cpuinfo") as fh:
            return ["-mavx2"] if " avx2" in fh.read() else []
    except OSError:
        return []


ext_modules = []
if os.environ.get("HARNESSLAB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # pure-Python install; the NumPy fallback is used
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "harnesslab._core",
                    ["src/harnesslab/_core.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps arithmetic identical to the NumPy path
                    extra_compile_args=["-O3", "-ffp-contract=off"] + _simd_flags(),
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
