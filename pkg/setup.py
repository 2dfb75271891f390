import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build without the compiled core
    cythonize = None


def extensions():
    if cythonize is None or os.environ.get("CONSENSUS_TOPOLOGY_NO_EXT"):
        return []
    ext = Extension(
        "consensus_topology._ckernels",
        ["src/consensus_topology/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
