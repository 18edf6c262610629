import glob
import os

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

eigen = os.environ.get("EIGEN3_INCLUDE_DIR", "/usr/include/eigen3")

ext = Pybind11Extension(
    "pavenet",
    sorted(glob.glob("src/*.cpp")) + ["bindings/module.cpp"],
    include_dirs=["include", "vendor", eigen],
    cxx_std=20,
    # scalar loops must stay contraction-free so results are bit-reproducible
    # across builds; AVX2/FMA is only for Eigen's packed kernels
    extra_compile_args=["-ffp-contract=off", "-mavx2", "-mfma"],
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
