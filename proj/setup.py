import os

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

EIGEN = os.environ.get("EIGEN3_INCLUDE_DIR", "/usr/include/eigen3")

SOURCES = ["bindings/module.cpp"] + sorted(
    os.path.join("src", f) for f in os.listdir("src") if f.endswith(".cpp")
)

ext = Pybind11Extension(
    "_dopl",
    SOURCES,
    include_dirs=["include", "vendor", EIGEN],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
