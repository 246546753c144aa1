"""CMake-driven build of the chrono python package.

The extension links against the C++ core (and through it libtorch and
OpenCV), so the build delegates to the project's CMake configuration and
copies the staged package out of the build tree.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).parent.resolve()
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            f"-DCMAKE_BUILD_TYPE={'Debug' if self.debug else 'Release'}",
            "-DCHRONO_BUILD_TESTS=OFF",
            "-DCHRONO_BUILD_PYTHON=ON",
            f"-DPYTHON_EXECUTABLE={sys.executable}",
        ]
        subprocess.run(["cmake", "-S", str(source_dir), "-B", str(build_dir)] + cmake_args,
                       check=True)
        subprocess.run(["cmake", "--build", str(build_dir), "--target", "chrono_py", "-j"],
                       check=True)

        staged = build_dir / "python" / "chrono"
        target = Path(self.get_ext_fullpath(ext.name)).resolve().parent / "chrono"
        if target.exists():
            shutil.rmtree(target)
        shutil.copytree(staged, target)


setup(
    ext_modules=[CMakeExtension("chrono._core")],
    cmdclass={"build_ext": CMakeBuild},
)
