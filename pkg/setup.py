"""Build script for the compiled stepping kernel.

The kernel source lives in src/twinsim/physics/_kernels_impl.py (plain Python,
Cython pure mode).  We copy it to _kernels.py and cythonize the copy, so the
package ends up with an interpreted module (_kernels_impl) and a compiled one
(_kernels) built from identical source.  -ffp-contract=off keeps the compiled
arithmetic free of fused multiply-adds, matching the interpreted results bit
for bit.  If Cython is unavailable the package still installs; the engine then
falls back to the interpreted kernel.
"""

from pathlib import Path

from setuptools import Extension, setup

HERE = Path(__file__).parent
IMPL = HERE / "src" / "twinsim" / "physics" / "_kernels_impl.py"
COPY = HERE / "src" / "twinsim" / "physics" / "_kernels.py"

GENERATED_NOTE = "# Generated from _kernels_impl.py by setup.py; edit that file instead.\n"


def make_extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    src = GENERATED_NOTE + IMPL.read_text()
    if not COPY.exists() or COPY.read_text() != src:
        COPY.write_text(src)
    ext = Extension(
        "twinsim.physics._kernels",
        sources=[str(COPY.relative_to(HERE))],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"}, annotate=False)


setup(ext_modules=make_extensions())
