"""Soft visual prompt adaptation of frozen vision backbones, measured end to
end on an instruction-following navigation agent in procedural graph worlds."""

import os

# Single-threaded BLAS: runs are specified as one-core and deterministic.
# Only effective if this package is imported before numpy loads its BLAS.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
