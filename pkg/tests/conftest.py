import os

# single-threaded BLAS keeps timings comparable and results bitwise
# reproducible; must happen before numpy loads
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
