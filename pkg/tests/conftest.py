import os

# Pin BLAS to one thread before numpy loads anywhere: the model's matrices
# are small enough that thread coordination costs more than it saves, and the
# acceptance timing criteria are specified for a single core.
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ.setdefault(var, "1")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training tests")
