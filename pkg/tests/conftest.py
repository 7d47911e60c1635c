import numpy as np
import pytest

from restorekit._backend import compiled_kernels, python_kernels

BACKENDS = [pytest.param(python_kernels, id="numpy")]
if compiled_kernels is not None:
    BACKENDS.append(pytest.param(compiled_kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """108 natural 128x128 RGB crops written as PNG."""
    pytest.importorskip("skimage")
    from restorekit.harness.corpus import write_sample_corpus
    root = tmp_path_factory.mktemp("corpus")
    write_sample_corpus(root, size=128, per_source=12)
    return root


def rand_image(rng, h, w):
    return rng.random((3, h, w))
