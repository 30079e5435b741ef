import pytest

from ruledistill.datagen import make_corpus

from util import fig_sentence, make_chunk, pool_of


@pytest.fixture
def fig():
    return fig_sentence()


@pytest.fixture
def fig_pool(fig):
    return pool_of(fig)


@pytest.fixture
def pd_chunk(fig):
    """The single-token 'PD' span with its context, as in the worked example."""
    return make_chunk(fig, (1, 2), support=5)


@pytest.fixture(scope="session")
def synth():
    """A mid-size synthetic corpus shared by read-only tests."""
    return make_corpus(n_sentences=120, seed=29, dev_sentences=40)
