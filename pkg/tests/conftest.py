import pytest

from parsentropy import (
    HiddenMarkovModel,
    IIDModel,
    MarkovModel,
    MixtureModel,
    reference_model,
)


@pytest.fixture(scope="session")
def m1() -> MarkovModel:
    return reference_model("m1")


@pytest.fixture(scope="session")
def h1() -> HiddenMarkovModel:
    return reference_model("h1")


@pytest.fixture(scope="session")
def iid2() -> IIDModel:
    return reference_model("iid_uniform")


@pytest.fixture(scope="session")
def mixture(m1, iid2) -> MixtureModel:
    return reference_model("mixture_m1_uniform")


@pytest.fixture(scope="session")
def all_reference_models(iid2, m1, h1, mixture):
    return {"iid_uniform": iid2, "m1": m1, "h1": h1, "mixture": mixture}


def naive_word_prob(model, word) -> float:
    """Independent per-word probability: plain products and matrix forward."""
    word = list(int(s) for s in word)
    if isinstance(model, IIDModel):
        out = 1.0
        for s in word:
            out *= float(model.p[s])
        return out
    if isinstance(model, MarkovModel):
        out = float(model.initial[word[0]])
        for a, b in zip(word, word[1:]):
            out *= float(model.transition[a, b])
        return out
    if isinstance(model, HiddenMarkovModel):
        alpha = model.hidden_initial * model.emission[:, word[0]]
        for s in word[1:]:
            alpha = (alpha @ model.hidden_transition) * model.emission[:, s]
        return float(alpha.sum())
    if isinstance(model, MixtureModel):
        return model.weight * naive_word_prob(model.first, word) + (
            1.0 - model.weight
        ) * naive_word_prob(model.second, word)
    raise TypeError(type(model))


def naive_marginal_entropy(model, n: int) -> float:
    """Entropy of the n-th marginal by brute-force word iteration."""
    import itertools
    import math

    total = 0.0
    for word in itertools.product(range(model.alphabet_size), repeat=n):
        p = naive_word_prob(model, word)
        if p > 0.0:
            total -= p * math.log(p)
    return total
