import copy
import json

import pytest

from diaquad.corpus import bundled_corpus_path, load_corpus


@pytest.fixture(scope="session")
def phone_thread_raw():
    with open(bundled_corpus_path("phone_thread.json"), encoding="utf-8") as fh:
        return json.load(fh)[0]


@pytest.fixture()
def phone_thread_record(phone_thread_raw):
    return copy.deepcopy(phone_thread_raw)


@pytest.fixture(scope="session")
def phone_thread():
    return load_corpus(bundled_corpus_path("phone_thread.json"))[0]


@pytest.fixture(scope="session")
def sample5():
    return load_corpus(bundled_corpus_path("sample5.json"))
