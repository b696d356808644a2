import json

import numpy as np
import pytest

from norakit.dataset import Context, Document, Golds, Instance, Span, instance_to_dict
from norakit.noiselab import generate_synthetic_corpus


def make_instance(iid="i0", target="Net was $3.0 million", span=(9, 12), tag="us-gaap:Revenues",
                  std=True, time="instant_current", scale=6, sign="positive", prev=None, nxt=None):
    doc = Document("Acme Corp", "0000012345", "10-K", "2023-12-31", 2023)
    return Instance(iid, doc, Context(target, prev, nxt), Span(*span),
                    Golds(tag, std, time, scale, sign))


def as_line(inst, **edits) -> str:
    rec = instance_to_dict(inst)
    for path, value in edits.items():
        node = rec
        keys = path.split(".")
        for k in keys[:-1]:
            node = node[k]
        if value is _DELETE:
            del node[keys[-1]]
        else:
            node[keys[-1]] = value
    return json.dumps(rec)


_DELETE = object()


@pytest.fixture
def delete():
    return _DELETE


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(0, n_instances=300, n_tag_classes=4, vocab_size=60)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
