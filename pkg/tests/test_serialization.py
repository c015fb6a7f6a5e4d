import json

import numpy as np
import pytest

from services.qif import make_channel, make_gain, make_prior, pair_label, parallel
from utils.errors import MalformedCsv, NonStochasticRow
from utils.serialization import channel_from_csv, channel_to_csv, dumps, from_document, loads, to_document


@pytest.fixture
def rr():
    return make_channel(["yes", "no"], ["yes", "no"], [[0.75, 0.25], [0.25, 0.75]])


def test_channel_document(rr):
    doc = to_document(rr)
    assert doc == {"kind": "channel", "rows": ["yes", "no"], "cols": ["yes", "no"], "entries": [[0.75, 0.25], [0.25, 0.75]]}
    again = loads(dumps(rr))
    assert again.row_labels == rr.row_labels
    np.testing.assert_array_equal(again.entries, rr.entries)


def test_composite_labels_survive_json(rr):
    both = parallel(rr, rr)
    doc = json.loads(dumps(both))
    assert doc["cols"][0] == ["yes", "yes"]
    assert loads(json.dumps(doc)).col_labels[0] == pair_label("yes", "yes")


def test_prior_and_gain_documents():
    prior = from_document(to_document(make_prior(["a", "b"], [0.25, 0.75])))
    assert prior.prob("b") == 0.75
    gain = make_gain(["guess-a"], ["a", "b"], [[1.0, 0.0]])
    assert from_document(to_document(gain)).gains.tolist() == [[1.0, 0.0]]
    with pytest.raises(TypeError):
        to_document({"entries": []})


def test_documents_are_validated():
    with pytest.raises(NonStochasticRow):
        from_document({"rows": ["a"], "cols": ["x", "y"], "entries": [[0.5, 0.6]]})


def test_channel_csv(rr):
    text = channel_to_csv(parallel(rr, rr))
    assert text.splitlines()[0] == ",yes|yes,yes|no,no|yes,no|no"
    back = channel_from_csv(text)
    assert back.col_labels[1] == ("yes", "no")
    np.testing.assert_array_equal(back.entries, parallel(rr, rr).entries)


def test_channel_csv_errors():
    with pytest.raises(MalformedCsv):
        channel_from_csv(",x\na,half\n")
