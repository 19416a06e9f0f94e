# Copyright 2026 The siamrank Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import math

import numpy as np
import pytest

import siamrank


def test_url_and_doc_repr():
    url = siamrank.preprocess_url("https://www.example.cz/a-b_c?x=1")
    assert url == "example.cz/a b c?x=1"
    assert siamrank.preprocess_url("a%20b+c") == "a b c"
    assert siamrank.assemble_doc_repr("t", url, "b") == f"title: t url: {url} bte: b"
    assert siamrank.assemble_doc_repr("t", "u", "b", parts="title") == "title: t"


def test_label_map():
    assert siamrank.map_label("little_useful", "test") == 0.75
    assert siamrank.map_label("almost_not_useful", "train_big") == 0.25
    assert siamrank.map_label("almost_not_useful", "dev") == 0.5
    with pytest.raises(siamrank.UsageError):
        siamrank.map_label("great", "test")


def test_metrics():
    assert siamrank.p_at_10([1, 1]) == pytest.approx(0.2)
    assert siamrank.dcg([1, 1]) == pytest.approx(1 + 1 / math.log2(3))
    with pytest.raises(siamrank.UsageError):
        siamrank.dcg([1], gain="cubic")


@pytest.fixture(scope="module")
def data():
    return siamrank.generate_synthetic(n_queries=16, docs_per_query=10, vocab_size=60, body_words=6)


def test_synthetic_baselines(data):
    test = data["test"]
    assert len(test) > 0
    assert test.kind == "test"
    oracle = siamrank.oracle_p_at_10(test)
    assert oracle >= siamrank.random_baseline(test, runs=20, seed=1)
    labels = [r["label"] for r in test.records()]
    assert siamrank.evaluate_scores(test, labels)["p_at_10"] == pytest.approx(oracle)


def test_tsv_roundtrip(data, tmp_path):
    path = tmp_path / "dev.tsv"
    data["dev"].save(path)
    back = siamrank.DatasetSplit.load(path, kind="dev")
    assert back.records() == data["dev"].records()
    with pytest.raises(siamrank.DataError):
        siamrank.DatasetSplit.load(tmp_path / "missing.tsv")


def test_siamese_store_roundtrip(data, tmp_path):
    corpus = [r["query"] for r in data["train_big"].records()] + [
        r["doc_repr"] for r in data["train_big"].records()
    ]
    vocab = siamrank.Vocab.train(corpus, max_size=300)
    ids = vocab.encode("hello world", max_len=16)
    assert ids[0] == 2 and ids[-1] == 3

    model = siamrank.SiameseModel.create(vocab, hidden=16, heads=2, ff_dim=32)
    e = model.embed("a query")
    assert e.shape == (16,) and np.all(np.isfinite(e))

    test = data["test"]
    store = siamrank.EmbeddingStore.precompute(model, test)
    path = tmp_path / "store.drse"
    store.save(path)
    loaded = siamrank.EmbeddingStore.load(path)
    assert loaded.keys() == store.keys()
    assert not loaded.is_quantized and loaded.quantized().is_quantized

    rec = test.record(0)
    direct = model.predict(rec["query"], rec["doc_repr"])
    via_store = loaded.score(model, rec["query"], [rec["url"]])[0]
    assert via_store == pytest.approx(direct, abs=1e-6)
    assert model.score(model.embed(rec["query"]), loaded.lookup(rec["url"])) == pytest.approx(direct, abs=1e-6)
    assert loaded.lookup("nope") is None
    with pytest.raises(siamrank.DataError):
        loaded.score(model, "q", ["nope"])

    model.save(tmp_path / "m.bin")
    again = siamrank.SiameseModel.load(tmp_path / "m.bin")
    assert again.predict(rec["query"], rec["doc_repr"]) == direct
