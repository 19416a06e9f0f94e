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


"""Siamese transformer relevance ranking."""

from siamrank._core import (
    DataError,
    DatasetSplit,
    EmbeddingStore,
    GbrtModel,
    NumericError,
    QueryDocModel,
    SiameseModel,
    UsageError,
    Vocab,
    assemble_doc_repr,
    dcg,
    evaluate_scores,
    generate_synthetic,
    lexical_feature_names,
    map_label,
    oracle_p_at_10,
    p_at_10,
    preprocess_url,
    random_baseline,
)

__all__ = [
    "DataError",
    "DatasetSplit",
    "EmbeddingStore",
    "GbrtModel",
    "NumericError",
    "QueryDocModel",
    "SiameseModel",
    "UsageError",
    "Vocab",
    "assemble_doc_repr",
    "dcg",
    "evaluate_scores",
    "generate_synthetic",
    "lexical_feature_names",
    "map_label",
    "oracle_p_at_10",
    "p_at_10",
    "preprocess_url",
    "random_baseline",
]
