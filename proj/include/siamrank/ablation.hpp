// Copyright 2026 The siamrank Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "siamrank/dataset.hpp"
#include "siamrank/gbrt.hpp"
#include "siamrank/models.hpp"

namespace siamrank {

struct ExperimentData {
    DatasetSplit train;
    DatasetSplit dev;
    DatasetSplit test;
};

struct AblationConfig {
    EncoderConfig encoder;
    TrainConfig train;
    GbrtConfig gbrt;
    SiameseModel::Options siamese;
    std::size_t seeds = 4;
    /// Also report a GBRT ranker with the model score as a feature.
    bool with_gbrt = true;

    void validate() const;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
};

MeanStd mean_std(std::span<const double> values);

/// One configuration evaluated over several seeds; Test P@10 in percent.
struct AblationRow {
    std::string name;
    std::vector<double> standalone;
    std::vector<double> with_gbrt;
};

/// Test P@10 of a GBRT trained on lexical features plus the given model
/// scores (Train for fitting, Dev for early stopping). Lexical statistics of
/// each split come from that split's own documents.
double gbrt_with_scores(const ExperimentData& data, std::span<const float> train_scores,
                        std::span<const float> dev_scores, std::span<const float> test_scores,
                        const GbrtConfig& cfg);

/// Trains one siamese model per seed and fills one row.
AblationRow run_siamese_seeds(const std::string& name, const ExperimentData& data, const Vocab& vocab,
                              const AblationConfig& cfg);

/// Every interaction variant.
std::vector<AblationRow> ablate_interaction(const ExperimentData& data, const Vocab& vocab, AblationConfig cfg);

/// Title, URL and BTE alone, then title + URL and title + URL + BTE. Each
/// model is trained and tested on the masked representation.
std::vector<AblationRow> ablate_parts(const ExperimentData& data, const Vocab& vocab, const AblationConfig& cfg);

/// Siamese models trained on random record subsets of the given sizes, a
/// fresh subset per seed.
std::vector<AblationRow> ablate_volume(const ExperimentData& data, const Vocab& vocab, const AblationConfig& cfg,
                                       std::span<const std::size_t> sizes);

/// name, standalone mean/std, with_gbrt mean/std, then one column per seed.
void write_ablation_tsv(std::span<const AblationRow> rows, const std::filesystem::path& path,
                        const std::string& key_header = "model");

}  // namespace siamrank
