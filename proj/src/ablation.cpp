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

#include "siamrank/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "siamrank/config.hpp"
#include "siamrank/metrics.hpp"

namespace siamrank {

void AblationConfig::validate() const
{
    if (seeds == 0) {
        throw UsageError("ablation needs at least one seed");
    }
    encoder.validate();
    train.validate();
    if (with_gbrt) {
        gbrt.validate();
    }
}

MeanStd mean_std(std::span<const double> values)
{
    MeanStd out;
    if (values.empty()) {
        return out;
    }
    for (double v : values) {
        out.mean += v;
    }
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - out.mean) * (v - out.mean);
        }
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

double gbrt_with_scores(const ExperimentData& data, std::span<const float> train_scores,
                        std::span<const float> dev_scores, std::span<const float> test_scores, const GbrtConfig& cfg)
{
    auto features = [](const DatasetSplit& split, std::span<const float> scores) {
        return FeatureExtractor::fit(split).extract(split, scores);
    };
    const auto model = train_gbrt(features(data.train, train_scores), labels_of(data.train),
                                  features(data.dev, dev_scores), labels_of(data.dev), cfg);
    const auto pred = model.predict(features(data.test, test_scores));
    std::vector<float> scores(pred.begin(), pred.end());
    return split_p_at_10(data.test, scores);
}

AblationRow run_siamese_seeds(const std::string& name, const ExperimentData& data, const Vocab& vocab,
                              const AblationConfig& cfg)
{
    cfg.validate();
    AblationRow row{name, {}, {}};
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        TrainConfig tc = cfg.train;
        tc.seed = cfg.train.seed + s;
        auto model = train_siamese(SiameseModel::create(cfg.encoder, vocab, cfg.siamese, tc.base_seed, tc.seed),
                                   data.train, data.dev, tc);
        const auto test_scores = model.predict_split(data.test, tc.workers);
        row.standalone.push_back(split_p_at_10(data.test, test_scores));
        if (cfg.with_gbrt) {
            GbrtConfig gc = cfg.gbrt;
            gc.seed = tc.seed;
            row.with_gbrt.push_back(gbrt_with_scores(data, model.predict_split(data.train, tc.workers),
                                                     model.predict_split(data.dev, tc.workers), test_scores, gc));
        }
    }
    return row;
}

std::vector<AblationRow> ablate_interaction(const ExperimentData& data, const Vocab& vocab, AblationConfig cfg)
{
    std::vector<AblationRow> rows;
    for (auto variant : kAllInteractionVariants) {
        cfg.siamese.variant = variant;
        rows.push_back(run_siamese_seeds(std::string(to_string(variant)), data, vocab, cfg));
    }
    return rows;
}

std::vector<AblationRow> ablate_parts(const ExperimentData& data, const Vocab& vocab, const AblationConfig& cfg)
{
    const std::pair<const char*, PartMask> masks[] = {
        {"title", {true, false, false}},
        {"url", {false, true, false}},
        {"bte", {false, false, true}},
        {"title+url", {true, true, false}},
        {"title+url+bte", {true, true, true}},
    };
    std::vector<AblationRow> rows;
    for (const auto& [name, mask] : masks) {
        ExperimentData masked{with_mask(data.train, mask), with_mask(data.dev, mask), with_mask(data.test, mask)};
        rows.push_back(run_siamese_seeds(name, masked, vocab, cfg));
    }
    return rows;
}

std::vector<AblationRow> ablate_volume(const ExperimentData& data, const Vocab& vocab, const AblationConfig& cfg,
                                       std::span<const std::size_t> sizes)
{
    cfg.validate();
    std::vector<AblationRow> rows;
    for (std::size_t size : sizes) {
        if (size == 0 || size > data.train.size()) {
            throw UsageError("training volume " + std::to_string(size) + " outside [1, " +
                             std::to_string(data.train.size()) + "]");
        }
        AblationRow row{std::to_string(size), {}, {}};
        for (std::size_t s = 0; s < cfg.seeds; ++s) {
            AblationConfig one = cfg;
            one.seeds = 1;
            one.train.seed = cfg.train.seed + s;
            std::vector<std::size_t> idx(data.train.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                idx[i] = i;
            }
            Rng rng(splitmix64(one.train.seed ^ size));
            rng.shuffle(idx);
            idx.resize(size);
            std::sort(idx.begin(), idx.end());
            std::vector<RelevanceRecord> records;
            for (std::size_t i : idx) {
                records.push_back(data.train.records()[i]);
            }
            ExperimentData sub{DatasetSplit::from_records(data.train.kind(), std::move(records)), data.dev, data.test};
            auto r = run_siamese_seeds(row.name, sub, vocab, one);
            row.standalone.push_back(r.standalone.front());
            if (!r.with_gbrt.empty()) {
                row.with_gbrt.push_back(r.with_gbrt.front());
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_tsv(std::span<const AblationRow> rows, const std::filesystem::path& path,
                        const std::string& key_header)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    std::size_t seeds = 0;
    for (const auto& r : rows) {
        seeds = std::max(seeds, r.standalone.size());
    }
    out << key_header << "\tstandalone_mean\tstandalone_std\twith_gbrt_mean\twith_gbrt_std";
    for (std::size_t s = 0; s < seeds; ++s) {
        out << "\tstandalone_seed" << s;
    }
    out << '\n';
    for (const auto& r : rows) {
        const auto a = mean_std(r.standalone);
        out << r.name << '\t' << format_double(a.mean) << '\t' << format_double(a.std);
        if (r.with_gbrt.empty()) {
            out << "\t\t";
        } else {
            const auto g = mean_std(r.with_gbrt);
            out << '\t' << format_double(g.mean) << '\t' << format_double(g.std);
        }
        for (double v : r.standalone) {
            out << '\t' << format_double(v);
        }
        out << '\n';
    }
}

}  // namespace siamrank
