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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "siamrank/common.hpp"
#include "siamrank/dataset.hpp"
#include "siamrank/metrics.hpp"

using namespace siamrank;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text)
{
    auto path = fs::temp_directory_path() / name;
    std::ofstream(path, std::ios::binary) << text;
    return path;
}

}  // namespace

TEST(PreprocessUrl, PaperExample)
{
    EXPECT_EQ(preprocess_url("https://www.seznamzpravy.cz/clanek/"
                             "novinka-pro-cerstve-otce-tyden-placene-dovolene-po-narozeni-potomka-41487?autoplay=1"),
              "seznamzpravy.cz/clanek/novinka pro cerstve otce tyden placene dovolene po narozeni potomka "
              "41487?autoplay=1");
}

TEST(PreprocessUrl, DecodingRules)
{
    EXPECT_EQ(preprocess_url("a%20b+c"), "a b c");
    EXPECT_EQ(preprocess_url(""), "");
    EXPECT_EQ(preprocess_url("http://example.cz/%zz%4"), "example.cz/%zz%4");
    EXPECT_EQ(preprocess_url("http://WWW.Example.cz/A_B"), "www.example.cz/a b");
    EXPECT_EQ(preprocess_url("https://www.x.cz/%C4%8Cesko"), "x.cz/česko");
    EXPECT_EQ(preprocess_url("x.cz/a\tb"), "x.cz/a b");
}

TEST(DocRepr, PaperExample)
{
    const std::string title = "novinka pro čerstvé otce týden placené dovolené po narození potomka";
    const std::string url = "seznamzpravy.cz/clanek/novinka pro cerstve otce tyden placene dovolene po narozeni "
                            "potomka 41487?autoplay=1";
    const std::string bte = "Novinka pro čerstvé otce: týden placené dovolené po narození potomka";
    EXPECT_EQ(assemble_doc_repr(title, url, bte), "title: " + title + " url: " + url + " bte: " + bte);
}

TEST(DocRepr, Masks)
{
    EXPECT_EQ(assemble_doc_repr("t", "u", "b"), "title: t url: u bte: b");
    EXPECT_EQ(assemble_doc_repr("t", "u", "b", PartMask::parse("title")), "title: t");
    EXPECT_EQ(assemble_doc_repr("t", "u", "b", PartMask::parse("url,bte")), "url: u bte: b");
    EXPECT_EQ(assemble_doc_repr("", "", ""), "title:  url:  bte: ");
    EXPECT_THROW(PartMask::parse("body"), UsageError);
}

TEST(Labels, MappingPerSplit)
{
    using A = Annotation;
    using S = SplitKind;
    EXPECT_EQ(map_label(A::Useful, S::Test), 1.0);
    EXPECT_EQ(map_label(A::Useful, S::TrainBig), 1.0);
    EXPECT_EQ(map_label(A::LittleUseful, S::Test), 0.75);
    EXPECT_EQ(map_label(A::LittleUseful, S::Dev), 0.5);
    EXPECT_EQ(map_label(A::LittleUseful, S::TrainBig), 0.5);
    EXPECT_EQ(map_label(A::LittleUseful, S::TrainSmall), 0.5);
    EXPECT_EQ(map_label(A::AlmostNotUseful, S::Test), 0.25);
    EXPECT_EQ(map_label(A::AlmostNotUseful, S::TrainBig), 0.25);
    EXPECT_EQ(map_label(A::AlmostNotUseful, S::TrainSmall), 0.5);
    EXPECT_EQ(map_label(A::AlmostNotUseful, S::Dev), 0.5);
    EXPECT_EQ(map_label(A::NotUseful, S::Dev), 0.0);
    EXPECT_EQ(map_label(A::NotUseful, S::Test), 0.0);
}

TEST(Tsv, LoadBuildsRecords)
{
    auto path = write_temp("siamrank_load.tsv",
                           "id\tquery\turl\tdoc\ttitle\tlabel\n"
                           "q1\tVolno Otec\thttps://www.a.cz/x-y\tBody Text\tMy Title\t1.0\n"
                           "q1\tvolno otec\thttp://b.cz\tother\tt2\t0.25\n"
                           "q2\tauto\thttp://c.cz\tcar\t\t0\n");
    auto split = load_tsv(path, SplitKind::Test);
    ASSERT_EQ(split.size(), 3U);
    ASSERT_EQ(split.groups().size(), 2U);
    const auto& r = split.records()[0];
    EXPECT_EQ(r.query, "volno otec");
    EXPECT_EQ(r.title, "my title");
    EXPECT_EQ(r.doc_repr, "title: my title url: a.cz/x y bte: body text");
    EXPECT_EQ(r.label, 1.0);
    EXPECT_EQ(split.groups()[0].indices, (std::vector<std::size_t>{0, 1}));
    fs::remove(path);
}

TEST(Tsv, DropsEmptyDocumentsFromTrainingOnly)
{
    const std::string text = "id\tquery\turl\tdoc\ttitle\tlabel\n"
                             "q1\tx\thttp://a.cz\t\t\t1\n"
                             "q1\tx\thttp://b.cz\tbody\t\t0\n";
    auto path = write_temp("siamrank_empty.tsv", text);
    auto train = load_tsv(path, SplitKind::TrainBig);
    EXPECT_EQ(train.size(), 1U);
    EXPECT_EQ(train.dropped_empty(), 1U);
    auto test = load_tsv(path, SplitKind::Test);
    EXPECT_EQ(test.size(), 2U);
    fs::remove(path);
}

TEST(Tsv, ErrorsNameTheLine)
{
    auto bad_header = write_temp("siamrank_bad1.tsv", "id\tquery\n");
    EXPECT_THROW(load_tsv(bad_header, SplitKind::Test), DataError);
    auto bad_cols = write_temp("siamrank_bad2.tsv", "id\tquery\turl\tdoc\ttitle\tlabel\nq\tx\tu\td\n");
    try {
        load_tsv(bad_cols, SplitKind::Test);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    auto bad_label = write_temp("siamrank_bad3.tsv", "id\tquery\turl\tdoc\ttitle\tlabel\nq\tx\tu\td\tt\t1.5\n");
    EXPECT_THROW(load_tsv(bad_label, SplitKind::Test), DataError);
    auto dup = write_temp("siamrank_bad4.tsv",
                          "id\tquery\turl\tdoc\ttitle\tlabel\nq\tx\tu\td\tt\t1\nq\tx\tu\td\tt\t0\n");
    EXPECT_THROW(load_tsv(dup, SplitKind::Test), DataError);
    EXPECT_THROW(load_tsv("/nonexistent/file.tsv", SplitKind::Test), DataError);
    for (const auto& p : {bad_header, bad_cols, bad_label, dup}) {
        fs::remove(p);
    }
}

TEST(Tsv, SaveLoadRoundTripIsByteIdentical)
{
    SynthConfig cfg;
    cfg.n_queries = 20;
    auto data = generate_synthetic(cfg);
    auto a = fs::temp_directory_path() / "siamrank_rt_a.tsv";
    auto b = fs::temp_directory_path() / "siamrank_rt_b.tsv";
    save_tsv(data.test, a);
    auto back = load_tsv(a, SplitKind::Test);
    EXPECT_EQ(back.records(), data.test.records());
    save_tsv(back, b);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb);
    fs::remove(a);
    fs::remove(b);
}

TEST(Synthetic, DeterministicPerSeed)
{
    SynthConfig cfg;
    cfg.n_queries = 16;
    auto a = generate_synthetic(cfg);
    auto b = generate_synthetic(cfg);
    EXPECT_EQ(a.train_big.records(), b.train_big.records());
    EXPECT_EQ(a.test.records(), b.test.records());
    cfg.seed = 2;
    auto c = generate_synthetic(cfg);
    EXPECT_NE(a.test.records(), c.test.records());
}

TEST(Synthetic, RecordInvariants)
{
    SynthConfig cfg;
    cfg.n_queries = 40;
    auto data = generate_synthetic(cfg);
    for (const auto* split : {&data.train_big, &data.train_small, &data.dev, &data.test}) {
        ASSERT_FALSE(split->empty());
        for (const auto& g : split->groups()) {
            EXPECT_EQ(g.indices.size(), cfg.docs_per_query);
        }
        for (const auto& r : split->records()) {
            EXPECT_GE(r.label, 0.0);
            EXPECT_LE(r.label, 1.0);
            auto words = split_words(r.query);
            EXPECT_GE(words.size(), 1U);
            EXPECT_LE(words.size(), 5U);
            EXPECT_EQ(r.doc_repr, assemble_doc_repr(r.title, preprocess_url(r.url_raw), r.bte));
        }
    }
}

TEST(Synthetic, OracleFarAboveRandom)
{
    SynthConfig cfg;
    cfg.n_queries = 80;
    auto data = generate_synthetic(cfg);
    const double oracle = evaluate(oracle_split(data.test)).p_at_10;
    const double random = random_baseline(data.test, 100, 3).p_at_10;
    EXPECT_GT(oracle, random + 20.0);
}

TEST(Synthetic, ValidationRejectsBadConfigs)
{
    SynthConfig cfg;
    cfg.docs_per_query = 5;
    EXPECT_THROW(generate_synthetic(cfg), UsageError);
    cfg = {};
    cfg.relevant_fraction = 1.5;
    EXPECT_THROW(generate_synthetic(cfg), UsageError);
}

TEST(Mask, RebuildsRepresentation)
{
    SynthConfig cfg;
    cfg.n_queries = 8;
    auto data = generate_synthetic(cfg);
    auto masked = with_mask(data.test, PartMask::parse("title"));
    for (std::size_t i = 0; i < masked.size(); ++i) {
        EXPECT_EQ(masked.records()[i].doc_repr, "title: " + data.test.records()[i].title);
    }
}
