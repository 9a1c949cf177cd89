#include <doctest.h>

#include <filesystem>

#include "qrec/config.hpp"
#include "qrec/dataset.hpp"
#include "qrec/errors.hpp"
#include "qrec/manifest.hpp"
#include "qrec/text_io.hpp"

using namespace qrec;
namespace fs = std::filesystem;

TEST_CASE("key=value parsing") {
  const auto kv = parse_key_values("# comment\n a = 1 \n\nb=two # trailing\n");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0] == std::pair<std::string, std::string>{"a", "1"});
  CHECK(kv[1].second == "two");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("a=1\na=2\n"), ConfigError);
}

TEST_CASE("experiment config keys, validation and round trip") {
  ExperimentConfig c = ExperimentConfig::from_text("hidden_dim=64\nheads=4\nlr=0.001\nlambda=1.5\n");
  CHECK(c.hidden_dim == 64);
  CHECK(c.lr == 0.001);
  CHECK(c.lambda == 1.5);
  CHECK(c.effective_attention_dim() == 32);
  CHECK_THROWS_AS(ExperimentConfig::from_text("bogus=1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("hidden_dim=64\nheads=5\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("precision=half\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("mu=-1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("epsilon=0\n"), ConfigError);
  const ExperimentConfig again = ExperimentConfig::from_text(c.to_text());
  CHECK(again.to_text() == c.to_text());
  CHECK(again.hash() == c.hash());
  c.apply(parse_overrides({"mu=0.25", "quality_measure=avg_dwell"}));
  CHECK(c.mu == 0.25);
  CHECK(c.quality_measure == QualityMeasure::kAvgDwell);
  CHECK(c.hash() != again.hash());
  CHECK_THROWS_AS(parse_overrides({"mu"}), ConfigError);

  // The training keys the file format guarantees.
  for (const char* key : {"embed_dim", "hidden_dim", "heads", "layers", "dropout", "max_title", "max_body",
                          "max_history", "lr", "batch_size", "epochs", "lambda", "mu", "epsilon", "neg_k", "seed",
                          "precision"}) {
    CHECK(c.to_text().find(std::string(key) + "=") != std::string::npos);
  }
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"paper.conf", "desk.conf"}) {
    const fs::path p = fs::path(QREC_SOURCE_DIR) / "configs" / name;
    INFO(p.string());
    CHECK_NOTHROW(ExperimentConfig::from_file(p.string()).validate());
  }
  const ExperimentConfig paper = ExperimentConfig::from_file((fs::path(QREC_SOURCE_DIR) / "configs" / "paper.conf").string());
  CHECK(paper.hidden_dim == 400);
  CHECK(paper.lr == 1e-4);
  CHECK(paper.epochs == 4);
}

TEST_CASE("vocabulary") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.id("<pad>") == 0);
  CHECK(v.id("missing") == 1);
  const int a = v.add("alpha");
  CHECK(v.add("alpha") == a);
  CHECK(Vocabulary::from_tsv(v.to_tsv()).id("alpha") == a);
}

TEST_CASE("dataset parsers") {
  const NewsCorpus corpus = parse_news("N1\ta b\tc d e\nN2\tb\tz\nN3\tq r\t\n");
  CHECK(corpus.size() == 3);
  CHECK(corpus.titles[0].size() == 2);
  CHECK(corpus.bodies[2].empty());
  CHECK(corpus.at("N2") == 1);
  CHECK_THROWS_AS(corpus.at("N9"), DataError);

  const auto imps = parse_behaviors("I1\tU1\t100\tN1\tN2-1 N3-0\nI2\tU2\t90\t\tN1-0 N2-1\n", corpus);
  REQUIRE(imps.size() == 2);
  CHECK(imps[0].history == std::vector<std::size_t>{0});
  CHECK(imps[0].candidates == std::vector<std::size_t>{1, 2});
  CHECK(imps[0].labels == std::vector<std::uint8_t>{1, 0});
  CHECK(imps[1].history.empty());
  CHECK_THROWS_AS(parse_behaviors("I1\tU1\t100\tN1\tN2-7\n", corpus), DataError);
  CHECK_THROWS_AS(parse_behaviors("I1\tU1\t100\tN1\tN8-1\n", corpus), DataError);
  CHECK_THROWS_AS(parse_behaviors("I1\tU1\t100\n", corpus), DataError);

  const auto dwell = parse_dwell("U1\tN2\t12.5\nU2\tN1\t0\n");
  CHECK(dwell.size() == 2);
  CHECK(dwell[0].seconds == 12.5);
  CHECK_THROWS_AS(parse_dwell("U1\tN2\tlong\n"), DataError);
}

TEST_CASE("dwell records follow the split") {
  const NewsCorpus corpus = parse_news("N1\ta\tb\nN2\tb\tc\nN3\tc\td\n");
  const auto imps = parse_behaviors("I1\tU1\t1\tN1\tN2-1 N3-0\nI2\tU1\t2\tN1 N2\tN3-1\n", corpus);
  const std::vector<DwellRecord> dwell{{"U1", "N1", 5.0}, {"U1", "N2", 6.0}, {"U1", "N3", 7.0}};
  const Split split = split_impressions(imps, 0.5);
  const auto train = dwell_for_impressions(dwell, split.train, imps, corpus);
  // N1 was a warm-up click (no impression), N2 a training click; N3 is test only.
  REQUIRE(train.size() == 2);
  CHECK(train[0].news_id == "N1");
  CHECK(train[1].news_id == "N2");
}

TEST_CASE("manifest hashing") {
  Manifest a, b;
  a.set("seed", "7");
  a.add_file("x.tsv", "contents");
  b.set("seed", "7");
  b.add_file("x.tsv", "contents");
  CHECK(a.hash() == b.hash());
  b.add_file("y.tsv", "");
  CHECK(a.hash() != b.hash());
  CHECK(a.to_text().find("file.x.tsv=" + text::hex64(text::fnv1a64("contents"))) != std::string::npos);
}

TEST_CASE("text helpers") {
  CHECK(text::parse_double(text::format_double(0.1), "x") == 0.1);
  CHECK(text::parse_double(text::format_double(1.0 / 3.0), "x") == 1.0 / 3.0);
  CHECK_THROWS_AS(text::parse_double("1.5x", "x"), DataError);
  CHECK_THROWS_AS(text::parse_int("", "x"), DataError);
  CHECK(text::split("a\t\tb", '\t').size() == 3);
}
