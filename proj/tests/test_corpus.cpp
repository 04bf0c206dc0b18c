#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "spanprobe/corpus.hpp"
#include "spanprobe/synth.hpp"

using namespace spanprobe;

namespace {

std::string line(std::uint64_t id, const std::string& text, int start, int end, const std::string& label) {
  return nlohmann::json{{"id", id},       {"text", text},  {"span_start", start}, {"span_end", end},
                        {"label", label}, {"lang", "en"}, {"dataset", "LCC"}}
      .dump();
}

std::vector<LabeledExample> make_examples(std::size_t metaphor, std::size_t literal, LabelMap& labels) {
  std::ostringstream s;
  std::uint64_t id = 0;
  for (std::size_t i = 0; i < metaphor; ++i) s << line(id++, "burn all government buildings", 0, 1, "metaphor") << "\n";
  for (std::size_t i = 0; i < literal; ++i) s << line(id++, "burn the old letters", 0, 1, "literal") << "\n";
  std::istringstream in(s.str());
  Corpus c = parse_examples(in);
  labels = c.labels;
  return c.examples;
}

std::map<std::uint32_t, std::size_t> class_counts(const std::vector<LabeledExample>& xs) {
  std::map<std::uint32_t, std::size_t> out;
  for (const auto& x : xs) ++out[x.label_index];
  return out;
}

}  // namespace

TEST(LoadExamples, ValidFileInOrder) {
  std::istringstream in(line(7, "Burn all government buildings!", 0, 1, "metaphor") + "\n" +
                        line(3, "He burned the letter", 1, 2, "literal") + "\n");
  const Corpus c = parse_examples(in);
  ASSERT_EQ(c.examples.size(), 2u);
  EXPECT_EQ(c.examples[0].id, 7u);
  EXPECT_EQ(c.examples[1].id, 3u);
  EXPECT_EQ(c.labels.names, (std::vector<std::string>{"literal", "metaphor"}));
  EXPECT_EQ(c.examples[0].label_index, 1u);
  EXPECT_EQ(c.examples[1].label_index, 0u);
}

TEST(LoadExamples, OptionalDomains) {
  auto j = nlohmann::json::parse(line(1, "a b c", 0, 2, "metaphor"));
  j["source_domain"] = "FIRE";
  j["target_domain"] = "ANGER";
  std::istringstream in(j.dump() + "\n");
  const Corpus c = parse_examples(in);
  EXPECT_EQ(c.examples[0].source_domain, "FIRE");
  EXPECT_EQ(c.examples[0].target_domain, "ANGER");
}

TEST(LoadExamples, SpanOutOfBoundsCitesId) {
  std::istringstream in(line(42, "two words", 1, 3, "literal") + "\n");
  try {
    parse_examples(in);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("id 42"), std::string::npos);
  }
}

TEST(LoadExamples, DuplicateIdRejected) {
  std::istringstream in(line(1, "a b", 0, 1, "x") + "\n" + line(1, "c d", 0, 1, "y") + "\n");
  EXPECT_THROW(parse_examples(in), ValidationError);
}

TEST(LoadExamples, MalformedLineReportsLineNumber) {
  std::istringstream in(line(1, "a b", 0, 1, "x") + "\n{not json\n");
  try {
    parse_examples(in);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 2:", 0), 0u);
  }
  std::istringstream missing(R"({"id": 1, "text": "a"})" "\n");
  EXPECT_THROW(parse_examples(missing), ValidationError);
}

TEST(BalanceAndSplit, UnbalancedExampleArithmetic) {
  LabelMap labels;
  const auto xs = make_examples(100, 60, labels);
  const auto s = balance_and_split(xs, labels, {}, 7);
  EXPECT_EQ(s.train.size() + s.dev.size() + s.test.size(), 120u);
  EXPECT_EQ(s.train.size(), 84u);
  EXPECT_EQ(s.dev.size(), 12u);
  EXPECT_EQ(s.test.size(), 24u);
  for (std::uint32_t c : {0u, 1u}) {
    EXPECT_EQ(class_counts(s.train)[c], 42u);
    EXPECT_EQ(class_counts(s.dev)[c], 6u);
    EXPECT_EQ(class_counts(s.test)[c], 12u);
  }
}

TEST(BalanceAndSplit, BalancedInputDropsNothing) {
  LabelMap labels;
  const auto xs = make_examples(50, 50, labels);
  const auto s = balance_and_split(xs, labels, {}, 1);
  EXPECT_EQ(s.train.size() + s.dev.size() + s.test.size(), 100u);
}

TEST(BalanceAndSplit, Deterministic) {
  LabelMap labels;
  const auto xs = make_examples(37, 81, labels);
  const auto a = balance_and_split(xs, labels, {}, 5), b = balance_and_split(xs, labels, {}, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.dev, b.dev);
  EXPECT_EQ(a.test, b.test);
  const auto c = balance_and_split(xs, labels, {}, 6);
  EXPECT_NE(a.train, c.train);
}

TEST(BalanceAndSplit, EmptyClassNamed) {
  LabelMap labels;
  auto xs = make_examples(10, 10, labels);
  std::erase_if(xs, [](const LabeledExample& x) { return x.label_name == "literal"; });
  try {
    balance_and_split(xs, labels, {}, 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("literal"), std::string::npos);
  }
}

TEST(BalanceAndSplit, BadRatios) {
  LabelMap labels;
  const auto xs = make_examples(10, 10, labels);
  EXPECT_THROW(balance_and_split(xs, labels, {0.5, 0.1, 0.1}, 1), ConfigError);
  EXPECT_THROW(balance_and_split(xs, labels, {0.9, 0.1, 0.0}, 1), ConfigError);
}

// Property: balance within +-1 per class per split and pairwise id disjointness,
// over random class sizes, class counts and seeds.
TEST(BalanceAndSplitProperty, BalancedAndDisjoint) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(4);
    std::vector<std::uint32_t> y;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t n = 1 + rng.uniform_index(200);
      for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<std::uint32_t>(c));
    }
    Rng(rng.next()).shuffle(std::span(y));
    const auto idx = balanced_split_indices(y, k, {}, rng.next());
    std::set<std::size_t> seen;
    for (const auto* split : {&idx.train, &idx.dev, &idx.test}) {
      std::vector<std::size_t> per(k, 0);
      for (auto i : *split) {
        EXPECT_TRUE(seen.insert(i).second) << "index in two splits";
        ++per[y[i]];
      }
      const auto [lo, hi] = std::minmax_element(per.begin(), per.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
}

TEST(SubsampleTrain, IdentityAtFullSize) {
  LabelMap labels;
  const auto xs = make_examples(60, 60, labels);
  const auto s = balance_and_split(xs, labels, {}, 1);
  const auto t = subsample_train(s, s.train.size(), 3, 2);
  EXPECT_EQ(t.train, s.train);
  EXPECT_EQ(t.dev, s.dev);
  EXPECT_EQ(t.test, s.test);
}

TEST(SubsampleTrain, TooLargeReportsBothNumbers) {
  LabelMap labels;
  const auto xs = make_examples(20, 20, labels);
  const auto s = balance_and_split(xs, labels, {}, 1);
  try {
    subsample_train(s, 1000, 1, 2);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1000"), std::string::npos);
    EXPECT_NE(msg.find(std::to_string(s.train.size())), std::string::npos);
  }
}

// The two protocol sizes: 12,238 (cross-lingual) and 3,838 (cross-dataset).
TEST(SubsampleTrain, ProtocolSizesExactAndBalanced) {
  SynthSpec spec;
  spec.num_examples = 20000;
  spec.num_layers = 1;
  spec.hidden_dim = 1;
  spec.max_span_len = 1;
  spec.seed = 2;
  const auto set = synth_activations(spec);
  const auto ids = balance_and_split(set, {}, 1);
  ASSERT_GE(ids.train.size(), 12238u);
  for (std::size_t n : {12238u, 3838u}) {
    const auto sub = subsample_train(ids, set, n, 4);
    EXPECT_EQ(sub.train.size(), n);
    EXPECT_EQ(sub.dev, ids.dev);
    EXPECT_EQ(sub.test, ids.test);
    std::size_t ones = 0;
    for (const auto* r : select_ids(set, sub.train).records) ones += r->label;
    EXPECT_LE(std::max(ones, n - ones) - std::min(ones, n - ones), 1u);
    std::set<std::uint64_t> unique(sub.train.begin(), sub.train.end());
    EXPECT_EQ(unique.size(), n);
  }
}

TEST(SubsampleTrainProperty, PreservesBalance) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(3);
    const std::size_t per = 5 + rng.uniform_index(50);
    std::vector<std::uint32_t> y;
    for (std::size_t c = 0; c < k; ++c) y.insert(y.end(), per + (c == 0), static_cast<std::uint32_t>(c));
    const std::size_t n = rng.uniform_index(y.size() + 1);
    const auto keep = stratified_subsample_indices(y, k, n, rng.next());
    ASSERT_EQ(keep.size(), n);
    std::vector<std::size_t> counts(k, 0);
    for (auto i : keep) ++counts[y[i]];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_TRUE(std::is_sorted(keep.begin(), keep.end()));
  }
}

TEST(SplitIds, JsonRoundTrip) {
  SplitIds s{{1, 2, 3}, {4}, {5, 6}, 77, {0.7, 0.1, 0.2}, {"literal", "metaphor"}};
  EXPECT_EQ(split_ids_from_json(nlohmann::json::parse(to_json(s).dump())), s);
  EXPECT_THROW(split_ids_from_json(nlohmann::json{{"schema", 1}}), FormatError);
}
