#include <gtest/gtest.h>

#include <sstream>

#include "causalrec/dataio.hpp"
#include "causalrec/errors.hpp"

using namespace causalrec;
using namespace causalrec::data;

namespace {

ParseResult parse(const std::string& text, Format f = Format::tsv) {
  std::istringstream in(text);
  return parse_interactions(in, f);
}

std::string good_lines(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += "u" + std::to_string(i % 7) + "\ti" + std::to_string(i % 11) + "\t" + std::to_string(i) + "\n";
  return s;
}

UserSequences seqs_from(const std::vector<std::vector<std::string>>& users, std::size_t n_max = 200) {
  std::vector<InteractionRecord> recs;
  for (std::size_t u = 0; u < users.size(); ++u)
    for (std::size_t t = 0; t < users[u].size(); ++t)
      recs.push_back({"u" + std::to_string(u), users[u][t], static_cast<std::int64_t>(t)});
  return build_sequences(recs, n_max);
}

}  // namespace

TEST(Parse, SingleLine) {
  const ParseResult r = parse("u1\ti9\t100\n");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0], (InteractionRecord{"u1", "i9", 100}));
  EXPECT_EQ(r.malformed, 0u);
}

TEST(Parse, HeaderAndCsv) {
  const ParseResult r = parse("user,item,ts\nu1,a,5\nu2,b,7\n", Format::csv);
  EXPECT_TRUE(r.had_header);
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(format_from_path("x/log.csv"), Format::csv);
  EXPECT_EQ(format_from_path("x/log.tsv"), Format::tsv);
}

TEST(Parse, MalformedLineSkippedWithinBudget) {
  const ParseResult r = parse(good_lines(150) + "u1\ti9\tabc\n" + good_lines(50));
  EXPECT_EQ(r.malformed, 1u);
  EXPECT_EQ(r.records.size(), 200u);
}

TEST(Parse, TooManyMalformedOrEmpty) {
  EXPECT_THROW(parse(good_lines(50) + "u1\ti9\tabc\n"), IngestionError);
  EXPECT_THROW(parse(good_lines(10) + "u1\ti9\n"), IngestionError);
  EXPECT_THROW(parse(good_lines(10) + "u1\ti9\t-4\n"), IngestionError);
  EXPECT_THROW(parse(""), IngestionError);
  EXPECT_THROW(parse("user\titem\ttimestamp\n"), IngestionError);
}

TEST(Parse, FileOrderPreserved) {
  const ParseResult r = parse("u1\tc\t30\nu1\ta\t10\nu1\tb\t20\n");
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].item_id, "c");
  EXPECT_EQ(r.records[1].item_id, "a");
  EXPECT_EQ(r.records[2].item_id, "b");
  const UserSequences s = build_sequences(r.records, 10);
  std::vector<std::string> names;
  for (int i : s.sequences[0]) names.push_back(s.vocab.items[i]);
  EXPECT_EQ(names, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(BuildSequences, TruncatesEarlyItems) {
  const std::vector<InteractionRecord> recs{{"u", "a", 1}, {"u", "b", 2}, {"u", "c", 3}};
  const UserSequences s = build_sequences(recs, 2);
  ASSERT_EQ(s.sequences[0].size(), 2u);
  EXPECT_EQ(s.vocab.items[s.sequences[0][0]], "b");
  EXPECT_EQ(s.vocab.items[s.sequences[0][1]], "c");
  EXPECT_THROW(build_sequences(recs, 1), ParameterError);
}

TEST(BuildSequences, StableOnTiesAndPadding) {
  const std::vector<InteractionRecord> recs{{"u", "x", 5}, {"u", "y", 5}, {"u", "z", 5}, {"v", "q", 1}};
  const UserSequences s = build_sequences(recs, 4);
  EXPECT_EQ(s.sequences[0], (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(s.vocab.lookup("q"), 4);
  EXPECT_EQ(s.vocab.lookup("missing"), 0);
  EXPECT_EQ(s.vocab.items[0], "");

  const PaddedSequence p = pad_left(s.sequences[1], 4, 1);
  EXPECT_EQ(p.items, (std::vector<int>{0, 0, 0, 4}));
  EXPECT_EQ(p.length, 1u);
  EXPECT_TRUE(p.is_padding(2));
  EXPECT_FALSE(p.is_padding(3));
}

TEST(Split, LeaveLastTwo) {
  const SplitDataset ds = split_leave_last_two(seqs_from({{"a", "b", "c", "d"}, {"a", "b"}}));
  EXPECT_EQ(ds.splits[0].train, (std::vector<int>{1, 2}));
  EXPECT_EQ(ds.splits[0].valid, 3);
  EXPECT_EQ(ds.splits[0].test, 4);
  EXPECT_EQ(ds.splits[1].train, (std::vector<int>{1, 2}));
  EXPECT_FALSE(ds.splits[1].valid.has_value());
  EXPECT_FALSE(ds.splits[1].test.has_value());
  EXPECT_FALSE(eval_case(ds, 1, EvalSplit::test).has_value());
}

TEST(Split, CountOfEvaluatedUsers) {
  const SplitDataset ds =
      split_leave_last_two(seqs_from({{"a", "b", "c", "d", "e"}, {"a", "b", "c"}, {"a", "b"}}));
  EXPECT_EQ(ds.num_eval_users(), 2u);
}

TEST(Split, TrainingTargetsAndEvalCases) {
  const SplitDataset ds = split_leave_last_two(seqs_from({{"a", "b", "c", "d", "e"}}, 6));
  const auto ex = training_examples(ds);
  ASSERT_EQ(ex.size(), 1u);
  // train = [a,b,c] -> input [a,b], targets [b,c]
  EXPECT_EQ(ex[0].input.items, (std::vector<int>{0, 0, 0, 0, 1, 2}));
  EXPECT_EQ(ex[0].targets, (std::vector<int>{0, 0, 0, 0, 2, 3}));

  const auto v = eval_case(ds, 0, EvalSplit::valid);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->target, 4);
  EXPECT_EQ(v->input.items, (std::vector<int>{0, 0, 0, 1, 2, 3}));
  const auto t = eval_case(ds, 0, EvalSplit::test);
  EXPECT_EQ(t->target, 5);
  EXPECT_EQ(t->input.items, (std::vector<int>{0, 0, 1, 2, 3, 4}));
}

TEST(Split, PaddingNeverATarget) {
  Rng rng(9);
  const auto recs = planted_pairs_dataset(40, 20, 3, 30, rng);
  const SplitDataset ds = split_leave_last_two(build_sequences(recs, 16));
  for (const auto& ex : training_examples(ds)) {
    for (std::size_t t = 0; t < ex.targets.size(); ++t) {
      if (ex.input.is_padding(t)) EXPECT_EQ(ex.targets[t], 0);
      else EXPECT_GE(ex.targets[t], 1);
      EXPECT_GE(ex.input.items[t], 0);
      EXPECT_LE(ex.input.items[t], ds.num_items());
    }
  }
}

TEST(RoundTrip, ReencodeAndReparse) {
  Rng rng(17);
  const auto recs = planted_pairs_dataset(25, 12, 1, 12, rng);
  const UserSequences a = build_sequences(recs, 8);
  std::stringstream tsv;
  write_interactions(tsv, a);
  const UserSequences b = build_sequences(parse_interactions(tsv, Format::tsv).records, 8);
  EXPECT_EQ(a.users, b.users);
  ASSERT_EQ(a.sequences.size(), b.sequences.size());
  for (std::size_t u = 0; u < a.sequences.size(); ++u) {
    ASSERT_EQ(a.sequences[u].size(), b.sequences[u].size());
    for (std::size_t t = 0; t < a.sequences[u].size(); ++t)
      EXPECT_EQ(a.vocab.items[a.sequences[u][t]], b.vocab.items[b.sequences[u][t]]);
  }

  std::stringstream bin;
  write_cache(bin, a);
  const UserSequences c = read_cache(bin);
  EXPECT_EQ(c.sequences, a.sequences);
  EXPECT_EQ(c.vocab.items, a.vocab.items);
  EXPECT_EQ(c.n_max, a.n_max);

  std::istringstream bad("CRSEQ2....");
  EXPECT_THROW(read_cache(bad), FormatError);
  std::stringstream tr;
  write_cache(tr, a);
  std::istringstream cut(tr.str().substr(0, tr.str().size() / 2));
  EXPECT_THROW(read_cache(cut), FormatError);
}

TEST(PlantedPairs, RuleHolds) {
  Rng rng(3);
  const auto recs = planted_pairs_dataset(30, 20, 4, 20, rng);
  const UserSequences s = build_sequences(recs, 200);
  for (const auto& seq : s.sequences) {
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      const int cur = std::stoi(s.vocab.items[seq[t]].substr(1));
      const int nxt = std::stoi(s.vocab.items[seq[t + 1]].substr(1));
      if (cur % 2 == 1) EXPECT_EQ(nxt, cur + 1);
      else EXPECT_EQ(nxt % 2, 1);
    }
  }
}
