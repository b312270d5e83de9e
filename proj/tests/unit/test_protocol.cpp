#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <set>

#include "sciana/protocol.hpp"

namespace sciana {
namespace {

// Reference extractor over a regex token stream of tags.
struct RefParse {
  std::map<std::string, std::string> tags;
  std::set<std::string> unbalanced;
};

RefParse reference_parse(const std::string& text) {
  static const std::regex tag_re("<(/?)([a-z][a-z0-9_-]*)>");
  struct Tok {
    std::size_t begin, end;
    std::string name;
    bool closing;
  };
  std::vector<Tok> toks;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), tag_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    toks.push_back({static_cast<std::size_t>(m.position()), static_cast<std::size_t>(m.position() + m.length()), m[2],
                    m[1].length() == 1});
  }
  RefParse out;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    const auto& t = toks[k];
    if (t.closing) {
      if (!out.tags.count(t.name)) out.unbalanced.insert(t.name);
      continue;
    }
    int depth = 0;
    std::size_t close = toks.size();
    for (std::size_t q = k; q < toks.size(); ++q) {
      if (toks[q].name != t.name) continue;
      depth += toks[q].closing ? -1 : 1;
      if (depth == 0) {
        close = q;
        break;
      }
    }
    if (close == toks.size()) {
      if (!out.tags.count(t.name)) out.unbalanced.insert(t.name);
      continue;
    }
    out.tags.emplace(t.name, text.substr(t.end, toks[close].begin - t.end));
    // Skip tokens inside the captured pair.
    while (k + 1 < toks.size() && toks[k + 1].begin < toks[close].end) ++k;
  }
  return out;
}

TEST(ParseTags, Basic) {
  const auto p = parse_tags("noise <think>a</think> mid <answer>B</answer> tail", {"think", "answer"});
  EXPECT_TRUE(p.ok());
  EXPECT_EQ(*p.find("think"), "a");
  EXPECT_EQ(*p.find("answer"), "B");
  EXPECT_EQ(p.find("plan"), nullptr);
}

TEST(ParseTags, FirstOccurrenceWins) {
  EXPECT_EQ(*parse_tags("<a>1</a><a>2</a>").find("a"), "1");
}

TEST(ParseTags, SameNameNestingKeepsOuter) {
  const auto p = parse_tags("<a>x<a>y</a>z</a>");
  EXPECT_EQ(*p.find("a"), "x<a>y</a>z");
}

TEST(ParseTags, OtherTagsInsideContentAreVerbatim) {
  const auto p = parse_tags("<summary>see <b>bold</b></summary>");
  EXPECT_EQ(*p.find("summary"), "see <b>bold</b>");
  EXPECT_EQ(p.find("b"), nullptr);
}

TEST(ParseTags, NonTagsIgnored) {
  const auto p = parse_tags("x < y and <Answer>no</Answer> <answer >no</answer> <answer>yes</answer>");
  EXPECT_EQ(*p.find("answer"), "yes");
}

TEST(ParseTags, MissingVersusUnbalanced) {
  auto p = parse_tags("<think>t</think><answer>open", {"think", "answer"});
  ASSERT_FALSE(p.ok());
  EXPECT_EQ(p.error->kind, TagErrorKind::unbalanced);
  EXPECT_EQ(p.error->tag, "answer");
  p = parse_tags("<think>t</think>", {"think", "answer"});
  EXPECT_EQ(p.error->kind, TagErrorKind::missing);
  p = parse_tags("stray</plan>", {"plan"});
  EXPECT_EQ(p.error->kind, TagErrorKind::unbalanced);
  p = parse_tags("", {"plan", "think"});
  EXPECT_EQ(p.error->tag, "plan");
}

TEST(ParseTags, RandomNestingMatchesReference) {
  const std::vector<std::string> pieces{"<a>", "</a>", "<b>", "</b>", "<c>", "</c>", "x", " ", "<", ">", "</", "<A>"};
  std::mt19937 rng(11);
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 14);
    for (int k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
    const auto got = parse_tags(s, {"a", "b", "c"});
    const auto want = reference_parse(s);
    EXPECT_EQ(got.tags, want.tags) << s;
    for (const char* name : {"a", "b", "c"}) {
      if (want.tags.count(name)) continue;
      ASSERT_TRUE(got.error.has_value()) << s;
      EXPECT_EQ(got.error->tag, name) << s;
      EXPECT_EQ(got.error->kind, want.unbalanced.count(name) ? TagErrorKind::unbalanced : TagErrorKind::missing) << s;
      break;
    }
    if (want.tags.size() == 3) {
      EXPECT_TRUE(got.ok()) << s;
    }
  }
}

TEST(ParseGrade, FirstIntegerClamped) {
  EXPECT_EQ(parse_grade(" 2 ")->value, 2);
  EXPECT_FALSE(parse_grade("1")->clamped);
  const auto hi = parse_grade("score: 7 of 2");
  EXPECT_EQ(hi->value, 2);
  EXPECT_TRUE(hi->clamped);
  const auto lo = parse_grade("-1");
  EXPECT_EQ(lo->value, 0);
  EXPECT_TRUE(lo->clamped);
  EXPECT_FALSE(parse_grade("none").has_value());
}

TEST(FormatReminder, ListsEveryTag) {
  const auto r = format_reminder({"think", "answer"});
  EXPECT_NE(r.find("<think>...</think>"), std::string::npos);
  EXPECT_NE(r.find("<answer>...</answer>"), std::string::npos);
}

TEST(PlanBullets, SingleStarLinesOnly) {
  EXPECT_EQ(plan_bullets("intro\n* one\n  *two\n**Bold** line\n*\n- dash\n* three"),
            (std::vector<std::string>{"one", "two", "three"}));
}

}  // namespace
}  // namespace sciana
