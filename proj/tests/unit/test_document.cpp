#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "sciana/document.hpp"
#include "sciana/error.hpp"

namespace sciana {
namespace {

const char* const kChain = R"(\documentclass{article}
\begin{document}
\section{Setup}
\label{sec:setup}
Results are in Table~\ref{tab:a}, which reports two scores.

An unrelated block.
\section{Analysis}
\label{sec:analysis}
\begin{table}
\caption{Scores}
\label{tab:a}
\begin{tabular}{cc} a & b \end{tabular}
Weighting follows Eq.~\ref{eq:w}.
\end{table}
\begin{equation}
\label{eq:w}
w = 1
\end{equation}
See \cite{smith} and \ref{missing}.
\end{document}
)";

PaperMeta meta(const std::string& id) {
  PaperMeta m;
  m.paper_id = id;
  m.year = 2025;
  return m;
}

using Ids = std::vector<std::string>;

TEST(LatexParse, ElementsAndParents) {
  const auto doc = parse_document(kChain, SourceFormat::latex, meta("chain"));
  ASSERT_FALSE(doc.parse_failed);
  const auto* t = doc.find_by_label("tab:a");
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t->element_id, "table#1");
  EXPECT_EQ(t->kind, ElementKind::table);
  EXPECT_EQ(t->caption, "Scores");
  EXPECT_EQ(t->parent_id, "section#2");
  EXPECT_FALSE(t->embedded);
  EXPECT_EQ(doc.find("section#1")->title, "Setup");
  EXPECT_EQ(doc.raw.substr(t->span.start, t->span.end - t->span.start).rfind("\\begin{table}", 0), 0u);
}

TEST(LatexParse, ChainEdges) {
  const auto doc = parse_document(kChain, SourceFormat::latex, meta("chain"));
  const auto g = build_reference_graph(doc);
  EXPECT_TRUE(g.consistent());
  EXPECT_EQ(g.out_edges("section#1"), Ids{"table#1"});
  EXPECT_EQ(g.out_edges("table#1"), Ids{"equation#1"});
  EXPECT_EQ(g.in_edges("table#1"), Ids{"section#1"});
  EXPECT_EQ(g.in_edges("equation#1"), Ids{"table#1"});
  EXPECT_EQ(g.external_refs("section#2"), (Ids{"cite:smith", "ref:missing"}));
  // A section does not inherit the references of its nested table.
  EXPECT_TRUE(g.out_edges("section#2").empty());
}

TEST(LatexParse, TruncatedSourceIsMalformed) {
  const std::string raw = kChain;
  const auto cut = raw.find("\\end{table}");
  try {
    parse_document(raw.substr(0, cut), SourceFormat::latex, meta("cut"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedSource);
  }
}

TEST(LatexParse, TableInsideFigureIsEmbedded) {
  const auto doc = parse_document(
      "\\begin{figure}\\caption{Panel}\\label{fig:p}\n\\begin{table}\\label{tab:in}x & y\\end{table}\n\\end{figure}\n",
      SourceFormat::latex, meta("emb"));
  const auto* inner = doc.find_by_label("tab:in");
  ASSERT_NE(inner, nullptr);
  EXPECT_TRUE(inner->embedded);
  EXPECT_FALSE(doc.find_by_label("fig:p")->embedded);
}

TEST(LatexSample, LoadsWithSidecar) {
  const auto& doc = *test::latex_sample();
  EXPECT_EQ(doc.meta.paper_id, "arxiv-2503.01234");
  EXPECT_EQ(doc.meta.year, 2025);
  const auto* fig = doc.find_by_label("fig:util");
  ASSERT_NE(fig, nullptr);
  EXPECT_EQ(fig->image_ref, "images/utilisation.png");
  const auto g = build_reference_graph(doc);
  EXPECT_EQ(g.out_edges("section#1"), (Ids{"bib#1", "bib#2"}));
  EXPECT_EQ(g.out_edges("section#3"), (Ids{"table#1", "equation#1", "figure#1"}));
}

TEST(XmlSample, Parses) {
  const auto doc = load_document((test::samples_dir() / "soil_microbiome.xml").string());
  ASSERT_FALSE(doc.parse_failed);
  EXPECT_EQ(doc.format, SourceFormat::xml);
  const auto* t = doc.find_by_label("t1");
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t->kind, ElementKind::table);
  const auto g = build_reference_graph(doc);
  EXPECT_EQ(g.out_edges("section#2"), (Ids{"table#1", "figure#1", "bib#2"}));
  EXPECT_TRUE(g.consistent());
}

TEST(XmlParse, UnclosedTagIsMalformed) {
  EXPECT_THROW(parse_document("<article><body><sec id=\"s1\"><title>A</title></body></article>", SourceFormat::xml,
                              meta("bad")),
               Error);
}

TEST(LoadDocument, ParseFailureIsFlagged) {
  const auto dir = test::fresh_dir("docs");
  const auto path = (dir / "broken.tex").string();
  write_file(path, "\\section{A}\n\\begin{table}\\label{tab:x} 1 & 2\n");
  const auto doc = load_document(path);
  EXPECT_TRUE(doc.parse_failed);
  EXPECT_FALSE(doc.diagnostics.empty());
  EXPECT_THROW(load_document((dir / "x.pdf").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST(MarkupBalanced, Examples) {
  EXPECT_TRUE(markup_balanced(SourceFormat::latex, "\\begin{a}\\begin{b}\\end{b}\\end{a}"));
  EXPECT_FALSE(markup_balanced(SourceFormat::latex, "\\begin{a}\\begin{b}\\end{a}\\end{b}"));
  EXPECT_FALSE(markup_balanced(SourceFormat::latex, "\\begin{a}"));
  EXPECT_TRUE(markup_balanced(SourceFormat::xml, "<a><b/><!-- <c> --></a>"));
  EXPECT_FALSE(markup_balanced(SourceFormat::xml, "<a><b></a></b>"));
}

TEST(ExtractReferences, OrderAndUnresolved) {
  const auto doc = parse_document(kChain, SourceFormat::latex, meta("chain"));
  EXPECT_EQ(extract_references(doc, "\\ref{eq:w} then \\cite{k} then \\ref{tab:a} and \\ref{eq:w}"),
            (Ids{"equation#1", "cite:k", "table#1"}));
  EXPECT_TRUE(extract_references(doc, "\\ref{tab:a}", "table#1").empty());
}

TEST(LocateElement, CaptionLabelAndOrder) {
  const auto& doc = *test::latex_sample();
  const auto hits = locate_element(doc, "Word   error rate");
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits.front()->element_id, "table#1");
  const auto by_label = locate_element(doc, "fig:util");
  ASSERT_FALSE(by_label.empty());
  EXPECT_EQ(by_label.front()->element_id, "figure#1");
  // Quechua appears in the table body and the section prose, never twice for the same hit.
  const auto q = locate_element(doc, "Quechua");
  Ids ids;
  for (const auto* e : q) ids.push_back(e->element_id);
  EXPECT_EQ(ids, (Ids{"table#1", "section#3"}));
  EXPECT_TRUE(locate_element(doc, "no such phrase anywhere").empty());
  EXPECT_THROW(locate_element(doc, "   "), Error);
}

TEST(DocumentJson, MetaRoundTrip) {
  const auto m = test::latex_sample()->meta;
  const auto back = meta_from_json(to_json(m));
  EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
  EXPECT_EQ(to_json(*test::latex_sample())["elements"].size(), test::latex_sample()->elements.size());
}

TEST(Enums, ParseRoundTrip) {
  for (auto k : {ElementKind::section, ElementKind::table, ElementKind::figure, ElementKind::equation,
                 ElementKind::caption, ElementKind::citation, ElementKind::bib_entry, ElementKind::paragraph}) {
    EXPECT_EQ(parse_element_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_platform("pubmed"), Platform::pubmed);
  EXPECT_THROW(parse_format("pdf"), Error);
}

}  // namespace
}  // namespace sciana
