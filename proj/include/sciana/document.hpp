#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sciana/text.hpp"

namespace sciana {

enum class Platform { arxiv, pubmed, other };
enum class SourceFormat { latex, xml };
enum class SourceKind { general, review_survey };
enum class ElementKind { section, table, figure, equation, caption, citation, bib_entry, paragraph };

std::string_view to_string(Platform v) noexcept;
std::string_view to_string(SourceFormat v) noexcept;
std::string_view to_string(SourceKind v) noexcept;
std::string_view to_string(ElementKind v) noexcept;

Platform parse_platform(std::string_view s);
SourceFormat parse_format(std::string_view s);
SourceKind parse_source_kind(std::string_view s);
ElementKind parse_element_kind(std::string_view s);

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct DomainLabel {
  std::string broad;
  std::string fine;
  bool operator==(const DomainLabel&) const = default;
};

struct PaperMeta {
  std::string paper_id;
  Platform platform = Platform::other;
  std::string title;
  int year = 2000;
  SourceKind source_kind = SourceKind::general;
  std::vector<DomainLabel> domains;
  bool access_ok = true;
  std::string collection_query;
  std::vector<std::string> keywords;
};

Json to_json(const PaperMeta& meta);
PaperMeta meta_from_json(const Json& j);

struct DocElement {
  std::string element_id;
  ElementKind kind = ElementKind::paragraph;
  std::optional<std::string> label;
  std::optional<std::string> caption;
  std::string body;
  std::optional<std::string> image_ref;
  std::vector<std::string> outgoing_refs;
  Span span;

  std::string parent_id;
  int level = 0;
  std::string title;
  // Own text with every nested element's span cut out; nested spans leave a blank line.
  std::string prose;
  // True when some ancestor is a table or figure.
  bool embedded = false;
};

struct PaperDocument {
  PaperMeta meta;
  SourceFormat format = SourceFormat::latex;
  std::vector<DocElement> elements;
  std::string raw;
  std::vector<std::string> diagnostics;
  bool parse_failed = false;

  const DocElement* find(std::string_view element_id) const;
  const DocElement* find_by_label(std::string_view label) const;
};

/// Throws Error(MalformedSource) on unbalanced environments or tags.
PaperDocument parse_document(std::string raw, SourceFormat format, PaperMeta meta);

/// Loads a `.tex` or `.xml` source with an optional `<stem>.meta.json` sidecar next to it.
/// Parse failures are returned as a document with `parse_failed` set.
PaperDocument load_document(const std::string& path);

/// References made by `text`, in order of first appearance. Resolved targets
/// are element ids; unresolved citations become "cite:<key>" and unresolved
/// cross-references "ref:<label>". `self_id` is never returned.
std::vector<std::string> extract_references(const PaperDocument& doc, std::string_view text,
                                            std::string_view self_id = {});

/// True when every `\begin{x}` has a matching `\end{x}` (LaTeX) or every open
/// tag closes in order (XML).
bool markup_balanced(SourceFormat format, std::string_view text);

/// Readable text of a prose block: markup-level cleanup only, macros kept.
std::string clean_prose(SourceFormat format, std::string_view block);

class ReferenceGraph {
 public:
  void add_node(const std::string& id);
  void add_edge(const std::string& from, const std::string& to);
  void add_external(const std::string& from, const std::string& key);

  bool has_node(std::string_view id) const;
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  // Elements referring to `id`, and elements `id` refers to. Document order.
  const std::vector<std::string>& in_edges(std::string_view id) const;
  const std::vector<std::string>& out_edges(std::string_view id) const;
  const std::vector<std::string>& external_refs(std::string_view id) const;
  std::size_t edge_count() const noexcept;

  bool consistent() const;

 private:
  std::vector<std::string> nodes_;
  std::map<std::string, std::vector<std::string>, std::less<>> in_;
  std::map<std::string, std::vector<std::string>, std::less<>> out_;
  std::map<std::string, std::vector<std::string>, std::less<>> external_;
};

ReferenceGraph build_reference_graph(const PaperDocument& doc);

/// Elements whose caption, label, or body contains `query` after whitespace
/// normalization, ordered by match position in the source. Sections match on
/// their title and own prose, so a hit inside a nested table does not also
/// return the enclosing section.
std::vector<const DocElement*> locate_element(const PaperDocument& doc, std::string_view query);

Json to_json(const DocElement& el);
Json to_json(const PaperDocument& doc);

}  // namespace sciana
