#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sciana/corpus.hpp"
#include "sciana/document.hpp"

namespace sciana::test {

std::filesystem::path source_dir();
std::filesystem::path samples_dir();

/// Fresh empty directory under the system temp dir, unique per call.
std::filesystem::path fresh_dir(const std::string& tag);

/// The bundled LaTeX sample, parsed once.
std::shared_ptr<const PaperDocument> latex_sample();

/// Small hand-built instance over the LaTeX sample's results table.
AnalysisInstance table_instance();

/// Random token sequence of length 0..max_len drawn from the first `vocab` words of a fixed list.
std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len, std::size_t vocab);

std::string join(const std::vector<std::string>& tokens);

}  // namespace sciana::test
