#include "fixtures.hpp"

#include <atomic>
#include <chrono>

namespace sciana::test {

std::filesystem::path source_dir() { return SCIANA_SOURCE_DIR; }

std::filesystem::path samples_dir() { return source_dir() / "data" / "samples"; }

std::filesystem::path fresh_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  auto dir = std::filesystem::temp_directory_path() /
             ("sciana-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::shared_ptr<const PaperDocument> latex_sample() {
  static const auto doc =
      std::make_shared<const PaperDocument>(load_document((samples_dir() / "sparse_routing.tex").string()));
  return doc;
}

AnalysisInstance table_instance() {
  AnalysisInstance inst;
  inst.instance_id = "demo:table#1";
  InputElement in;
  in.element_id = "table#1";
  in.kind = ElementKind::table;
  in.label = "tab:wer";
  in.caption = "Word error rate (%) on three low-resource test sets. Lower is better.";
  in.body = "Model & Swahili & Khmer & Quechua \\\\\nDense baseline & 31.4 & 42.7 & 55.2 \\\\\n"
            "Load-aware top-2 & 26.1 & 38.3 & 49.8 \\\\";
  inst.inputs.push_back(in);
  inst.source.meta.paper_id = "demo";
  inst.source.meta.title = "Sparse Expert Routing for Low-Resource Speech Recognition";
  inst.source.meta.year = 2025;
  inst.source.context = "The load-aware router keeps expert utilisation balanced without an auxiliary loss.";
  inst.query = "Write a scientific analysis of the given table.";
  inst.gold = "The load-aware router lowers word error rate on all three languages, with the largest gain on Quechua.";
  inst.labels.data_type = "table";
  inst.labels.format = "latex";
  return inst;
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len, std::size_t vocab) {
  static const std::vector<std::string> words = {"alpha", "beta",  "gamma", "delta", "eps",  "zeta",  "eta",
                                                 "theta", "iota",  "kappa", "lam",   "mu",   "nu",    "xi",
                                                 "omi",   "pi",    "rho",   "sigma", "tau",  "upsil"};
  vocab = std::max<std::size_t>(1, std::min(vocab, words.size()));
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::vector<std::string> out(len(rng));
  for (auto& t : out) t = words[pick(rng)];
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace sciana::test
