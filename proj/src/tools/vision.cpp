#include <filesystem>

#include "internal.hpp"

namespace sciana {

using detail::param_string;
using detail::ToolFailure;

std::string ToolExecutor::vision_tool(const ToolCall& call, const ToolContext& ctx) {
  if (!vision_) throw ToolFailure("backend_unavailable", "no vision backend is configured");
  const auto& p = call.params;
  const std::string image = p["image"].get<std::string>();
  std::string path = image;
  if (ctx.document) {
    const DocElement* el = ctx.document->find(image);
    if (!el) el = ctx.document->find_by_label(image);
    if (el && el->image_ref) path = *el->image_ref;
  }
  const auto fs_path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path)
                                                                 : std::filesystem::path(ctx.base_dir) / path;
  if (!std::filesystem::exists(fs_path)) throw ToolFailure("not_found", "image " + path + " does not exist");
  ImagePayload img = load_image(fs_path.string(), vision_->bounds());

  std::string prompt;
  if (call.tool_name == "ocr_extractor") {
    prompt = "Transcribe every piece of text visible in the image, preserving reading order and table layout.";
    if (p.contains("language")) prompt += " The text is expected to be in " + p["language"].get<std::string>() + ".";
    if (p.contains("bbox")) prompt += " Only read the region x,y,width,height = " + p["bbox"].get<std::string>() + ".";
    if (p.contains("threshold")) {
      prompt += " Omit text you are less than " + std::to_string(p["threshold"].get<double>()) + " confident about.";
    }
  } else if (call.tool_name == "figure_parser") {
    prompt = "Extract the visual information of this scientific figure: chart type, axes and units, legend entries, "
             "plotted series with approximate values, and notable trends.";
    if (p.contains("query")) prompt += "\nFocus on: " + p["query"].get<std::string>();
  } else {
    prompt = "Answer the question about the image.\nQuestion: " + param_string(p, "query", "Describe the image.");
    if (p.contains("focus")) prompt += "\nFocus on: " + p["focus"].get<std::string>();
    if (param_string(p, "detail_level") == "high") prompt += "\nGive a detailed, element-by-element answer.";
  }
  if (p.contains("contexts")) prompt += "\n\nContext:\n" + p["contexts"].get<std::string>();
  const auto reply = vision_->chat({{Role::user, prompt, {img}}});
  return reply.text;
}

}  // namespace sciana
