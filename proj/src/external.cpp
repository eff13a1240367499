#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "wsib/backends.hpp"
#include "wsib/error.hpp"
#include "wsib/png_io.hpp"

namespace fs = std::filesystem;

namespace wsib {
namespace {

std::string make_uuid() {
  static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                          static_cast<std::uint64_t>(std::hash<std::thread::id>{}(std::this_thread::get_id()))};
  const std::uint64_t hi = (rng() & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
  const std::uint64_t lo = (rng() & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
  return fmt::format("{:08x}-{:04x}-{:04x}-{:04x}-{:012x}", hi >> 32, (hi >> 16) & 0xffff, hi & 0xffff, lo >> 48,
                     lo & 0xffffffffffffULL);
}

}  // namespace

ExternalResponse external_backend_call(const fs::path& endpoint_dir, const ExternalRequest& request,
                                       const ExternalOptions& options) {
  if (!fs::is_directory(endpoint_dir))
    throw_backend(fmt::format("external endpoint {} does not exist", endpoint_dir.string()));
  if (request.input == nullptr) throw_usage("external request without input image");
  const bool pair = request.kind == "in-context";
  if (pair && (request.prompt == nullptr || request.prompt_mask == nullptr))
    throw_usage("in-context request needs prompt image and mask");

  const std::string id = make_uuid();
  const fs::path dir = endpoint_dir / ("request-" + id);
  fs::create_directories(dir);
  save_image(*request.input, dir / "input.png");
  if (pair) {
    save_image(*request.prompt, dir / "prompt.png");
    save_mask(*request.prompt_mask, dir / "prompt_mask.png");
  }
  nlohmann::json meta = {
      {"request_id", id},
      {"kind", request.kind},
      {"dims",
       {{"input_width", request.input->width()},
        {"input_height", request.input->height()},
        {"output_width", request.output_width},
        {"output_height", request.output_height}}},
      {"patch_ids", request.patch_ids},
  };
  {
    std::ofstream out(dir / "meta.json.tmp");
    out << meta.dump(2) << '\n';
  }
  fs::rename(dir / "meta.json.tmp", dir / "meta.json");

  const auto deadline = std::chrono::steady_clock::now() + options.timeout;
  while (!fs::exists(dir / "done")) {
    if (std::chrono::steady_clock::now() >= deadline)
      throw_backend(fmt::format("external backend timeout: request {} got no done marker within {} ms", id,
                                options.timeout.count()));
    std::this_thread::sleep_for(options.poll_interval);
  }
  if (!fs::exists(dir / "output.png"))
    throw_backend(fmt::format("external protocol violation: request {} marked done without output.png", id));

  ExternalResponse response{id, {}};
  try {
    response.output = load_probability(dir / "output.png");
  } catch (const Error& e) {
    throw_backend(fmt::format("external protocol violation: request {}: {}", id, e.what()));
  }
  if (response.output.width() != request.output_width || response.output.height() != request.output_height)
    throw_backend(fmt::format("external protocol violation: request {} returned {}x{}, expected {}x{}", id,
                              response.output.width(), response.output.height(), request.output_width,
                              request.output_height));
  if (!options.keep_requests) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  return response;
}

ExternalBackend::ExternalBackend(fs::path endpoint_dir, InputKind input_kind, bool dense, ExternalOptions options)
    : options_(options) {
  descriptor_.kind = BackendKind::external;
  descriptor_.input_kind = input_kind;
  descriptor_.location = std::move(endpoint_dir);
  descriptor_.dense = dense;
  descriptor_.validate();
}

double ExternalBackend::predict(const Image& patch, const ItemRef& item) const {
  if (descriptor_.input_kind != InputKind::image_patch || descriptor_.dense)
    return Backend::predict(patch, item);
  ExternalRequest req{"classify", &patch, nullptr, nullptr, {item.index}, 1, 1};
  return external_backend_call(descriptor_.location, req, options_).output.at(0, 0);
}

ProbabilityMap ExternalBackend::predict_dense(const Image& tile, const ItemRef& item) const {
  if (!descriptor_.dense) return Backend::predict_dense(tile, item);
  ExternalRequest req{"dense", &tile, nullptr, nullptr, {item.index}, tile.width(), tile.height()};
  return external_backend_call(descriptor_.location, req, options_).output;
}

Mask ExternalBackend::in_context_predict(const Image& prompt, const Mask& prompt_mask, const Image& query,
                                         const InContextConfig& cfg) const {
  if (descriptor_.input_kind != InputKind::image_pair)
    return Backend::in_context_predict(prompt, prompt_mask, query, cfg);
  require_same_dims(prompt, query, "in-context prompt vs query");
  require_same_dims(prompt, prompt_mask, "in-context prompt vs prompt mask");
  ExternalRequest req{"in-context", &query, &prompt, &prompt_mask, {0}, query.width(), query.height()};
  const auto response = external_backend_call(descriptor_.location, req, options_);
  Mask out(query.width(), query.height());
  const auto src = response.output.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] >= 0.5 ? 1 : 0;
  return out;
}

}  // namespace wsib
