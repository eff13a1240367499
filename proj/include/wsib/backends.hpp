#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wsib/image.hpp"
#include "wsib/training.hpp"

namespace wsib {

enum class BackendKind { linear, mlp, external, nn_transfer };
enum class InputKind { feature_vector, image_patch, image_pair };

std::string to_string(BackendKind kind);
std::string to_string(InputKind kind);
BackendKind parse_backend_kind(const std::string& text);
InputKind parse_input_kind(const std::string& text);

struct BackendDescriptor {
  BackendKind kind = BackendKind::mlp;
  InputKind input_kind = InputKind::feature_vector;
  std::filesystem::path location;  ///< model path or endpoint directory
  std::size_t input_dim = 0;
  bool dense = false;  ///< image-patch backends returning per-pixel maps

  void validate() const;
};

/// Identifies the element being predicted: patch/tile/superpixel index and,
/// for spatial items, its origin in the working image.
struct ItemRef {
  std::size_t index = 0;
  int x = 0;
  int y = 0;
};

struct InContextConfig {
  int window = 16;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;
  virtual double predict(std::span<const double> features, const ItemRef& item) const;
  virtual double predict(const Image& patch, const ItemRef& item) const;
  virtual ProbabilityMap predict_dense(const Image& tile, const ItemRef& item) const;
  virtual Mask in_context_predict(const Image& prompt, const Mask& prompt_mask, const Image& query,
                                  const InContextConfig& cfg) const;
};

/// Linear or MLP classifier. Feature-vector backends score a feature row;
/// dense image-patch backends score every pixel's local-window features.
class ModelBackend final : public Backend {
 public:
  ModelBackend(ModelParams model, InputKind input_kind, bool dense = false);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  const ModelParams& model() const noexcept { return model_; }
  double predict(std::span<const double> features, const ItemRef& item) const override;
  double predict(const Image& patch, const ItemRef& item) const override;
  ProbabilityMap predict_dense(const Image& tile, const ItemRef& item) const override;

 private:
  ModelParams model_;
  BackendDescriptor descriptor_;
};

/// Nearest-window label transfer from a prompt image/mask pair.
class NnTransferBackend final : public Backend {
 public:
  NnTransferBackend();

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  Mask in_context_predict(const Image& prompt, const Mask& prompt_mask, const Image& query,
                          const InContextConfig& cfg) const override;

 private:
  BackendDescriptor descriptor_;
};

Mask nn_transfer(const Image& prompt, const Mask& prompt_mask, const Image& query, const InContextConfig& cfg);

struct ExternalOptions {
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds poll_interval{5};
  bool keep_requests = false;
};

struct ExternalRequest {
  std::string kind;  ///< "classify", "dense" or "in-context"
  const Image* input = nullptr;
  const Image* prompt = nullptr;
  const Mask* prompt_mask = nullptr;
  std::vector<std::size_t> patch_ids;
  int output_width = 1;
  int output_height = 1;
};

struct ExternalResponse {
  std::string request_id;
  ProbabilityMap output;
};

/// Writes request-<uuid>/ with input.png (plus prompt.png and prompt_mask.png
/// for in-context requests) and meta.json, then polls for output.png and the
/// done marker.
ExternalResponse external_backend_call(const std::filesystem::path& endpoint_dir, const ExternalRequest& request,
                                       const ExternalOptions& options = {});

class ExternalBackend final : public Backend {
 public:
  ExternalBackend(std::filesystem::path endpoint_dir, InputKind input_kind, bool dense = false,
                  ExternalOptions options = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  double predict(const Image& patch, const ItemRef& item) const override;
  ProbabilityMap predict_dense(const Image& tile, const ItemRef& item) const override;
  Mask in_context_predict(const Image& prompt, const Mask& prompt_mask, const Image& query,
                          const InContextConfig& cfg) const override;

 private:
  BackendDescriptor descriptor_;
  ExternalOptions options_;
};

/// Builds a backend from a descriptor, loading model files as needed.
std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor, const ExternalOptions& options = {});

}  // namespace wsib
