#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ren/model.hpp"
#include "ren/preprocess.hpp"

namespace ren {

/// Something that maps preprocessed crops to world-space joints.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int joints() const = 0;
  /// Raw network pass over an N x 1 x S x S batch (what the timing harness measures).
  virtual void forward(const Tensor<float>& batch) = 0;
  /// World-mm joints for each crop.
  virtual std::vector<HandAnnotation> predict(std::span<const CropResult> crops) = 0;
};

/// Stacks crops into an N x 1 x S x S tensor.
Tensor<float> stack_patches(std::span<const CropResult> crops);

class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(Model<float>& model, std::size_t batch = 32) : model_(model), batch_(batch) {}
  int joints() const override { return model_.spec().joints; }
  void forward(const Tensor<float>& batch) override;
  std::vector<HandAnnotation> predict(std::span<const CropResult> crops) override;

  /// Normalized network outputs widened to double, one row per crop.
  std::vector<std::vector<double>> raw(std::span<const CropResult> crops);

 private:
  Model<float>& model_;
  std::size_t batch_;
};

/// Averages the denormalized predictions of its members, in double.
class EnsemblePredictor : public Predictor {
 public:
  EnsemblePredictor() = default;
  explicit EnsemblePredictor(std::vector<Model<float>> members);

  int joints() const override;
  void forward(const Tensor<float>& batch) override;
  std::vector<HandAnnotation> predict(std::span<const CropResult> crops) override;

  std::size_t size() const { return members_.size(); }
  Model<float>& member(std::size_t i) { return members_[i]; }
  const Model<float>& member(std::size_t i) const { return members_[i]; }
  void add(Model<float> m);

 private:
  std::vector<Model<float>> members_;
};

}  // namespace ren
