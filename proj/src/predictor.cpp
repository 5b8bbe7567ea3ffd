#include "ren/predictor.hpp"

#include <algorithm>
#include <cstring>

#include "ren/errors.hpp"

namespace ren {

Tensor<float> stack_patches(std::span<const CropResult> crops) {
  if (crops.empty()) throw InputError("no crops to stack");
  const std::size_t s = crops[0].size;
  Tensor<float> out({crops.size(), 1, s, s});
  for (std::size_t i = 0; i < crops.size(); ++i) {
    if (static_cast<std::size_t>(crops[i].size) != s || crops[i].patch.size() != s * s)
      throw ShapeError("crops of different sizes in one batch");
    std::memcpy(out.ptr() + i * s * s, crops[i].patch.data(), s * s * sizeof(float));
  }
  return out;
}

void ModelPredictor::forward(const Tensor<float>& batch) { (void)infer(model_, batch); }

std::vector<std::vector<double>> ModelPredictor::raw(std::span<const CropResult> crops) {
  std::vector<std::vector<double>> rows;
  rows.reserve(crops.size());
  for (std::size_t start = 0; start < crops.size(); start += batch_) {
    const std::size_t n = std::min(batch_, crops.size() - start);
    const Tensor<float> out = infer(model_, stack_patches(crops.subspan(start, n)));
    const std::size_t d = out.dim(1);
    for (std::size_t i = 0; i < n; ++i) rows.emplace_back(out.ptr() + i * d, out.ptr() + (i + 1) * d);
  }
  return rows;
}

std::vector<HandAnnotation> ModelPredictor::predict(std::span<const CropResult> crops) {
  const auto rows = raw(crops);
  std::vector<HandAnnotation> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.push_back(denormalize_joints(std::span<const double>(rows[i]), crops[i].transform));
  return out;
}

EnsemblePredictor::EnsemblePredictor(std::vector<Model<float>> members) {
  for (auto& m : members) add(std::move(m));
}

void EnsemblePredictor::add(Model<float> m) {
  if (!members_.empty() && m.spec().joints != members_[0].spec().joints)
    throw InputError("ensemble members disagree on the joint count");
  members_.push_back(std::move(m));
}

int EnsemblePredictor::joints() const {
  if (members_.empty()) throw InputError("empty ensemble");
  return members_[0].spec().joints;
}

void EnsemblePredictor::forward(const Tensor<float>& batch) {
  for (auto& m : members_) (void)infer(m, batch);
}

std::vector<HandAnnotation> EnsemblePredictor::predict(std::span<const CropResult> crops) {
  if (members_.empty()) throw InputError("empty ensemble");
  std::vector<HandAnnotation> acc;
  for (auto& m : members_) {
    const auto preds = ModelPredictor(m).predict(crops);
    if (acc.empty()) {
      acc = preds;
      continue;
    }
    for (std::size_t f = 0; f < preds.size(); ++f)
      for (std::size_t j = 0; j < preds[f].joints.size(); ++j) {
        acc[f].joints[j].x += preds[f].joints[j].x;
        acc[f].joints[j].y += preds[f].joints[j].y;
        acc[f].joints[j].z += preds[f].joints[j].z;
      }
  }
  const double k = static_cast<double>(members_.size());
  for (auto& a : acc)
    for (auto& p : a.joints) {
      p.x /= k;
      p.y /= k;
      p.z /= k;
    }
  return acc;
}

}  // namespace ren
