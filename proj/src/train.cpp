#include "ren/train.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <numeric>

#include "ren/errors.hpp"
#include "ren/ops.hpp"

namespace ren {

namespace {
// Stream tags for CounterRng::derive.
constexpr std::uint64_t kOrderStream = 1, kAugmentStream = 2, kDropoutStream = 3, kInitStream = 4, kBagStream = 5;
}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InputError("invalid training config: " + m); };
  if (batch_size <= 0) fail("batch size must be positive");
  if (!(lr0 > 0)) fail("lr0 must be positive");
  if (lr_drop_every <= 0) fail("lr_drop_every must be positive");
  if (!(lr_factor > 1)) fail("lr_factor must exceed 1");
  if (max_iters <= 0) fail("max_iters must be positive");
  if (!(weight_decay >= 0)) fail("weight decay must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) fail("momentum must be in [0, 1)");
  if (snapshot_every <= 0) fail("snapshot cadence must be positive");
  if (keep_snapshots <= 0) fail("keep_snapshots must be positive");
}

double lr_schedule(long iter, const TrainConfig& cfg) {
  if (iter < 0) throw InputError("negative iteration");
  return cfg.lr0 / std::pow(cfg.lr_factor, static_cast<double>(iter / cfg.lr_drop_every));
}

template <typename T>
TrainState<T>::TrainState(const ParameterSet<T>& params) {
  velocity.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) velocity.emplace_back(params[i].value.shape());
}

template <typename T>
void sgd_step(ParameterSet<T>& params, TrainState<T>& state, double lr, const TrainConfig& cfg) {
  if (state.velocity.size() != params.size()) throw ShapeError("momentum buffers do not match the parameters");
  const T mu = static_cast<T>(cfg.momentum), wd = static_cast<T>(cfg.weight_decay), rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    Tensor<T>& v = state.velocity[i];
    if (v.shape() != p.value.shape()) throw ShapeError("momentum buffer shape mismatch for " + p.name);
    const bool has_grad = p.grad.size() == p.value.size();
    T* w = p.value.ptr();
    T* vel = v.ptr();
    const T* g = has_grad ? p.grad.ptr() : nullptr;
    bool finite = true;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const T grad = (g ? g[k] : T(0)) + wd * w[k];
      vel[k] = mu * vel[k] + rate * grad;
      w[k] -= vel[k];
      finite = finite && std::isfinite(w[k]);
    }
    if (!finite) throw NumericError("non-finite update of " + p.name);
  }
  ++state.iteration;
}

namespace {

class SnapshotWriter {
 public:
  SnapshotWriter(const TrainConfig& cfg, TrainResult& result) : cfg_(cfg), result_(result) {}

  std::filesystem::path write(const Model<float>& model, long iter, const std::string& tag) {
    if (cfg_.snapshot_dir.empty()) return {};
    std::filesystem::create_directories(cfg_.snapshot_dir);
    const auto path = cfg_.snapshot_dir / (tag + "-" + std::to_string(iter) + ".ckpt");
    save_model(path, model, {{"iteration", std::to_string(iter)}, {"seed", std::to_string(cfg_.seed)}});
    return path;
  }

  void periodic(const Model<float>& model, long iter) {
    const auto path = write(model, iter, "snapshot");
    if (path.empty()) return;
    kept_.push_back(path);
    result_.snapshots.push_back(path);
    while (kept_.size() > static_cast<std::size_t>(cfg_.keep_snapshots)) {
      std::filesystem::remove(kept_.front());
      kept_.pop_front();
    }
  }

 private:
  const TrainConfig& cfg_;
  TrainResult& result_;
  std::deque<std::filesystem::path> kept_;
};

// Epoch-wise shuffled index stream.
class SampleStream {
 public:
  SampleStream(std::size_t n, std::uint64_t seed) : order_(n), seed_(seed) { reshuffle(); }

  struct Pick {
    std::size_t sample;
    std::uint64_t epoch;
  };

  Pick next() {
    if (pos_ == order_.size()) {
      ++epoch_;
      pos_ = 0;
      reshuffle();
    }
    return {order_[pos_++], epoch_};
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    CounterRng rng(CounterRng::derive(seed_, {kOrderStream, epoch_}));
    rng.shuffle(std::span<std::size_t>(order_));
  }

  std::vector<std::size_t> order_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace

TrainResult train(Model<float>& model, const SampleCache& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (data.samples.empty()) throw InputError("training set is empty");
  const int joints = model.spec().joints;
  if (data.joints != joints)
    throw InputError("data has J=" + std::to_string(data.joints) + " but the model predicts J=" + std::to_string(joints));
  const std::size_t s = model.spec().input_size, outputs = 3 * static_cast<std::size_t>(joints);
  for (const Sample& smp : data.samples)
    if (static_cast<std::size_t>(smp.crop.size) != s) throw InputError("sample patch size does not match the model input");

  TrainResult result;
  SnapshotWriter snapshots(cfg, result);
  TrainState<float> state(model.params());
  SampleStream stream(data.samples.size(), cfg.seed);
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  Tensor<float> input({b, 1, s, s});
  Tensor<float> target({b, outputs});

  for (long iter = 0; iter < cfg.max_iters; ++iter) {
    if (hooks.stop && hooks.stop->load()) {
      snapshots.write(model, iter, "interrupted");
      result.interrupted = true;
      break;
    }
    for (std::size_t slot = 0; slot < b; ++slot) {
      const auto pick = stream.next();
      const Sample& smp = data.samples[pick.sample];
      const float* patch = smp.crop.patch.data();
      const float* labels = smp.labels.data();
      Augmented aug;
      if (cfg.augment) {
        CounterRng rng(CounterRng::derive(cfg.seed, {kAugmentStream, pick.epoch, pick.sample}));
        aug = augment(smp.crop, smp.labels, cfg.augment_ranges, rng);
        patch = aug.crop.patch.data();
        labels = aug.labels.data();
      }
      std::memcpy(input.ptr() + slot * s * s, patch, s * s * sizeof(float));
      std::memcpy(target.ptr() + slot * outputs, labels, outputs * sizeof(float));
    }

    const double lr = lr_schedule(iter, cfg);
    double loss = 0.0;
    try {
      Graph<float> g(true);
      CounterRng drop(CounterRng::derive(cfg.seed, {kDropoutStream, static_cast<std::uint64_t>(iter)}));
      const auto fr = forward(model, g.constant(input), &drop);
      const Var<float> l = mse_loss(fr.pose, g.constant(target));
      loss = l.value()[0];
      if (!std::isfinite(loss)) throw NumericError("loss is not finite");
      g.backward(l);
      sgd_step(model.params(), state, lr, cfg);
    } catch (const NumericError& e) {
      const auto path = snapshots.write(model, iter, "diverged");
      std::string msg = "training diverged at iteration " + std::to_string(iter) + ": " + e.what();
      if (!path.empty()) msg += "; diagnostic snapshot " + path.string();
      throw NumericError(msg);
    }
    state.running_loss = iter == 0 ? loss : 0.99 * state.running_loss + 0.01 * loss;
    result.log.push_back({iter, lr, loss});
    result.iterations = iter + 1;
    if (hooks.on_iteration) hooks.on_iteration(result.log.back());
    if ((iter + 1) % cfg.snapshot_every == 0) snapshots.periodic(model, iter + 1);
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(9);
  out << "iter,lr,loss\n";
  for (const auto& r : log) out << r.iter << "," << r.lr << "," << r.loss << "\n";
}

std::uint64_t member_seed(std::uint64_t seed, int k) {
  return CounterRng::derive(seed, {kBagStream, static_cast<std::uint64_t>(k)});
}

BaggingResult train_bagging(const ModelSpec& spec, const SampleCache& data, const TrainConfig& cfg, int k,
                            bool identical_seeds, const TrainHooks& hooks) {
  if (k < 2) throw InputError("bagging needs at least 2 members");
  BaggingResult out;
  for (int i = 0; i < k; ++i) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = identical_seeds ? member_seed(cfg.seed, 0) : member_seed(cfg.seed, i);
    if (!cfg.snapshot_dir.empty()) member_cfg.snapshot_dir = cfg.snapshot_dir / ("member" + std::to_string(i));
    Model<float> m(spec, CounterRng::derive(member_cfg.seed, {kInitStream}));
    out.runs.push_back(train(m, data, member_cfg, hooks));
    out.ensemble.add(std::move(m));
    if (out.runs.back().interrupted) break;
  }
  return out;
}

template struct TrainState<float>;
template struct TrainState<double>;
template void sgd_step(ParameterSet<float>&, TrainState<float>&, double, const TrainConfig&);
template void sgd_step(ParameterSet<double>&, TrainState<double>&, double, const TrainConfig&);

}  // namespace ren
