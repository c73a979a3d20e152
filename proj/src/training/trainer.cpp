#include "cxr/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "cxr/common/csv.hpp"
#include "cxr/common/error.hpp"
#include "cxr/common/log.hpp"
#include "cxr/common/random.hpp"
#include "cxr/metrics/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {
namespace {

std::mutex g_cache_mutex;

void copy_into(torch::Tensor& batch, std::int64_t slot, const Image& img) {
  auto dst = batch[slot];
  std::memcpy(dst.data_ptr<float>(), img.data.data(), img.data.size() * sizeof(float));
}

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<double> current_lrs(const torch::optim::Optimizer& opt) {
  std::vector<double> out;
  for (const auto& g : opt.param_groups())
    out.push_back(static_cast<const torch::optim::AdamOptions&>(g.options()).lr());
  return out;
}

void set_lrs(torch::optim::Optimizer& opt, const std::vector<double>& lrs) {
  auto& groups = opt.param_groups();
  for (std::size_t i = 0; i < groups.size(); ++i)
    static_cast<torch::optim::AdamOptions&>(groups[i].options()).lr(lrs[i]);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size must be > 0");
  if (max_epochs <= 0) throw ConfigError("max_epochs must be > 0");
  if (early_stop_patience <= 0) throw ConfigError("early_stop_patience must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (workers <= 0) throw ConfigError("workers must be > 0");
  plateau.validate();
  preprocess.validate();
  augment.validate();
}

std::string_view to_string(StopReason reason) {
  return reason == StopReason::kEarlyStop ? "EARLY_STOP" : "MAX_EPOCHS";
}

// ------------------------------------------------------------ BatchLoader

BatchLoader::BatchLoader(fs::path dataset_root, std::vector<ImageRecord> records, Split split,
                         PreprocessConfig preprocess, AugmentPolicy augment, std::uint64_t seed,
                         int workers, bool cache_images)
    : root_(std::move(dataset_root)),
      records_(std::move(records)),
      split_(split),
      preprocess_(preprocess),
      augment_(augment),
      seed_(seed),
      workers_(workers),
      cache_(cache_images),
      cache_store_(cache_images ? records_.size() : 0) {
  preprocess_.validate();
  augment_.validate();
}

std::vector<std::size_t> BatchLoader::epoch_order(int epoch) const {
  std::vector<std::size_t> order(records_.size());
  std::iota(order.begin(), order.end(), 0);
  if (augments()) {
    Rng rng(splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(epoch) + 0x5eed)));
    shuffle(std::span<std::size_t>(order), rng);
  }
  return order;
}

Image BatchLoader::prepared(std::size_t index) const {
  if (index >= records_.size())
    throw InvalidArgument("record index " + std::to_string(index) + " out of range for " +
                          std::to_string(records_.size()) + " records");
  if (cache_) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    if (cache_store_[index]) return *cache_store_[index];
  }
  const auto& rec = records_[index];
  Image img = prepare_image(load_image(root_ / rec.id, rec.id), preprocess_);
  if (cache_) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    cache_store_[index] = img;
  }
  return img;
}

Batch BatchLoader::load(std::span<const std::size_t> indices, int epoch) const {
  const auto n = static_cast<std::int64_t>(indices.size());
  const int s = preprocess_.target_size;
  Batch batch;
  batch.images = torch::empty({n, 3, s, s}, torch::kFloat32);
  batch.labels = torch::empty({n}, torch::kInt64);
  batch.ids.resize(indices.size());
  parallel_for(indices.size(), workers_, [&](std::size_t k) {
    const auto& rec = records_[indices[k]];
    Image img = prepared(indices[k]);
    if (augments()) {
      Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch), rec.id));
      img = augment_image(img, augment_, rng);
    }
    copy_into(batch.images, static_cast<std::int64_t>(k), normalize(img, preprocess_));
    batch.ids[k] = rec.id;
  });
  for (std::int64_t k = 0; k < n; ++k)
    batch.labels[k] = static_cast<std::int64_t>(index_of(records_[indices[k]].label));
  return batch;
}

torch::Tensor BatchLoader::load_one(std::size_t index) const {
  const int s = preprocess_.target_size;
  auto t = torch::empty({1, 3, s, s}, torch::kFloat32);
  copy_into(t, 0, normalize(prepared(index), preprocess_));
  return t;
}

// --------------------------------------------------------------- evaluate

EvalResult evaluate(ModelHandle& model, const BatchLoader& loader, int batch_size) {
  if (loader.size() == 0) throw TrainingError("cannot evaluate an empty split");
  model.eval_mode();
  torch::NoGradGuard no_grad;
  EvalResult r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const auto order = loader.epoch_order(0);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto count = std::min<std::size_t>(batch_size, order.size() - start);
    const auto batch = loader.load(std::span(order).subspan(start, count), 0);
    const auto logits = model.forward(batch.images);
    loss_sum += torch::nn::functional::cross_entropy(
                    logits, batch.labels,
                    torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kSum))
                    .item<double>();
    const auto probs = torch::softmax(logits.to(torch::kFloat64), 1).select(1, 1).contiguous();
    const auto* p = probs.data_ptr<double>();
    for (std::size_t k = 0; k < count; ++k) {
      const Label truth = loader.records()[order[start + k]].label;
      const double prob = std::clamp(p[k], 0.0, 1.0);
      const Label pred = decide(prob);
      r.preds.ids.push_back(batch.ids[k]);
      r.preds.y_true.push_back(truth);
      r.preds.y_prob.push_back(prob);
      r.preds.y_pred.push_back(pred);
      correct += pred == truth;
    }
  }
  r.loss = loss_sum / static_cast<double>(order.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
  return r;
}

// ------------------------------------------------------------------ train

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  csv::Table t;
  t.header = {"epoch", "train_loss", "val_loss", "train_acc", "val_acc"};
  if (!history.empty())
    for (const auto& name : history.front().group_names) t.header.push_back("lr_" + name);
  t.header.push_back("wall_seconds");
  for (const auto& e : history) {
    csv::Row row{std::to_string(e.epoch), format_double(e.train_loss), format_double(e.val_loss),
                 format_double(e.train_acc), format_double(e.val_acc)};
    for (double lr : e.lrs) row.push_back(format_double(lr));
    row.push_back(format_double(e.wall_seconds));
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

TrainResult train(ModelHandle& model, const SplitManifest& manifest, const fs::path& dataset_root,
                  const TrainConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  auto train_records = manifest.records_in(Split::kTrain);
  auto val_records = manifest.records_in(Split::kVal);
  if (train_records.empty()) throw TrainingError("TRAIN split is empty");
  if (val_records.empty()) throw TrainingError("VAL split is empty");

  torch::manual_seed(cfg.seed);
  const BatchLoader train_loader(dataset_root, std::move(train_records), Split::kTrain,
                                 cfg.preprocess, cfg.augment, cfg.seed, cfg.workers,
                                 cfg.cache_images);
  const BatchLoader val_loader(dataset_root, std::move(val_records), Split::kVal, cfg.preprocess,
                               cfg.augment, cfg.seed, cfg.workers, cfg.cache_images);

  torch::optim::Adam optimizer(
      model.optimizer_groups(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      torch::optim::AdamOptions(model.spec().regime.head_lr)
          .betas({cfg.adam_beta1, cfg.adam_beta2})
          .eps(cfg.adam_eps));
  const auto group_names = model.optimizer_group_names();

  PlateauSchedulerState plateau;
  plateau.current_lrs = current_lrs(optimizer);
  EarlyStopState early;

  fs::create_directories(run_dir / "checkpoints");
  TrainResult result;
  result.best_checkpoint = run_dir / "checkpoints" / "best.pt";
  result.best_val_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.group_names = group_names;
    rec.lrs = current_lrs(optimizer);

    model.train_mode();
    const auto order = train_loader.epoch_order(epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      const auto batch = train_loader.load(std::span(order).subspan(start, count), epoch);
      optimizer.zero_grad();
      const auto logits = model.forward(batch.images);
      const auto loss = torch::nn::functional::cross_entropy(logits, batch.labels);
      const double loss_value = loss.item<double>();
      if (!std::isfinite(loss_value)) {
        write_json(run_dir / "diagnostics.json",
                   {{"epoch", epoch},
                    {"batch_start", start},
                    {"ids", batch.ids},
                    {"lrs", rec.lrs},
                    {"loss", std::isnan(loss_value) ? "nan" : "inf"},
                    {"logits_finite", torch::isfinite(logits).all().item<bool>()}});
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            "; diagnostics written to " + (run_dir / "diagnostics.json").string());
      }
      loss.backward();
      optimizer.step();
      loss_sum += loss_value * static_cast<double>(count);
      correct += logits.argmax(1).eq(batch.labels).sum().item<std::int64_t>();
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());

    const auto val = evaluate(model, val_loader, cfg.batch_size);
    rec.val_loss = val.loss;
    rec.val_acc = val.accuracy;
    if (!std::isfinite(rec.val_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));

    if (rec.val_loss < result.best_val_loss - cfg.improvement_threshold) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      save_checkpoint(model, result.best_checkpoint);
    }

    plateau = plateau_step(plateau, rec.val_loss, cfg.plateau);
    set_lrs(optimizer, plateau.current_lrs);
    early = early_stop_step(early, rec.val_loss, epoch, cfg.early_stop_patience,
                            cfg.improvement_threshold);

    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    write_history_csv(run_dir / "history.csv", result.history);
    log::info("epoch " + std::to_string(epoch) + " train_loss " + format_double(rec.train_loss) +
              " val_loss " + format_double(rec.val_loss) + " val_acc " +
              format_double(rec.val_acc));
    if (early.stopped) {
      result.stop_reason = StopReason::kEarlyStop;
      break;
    }
  }

  write_json(run_dir / "stop.json", {{"reason", std::string(to_string(result.stop_reason))},
                                     {"best_epoch", result.best_epoch},
                                     {"best_val_loss", result.best_val_loss},
                                     {"epochs_run", result.history.size()}});
  return result;
}

}  // namespace cxr
