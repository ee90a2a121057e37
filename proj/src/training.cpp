#include "propnet/training.hpp"

#include "propnet/checkpoint.hpp"
#include "propnet/latent.hpp"
#include "propnet/parallel.hpp"
#include "propnet/rollout.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <stdexcept>

namespace propnet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (!(lr > 0)) throw std::invalid_argument("train.lr must be positive");
  if (patience < 1) throw std::invalid_argument("train.patience must be >= 1");
  if (!(decay > 0 && decay < 1)) throw std::invalid_argument("train.decay must lie in (0, 1)");
  if (!(clip_norm > 0)) throw std::invalid_argument("train.clip_norm must be positive");
  if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("train.train_fraction must lie in (0, 1)");
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double decay)
    : lr_(lr), patience_(patience), decay_(decay), best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::observe(double validation_loss) {
  if (validation_loss < best_) {
    best_ = validation_loss;
    bad_ = 0;
  } else if (++bad_ > patience_) {
    lr_ *= decay_;
    bad_ = 0;
  }
  return lr_;
}

namespace {

struct Accumulator {
  Eigen::VectorXd sum, sq;
  double n = 0;

  void add(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    if (sum.size() == 0) {
      sum = Eigen::VectorXd::Zero(row.size());
      sq = Eigen::VectorXd::Zero(row.size());
    }
    sum += row.transpose();
    sq += row.transpose().cwiseAbs2();
    n += 1;
  }
  void finish(RowVector& mean, RowVector& std, Eigen::Index width) const {
    if (n == 0) {
      mean = RowVector::Zero(width);
      std = RowVector::Ones(width);
      return;
    }
    mean = (sum / n).transpose();
    std = ((sq / n).transpose() - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  }
};

bool is_latent(const std::vector<Rollout>& data) { return !data.empty() && data[0].scenario == Scenario::Boxes; }

// Cached features of one rollout with fixed topology.
struct RolloutCache {
  Topology topo;
  Tensor relations;
  std::vector<Tensor> objects;
  Eigen::VectorXd free;
};

RolloutCache cache_rollout(const Rollout& r) {
  RolloutCache c;
  c.topo = topology_of(r.graphs.at(0));
  c.relations = flatten(r.graphs[0]).relations;
  for (const auto& g : r.graphs) {
    if (g.num_objects() != c.topo.num_objects || g.num_relations() != c.topo.num_relations()) {
      throw std::invalid_argument("rollout topology changes over time");
    }
    c.objects.push_back(flatten(g).objects);
  }
  c.free.resize(c.topo.num_objects);
  for (int i = 0; i < c.topo.num_objects; ++i) c.free[i] = c.topo.pinned[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
  return c;
}

struct SampleRef {
  int rollout;  // index into the cache vector
  int t;
};

class SupervisedData {
 public:
  SupervisedData(const std::vector<Rollout>& data, std::span<const int> rollouts) {
    for (int r : rollouts) {
      caches_.push_back(cache_rollout(data.at(static_cast<std::size_t>(r))));
      const int c = static_cast<int>(caches_.size()) - 1;
      for (int t = 0; t + 1 < static_cast<int>(caches_.back().objects.size()); ++t) samples_.push_back({c, t});
    }
  }
  const std::vector<SampleRef>& samples() const { return samples_; }

  Var loss(Tape& tape, const Model& model, std::span<const SampleRef> batch) const {
    Eigen::Index n_obj = 0, n_rel = 0;
    std::vector<const Topology*> parts;
    for (const auto& s : batch) {
      const auto& c = caches_[static_cast<std::size_t>(s.rollout)];
      n_obj += c.topo.num_objects;
      n_rel += c.topo.num_relations();
      parts.push_back(&c.topo);
    }
    Tensor objects(n_obj, model.object_width()), relations(n_rel, model.relation_width()), targets(n_obj, 2);
    Eigen::VectorXd mask(n_obj);
    Eigen::Index ro = 0, rr = 0;
    const RowVector tscale = model.norm().target_std.cwiseInverse();
    for (const auto& s : batch) {
      const auto& c = caches_[static_cast<std::size_t>(s.rollout)];
      const Eigen::Index n = c.topo.num_objects;
      objects.middleRows(ro, n) = c.objects[static_cast<std::size_t>(s.t)];
      targets.middleRows(ro, n) =
          ((c.objects[static_cast<std::size_t>(s.t) + 1].middleCols(2, 2).rowwise() - model.norm().target_mean)
               .array()
               .rowwise() *
           tscale.array())
              .matrix();
      mask.segment(ro, n) = c.free;
      if (c.topo.num_relations() > 0) relations.middleRows(rr, c.topo.num_relations()) = c.relations;
      ro += n;
      rr += c.topo.num_relations();
    }
    topo_ = concat(parts);
    GraphInputs in{tape.constant(std::move(objects)), tape.constant(std::move(relations)), &topo_};
    return masked_mse(model.forward_normalized(tape, in), tape.constant(std::move(targets)), mask);
  }

 private:
  std::vector<RolloutCache> caches_;
  std::vector<SampleRef> samples_;
  mutable Topology topo_;
};

class LatentData {
 public:
  LatentData(const std::vector<Rollout>& data, std::span<const int> rollouts) {
    for (int r : rollouts) {
      const Rollout& ro = data.at(static_cast<std::size_t>(r));
      for (int t = 0; t + 1 < ro.steps(); ++t) {
        LatentSample s;
        s.now = &ro.graphs[static_cast<std::size_t>(t)];
        s.next = &ro.graphs[static_cast<std::size_t>(t) + 1];
        const auto& c = ro.controls[static_cast<std::size_t>(t)];
        if (c.size() != 4) throw std::invalid_argument("box rollouts need 4-d control slots");
        std::copy(c.begin(), c.end(), s.action.begin());
        samples_.push_back(s);
      }
    }
  }
  const std::vector<LatentSample>& samples() const { return samples_; }
  Var loss(Tape& tape, const Model& model, std::span<const LatentSample> batch) const {
    return latent_loss(tape, model, batch).total;
  }

 private:
  std::vector<LatentSample> samples_;
};

template <class Data, class Sample>
double mean_loss(const Data& data, const Model& model, const std::vector<Sample>& samples, int batch_size) {
  if (samples.empty()) return 0.0;
  Tape tape(&model.store());
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(samples.size() - i, static_cast<std::size_t>(batch_size));
    tape.clear();
    total += data.loss(tape, model, std::span<const Sample>(samples.data() + i, n)).scalar() * static_cast<double>(n);
  }
  return total / static_cast<double>(samples.size());
}

template <class Sample>
std::vector<Sample> subsample(const std::vector<Sample>& all, int max_samples) {
  if (max_samples <= 0 || static_cast<int>(all.size()) <= max_samples) return all;
  std::vector<Sample> out;
  const double stride = static_cast<double>(all.size()) / max_samples;
  for (int i = 0; i < max_samples; ++i) out.push_back(all[static_cast<std::size_t>(i * stride)]);
  return out;
}

template <class Data, class Sample>
TrainResult run_training(Model& model, const Data& train_data, const Data& val_data, const TrainConfig& cfg,
                         Split split) {
  const std::vector<Sample> val = subsample(val_data.samples(), cfg.max_validation_samples);
  const std::vector<Sample> train_probe = subsample(train_data.samples(), static_cast<int>(std::max<std::size_t>(val.size(), 1)));
  std::vector<Sample> order = train_data.samples();
  if (order.empty()) throw std::invalid_argument("training split has no transitions");

  TrainResult result;
  result.split = std::move(split);
  PlateauScheduler scheduler(cfg.lr, cfg.patience, cfg.decay);
  nn::AdamState adam(model.store().size());
  std::mt19937_64 rng(cfg.seed);
  Tape tape(&model.store());

  std::ofstream csv;
  if (!cfg.log_csv.empty()) {
    csv.open(cfg.log_csv, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write '" + cfg.log_csv + "'");
    csv << "epoch,train_loss,val_loss,lr\n" << std::setprecision(17);
  }
  auto log = [&](const EpochLog& e) {
    result.log.push_back(e);
    if (csv) csv << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << '\n';
    if (cfg.verbose) {
      std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr " << e.lr << '\n';
    }
  };

  const double val0 = val.empty() ? mean_loss(train_data, model, train_probe, cfg.batch_size)
                                  : mean_loss(val_data, model, val, cfg.batch_size);
  log({0, mean_loss(train_data, model, train_probe, cfg.batch_size), val0, cfg.lr});
  scheduler.observe(val0);
  result.best_val = val0;
  result.best_epoch = 0;
  std::vector<double> best(model.store().flat().begin(), model.store().flat().end());

  double lr = cfg.lr;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_batches = (order.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
    if (cfg.max_batches_per_epoch > 0) n_batches = std::min<std::size_t>(n_batches, static_cast<std::size_t>(cfg.max_batches_per_epoch));
    double train_sum = 0.0;
    std::size_t train_count = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t i = b * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t n = std::min(order.size() - i, static_cast<std::size_t>(cfg.batch_size));
      tape.clear();
      Var loss = train_data.loss(tape, model, std::span<const Sample>(order.data() + i, n));
      if (!std::isfinite(loss.scalar())) throw NumericError("training loss diverged", epoch);
      tape.backward(loss);
      Eigen::VectorXd grad = tape.param_grad();
      nn::clip_global_norm(grad, cfg.clip_norm);
      nn::adam_step(model.store(), grad, adam, lr);
      train_sum += loss.scalar() * static_cast<double>(n);
      train_count += n;
    }
    const double val_loss = val.empty() ? train_sum / static_cast<double>(train_count)
                                        : mean_loss(val_data, model, val, cfg.batch_size);
    if (!std::isfinite(val_loss)) throw NumericError("validation loss diverged", epoch);
    log({epoch, train_sum / static_cast<double>(train_count), val_loss, lr});
    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      best.assign(model.store().flat().begin(), model.store().flat().end());
    }
    lr = scheduler.observe(val_loss);
  }
  std::copy(best.begin(), best.end(), model.store().flat().begin());
  return result;
}

}  // namespace

NormStats compute_norm_stats(const std::vector<Rollout>& data, std::span<const int> rollouts) {
  Accumulator obj, rel, tgt, act;
  Eigen::Index ow = -1, rw = kRelationFeatureWidth;
  for (int r : rollouts) {
    const Rollout& ro = data.at(static_cast<std::size_t>(r));
    for (int t = 0; t < ro.steps(); ++t) {
      const auto& g = ro.graphs[static_cast<std::size_t>(t)];
      const FlatGraph f = flatten(g);
      if (g.num_objects() > 0) ow = f.objects.cols();
      for (Eigen::Index i = 0; i < f.objects.rows(); ++i) obj.add(f.objects.row(i));
      if (t == 0 || ro.scenario == Scenario::Boxes) {
        for (Eigen::Index k = 0; k < f.relations.rows(); ++k) rel.add(f.relations.row(k));
      }
      if (ro.scenario == Scenario::Boxes) {
        const auto& c = ro.controls[static_cast<std::size_t>(t)];
        if (c.size() == 4) act.add(Eigen::Map<const Eigen::RowVectorXd>(c.data(), 4));
      } else if (t + 1 < ro.steps()) {
        const auto& next = ro.graphs[static_cast<std::size_t>(t) + 1];
        for (int i = 0; i < next.num_objects(); ++i) {
          if (!is_pinned(next, i)) tgt.add(next.objects[static_cast<std::size_t>(i)].velocity.transpose());
        }
      }
    }
  }
  if (ow < 0) ow = 6;
  NormStats n;
  obj.finish(n.object_mean, n.object_std, ow);
  rel.finish(n.relation_mean, n.relation_std, rw);
  tgt.finish(n.target_mean, n.target_std, 2);
  act.finish(n.action_mean, n.action_std, 4);
  n.floor_std();
  return n;
}

TrainResult train(Model& model, const std::vector<Rollout>& data, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (data[0].scenario != model.scenario()) {
    throw std::invalid_argument("train: dataset scenario '" + std::string(to_string(data[0].scenario)) +
                                "' does not match model scenario '" + std::string(to_string(model.scenario())) + "'");
  }
  if (model.spec().latent() != is_latent(data)) {
    throw std::invalid_argument("train: the latent model is for box data and box data needs the latent model");
  }
  Split split = split_rollouts(static_cast<int>(data.size()), config.train_fraction, config.seed);
  model.norm() = compute_norm_stats(data, split.train);

  TrainResult result;
  if (model.spec().latent()) {
    LatentData tr(data, split.train), va(data, split.validation);
    result = run_training<LatentData, LatentSample>(model, tr, va, config, split);
  } else {
    SupervisedData tr(data, split.train), va(data, split.validation);
    result = run_training<SupervisedData, SampleRef>(model, tr, va, config, split);
  }
  if (!config.checkpoint.empty()) {
    save_checkpoint(model, config.checkpoint, {{"best_epoch", result.best_epoch}, {"best_val", result.best_val}});
  }
  return result;
}

double dataset_loss(const Model& model, const std::vector<Rollout>& data, std::span<const int> rollouts,
                    int max_samples) {
  if (model.spec().latent()) {
    LatentData d(data, rollouts);
    return mean_loss(d, model, subsample(d.samples(), max_samples), 32);
  }
  SupervisedData d(data, rollouts);
  return mean_loss(d, model, subsample(d.samples(), max_samples), 32);
}

EvalReport evaluate(const DynamicsModel& model, const std::vector<Rollout>& data, std::span<const int> rollouts,
                    const std::vector<int>& horizons, double dt) {
  if (horizons.empty()) throw std::invalid_argument("evaluate: no horizons");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1 || (i > 0 && horizons[i] <= horizons[i - 1])) {
      throw std::invalid_argument("evaluate: horizons must be positive and strictly increasing");
    }
  }
  if (rollouts.empty()) throw std::invalid_argument("evaluate: no rollouts");
  const int T = horizons.back();
  std::vector<std::vector<double>> per(rollouts.size());
  std::vector<double> seconds(rollouts.size());
  parallel_for(rollouts.size(), [&](std::size_t k) {
    const Rollout& r = data.at(static_cast<std::size_t>(rollouts[k]));
    if (r.scenario != model.scenario()) {
      throw std::invalid_argument("evaluate: model scenario '" + std::string(to_string(model.scenario())) +
                                  "' does not match data scenario '" + std::string(to_string(r.scenario)) + "'");
    }
    if (r.steps() <= T) throw std::invalid_argument("evaluate: rollout shorter than the largest horizon");
    const Topology topo = topology_of(r.graphs[0]);
    std::vector<std::vector<Vec2>> forces;
    for (int t = 0; t < T; ++t) {
      const auto& g = r.graphs[static_cast<std::size_t>(t)];
      if (g.num_objects() != topo.num_objects) throw std::invalid_argument("evaluate: topology changes within rollout");
      std::vector<Vec2> f;
      for (const auto& o : g.objects) f.push_back(o.external_force);
      forces.push_back(std::move(f));
    }
    const auto start = std::chrono::steady_clock::now();
    const auto predicted = rollout(model, r.graphs[0], T, forces, dt);
    seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (int h : horizons) {
      const auto& truth = r.graphs[static_cast<std::size_t>(h)];
      const auto& pred = predicted[static_cast<std::size_t>(h)];
      double err = 0.0;
      int count = 0;
      for (int i = 0; i < topo.num_objects; ++i) {
        if (topo.pinned[static_cast<std::size_t>(i)]) continue;
        err += (pred.objects[static_cast<std::size_t>(i)].position - truth.objects[static_cast<std::size_t>(i)].position)
                   .squaredNorm();
        ++count;
      }
      per[k].push_back(count > 0 ? err / count : 0.0);
    }
  });
  EvalReport rep;
  rep.horizons = horizons;
  rep.rollouts = static_cast<int>(rollouts.size());
  rep.mse.assign(horizons.size(), 0.0);
  double total_seconds = 0.0;
  for (std::size_t k = 0; k < rollouts.size(); ++k) {
    for (std::size_t h = 0; h < horizons.size(); ++h) rep.mse[h] += per[k][h] / static_cast<double>(rollouts.size());
    total_seconds += seconds[k];
  }
  rep.seconds_per_step = total_seconds / (static_cast<double>(rollouts.size()) * T);
  return rep;
}

}  // namespace propnet
