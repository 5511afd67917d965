#pragma once

// Encoder + latent predictor world model with a linear state probe.
//
//   encoder   : obs -> tanh(L0) -> ... -> tanh(L_{n-2}) -> L_{n-1} -> latent
//   predictor : z' = z + M_{m-1}(tanh(... tanh(M_0([z, a]))))
//   probe     : latent -> 2D position
//
// Training minimizes
//   w_pred * |predict(encode(o_t), a_t) - encode(o_{t+1})|^2
//   + w_state * |probe(encode(o_t)) - s_t|^2
// averaged over a mini-batch, with gradients flowing through both encoder
// calls. Parameters are stored as float32; training runs in double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wmq/error.hpp"
#include "wmq/model_store.hpp"
#include "wmq/rng.hpp"
#include "wmq/toyworld.hpp"

namespace wmq {

struct ModelDims {
  int obs_dim = 256;
  int hidden = 64;
  int latent = 16;
  int encoder_layers = 4;
  int predictor_hidden = 64;
  int predictor_layers = 2;
  int action_dim = 2;
  int state_dim = 2;

  void validate() const {
    if (obs_dim < 1 || hidden < 1 || latent < 1 || predictor_hidden < 1 || action_dim < 1 || state_dim < 1)
      throw ValidationError("model dimensions must be positive");
    if (encoder_layers < 1 || predictor_layers < 1) throw ValidationError("layer counts must be >= 1");
  }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

template <class T>
struct Linear {
  int out = 0;
  int in = 0;
  std::vector<T> w;  // [out, in] row-major
  std::vector<T> b;  // [out]

  Linear() = default;
  Linear(int out_dim, int in_dim) : out(out_dim), in(in_dim), w(static_cast<std::size_t>(out_dim * in_dim)), b(static_cast<std::size_t>(out_dim)) {}

  /// y = W x + b, accumulated in double.
  void apply(std::span<const double> x, std::span<double> y) const {
    // Rendered observations are mostly zero; visit only non-zero columns.
    thread_local std::vector<int> nz;
    nz.clear();
    for (int i = 0; i < in; ++i)
      if (x[static_cast<std::size_t>(i)] != 0.0) nz.push_back(i);
    const bool sparse = nz.size() * 4 < static_cast<std::size_t>(in);
    for (int o = 0; o < out; ++o) {
      const T* row = w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      double acc = static_cast<double>(b[static_cast<std::size_t>(o)]);
      if (sparse) {
        for (int i : nz) acc += static_cast<double>(row[i]) * x[static_cast<std::size_t>(i)];
      } else {
        for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[static_cast<std::size_t>(i)];
      }
      y[static_cast<std::size_t>(o)] = acc;
    }
  }
};

template <class T>
struct Network {
  ModelDims dims;
  std::vector<Linear<T>> encoder;
  std::vector<Linear<T>> predictor;
  Linear<T> probe;

  Network() = default;
  explicit Network(const ModelDims& d) : dims(d) {
    d.validate();
    for (int i = 0; i < d.encoder_layers; ++i) {
      const int in = i == 0 ? d.obs_dim : d.hidden;
      const int out = i == d.encoder_layers - 1 ? d.latent : d.hidden;
      encoder.emplace_back(out, in);
    }
    for (int i = 0; i < d.predictor_layers; ++i) {
      const int in = i == 0 ? d.latent + d.action_dim : d.predictor_hidden;
      const int out = i == d.predictor_layers - 1 ? d.latent : d.predictor_hidden;
      predictor.emplace_back(out, in);
    }
    probe = Linear<T>(d.state_dim, d.latent);
  }

  template <class F>
  void for_each_layer(F&& f) {
    for (auto& l : encoder) f(l);
    for (auto& l : predictor) f(l);
    f(probe);
  }
  template <class F>
  void for_each_layer(F&& f) const {
    for (const auto& l : encoder) f(l);
    for (const auto& l : predictor) f(l);
    f(probe);
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_layer([&](const Linear<T>& l) { n += l.w.size() + l.b.size(); });
    return n;
  }
};

template <class U, class T>
Network<U> cast_network(const Network<T>& src) {
  Network<U> dst(src.dims);
  auto conv = [](const Linear<T>& a, Linear<U>& b) {
    std::ranges::transform(a.w, b.w.begin(), [](T v) { return static_cast<U>(v); });
    std::ranges::transform(a.b, b.b.begin(), [](T v) { return static_cast<U>(v); });
  };
  for (std::size_t i = 0; i < src.encoder.size(); ++i) conv(src.encoder[i], dst.encoder[i]);
  for (std::size_t i = 0; i < src.predictor.size(); ++i) conv(src.predictor[i], dst.predictor[i]);
  conv(src.probe, dst.probe);
  return dst;
}

/// Glorot-uniform weights, zero biases.
inline Network<double> init_network(const ModelDims& dims, std::uint64_t seed) {
  Network<double> net(dims);
  Rng rng("init", {seed});
  net.for_each_layer([&](Linear<double>& l) {
    const double limit = std::sqrt(6.0 / (l.in + l.out));
    for (auto& v : l.w) v = rng.uniform(-limit, limit);
  });
  return net;
}

using Latent = std::vector<double>;

namespace detail {

/// Forward through an MLP; tanh after every layer except the last.
/// acts[0] is the input, acts[i + 1] the (activated) output of layer i.
template <class T>
void mlp_forward(const std::vector<Linear<T>>& layers, std::span<const double> x,
                 std::vector<std::vector<double>>& acts) {
  acts.resize(layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    acts[i + 1].resize(static_cast<std::size_t>(layers[i].out));
    layers[i].apply(acts[i], acts[i + 1]);
    if (i + 1 < layers.size())
      for (auto& v : acts[i + 1]) v = std::tanh(v);
  }
}

/// Accumulates parameter gradients into `grads` and returns dL/dinput.
inline std::vector<double> mlp_backward(const std::vector<Linear<double>>& layers,
                                        const std::vector<std::vector<double>>& acts, std::vector<double> d_out,
                                        std::vector<Linear<double>>& grads, bool want_input_grad = true) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    auto& g = grads[li];
    if (li + 1 < layers.size())
      for (std::size_t o = 0; o < d_out.size(); ++o) d_out[o] *= 1.0 - acts[li + 1][o] * acts[li + 1][o];
    const auto& x = acts[li];
    const bool need_input_grad = li > 0 || want_input_grad;
    std::vector<double> d_in(need_input_grad ? static_cast<std::size_t>(l.in) : 0, 0.0);
    if (!need_input_grad) {
      std::vector<int> nz;
      for (int i = 0; i < l.in; ++i)
        if (x[static_cast<std::size_t>(i)] != 0.0) nz.push_back(i);
      for (int o = 0; o < l.out; ++o) {
        const double d = d_out[static_cast<std::size_t>(o)];
        g.b[static_cast<std::size_t>(o)] += d;
        double* gw = g.w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
        for (int i : nz) gw[i] += d * x[static_cast<std::size_t>(i)];
      }
    } else {
      for (int o = 0; o < l.out; ++o) {
        const double d = d_out[static_cast<std::size_t>(o)];
        g.b[static_cast<std::size_t>(o)] += d;
        const std::size_t base = static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
        for (int i = 0; i < l.in; ++i) {
          g.w[base + static_cast<std::size_t>(i)] += d * x[static_cast<std::size_t>(i)];
          d_in[static_cast<std::size_t>(i)] += d * l.w[base + static_cast<std::size_t>(i)];
        }
      }
    }
    d_out = std::move(d_in);
  }
  return d_out;
}

}  // namespace detail

template <class T>
Latent encode(const Network<T>& net, std::span<const double> obs) {
  if (static_cast<int>(obs.size()) != net.dims.obs_dim)
    throw ValidationError("observation has " + std::to_string(obs.size()) + " values, encoder expects " +
                          std::to_string(net.dims.obs_dim));
  std::vector<std::vector<double>> acts;
  detail::mlp_forward(net.encoder, obs, acts);
  return std::move(acts.back());
}

template <class T>
Latent predict_next(const Network<T>& net, std::span<const double> latent, std::span<const double> action) {
  if (static_cast<int>(latent.size()) != net.dims.latent)
    throw ValidationError("latent has wrong dimension for predictor");
  if (static_cast<int>(action.size()) != net.dims.action_dim)
    throw ValidationError("action has " + std::to_string(action.size()) + " components, predictor expects " +
                          std::to_string(net.dims.action_dim));
  std::vector<double> x(latent.begin(), latent.end());
  x.insert(x.end(), action.begin(), action.end());
  std::vector<std::vector<double>> acts;
  detail::mlp_forward(net.predictor, x, acts);
  Latent out(latent.begin(), latent.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += acts.back()[i];
  return out;
}

/// Open-loop latent rollout; element k is the latent after actions[0..k].
template <class T>
std::vector<Latent> rollout(const Network<T>& net, std::span<const double> latent0, std::span<const Vec2> actions) {
  std::vector<Latent> out;
  out.reserve(actions.size());
  Latent z(latent0.begin(), latent0.end());
  for (const auto& a : actions) {
    z = predict_next(net, z, a);
    out.push_back(z);
  }
  return out;
}

template <class T>
Vec2 probe_state(const Network<T>& net, std::span<const double> latent) {
  if (static_cast<int>(latent.size()) != net.dims.latent) throw ValidationError("latent has wrong dimension for probe");
  std::vector<double> y(static_cast<std::size_t>(net.dims.state_dim));
  net.probe.apply(latent, y);
  return {y[0], y.size() > 1 ? y[1] : 0.0};
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double prediction_loss_weight = 1.0;
  double state_loss_weight = 1.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const {
    if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ValidationError("train.learning_rate must be positive");
    if (!(prediction_loss_weight > 0)) throw ValidationError("train.prediction_loss_weight must be positive");
    if (!(state_loss_weight > 0)) throw ValidationError("train.state_loss_weight must be positive");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
      throw ValidationError("train.validation_fraction must lie in [0, 1)");
  }
};

struct LossWeights {
  double prediction = 1.0;
  double state = 1.0;
};

/// Mean loss over `batch` and (optionally) its gradient, accumulated into `grad`
/// which must be a zeroed network of the same dims.
inline double loss_and_gradient(const Network<double>& net, std::span<const Transition* const> batch,
                                const LossWeights& w, Network<double>* grad) {
  if (batch.empty()) throw ValidationError("empty batch");
  const auto& d = net.dims;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<std::vector<double>> enc_a, enc_b, pred_acts;
  for (const Transition* tr : batch) {
    detail::mlp_forward(net.encoder, tr->obs, enc_a);
    detail::mlp_forward(net.encoder, tr->next_obs, enc_b);
    const auto& z = enc_a.back();
    const auto& z_next = enc_b.back();

    std::vector<double> x(z.begin(), z.end());
    x.push_back(tr->action[0]);
    x.push_back(tr->action[1]);
    detail::mlp_forward(net.predictor, x, pred_acts);
    std::vector<double> err_pred(static_cast<std::size_t>(d.latent));
    for (int i = 0; i < d.latent; ++i) {
      const auto k = static_cast<std::size_t>(i);
      err_pred[k] = z[k] + pred_acts.back()[k] - z_next[k];
    }
    std::vector<double> p(static_cast<std::size_t>(d.state_dim));
    net.probe.apply(z, p);
    std::vector<double> err_state(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) err_state[i] = p[i] - tr->state.pos[i];

    double lp = 0.0, ls = 0.0;
    for (double e : err_pred) lp += e * e;
    for (double e : err_state) ls += e * e;
    total += (w.prediction * lp + w.state * ls) * inv_n;

    if (!grad) continue;
    // dL/d(pred_out) = dL/dz_next(-) = 2 w_p err / n
    std::vector<double> d_pred(err_pred.size());
    for (std::size_t i = 0; i < err_pred.size(); ++i) d_pred[i] = 2.0 * w.prediction * err_pred[i] * inv_n;
    std::vector<double> d_x = detail::mlp_backward(net.predictor, pred_acts, d_pred, grad->predictor);

    std::vector<double> d_z(static_cast<std::size_t>(d.latent));
    for (int i = 0; i < d.latent; ++i) d_z[static_cast<std::size_t>(i)] = d_pred[static_cast<std::size_t>(i)] + d_x[static_cast<std::size_t>(i)];
    for (int o = 0; o < d.state_dim; ++o) {
      const double ds = 2.0 * w.state * err_state[static_cast<std::size_t>(o)] * inv_n;
      grad->probe.b[static_cast<std::size_t>(o)] += ds;
      for (int i = 0; i < d.latent; ++i) {
        const auto wi = static_cast<std::size_t>(o * d.latent + i);
        grad->probe.w[wi] += ds * z[static_cast<std::size_t>(i)];
        d_z[static_cast<std::size_t>(i)] += ds * net.probe.w[wi];
      }
    }
    detail::mlp_backward(net.encoder, enc_a, d_z, grad->encoder, false);
    std::vector<double> d_z_next(d_pred.size());
    for (std::size_t i = 0; i < d_pred.size(); ++i) d_z_next[i] = -d_pred[i];
    detail::mlp_backward(net.encoder, enc_b, d_z_next, grad->encoder, false);
  }
  return total;
}

/// Flat views of every parameter, in a fixed order.
template <class T>
std::vector<T*> parameter_pointers(Network<T>& net) {
  std::vector<T*> out;
  net.for_each_layer([&](Linear<T>& l) {
    for (auto& v : l.w) out.push_back(&v);
    for (auto& v : l.b) out.push_back(&v);
  });
  return out;
}

struct WorldModel {
  Network<float> net;
  nlohmann::json metadata = nlohmann::json::object();
};

struct TrainResult {
  WorldModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double validation_probe_error = 0.0;  // mean |probe(encode(o)) - s| on the held-out split
};

inline double mean_loss(const Network<double>& net, const std::vector<const Transition*>& items, const LossWeights& w) {
  double total = 0.0;
  constexpr std::size_t chunk = 256;
  for (std::size_t i = 0; i < items.size(); i += chunk) {
    const std::size_t n = std::min(chunk, items.size() - i);
    total += loss_and_gradient(net, std::span(items).subspan(i, n), w, nullptr) * static_cast<double>(n);
  }
  return total / static_cast<double>(items.size());
}

template <class T>
double mean_probe_error(const Network<T>& net, const std::vector<const Transition*>& items) {
  if (items.empty()) return 0.0;
  double acc = 0.0;
  for (const auto* tr : items) acc += distance(probe_state(net, encode(net, tr->obs)), tr->state.pos);
  return acc / static_cast<double>(items.size());
}

/// Mini-batch Adam on the joint loss. Deterministic given (dataset, cfg).
inline TrainResult train_world_model(const Dataset& data, const TrainConfig& cfg, const ModelDims& dims) {
  cfg.validate();
  if (data.empty()) throw ValidationError("cannot train on an empty dataset");
  if (static_cast<int>(data.front().obs.size()) != dims.obs_dim)
    throw ValidationError("dataset observation size does not match model obs_dim");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng("train-split", {cfg.seed});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(data.size())));
  std::vector<const Transition*> train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val_set : train_set).push_back(&data[order[i]]);
  if (train_set.empty()) throw ValidationError("validation split leaves no training data");

  const LossWeights lw{cfg.prediction_loss_weight, cfg.state_loss_weight};
  Network<double> net = init_network(dims, cfg.seed);
  TrainResult res;
  res.initial_loss = mean_loss(net, train_set, lw);

  Network<double> m1(dims), m2(dims), grad(dims);
  auto params = parameter_pointers(net);
  auto p_m1 = parameter_pointers(m1);
  auto p_m2 = parameter_pointers(m2);
  auto p_g = parameter_pointers(grad);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step_count = 0;
  const long batches_per_epoch = static_cast<long>((train_set.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                                   static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = batches_per_epoch * cfg.epochs;

  Rng shuffle_rng("train-shuffle", {cfg.seed});
  std::vector<const Transition*> epoch_items = train_set;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = epoch_items.size(); i > 1; --i) std::swap(epoch_items[i - 1], epoch_items[shuffle_rng.below(i)]);
    for (std::size_t start = 0; start < epoch_items.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch_size), epoch_items.size() - start);
      for (double* g : p_g) *g = 0.0;
      const double loss = loss_and_gradient(net, std::span(epoch_items).subspan(start, n), lw, &grad);
      if (!std::isfinite(loss)) throw TrainingDivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      ++step_count;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
      // Cosine decay to 5% of the base rate over the full run.
      const double progress = static_cast<double>(step_count - 1) / static_cast<double>(total_steps);
      const double lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = *p_g[k];
        *p_m1[k] = beta1 * *p_m1[k] + (1 - beta1) * g;
        *p_m2[k] = beta2 * *p_m2[k] + (1 - beta2) * g * g;
        *params[k] -= lr * (*p_m1[k] / c1) / (std::sqrt(*p_m2[k] / c2) + eps);
      }
    }
  }

  res.final_loss = mean_loss(net, train_set, lw);
  if (!std::isfinite(res.final_loss)) throw TrainingDivergenceError("non-finite final training loss");
  res.model.net = cast_network<float>(net);
  res.validation_probe_error = mean_probe_error(res.model.net, val_set);
  res.model.metadata = {{"initial_loss", res.initial_loss},
                        {"final_loss", res.final_loss},
                        {"validation_probe_error", res.validation_probe_error},
                        {"train_size", train_set.size()},
                        {"validation_size", val_set.size()},
                        {"train_config",
                         {{"epochs", cfg.epochs},
                          {"batch_size", cfg.batch_size},
                          {"learning_rate", cfg.learning_rate},
                          {"prediction_loss_weight", cfg.prediction_loss_weight},
                          {"state_loss_weight", cfg.state_loss_weight},
                          {"seed", cfg.seed},
                          {"validation_fraction", cfg.validation_fraction}}}};
  return res;
}

// ---------------------------------------------------------------------------
// state probe

struct ProbeFit {
  Linear<double> probe;
  int rank = 0;
  bool rank_deficient = false;
  double residual_rms = 0.0;
};

/// Least-squares affine map latents -> states.
inline ProbeFit fit_linear_probe(const std::vector<Latent>& latents, const std::vector<Vec2>& states) {
  if (latents.empty() || latents.size() != states.size()) throw ValidationError("probe fit needs matching non-empty inputs");
  const auto n = static_cast<Eigen::Index>(latents.size());
  const auto d = static_cast<Eigen::Index>(latents.front().size());
  Eigen::MatrixXd x(n, d + 1);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) x(i, k) = latents[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    x(i, d) = 1.0;
    y(i, 0) = states[static_cast<std::size_t>(i)][0];
    y(i, 1) = states[static_cast<std::size_t>(i)][1];
  }
  const auto qr = x.colPivHouseholderQr();
  const Eigen::MatrixXd coef = qr.solve(y);  // (d + 1) x 2
  ProbeFit fit;
  fit.rank = static_cast<int>(qr.rank());
  fit.rank_deficient = qr.rank() < d + 1;
  fit.probe = Linear<double>(2, static_cast<int>(d));
  for (int o = 0; o < 2; ++o) {
    for (Eigen::Index k = 0; k < d; ++k) fit.probe.w[static_cast<std::size_t>(o * d + k)] = coef(k, o);
    fit.probe.b[static_cast<std::size_t>(o)] = coef(d, o);
  }
  fit.residual_rms = std::sqrt((x * coef - y).squaredNorm() / static_cast<double>(n));
  return fit;
}

/// Refits the probe on (encode(obs), state) pairs with the encoder frozen.
/// A rank-deficient fit is recorded in the metadata, not raised.
inline ProbeFit fit_state_probe(WorldModel& model, const Dataset& data) {
  std::vector<Latent> zs;
  std::vector<Vec2> ss;
  zs.reserve(data.size());
  ss.reserve(data.size());
  for (const auto& tr : data) {
    zs.push_back(encode(model.net, tr.obs));
    ss.push_back(tr.state.pos);
  }
  ProbeFit fit = fit_linear_probe(zs, ss);
  if (fit.probe.in != model.net.dims.latent || model.net.dims.state_dim != 2)
    throw ValidationError("probe fit dimension mismatch");
  std::ranges::transform(fit.probe.w, model.net.probe.w.begin(), [](double v) { return static_cast<float>(v); });
  std::ranges::transform(fit.probe.b, model.net.probe.b.begin(), [](double v) { return static_cast<float>(v); });
  model.metadata["probe_fit"] = {{"rank", fit.rank}, {"rank_deficient", fit.rank_deficient}, {"residual_rms", fit.residual_rms}};
  return fit;
}

// ---------------------------------------------------------------------------
// model-store conversion

inline nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"obs_dim", d.obs_dim},           {"hidden", d.hidden},
          {"latent", d.latent},             {"encoder_layers", d.encoder_layers},
          {"predictor_hidden", d.predictor_hidden}, {"predictor_layers", d.predictor_layers},
          {"action_dim", d.action_dim},     {"state_dim", d.state_dim}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  try {
    d.obs_dim = j.at("obs_dim");
    d.hidden = j.at("hidden");
    d.latent = j.at("latent");
    d.encoder_layers = j.at("encoder_layers");
    d.predictor_hidden = j.at("predictor_hidden");
    d.predictor_layers = j.at("predictor_layers");
    d.action_dim = j.at("action_dim");
    d.state_dim = j.at("state_dim");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model dims: ") + e.what());
  }
  d.validate();
  return d;
}

inline Model to_model(const WorldModel& wm) {
  Model m;
  auto add = [&m](const std::string& prefix, Role role, int idx, const Linear<float>& l) {
    m.tensors.push_back({prefix + ".weight", role, idx, TensorKind::linear_weight, {l.out, l.in}, l.w});
    m.tensors.push_back({prefix + ".bias", role, idx, TensorKind::linear_bias, {l.out}, l.b});
  };
  for (std::size_t i = 0; i < wm.net.encoder.size(); ++i)
    add("encoder." + std::to_string(i), Role::encoder, static_cast<int>(i), wm.net.encoder[i]);
  for (std::size_t i = 0; i < wm.net.predictor.size(); ++i)
    add("predictor." + std::to_string(i), Role::predictor, static_cast<int>(i), wm.net.predictor[i]);
  add("probe", Role::other, 0, wm.net.probe);
  m.extras["kind"] = "world_model";
  m.extras["dims"] = dims_to_json(wm.net.dims);
  m.extras["training"] = wm.metadata;
  return m;
}

inline WorldModel from_model(const Model& m) {
  if (!m.extras.contains("dims")) throw ValidationError("model extras lack 'dims'; not a world model");
  WorldModel wm;
  wm.net = Network<float>(dims_from_json(m.extras.at("dims")));
  if (m.extras.contains("training")) wm.metadata = m.extras.at("training");
  auto fill = [&m](const std::string& prefix, Linear<float>& l) {
    const auto* w = m.find(prefix + ".weight");
    const auto* b = m.find(prefix + ".bias");
    if (!w || !b) throw ValidationError("model is missing tensor '" + prefix + "'");
    if (w->shape != std::vector<std::int64_t>{l.out, l.in} || b->shape != std::vector<std::int64_t>{l.out})
      throw ValidationError("tensor '" + prefix + "' has unexpected shape");
    l.w = w->data;
    l.b = b->data;
  };
  for (std::size_t i = 0; i < wm.net.encoder.size(); ++i) fill("encoder." + std::to_string(i), wm.net.encoder[i]);
  for (std::size_t i = 0; i < wm.net.predictor.size(); ++i) fill("predictor." + std::to_string(i), wm.net.predictor[i]);
  fill("probe", wm.net.probe);
  return wm;
}

}  // namespace wmq
