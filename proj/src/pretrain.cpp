#include "qformer/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "qformer/encoding.hpp"
#include "qformer/fixedpoint.hpp"

namespace qf {
namespace {

int log2_exact(int value, const char* what) {
  int bits = 0;
  while ((1 << bits) < value) ++bits;
  if ((1 << bits) != value) {
    throw ShapeError(std::string(what) + " must be a power of two");
  }
  return bits;
}

// One training window: the tokens feeding the input plus the id the readout
// column must predict.
struct Window {
  std::vector<int> tokens;
  int target = 0;
};

std::vector<Window> corpus_windows(const Corpus& corpus, int batch_span,
                                   const ModelDims& dims) {
  if (batch_span < 1 || batch_span > dims.n - 1) {
    throw ShapeError("batch_span must lie in [1, n - 1]");
  }
  if (corpus.vocab_size != dims.vocab) {
    throw ShapeError("corpus vocabulary size does not match dims.vocab");
  }
  const int total = static_cast<int>(corpus.token_ids.size());
  if (total < batch_span + 1) {
    throw ShapeError("corpus too small: need at least batch_span + 1 tokens");
  }
  std::vector<Window> windows;
  for (int start = 0; start + batch_span < total; ++start) {
    Window win;
    win.tokens.assign(corpus.token_ids.begin() + start,
                      corpus.token_ids.begin() + start + batch_span);
    win.target = corpus.token_ids[start + batch_span];
    windows.push_back(std::move(win));
  }
  return windows;
}

// Loss of one window under realized weights. The shortcut mode scores the
// dense exact forward; the circuit mode runs the staged block, projects the
// feed-forward state through the vocabulary rotation, and reads the loss at
// the readout position n - 1 (t_index = n - 2).
double window_loss(const MatD& x, int target, const ModelWeights& w,
                   const ModelDims& dims, RunMode mode) {
  if (mode == RunMode::kOracleShortcut) {
    const BlockTrace trace = ref_block(x, w, dims, false, EvalMode::kExact);
    const MatD logits = ref_logits(trace.f, w, dims);
    return ref_loss(logits, dims.n - 1, target);
  }
  StagedState attended = residual(x, w, dims, false);
  const MatD zprime = state_matrix(attended.state, dims.stream(), dims.n);
  StagedState gated = ffn_pipeline(zprime, w, dims);
  const StateVector projected =
      apply_vocab_projection(std::move(gated.state), w.we);
  return overlap_loss(projected, dims.n - 2, target);
}

}  // namespace

Corpus Corpus::from_text(const std::string& text, int vocab_size) {
  if (vocab_size < 2) {
    throw ShapeError("vocabulary size must be at least 2");
  }
  Corpus corpus;
  corpus.text = text;
  corpus.vocab_size = vocab_size;
  int ids[256];
  std::fill(std::begin(ids), std::end(ids), -1);
  for (char c : text) {
    const auto byte = static_cast<unsigned char>(c);
    if (ids[byte] < 0) {
      if (static_cast<int>(corpus.vocab.size()) >= vocab_size - 1) {
        throw ShapeError(
            "corpus uses more distinct bytes than the vocabulary holds "
            "(one slot is reserved for the pad token)");
      }
      ids[byte] = static_cast<int>(corpus.vocab.size());
      corpus.vocab.push_back(byte);
    }
    corpus.token_ids.push_back(ids[byte]);
  }
  return corpus;
}

Corpus Corpus::from_file(const std::string& path, int vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("cannot read corpus file: " + path);
  return from_text(buffer.str(), vocab_size);
}

int Corpus::id_of(unsigned char byte) const {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == byte) return static_cast<int>(i);
  }
  throw ShapeError("byte outside the corpus vocabulary");
}

unsigned char Corpus::byte_of(int id) const {
  if (id < 0 || id >= static_cast<int>(vocab.size())) {
    throw ShapeError("token id has no vocabulary byte");
  }
  return vocab[static_cast<std::size_t>(id)];
}

MatD window_input(const std::vector<int>& window, int pad_id,
                  const MatD& embed, const ModelDims& dims) {
  const int span = static_cast<int>(window.size());
  if (span > dims.n - 1) {
    throw ShapeError("window must leave the readout column free");
  }
  auto check_id = [&](int id) {
    if (id < 0 || id >= embed.cols()) {
      throw ShapeError("token id outside the embedding");
    }
  };
  check_id(pad_id);
  for (int id : window) check_id(id);
  if (embed.rows() != dims.d) {
    throw ShapeError("embedding rows must match the model width");
  }

  const MatD positions = ref_positional(dims.d, dims.n);
  const int first = dims.n - 1 - span;
  MatD x(dims.d, dims.n);
  for (int i = 0; i < dims.n; ++i) {
    const bool in_window = i >= first && i < dims.n - 1;
    const int token = in_window ? window[static_cast<std::size_t>(i - first)]
                                : pad_id;
    x.col(i) = embed.col(token) + positions.col(i);
  }
  return x;
}

StateVector apply_vocab_projection(StateVector state, const MatD& we) {
  if (!state.layout.has("m")) {
    throw ShapeError("state must carry the neuron register m");
  }
  const auto dim = std::size_t{1} << state.layout.width("m");
  if (we.rows() != we.cols() ||
      static_cast<std::size_t>(we.rows()) != dim) {
    throw ShapeError("vocabulary rotation must exactly fill register m");
  }
  const UnitaryOp rotation = UnitaryOp::from_matrix(we.cast<cplx>());
  return apply_unitary(std::move(state), rotation, {"m"});
}

StateVector logits_state(const MatD& f, const ModelWeights& w,
                         const ModelDims& dims) {
  if (f.rows() != dims.stream() || f.cols() != dims.n) {
    throw ShapeError("block output must be stream x n");
  }
  if (dims.vocab != dims.d_ff) {
    throw ShapeError(
        "vocabulary rotation needs vocab equal to the feed-forward width");
  }
  MatD padded = MatD::Zero(dims.d_ff, dims.n);
  padded.topRows(dims.stream()) = f;

  const RegisterLayout layout{{"m", log2_exact(dims.d_ff, "d_ff")},
                              {"i", log2_exact(dims.n, "n")}};
  StateVector state = prepare_matrix_state(padded, zero_state(layout), "m", "i");
  return apply_vocab_projection(std::move(state), w.we);
}

double overlap_loss(const StateVector& state, int t_index, int target_id,
                    const LossSampling& sampling) {
  if (!state.layout.has("m") || !state.layout.has("i")) {
    throw ShapeError("loss needs registers m and i");
  }
  const std::uint64_t positions = std::uint64_t{1} << state.layout.width("i");
  const std::uint64_t tokens = std::uint64_t{1} << state.layout.width("m");
  if (t_index < 0 || static_cast<std::uint64_t>(t_index) + 1 >= positions) {
    throw ShapeError("readout position t_index + 1 outside register i");
  }
  if (target_id < 0 || static_cast<std::uint64_t>(target_id) >= tokens) {
    throw ShapeError("target id outside register m");
  }
  const auto column = static_cast<std::uint64_t>(t_index) + 1;

  double position_prob = 0.0;
  double hit_prob = 0.0;
  if (sampling.mode == LossSampling::Mode::kExact) {
    const std::vector<double> conditional =
        measure_distribution_where(state, "m", {{"i", column}});
    for (double p : conditional) position_prob += p;
    hit_prob = conditional[static_cast<std::size_t>(target_id)];
    if (position_prob < 1e-14) {
      throw NumericError("readout position carries no probability");
    }
  } else {
    if (sampling.shots == 0) throw NumericError("sampled loss needs shots");
    std::vector<double> cdf(state.dimension());
    double total = 0.0;
    for (std::size_t idx = 0; idx < state.dimension(); ++idx) {
      total += std::norm(state.amplitudes[idx]);
      cdf[idx] = total;
    }
    Rng rng(sampling.seed);
    std::uint64_t position_count = 0;
    std::uint64_t hit_count = 0;
    for (std::uint64_t shot = 0; shot < sampling.shots; ++shot) {
      const double draw = rng.uniform() * total;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), draw);
      const auto idx = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(it - cdf.begin(),
                                   static_cast<std::ptrdiff_t>(cdf.size()) - 1));
      if (state.layout.value_at(idx, "i") != column) continue;
      ++position_count;
      if (state.layout.value_at(idx, "m") ==
          static_cast<std::uint64_t>(target_id)) {
        ++hit_count;
      }
    }
    if (position_count == 0) {
      throw NumericError("no shots landed on the readout position");
    }
    position_prob = static_cast<double>(position_count);
    hit_prob = static_cast<double>(hit_count);
  }
  return std::clamp(1.0 - hit_prob / position_prob, 0.0, 1.0);
}

TrainResult train(const Corpus& corpus, const ModelDims& dims,
                  const TrainConfig& config) {
  if (config.iterations < 0) throw ShapeError("iterations must be >= 0");
  if (config.fd_step <= 0.0 || config.spsa_step <= 0.0) {
    throw ShapeError("difference steps must be positive");
  }
  if (config.gradient_clip < 0.0) {
    throw ShapeError("gradient_clip must be >= 0");
  }
  const std::vector<Window> windows =
      corpus_windows(corpus, config.batch_span, dims);

  ModelParams params = ModelParams::seeded(dims, config.seed);
  std::vector<MatD> inputs;
  inputs.reserve(windows.size());
  for (const Window& win : windows) {
    inputs.push_back(
        window_input(win.tokens, corpus.pad_id(), params.embedding(), dims));
  }

  auto cumulative_loss = [&](const std::vector<double>& theta) {
    params.set_theta(theta);
    const ModelWeights w = params.realize();
    double total = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      total += window_loss(inputs[i], windows[i].target, w, dims, config.mode);
    }
    return total;
  };

  std::vector<double> theta = params.theta();
  // Training starts from neuron directions spread across the basis: under
  // the seeded jitter alone every w1 column stays near the first basis
  // vector, so all relu gates share one sign and the readout column can
  // start dead with a zero gradient. Quarter turns on the leading planes of
  // column m's preparation chain point it near basis vector m instead.
  {
    const ParamSegment& seg = params.segment("w1");
    const int per_column = dims.stream() - 1;
    for (int m = 0; m < dims.d_ff; ++m) {
      const int planes = std::min(m % dims.stream(), per_column);
      for (int j = 0; j < planes; ++j) {
        theta[static_cast<std::size_t>(seg.offset + m * per_column + j)] +=
            kPi / 2.0;
      }
    }
  }
  const int count = static_cast<int>(theta.size());
  Rng perturbations(config.seed ^ 0xd1b54a32d192ed03ULL);

  TrainResult result{{cumulative_loss(theta)}, params};
  for (int iter = 0; iter < config.iterations; ++iter) {
    if (config.learning_rate != 0.0) {
      std::vector<double> gradient(theta.size(), 0.0);
      if (config.optimizer == Optimizer::kFiniteDiff) {
        std::vector<double> probe = theta;
        for (int j = 0; j < count; ++j) {
          probe[j] = theta[j] + config.fd_step;
          const double up = cumulative_loss(probe);
          probe[j] = theta[j] - config.fd_step;
          const double down = cumulative_loss(probe);
          probe[j] = theta[j];
          gradient[j] = (up - down) / (2.0 * config.fd_step);
        }
      } else {
        std::vector<double> delta(theta.size());
        for (double& d : delta) d = (perturbations.raw64() & 1) ? 1.0 : -1.0;
        std::vector<double> probe(theta.size());
        for (int j = 0; j < count; ++j) {
          probe[j] = theta[j] + config.spsa_step * delta[j];
        }
        const double up = cumulative_loss(probe);
        for (int j = 0; j < count; ++j) {
          probe[j] = theta[j] - config.spsa_step * delta[j];
        }
        const double down = cumulative_loss(probe);
        const double slope = (up - down) / (2.0 * config.spsa_step);
        for (int j = 0; j < count; ++j) gradient[j] = slope * delta[j];
      }
      double norm2 = 0.0;
      for (double g : gradient) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      const double scale =
          (config.gradient_clip > 0.0 && norm > config.gradient_clip)
              ? config.gradient_clip / norm
              : 1.0;
      for (int j = 0; j < count; ++j) {
        theta[j] -= config.learning_rate * scale * gradient[j];
      }
    }
    result.losses.push_back(cumulative_loss(theta));
  }

  params.set_theta(theta);
  result.params = params;
  return result;
}

std::string TrainedModel::to_json() const {
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(params.to_json());
  j["vocab"] = nlohmann::json::array();
  for (unsigned char byte : vocab) j["vocab"].push_back(int(byte));
  return j.dump(2);
}

TrainedModel TrainedModel::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model json: ") + e.what());
  }
  if (!j.contains("model") || !j.contains("vocab") ||
      !j["vocab"].is_array()) {
    throw IoError("model json: missing model or vocab field");
  }
  std::vector<unsigned char> vocab;
  for (const auto& entry : j["vocab"]) {
    const int value = entry.get<int>();
    if (value < 0 || value > 255) throw IoError("model json: bad vocab byte");
    vocab.push_back(static_cast<unsigned char>(value));
  }
  TrainedModel model{ModelParams::from_json(j["model"].dump()),
                     std::move(vocab)};
  if (static_cast<int>(model.vocab.size()) >= model.params.dims().vocab) {
    throw IoError("model json: vocabulary leaves no pad slot");
  }
  return model;
}

int argmax_token(const MatD& logits, int column, int pad_id) {
  if (column < 0 || column >= logits.cols()) {
    throw ShapeError("argmax column out of range");
  }
  int best = -1;
  double best_mag = -1.0;
  for (int row = 0; row < logits.rows(); ++row) {
    if (row == pad_id) continue;
    const double mag = std::abs(logits(row, column));
    if (mag > best_mag) {
      best_mag = mag;
      best = row;
    }
  }
  if (best < 0) throw ShapeError("argmax needs a non-pad row");
  return best;
}

std::string generate(const TrainedModel& model, const std::string& prompt,
                     int steps, RunMode mode) {
  if (steps < 0) throw ShapeError("steps must be >= 0");
  const ModelDims& dims = model.params.dims();
  const int known = static_cast<int>(model.vocab.size());
  if (known < 1) throw ShapeError("model has an empty vocabulary");
  const int pad_id = dims.vocab - 1;

  std::vector<int> ids;
  for (char c : prompt) {
    const auto byte = static_cast<unsigned char>(c);
    int id = -1;
    for (int v = 0; v < known; ++v) {
      if (model.vocab[static_cast<std::size_t>(v)] == byte) {
        id = v;
        break;
      }
    }
    if (id < 0) throw ShapeError("prompt byte outside the model vocabulary");
    ids.push_back(id);
  }

  const ModelWeights w = model.params.realize();
  std::string out = prompt;
  for (int step = 0; step < steps; ++step) {
    const int span = std::min<int>(dims.n - 1, static_cast<int>(ids.size()));
    const std::vector<int> context(ids.end() - span, ids.end());
    const MatD x = window_input(context, pad_id, w.embed, dims);

    int next;
    if (mode == RunMode::kOracleShortcut) {
      const BlockTrace trace = ref_block(x, w, dims, false, EvalMode::kExact);
      const MatD logits = ref_logits(trace.f, w, dims);
      // Only ids with a vocabulary byte can decode.
      next = argmax_token(logits.topRows(known), dims.n - 1, pad_id);
    } else {
      StagedState attended = residual(x, w, dims, false);
      const MatD zprime = state_matrix(attended.state, dims.stream(), dims.n);
      StagedState gated = ffn_pipeline(zprime, w, dims);
      const StateVector projected =
          apply_vocab_projection(std::move(gated.state), w.we);
      const std::vector<double> conditional = measure_distribution_where(
          projected, "m", {{"i", static_cast<std::uint64_t>(dims.n - 1)}});
      next = 0;
      for (int v = 1; v < known; ++v) {
        if (conditional[static_cast<std::size_t>(v)] >
            conditional[static_cast<std::size_t>(next)]) {
          next = v;
        }
      }
    }
    ids.push_back(next);
    out.push_back(static_cast<char>(model.vocab[static_cast<std::size_t>(next)]));
  }
  return out;
}

}  // namespace qf
